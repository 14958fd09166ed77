//! Finite-difference checks over every differentiable op, each model module,
//! and the full two-phase batch objective.

use rand::Rng;
use serde::Serialize;

use super::config::{LossWeights, ModelConfig, Stream};
use super::model::{answer_logits, TassModel};
use super::train::{batch_gradients, batch_loss_on_tape, draw_pairs, seeded_rng};
use crate::error::Result;
use crate::featureio::{Dataset, FeatureDims, VideoFeatures};
use crate::jtg::{self, SlotOrder};
use crate::nn::ParamStore;
use crate::numcore::{
    compare_gradients, finite_diff_check_many, numeric_gradients, GradCheckReport, Tape, Tensor, Var,
};
use crate::tsg::{self, MatchPair, TsgConfig};
use crate::types::{QASample, QuestionType};

const SUITE_STREAM: u64 = 5;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckCase {
    pub name: String,
    pub seed: u64,
    pub max_rel_err: f64,
    pub checked: usize,
    pub failing: usize,
    pub max_abs_diff: f64,
    pub largest_failing: f64,
    pub pass: bool,
}

impl GradCheckCase {
    fn new(name: &str, seed: u64, report: GradCheckReport) -> Self {
        Self {
            name: name.to_string(),
            seed,
            max_rel_err: report.max_rel_err,
            checked: report.checked,
            failing: report.failing,
            max_abs_diff: report.max_abs_diff,
            largest_failing: report.largest_failing,
            pass: report.pass,
        }
    }
}

/// `Σ out ⊙ r`, a readout that weights every output entry differently.
fn readout(tape: &mut Tape, out: Var, r: &Tensor) -> Result<Var> {
    let r = tape.leaf(r.clone());
    let prod = tape.mul(out, r)?;
    tape.sum(prod)
}

/// Random features for `n` distinct videos, one question each.
pub fn random_dataset<R: Rng + ?Sized>(dims: FeatureDims, n: usize, vocab: usize, rng: &mut R) -> Result<Dataset> {
    let FeatureDims { d, h, w, t } = dims;
    let mut videos = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("video{i:03}");
        videos.push(VideoFeatures::new(
            id.clone(),
            Tensor::uniform(&[t, d], 1.0, rng),
            Tensor::uniform(&[t, h, w, d], 1.0, rng),
        )?);
        samples.push(QASample {
            video_id: id,
            question: Tensor::uniform(&[1, d], 1.0, rng),
            target: Tensor::uniform(&[1, d], 1.0, rng),
            question_type: QuestionType::ALL[i % 4],
            answer: rng.random_range(0..vocab),
        });
    }
    let names = (0..vocab).map(|k| format!("answer{k}")).collect();
    Dataset::new(names, dims, videos, samples)
}

type OpFn = fn(&mut Tape, &[Var]) -> Result<Var>;

fn op_cases() -> Vec<(&'static str, Vec<Vec<usize>>, OpFn)> {
    vec![
        ("matmul", vec![vec![2, 3], vec![3, 2]], |t, x| t.matmul(x[0], x[1])),
        ("transpose", vec![vec![2, 3]], |t, x| t.transpose(x[0])),
        ("add", vec![vec![2, 3], vec![2, 3]], |t, x| t.add(x[0], x[1])),
        ("sub", vec![vec![2, 3], vec![2, 3]], |t, x| t.sub(x[0], x[1])),
        ("mul", vec![vec![2, 3], vec![2, 3]], |t, x| t.mul(x[0], x[1])),
        ("scale", vec![vec![2, 3]], |t, x| t.scale(x[0], -1.7)),
        ("tanh", vec![vec![2, 3]], |t, x| t.tanh(x[0])),
        ("sigmoid", vec![vec![2, 3]], |t, x| t.sigmoid(x[0])),
        ("softmax", vec![vec![2, 3]], |t, x| t.softmax(x[0])),
        ("concat_last", vec![vec![2, 3], vec![2, 2]], |t, x| t.concat_last(x[0], x[1])),
        ("concat_rows", vec![vec![1, 3], vec![2, 3]], |t, x| t.concat_rows(&[x[0], x[1]])),
        ("mean_axis0", vec![vec![2, 3]], |t, x| t.mean_axis(x[0], 0)),
        ("mean_axis1", vec![vec![2, 3]], |t, x| t.mean_axis(x[0], 1)),
        ("reshape", vec![vec![2, 3]], |t, x| t.reshape(x[0], &[3, 2])),
        ("gather_rows", vec![vec![3, 2]], |t, x| t.gather_rows(x[0], &[2, 0, 2])),
        ("gather_last", vec![vec![2, 4]], |t, x| t.gather_last(x[0], &[3, 1, 3])),
        ("slice_last", vec![vec![2, 5]], |t, x| t.slice_last(x[0], 1, 3)),
    ]
}

fn check_ops<R: Rng + ?Sized>(seed: u64, step: f64, tol: f64, rng: &mut R, out: &mut Vec<GradCheckCase>) -> Result<()> {
    for (name, shapes, op) in op_cases() {
        let xs: Vec<Tensor> = shapes.iter().map(|s| Tensor::uniform(s, 1.0, rng)).collect();
        let shape = {
            let mut tape = Tape::new();
            let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
            let y = op(&mut tape, &vars)?;
            tape.value(y).shape().to_vec()
        };
        let r = Tensor::uniform(&shape, 1.0, rng);
        let report = finite_diff_check_many(
            |tape, vars| {
                let y = op(tape, vars)?;
                readout(tape, y, &r)
            },
            &xs,
            step,
            tol,
        )?;
        out.push(GradCheckCase::new(name, seed, report));
    }

    let x = Tensor::uniform(&[2, 3], 1.0, rng);
    let report = finite_diff_check_many(|tape, v| {
        let s = tape.sum(v[0])?;
        let s = tape.tanh(s)?;
        tape.sum(s)
    }, &[x], step, tol)?;
    out.push(GradCheckCase::new("sum", seed, report));

    // Entries kept well clear of τ so the mask is constant under the step.
    let tau = 0.5;
    let mut gate_in = Tensor::zeros(&[1, 6]);
    for v in gate_in.data_mut() {
        let u: f64 = rng.random_range(0.0..0.45);
        *v = if rng.random_bool(0.5) { tau + 0.02 + u } else { tau - 0.02 - u };
    }
    let r = Tensor::uniform(&[1, 6], 1.0, rng);
    let report = finite_diff_check_many(|tape, v| {
        let y = tape.threshold_gate(v[0], tau)?;
        readout(tape, y, &r)
    }, &[gate_in], step, tol)?;
    out.push(GradCheckCase::new("threshold_gate", seed, report));

    let mut pos = Tensor::uniform(&[1, 4], 0.4, rng);
    pos.data_mut().iter_mut().for_each(|v| *v += 0.6);
    let r = Tensor::uniform(&[1, 4], 1.0, rng);
    let report = finite_diff_check_many(|tape, v| {
        let y = tape.renormalize(v[0])?;
        readout(tape, y, &r)
    }, &[pos], step, tol)?;
    out.push(GradCheckCase::new("renormalize", seed, report));

    let logits = Tensor::uniform(&[3, 4], 2.0, rng);
    let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..4)).collect();
    let report = finite_diff_check_many(|tape, v| tape.cross_entropy(v[0], &labels), &[logits], step, tol)?;
    out.push(GradCheckCase::new("cross_entropy", seed, report));

    let zs = [Tensor::uniform(&[1, 4], 2.0, rng), Tensor::uniform(&[1, 4], 2.0, rng)];
    let report = finite_diff_check_many(|tape, v| {
        let p = tape.softmax(v[0])?;
        let q = tape.softmax(v[1])?;
        tape.js_divergence(p, q)
    }, &zs, step, tol)?;
    out.push(GradCheckCase::new("js_divergence", seed, report));
    Ok(())
}

/// Inputs followed by every parameter of `store`.
fn with_params(inputs: Vec<Tensor>, store: &ParamStore) -> Vec<Tensor> {
    let mut xs = inputs;
    xs.extend(store.tensors().iter().cloned());
    xs
}

fn check_modules<R: Rng + ?Sized>(seed: u64, step: f64, tol: f64, rng: &mut R, out: &mut Vec<GradCheckCase>) -> Result<()> {
    let d = 4;

    let mut store = ParamStore::new();
    jtg::init_lstm(&mut store, "lstm", d, d, rng);
    let r = Tensor::uniform(&[3, d], 1.0, rng);
    let xs = with_params(vec![Tensor::uniform(&[3, d], 1.0, rng)], &store);
    let report = finite_diff_check_many(|tape, v| {
        let p = store.attach(&v[1..])?;
        let h = jtg::temporal_encode(tape, &p, "lstm", v[0])?;
        readout(tape, h, &r)
    }, &xs, step, tol)?;
    out.push(GradCheckCase::new("lstm", seed, report));

    for (name, order) in [("jtg_ilva", SlotOrder::InterleaveVA), ("jtg_catav", SlotOrder::ConcatAV)] {
        let mut store = ParamStore::new();
        jtg::init_mha(&mut store, "jtg.mha", d, rng);
        jtg::init_residual_mlp(&mut store, "jtg.mlp", d, rng);
        let r = Tensor::uniform(&[1, d], 1.0, rng);
        let inputs = vec![
            Tensor::uniform(&[2, d], 1.0, rng),
            Tensor::uniform(&[2, d], 1.0, rng),
            Tensor::uniform(&[1, d], 1.0, rng),
        ];
        let xs = with_params(inputs, &store);
        let report = finite_diff_check_many(|tape, v| {
            let p = store.attach(&v[3..])?;
            let joint = jtg::interleave(tape, v[0], v[1], order)?;
            let att = jtg::question_guided_attention(tape, &p, "jtg", v[2], joint, 2, order)?;
            let task = readout(tape, att.f_avq, &r)?;
            let cms = jtg::cms_loss(tape, att.w_a, att.w_v)?;
            tape.add(task, cms)
        }, &xs, step, tol)?;
        out.push(GradCheckCase::new(name, seed, report));
    }

    let mut store = ParamStore::new();
    jtg::init_mha(&mut store, "jtg.mha_v", d, rng);
    jtg::init_mha(&mut store, "jtg.mha_a", d, rng);
    store.add_linear("jtg.late_fuse", 2 * d, d, rng);
    jtg::init_residual_mlp(&mut store, "jtg.mlp", d, rng);
    let r = Tensor::uniform(&[1, d], 1.0, rng);
    let inputs = vec![
        Tensor::uniform(&[2, d], 1.0, rng),
        Tensor::uniform(&[2, d], 1.0, rng),
        Tensor::uniform(&[1, d], 1.0, rng),
    ];
    let xs = with_params(inputs, &store);
    let report = finite_diff_check_many(|tape, v| {
        let p = store.attach(&v[3..])?;
        let att = jtg::dual_stream_attention(tape, &p, "jtg", v[2], v[0], v[1], 2)?;
        let task = readout(tape, att.f_avq, &r)?;
        let cms = jtg::cms_loss(tape, att.w_a, att.w_v)?;
        tape.add(task, cms)
    }, &xs, step, tol)?;
    out.push(GradCheckCase::new("jtg_dual", seed, report));

    for (name, target_aware) in [("tsg", true), ("tsg_audio_only", false)] {
        let mut store = ParamStore::new();
        store.add_linear(tsg::FUSE, 2 * d, d, rng);
        let config = TsgConfig { target_aware, ..TsgConfig::default() };
        let r = Tensor::uniform(&[1, d], 1.0, rng);
        let inputs = vec![
            Tensor::uniform(&[4, d], 1.0, rng),
            Tensor::uniform(&[1, d], 1.0, rng),
            Tensor::uniform(&[1, d], 1.0, rng),
        ];
        let xs = with_params(inputs, &store);
        let report = finite_diff_check_many(|tape, v| {
            let p = store.attach(&v[3..])?;
            let g = tsg::target_aware_visual(tape, &p, v[0], v[1], v[2], config)?;
            readout(tape, g.fused, &r)
        }, &xs, step, tol)?;
        out.push(GradCheckCase::new(name, seed, report));
    }

    let mut head = ParamStore::new();
    tsg::init_params(&mut head, d, rng);
    let ids = ["a", "a", "b"];
    let pairs = vec![
        MatchPair { item: 0, segment: 0, partner_item: 0, partner_segment: 0, label: tsg::MATCHED },
        MatchPair { item: 0, segment: 1, partner_item: 2, partner_segment: 0, label: tsg::MISMATCHED },
        MatchPair { item: 1, segment: 0, partner_item: 1, partner_segment: 0, label: tsg::MATCHED },
        MatchPair { item: 2, segment: 1, partner_item: 1, partner_segment: 1, label: tsg::MISMATCHED },
    ];
    let mut inputs = Vec::new();
    for _ in ids {
        inputs.push(Tensor::uniform(&[2, d], 1.0, rng));
        inputs.push(Tensor::uniform(&[2, d], 1.0, rng));
    }
    let xs = with_params(inputs, &head);
    let n = 2 * ids.len();
    let report = finite_diff_check_many(|tape, v| {
        let p = head.attach(&v[n..])?;
        let audio: Vec<Var> = (0..ids.len()).map(|i| v[2 * i]).collect();
        let visual: Vec<Var> = (0..ids.len()).map(|i| v[2 * i + 1]).collect();
        tsg::match_loss(tape, &p, &audio, &visual, &pairs)
    }, &xs, step, tol)?;
    out.push(GradCheckCase::new("match_loss", seed, report));

    let mut store = ParamStore::new();
    store.add_linear(super::model::HEAD, d, 5, rng);
    let label = rng.random_range(0..5);
    let xs = with_params(vec![Tensor::uniform(&[1, d], 1.0, rng), Tensor::uniform(&[1, d], 1.0, rng)], &store);
    let report = finite_diff_check_many(|tape, v| {
        let p = store.attach(&v[2..])?;
        let logits = answer_logits(tape, &p, v[0], v[1])?;
        tape.cross_entropy(logits, &[label])
    }, &xs, step, tol)?;
    out.push(GradCheckCase::new("answer_head", seed, report));
    Ok(())
}

/// Two-phase batch gradient against central differences of the same
/// objective recorded on one tape.
fn check_composite<R: Rng + ?Sized>(seed: u64, step: f64, tol: f64, stream: Stream, rng: &mut R) -> Result<GradCheckReport> {
    let dims = FeatureDims { d: 4, h: 2, w: 2, t: 2 };
    let vocab = 3;
    let ds = random_dataset(dims, 3, vocab, rng)?;
    let config = ModelConfig {
        d: 4,
        h: 2,
        w: 2,
        t: 2,
        n_heads: 2,
        vocab,
        tau: tsg::DEFAULT_TAU,
        target_aware: true,
        stream,
        order: SlotOrder::InterleaveVA,
    };
    let model = TassModel::init(config, rng)?;
    let weights = LossWeights { cms: true, lambda: 0.5 };
    let batch = [0, 1, 2];
    let pairs = draw_pairs(&ds, &batch, &mut seeded_rng(seed, SUITE_STREAM, 1));
    let analytic = batch_gradients(&model, &ds, &batch, &pairs, weights)?.grads;
    let numeric = numeric_gradients(
        &|tape: &mut Tape, vars: &[Var]| {
            let p = model.params.attach(vars)?;
            batch_loss_on_tape(tape, &p, &model, &ds, &batch, &pairs, weights)
        },
        model.params.tensors(),
        step,
    )?;
    Ok(compare_gradients(&analytic, &numeric, tol))
}

/// Runs every check for each seed.
pub fn run_gradcheck_suite(seeds: &[u64], step: f64, tol: f64) -> Result<Vec<GradCheckCase>> {
    let mut out = Vec::new();
    for &seed in seeds {
        let mut rng = seeded_rng(seed, SUITE_STREAM, 0);
        check_ops(seed, step, tol, &mut rng, &mut out)?;
        check_modules(seed, step, tol, &mut rng, &mut out)?;
        let report = check_composite(seed, step, tol, Stream::Single, &mut rng)?;
        out.push(GradCheckCase::new("end_to_end", seed, report));
        let report = check_composite(seed, step, tol, Stream::Dual, &mut rng)?;
        out.push(GradCheckCase::new("end_to_end_dual", seed, report));
    }
    Ok(out)
}
