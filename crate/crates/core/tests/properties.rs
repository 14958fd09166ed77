use proptest::prelude::*;

use tass_core::featureio::{decode_tensor, encode_tensor, pool_preprocess, VideoFeatures};
use tass_core::jtg::{deinterleave, interleave, SlotOrder};
use tass_core::numcore::{Tape, Tensor};

fn finite(len: usize, range: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-range..range, len)
}

fn prob_vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..5, cols in 1usize..9, seed in finite(40, 50.0)) {
        let data: Vec<f64> = seed.iter().cycle().take(rows * cols).copied().collect();
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[rows, cols], data).unwrap());
        let s = tape.softmax(x).unwrap();
        let out = tape.value(s);
        for r in 0..rows {
            let row = out.row_slice(r);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn js_is_bounded_and_symmetric(n in 2usize..10, p in prob_vector(10), q in prob_vector(10)) {
        let renorm = |v: &[f64]| { let s: f64 = v[..n].iter().sum(); v[..n].iter().map(|x| x / s).collect::<Vec<_>>() };
        let (p, q) = (renorm(&p), renorm(&q));
        let mut tape = Tape::new();
        let pv = tape.leaf(Tensor::row(p.clone()));
        let qv = tape.leaf(Tensor::row(q.clone()));
        let pq = tape.js_divergence(pv, qv).unwrap();
        let qp = tape.js_divergence(qv, pv).unwrap();
        let pp = tape.js_divergence(pv, pv).unwrap();
        let (a, b) = (tape.value(pq).item(), tape.value(qp).item());
        prop_assert!((-1e-15..=std::f64::consts::LN_2 + 1e-12).contains(&a));
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(tape.value(pp).item().abs() < 1e-12);
    }

    #[test]
    fn threshold_gate_keeps_fewer_entries_as_tau_grows(p in prob_vector(12), t1 in 0.0f64..0.2, t2 in 0.0f64..0.2) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let mut tape = Tape::new();
        let s = tape.leaf(Tensor::row(p.clone()));
        let a = tape.threshold_gate(s, lo).unwrap();
        let b = tape.threshold_gate(s, hi).unwrap();
        let kept = |t: &Tensor| t.data().iter().filter(|&&x| x != 0.0).count();
        prop_assert!(kept(tape.value(b)) <= kept(tape.value(a)));
        for (g, orig) in tape.value(b).data().iter().zip(&p) {
            prop_assert!(*g == 0.0 || g == orig);
        }
    }

    #[test]
    fn tensor_codec_round_trips_at_f32(rank in 0usize..5, extents in prop::collection::vec(1usize..4, 4), vals in finite(81, 1e6)) {
        let shape = &extents[..rank];
        let n: usize = shape.iter().product();
        let data: Vec<f64> = vals[..n].iter().map(|&x| x as f32 as f64).collect();
        let t = Tensor::new(shape, data).unwrap();
        let back = decode_tensor(&encode_tensor(&t).unwrap()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn interleave_inverts(t in 1usize..6, d in 1usize..5, vals in finite(60, 3.0), order_ix in 0usize..4) {
        let order = SlotOrder::ALL[order_ix];
        let v = Tensor::new(&[t, d], vals[..t * d].to_vec()).unwrap();
        let a = Tensor::new(&[t, d], vals[30..30 + t * d].to_vec()).unwrap();
        let mut tape = Tape::new();
        let (vv, av) = (tape.leaf(v.clone()), tape.leaf(a.clone()));
        let joint = interleave(&mut tape, vv, av, order).unwrap();
        let (v2, a2) = deinterleave(&mut tape, joint, order).unwrap();
        prop_assert_eq!(tape.value(v2), &v);
        prop_assert_eq!(tape.value(a2), &a);
    }

    #[test]
    fn pooling_preserves_the_segment_mean(t1 in 1usize..12, window in 1usize..6, vals in finite(48, 2.0)) {
        // Equal-length windows only, so the mean of means is the overall mean.
        let t1 = t1.max(window) / window * window;
        let d = 2;
        let audio = Tensor::new(&[t1, d], vals.iter().cycle().take(t1 * d).copied().collect()).unwrap();
        let visual = Tensor::new(&[t1, 1, 2, d], vals.iter().rev().cycle().take(t1 * 2 * d).copied().collect()).unwrap();
        let v = VideoFeatures::new("v", audio.clone(), visual).unwrap();
        let pooled = pool_preprocess(&v, window).unwrap();
        prop_assert_eq!(pooled.len(), t1.div_ceil(window));
        for k in 0..d {
            let before: f64 = (0..t1).map(|r| audio.row_slice(r)[k]).sum::<f64>() / t1 as f64;
            let after: f64 = (0..pooled.len()).map(|r| pooled.audio.row_slice(r)[k]).sum::<f64>() / pooled.len() as f64;
            prop_assert!((before - after).abs() < 1e-12);
        }
    }
}
