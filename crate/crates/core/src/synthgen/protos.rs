use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::spec::ScenarioSpec;
use crate::error::{Result, TassError};

/// Largest allowed |cos| between two distinct visual prototypes.
pub const MAX_VISUAL_COSINE: f64 = 0.5;
/// Total norm scale of the text-from-visual perturbation.
pub const TEXT_JITTER: f64 = 0.1;

/// Stream ids for the seeded generator; videos use their own streams.
pub(crate) const PROTOTYPE_STREAM: u64 = 0;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn gaussian_vec<R: Rng + ?Sized>(d: usize, std: f64, rng: &mut R) -> Vec<f64> {
    (0..d)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn normalize(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|x| x / n).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (norm(a) * norm(b))
}

fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v = gaussian_vec(d, 1.0, rng);
        if norm(&v) > 1e-12 {
            return normalize(&v);
        }
    }
}

/// Per-prototype feature directions plus the fixed question-side embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeBank {
    pub visual: Vec<Vec<f64>>,
    pub audio: Vec<Vec<f64>>,
    pub text: Vec<Vec<f64>>,
    /// One unit vector per question type, indexed by `QuestionType::index`.
    pub question_types: Vec<Vec<f64>>,
    /// Target feature of untargeted (counting) questions.
    pub any_object: Vec<f64>,
    /// Signature of each grid quadrant, indexed by `Quadrant::index`.
    pub positions: Vec<Vec<f64>>,
}

impl PrototypeBank {
    pub fn len(&self) -> usize {
        self.visual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visual.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.any_object.len()
    }
}

/// Visual prototypes are rejection-sampled to be pairwise |cos| < 0.5; text
/// prototypes are small perturbations of their visual counterpart; audio
/// prototypes are drawn independently.
pub fn gen_prototypes(spec: &ScenarioSpec) -> Result<PrototypeBank> {
    spec.validate()?;
    let (k, d) = (spec.num_prototypes, spec.d);
    let mut rng = stream_rng(spec.seed, PROTOTYPE_STREAM);

    let budget = 10 * k * d;
    let mut draws = 0;
    let mut visual: Vec<Vec<f64>> = Vec::with_capacity(k);
    while visual.len() < k {
        if draws >= budget {
            return Err(TassError::Seed(format!(
                "rejection sampling of {k} visual prototypes in d={d} exceeded {budget} draws; retry with another seed"
            )));
        }
        draws += 1;
        let candidate = random_unit(d, &mut rng);
        if visual
            .iter()
            .all(|v| cosine(v, &candidate).abs() < MAX_VISUAL_COSINE)
        {
            visual.push(candidate);
        }
    }

    let jitter = TEXT_JITTER / (d as f64).sqrt();
    let text = visual
        .iter()
        .map(|v| {
            let eps = gaussian_vec(d, jitter, &mut rng);
            normalize(&v.iter().zip(&eps).map(|(a, b)| a + b).collect::<Vec<_>>())
        })
        .collect();
    let audio = (0..k).map(|_| random_unit(d, &mut rng)).collect();
    let question_types = (0..4).map(|_| random_unit(d, &mut rng)).collect();
    let any_object = random_unit(d, &mut rng);
    let positions = (0..4).map(|_| random_unit(d, &mut rng)).collect();

    Ok(PrototypeBank {
        visual,
        audio,
        text,
        question_types,
        any_object,
        positions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_two_by_two() {
        let spec = ScenarioSpec {
            num_prototypes: 2,
            d: 2,
            ..Default::default()
        };
        for seed in 0..20 {
            let bank = gen_prototypes(&ScenarioSpec { seed, ..spec.clone() }).unwrap();
            assert!(cosine(&bank.visual[0], &bank.visual[1]).abs() < MAX_VISUAL_COSINE);
        }
    }

    #[test]
    fn impossible_packing_is_a_seed_error() {
        // Five directions in the plane cannot all be pairwise |cos| < 0.5.
        let spec = ScenarioSpec {
            num_prototypes: 5,
            d: 2,
            ..Default::default()
        };
        assert!(matches!(gen_prototypes(&spec), Err(TassError::Seed(_))));
    }

    #[test]
    fn same_seed_same_bank() {
        let spec = ScenarioSpec::default();
        assert_eq!(gen_prototypes(&spec).unwrap(), gen_prototypes(&spec).unwrap());
    }
}
