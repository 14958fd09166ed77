use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::protos::{normalize, PrototypeBank};
use super::scene::{Quadrant, SceneScript};
use crate::error::{Result, TassError};
use crate::numcore::Tensor;
use crate::types::{QASample, QuestionType};

/// Latent form of a question: what it asks and about which prototype.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_type: QuestionType,
    pub target: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Answer {
    Yes,
    No,
    Count(usize),
    Object(usize),
    Region(Quadrant),
}

/// Answer vocabulary covering the enabled question types, in a fixed order:
/// yes/no, counts `0..=max_count`, object names, quadrant names.
#[derive(Clone, Debug, PartialEq)]
pub struct AnswerVocab {
    answers: Vec<Answer>,
}

impl AnswerVocab {
    pub fn new(types: &[QuestionType], num_prototypes: usize, max_count: usize) -> Self {
        let mut answers = Vec::new();
        if types.contains(&QuestionType::Existential) {
            answers.extend([Answer::Yes, Answer::No]);
        }
        if types.contains(&QuestionType::Counting) {
            answers.extend((0..=max_count).map(Answer::Count));
        }
        if types.contains(&QuestionType::TemporalFirst) {
            answers.extend((0..num_prototypes).map(Answer::Object));
        }
        if types.contains(&QuestionType::Location) {
            answers.extend(Quadrant::ALL.map(Answer::Region));
        }
        Self { answers }
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn index_of(&self, answer: Answer) -> Result<usize> {
        self.answers
            .iter()
            .position(|&a| a == answer)
            .ok_or_else(|| TassError::Contract(format!("{answer:?} is not in the vocabulary")))
    }

    pub fn answer(&self, index: usize) -> Option<Answer> {
        self.answers.get(index).copied()
    }

    pub fn names(&self) -> Vec<String> {
        self.answers
            .iter()
            .map(|a| match a {
                Answer::Yes => "yes".to_string(),
                Answer::No => "no".to_string(),
                Answer::Count(n) => n.to_string(),
                Answer::Object(k) => format!("object_{k}"),
                Answer::Region(q) => q.name().to_string(),
            })
            .collect()
    }
}

fn require_target(script: &SceneScript, q: &Question) -> Result<usize> {
    match q.target {
        Some(k) if k < script.num_prototypes => Ok(k),
        other => Err(TassError::Contract(format!(
            "{} question needs a target prototype in 0..{}, got {other:?}",
            q.question_type, script.num_prototypes
        ))),
    }
}

/// Ground truth computed from the latent script alone.
pub fn oracle_answer(script: &SceneScript, question: &Question) -> Result<Answer> {
    match question.question_type {
        QuestionType::Existential => {
            let k = require_target(script, question)?;
            Ok(if script.is_sounding(k) {
                Answer::Yes
            } else {
                Answer::No
            })
        }
        QuestionType::Counting => {
            if question.target.is_some() {
                return Err(TassError::Contract("counting questions are untargeted".into()));
            }
            let n = script
                .objects
                .iter()
                .filter(|o| o.sounding.is_some())
                .count();
            Ok(Answer::Count(n))
        }
        QuestionType::TemporalFirst => {
            let k = require_target(script, question)?;
            if !script.is_sounding(k) {
                return Err(TassError::Contract(format!(
                    "temporal question about silent or absent prototype {k}"
                )));
            }
            let first = script
                .objects
                .iter()
                .filter_map(|o| o.sounding.map(|(on, _)| (on, o.prototype)))
                .min()
                .expect("target is sounding");
            Ok(Answer::Object(first.1))
        }
        QuestionType::Location => {
            let k = require_target(script, question)?;
            script
                .quadrant_of(k)
                .map(Answer::Region)
                .ok_or_else(|| TassError::Contract(format!("location of absent prototype {k}")))
        }
    }
}

/// Picks a target for `kind`, builds the question and target features, and
/// labels the sample with the oracle answer.
pub fn gen_question_answer<R: Rng + ?Sized>(
    script: &SceneScript,
    bank: &PrototypeBank,
    vocab: &AnswerVocab,
    kind: QuestionType,
    video_id: &str,
    rng: &mut R,
) -> Result<(QASample, Question)> {
    let k = script.num_prototypes;
    let sounding: Vec<usize> = (0..k).filter(|&p| script.is_sounding(p)).collect();
    let target = match kind {
        QuestionType::Existential => {
            let silent: Vec<usize> = (0..k).filter(|&p| !script.is_sounding(p)).collect();
            let pool = if silent.is_empty() || (rng.random::<bool>() && !sounding.is_empty()) {
                &sounding
            } else {
                &silent
            };
            Some(*pool.choose(rng).expect("non-empty pool"))
        }
        QuestionType::Counting => None,
        QuestionType::TemporalFirst => Some(resample(k, rng, |p| script.is_sounding(p))?),
        QuestionType::Location => Some(resample(k, rng, |p| script.is_present(p))?),
    };
    let question = Question {
        question_type: kind,
        target,
    };
    let answer = vocab.index_of(oracle_answer(script, &question)?)?;
    let target_feature = match target {
        Some(p) => bank.text[p].clone(),
        None => bank.any_object.clone(),
    };
    let q: Vec<f64> = target_feature
        .iter()
        .zip(&bank.question_types[kind.index()])
        .map(|(a, b)| a + b)
        .collect();
    let sample = QASample {
        video_id: video_id.to_string(),
        question: Tensor::row(normalize(&q)),
        target: Tensor::row(target_feature),
        question_type: kind,
        answer,
    };
    Ok((sample, question))
}

/// Draws prototypes uniformly until one satisfies `ok`.
fn resample<R: Rng + ?Sized>(k: usize, rng: &mut R, ok: impl Fn(usize) -> bool) -> Result<usize> {
    if !(0..k).any(&ok) {
        return Err(TassError::Contract("no prototype satisfies the question".into()));
    }
    loop {
        let p = rng.random_range(0..k);
        if ok(p) {
            return Ok(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::scene::SceneObject;

    fn script(objects: Vec<SceneObject>) -> SceneScript {
        SceneScript {
            h: 4,
            w: 4,
            segments: 6,
            num_prototypes: 5,
            objects,
        }
    }

    fn obj(prototype: usize, cell: usize, sounding: Option<(usize, usize)>) -> SceneObject {
        SceneObject {
            prototype,
            cell,
            sounding,
        }
    }

    #[test]
    fn existential() {
        let s = script(vec![obj(0, 0, Some((1, 3))), obj(2, 5, None)]);
        let ask = |k| Question {
            question_type: QuestionType::Existential,
            target: Some(k),
        };
        assert_eq!(oracle_answer(&s, &ask(0)).unwrap(), Answer::Yes);
        assert_eq!(oracle_answer(&s, &ask(2)).unwrap(), Answer::No);
        assert_eq!(oracle_answer(&s, &ask(4)).unwrap(), Answer::No);
        assert_eq!(oracle_answer(&s, &ask(4)).unwrap(), oracle_answer(&s, &ask(4)).unwrap());
    }

    #[test]
    fn counting_three_sounders() {
        let s = script(vec![
            obj(0, 0, Some((1, 3))),
            obj(1, 1, Some((0, 2))),
            obj(3, 2, Some((4, 6))),
            obj(4, 3, None),
        ]);
        let q = Question {
            question_type: QuestionType::Counting,
            target: None,
        };
        assert_eq!(oracle_answer(&s, &q).unwrap(), Answer::Count(3));
    }

    #[test]
    fn temporal_first_and_location() {
        let s = script(vec![obj(0, 0, Some((2, 3))), obj(3, 15, Some((1, 6)))]);
        let q = Question {
            question_type: QuestionType::TemporalFirst,
            target: Some(0),
        };
        assert_eq!(oracle_answer(&s, &q).unwrap(), Answer::Object(3));
        let q = Question {
            question_type: QuestionType::Location,
            target: Some(3),
        };
        assert_eq!(
            oracle_answer(&s, &q).unwrap(),
            Answer::Region(Quadrant::BottomRight)
        );
    }

    #[test]
    fn malformed_questions() {
        let s = script(vec![obj(0, 0, None)]);
        let cases = [
            (QuestionType::Existential, None),
            (QuestionType::Existential, Some(9)),
            (QuestionType::Counting, Some(0)),
            (QuestionType::TemporalFirst, Some(0)),
            (QuestionType::Location, Some(1)),
        ];
        for (question_type, target) in cases {
            let q = Question {
                question_type,
                target,
            };
            assert!(matches!(oracle_answer(&s, &q), Err(TassError::Contract(_))), "{q:?}");
        }
    }

    #[test]
    fn vocab_layout() {
        let v = AnswerVocab::new(&QuestionType::ALL, 2, 3);
        assert_eq!(
            v.names(),
            vec![
                "yes", "no", "0", "1", "2", "3", "object_0", "object_1", "top-left", "top-right",
                "bottom-left", "bottom-right"
            ]
        );
        let loc = AnswerVocab::new(&[QuestionType::Location], 6, 3);
        assert_eq!(loc.len(), 4);
        assert!(loc.index_of(Answer::Yes).is_err());
    }
}
