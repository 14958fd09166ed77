use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Ablation, Stream, TrainConfig};
use super::eval::EvalReport;
use super::train::train;
use crate::error::{Result, TassError};
use crate::featureio::Dataset;
use crate::jtg::SlotOrder;
use crate::types::QuestionType;

/// A switch the ablation matrix varies, one at a time against the full model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    TargetAware,
    MatchLoss,
    Cms,
    Stream,
    Order,
}

impl Axis {
    pub const ALL: [Axis; 5] = [Axis::TargetAware, Axis::MatchLoss, Axis::Cms, Axis::Stream, Axis::Order];

    pub fn name(self) -> &'static str {
        match self {
            Axis::TargetAware => "target_aware",
            Axis::MatchLoss => "match_loss",
            Axis::Cms => "cms",
            Axis::Stream => "stream",
            Axis::Order => "order",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s || format!("no_{}", a.name()) == s)
            .ok_or_else(|| {
                TassError::Config(format!(
                    "unknown ablation axis {s:?}; expected one of target_aware, match_loss, cms, stream, order"
                ))
            })
    }

    /// Parses a comma-separated list.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',').filter(|p| !p.trim().is_empty()).map(Self::parse).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateConfig {
    /// Settings of the full model; its ablation flags are ignored.
    pub base: TrainConfig,
    /// Seeds per variant; defaults to the base seed.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub axes: Vec<Axis>,
}

impl AblateConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TassError::io(path, e))?;
        let mut config: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.base.train_data, &mut config.base.val_data] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.base.validate()?;
        Ok(config)
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.base.seed]
        } else {
            self.seeds.clone()
        }
    }
}

/// The full model followed by one variant per axis value.
pub fn variants(axes: &[Axis]) -> Vec<Ablation> {
    let full = Ablation::default();
    let mut out = vec![full];
    for &axis in axes {
        match axis {
            Axis::TargetAware => out.push(Ablation { no_target_aware: true, ..full }),
            Axis::MatchLoss => out.push(Ablation { no_match_loss: true, ..full }),
            Axis::Cms => out.push(Ablation { no_cms: true, ..full }),
            Axis::Stream => out.push(Ablation { stream: Stream::Dual, ..full }),
            Axis::Order => {
                for order in [SlotOrder::InterleaveAV, SlotOrder::ConcatVA, SlotOrder::ConcatAV] {
                    out.push(Ablation { order: Some(order), ..full });
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub variant: String,
    pub ablation: Ablation,
    pub seed: u64,
    pub report: EvalReport,
}

/// Trains every variant for every seed on the same data.
pub fn run_ablation(
    config: &AblateConfig,
    axes: &[Axis],
    train_set: &Dataset,
    val_set: &Dataset,
    mut on_run: impl FnMut(&AblationRun),
) -> Result<Vec<AblationRun>> {
    let mut runs = Vec::new();
    for ablation in variants(axes) {
        for seed in config.seeds() {
            let run_config = TrainConfig {
                seed,
                ablation,
                ..config.base.clone()
            };
            let outcome = train(&run_config, train_set, val_set, |_| {})?;
            let run = AblationRun {
                variant: ablation.label(),
                ablation,
                seed,
                report: outcome.final_report().clone(),
            };
            on_run(&run);
            runs.push(run);
        }
    }
    Ok(runs)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub runs: usize,
    pub median_accuracy: f64,
    pub trainable_params: usize,
}

/// One row per variant, in first-seen order.
pub fn summarize(runs: &[AblationRun]) -> Vec<VariantSummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in runs {
        if !names.contains(&r.variant.as_str()) {
            names.push(&r.variant);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let group: Vec<&AblationRun> = runs.iter().filter(|r| r.variant == name).collect();
            let acc: Vec<f64> = group.iter().map(|r| r.report.overall).collect();
            VariantSummary {
                variant: name.to_string(),
                runs: group.len(),
                median_accuracy: median(&acc),
                trainable_params: group[0].report.trainable_params,
            }
        })
        .collect()
}

fn order_name(a: &Ablation) -> &'static str {
    match a.stream {
        Stream::Single => a.slot_order().name(),
        Stream::Dual => "-",
    }
}

/// Per-run table.
pub fn runs_csv(runs: &[AblationRun]) -> String {
    let mut out = String::from("variant,seed,stream,order,overall");
    for kind in QuestionType::ALL {
        write!(out, ",{}", kind.name()).unwrap();
    }
    out.push_str(",loss_qa,loss_cms,loss_match,trainable_params,wall_time_secs\n");
    for r in runs {
        let stream = match r.ablation.stream {
            Stream::Single => "single",
            Stream::Dual => "dual",
        };
        write!(out, "{},{},{},{},{:.6}", r.variant, r.seed, stream, order_name(&r.ablation), r.report.overall).unwrap();
        for kind in QuestionType::ALL {
            match r.report.accuracy_of(kind) {
                Some(a) => write!(out, ",{a:.6}").unwrap(),
                None => out.push(','),
            }
        }
        let l = &r.report.loss;
        writeln!(
            out,
            ",{:.6},{:.6},{:.6},{},{:.3}",
            l.qa, l.cms, l.match_loss, r.report.trainable_params, r.report.wall_time_secs
        )
        .unwrap();
    }
    out
}

/// Per-variant medians.
pub fn summary_csv(summary: &[VariantSummary]) -> String {
    let mut out = String::from("variant,runs,median_accuracy,trainable_params\n");
    for s in summary {
        writeln!(out, "{},{},{:.6},{}", s.variant, s.runs, s.median_accuracy, s.trainable_params).unwrap();
    }
    out
}
