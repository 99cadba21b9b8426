//! The ablation sweep: trains the nine loss configurations (four base
//! methods, their `+` variants with the cyclic-discriminative pair added,
//! and the full objective) under identical seeds and data, evaluates
//! each, and emits one combined metric table.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::PairedSample;
use crate::losses::LossReport;
use crate::metrics::{evaluate, FeatureExtractor, MetricReport, RandomStackBackbone};
use crate::presets::{LossTerm, PresetName};
use crate::trainer::{train, Direction, TrainConfig};

/// One trained-and-evaluated configuration of the sweep.
pub struct AblationColumn {
    pub preset: PresetName,
    pub report: MetricReport,
    /// Mean generator-side cyclic-discriminative value over all steps;
    /// exactly zero for configurations without the CD pair.
    pub mean_cd_generator: f64,
}

/// Column-per-method table over the four metrics.
pub struct AblationTable {
    pub columns: Vec<AblationColumn>,
}

impl AblationTable {
    /// Tab-separated table: metric rows, one column per configuration.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric");
        for col in &self.columns {
            out.push('\t');
            out.push_str(col.preset.as_str());
        }
        out.push('\n');
        let metric_rows: [(&str, fn(&MetricReport) -> f64); 4] = [
            ("ssim", |r| r.mean_ssim),
            ("mse", |r| r.mean_mse),
            ("psnr", |r| r.mean_psnr),
            ("lpips", |r| r.mean_lpips),
        ];
        for (name, get) in metric_rows {
            out.push_str(name);
            for col in &self.columns {
                out.push_str(&format!("\t{:.6}", get(&col.report)));
            }
            out.push('\n');
        }
        out
    }
}

fn mean_cd(log: &[crate::trainer::LogRecord]) -> f64 {
    if log.is_empty() {
        return 0.0;
    }
    log.iter()
        .map(|r| r.report.term(LossTerm::CdA) + r.report.term(LossTerm::CdB))
        .sum::<f64>()
        / log.len() as f64
}

fn run_one(
    base_cfg: &TrainConfig,
    preset: PresetName,
    train_set: &[PairedSample],
    test_set: &[PairedSample],
    out_root: Option<&Path>,
    backbone: &dyn FeatureExtractor,
) -> Result<AblationColumn> {
    let cfg = TrainConfig {
        preset,
        ..base_cfg.clone()
    };
    let run_dir = out_root.map(|root| root.join(preset.as_str().replace('+', "_plus")));
    let (state, log) = train(&cfg, train_set, run_dir.as_deref())?;
    let report = evaluate(&state, test_set, Direction::A2B, backbone)?;
    if let Some(dir) = &run_dir {
        std::fs::write(dir.join("report.tsv"), report.to_tsv())?;
    }
    Ok(AblationColumn {
        preset,
        report,
        mean_cd_generator: mean_cd(&log),
    })
}

/// Runs the full sweep. All sub-runs share `base_cfg` (seed included) and
/// the same data; only the preset differs. Sub-runs execute sequentially
/// unless `parallel` is set, in which case each gets its own thread and
/// output subdirectory. On failure the error is returned after completed
/// columns have been written, so partial results survive.
pub fn ablate(
    base_cfg: &TrainConfig,
    train_set: &[PairedSample],
    test_set: &[PairedSample],
    out_root: Option<&Path>,
    parallel: bool,
) -> Result<AblationTable> {
    if test_set.is_empty() {
        return Err(Error::Dataset("ablation needs a nonempty test set".into()));
    }
    let presets = PresetName::ABLATION;
    let backbone = RandomStackBackbone::new(base_cfg.seed);
    let mut columns = Vec::with_capacity(presets.len());

    if parallel {
        let results: Vec<Result<AblationColumn>> = std::thread::scope(|scope| {
            let handles: Vec<_> = presets
                .iter()
                .map(|&preset| {
                    let backbone = &backbone;
                    scope.spawn(move || {
                        run_one(base_cfg, preset, train_set, test_set, out_root, backbone)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Config("ablation worker panicked".into()))))
                .collect()
        });
        for result in results {
            columns.push(result?);
        }
    } else {
        for &preset in &presets {
            columns.push(run_one(base_cfg, preset, train_set, test_set, out_root, &backbone)?);
        }
    }

    let table = AblationTable { columns };
    if let Some(root) = out_root {
        std::fs::create_dir_all(root)?;
        std::fs::write(root.join("ablation.tsv"), table.to_tsv())?;
    }
    Ok(table)
}

/// Returns the last per-step report of a training log, used by tests to
/// compare configurations.
pub fn last_report(log: &[crate::trainer::LogRecord]) -> Option<&LossReport> {
    log.last().map(|r| &r.report)
}
