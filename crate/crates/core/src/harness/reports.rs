//! Typed experiment reports and their on-disk form: one table per
//! experiment (CSV or JSON rows) plus a JSON summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, OutputFormat};
use super::study::{StudyResult, Variant};
use crate::dynamics::frozen_velocity_moments;
use crate::dynamics::frozen_velocity_sample;
use crate::error::{Error, Result};
use crate::metrics::{order_fit, HolderPoint, OrderFit};
use crate::model::{ModelSpec, ValidationReport};

pub const ARTIFACT: &str = "mvsk";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Rows that can be written as CSV lines or JSON objects.
pub trait TableRow: Serialize {
    const HEADER: &'static str;
    fn csv_line(&self, out: &mut String);
}

/// Mean and standard error; the error is absent for a single sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: Option<f64>,
    pub n: usize,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = (n > 1).then(|| {
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Self { mean, se, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaAudit {
    pub replica: u32,
    pub common_path_sha256: String,
    pub systems: usize,
}

/// Config echo and seed lineage carried by every summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub artifact: &'static str,
    pub version: &'static str,
    pub experiment: &'static str,
    pub model: String,
    pub root_seed: u64,
    /// Stream id layout: `role << 56 | replica << 32 | index`.
    pub stream_roles: [&'static str; 4],
    pub config: ExperimentConfig,
}

impl Provenance {
    fn new(experiment: &'static str, cfg: &ExperimentConfig, model: &str) -> Self {
        Self {
            artifact: ARTIFACT,
            version: VERSION,
            experiment,
            model: model.to_string(),
            root_seed: cfg.seed,
            stream_roles: ["common=1", "idiosyncratic=2", "initial-law=3", "projection=4"],
            config: cfg.clone(),
        }
    }
}

fn audits(study: &StudyResult) -> Vec<ReplicaAudit> {
    study
        .replicas
        .iter()
        .map(|r| ReplicaAudit {
            replica: r.replica,
            common_path_sha256: r.audit[0].sha256.clone(),
            systems: r.audit.len(),
        })
        .collect()
}

/// A finished experiment: rows plus summary, written as a unit.
#[derive(Debug, Clone)]
pub struct Report<R, S> {
    pub name: &'static str,
    pub rows: Vec<R>,
    pub summary: S,
}

impl<R: TableRow, S: Serialize> Report<R, S> {
    pub fn table_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(R::HEADER);
        s.push('\n');
        for r in &self.rows {
            r.csv_line(&mut s);
            s.push('\n');
        }
        s
    }

    /// Writes `<name>.csv` or `<name>.json` and `<name>_summary.json`.
    pub fn write(&self, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (table, body) = match format {
            OutputFormat::Csv => (dir.join(format!("{}.csv", self.name)), self.table_csv()),
            OutputFormat::Json => (
                dir.join(format!("{}.json", self.name)),
                serde_json::to_string_pretty(&self.rows)? + "\n",
            ),
        };
        std::fs::write(&table, body).map_err(|e| Error::io(&table, e))?;
        let summary = dir.join(format!("{}_summary.json", self.name));
        let text = serde_json::to_string_pretty(&self.summary)? + "\n";
        std::fs::write(&summary, text).map_err(|e| Error::io(&summary, e))?;
        Ok(vec![table, summary])
    }
}

// ---------------------------------------------------------------- convergence

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub replica: u32,
    pub time: f64,
    pub variant: Variant,
    pub w2: f64,
    pub n_particles: usize,
    pub seed: u64,
}

impl TableRow for ConvergenceRow {
    const HEADER: &'static str = "epsilon,replica,time,variant,w2,n_particles,seed";
    fn csv_line(&self, out: &mut String) {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            self.epsilon,
            self.replica,
            self.time,
            self.variant.label(),
            self.w2,
            self.n_particles,
            self.seed
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceCell {
    pub epsilon: f64,
    pub time: f64,
    pub variant: Variant,
    pub w2: MeanSe,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantTrend {
    pub variant: Variant,
    /// Replica-mean W2 at the final checkpoint, one per mass.
    pub final_means: Vec<f64>,
    pub strictly_decreasing: bool,
    /// Smallest-mass mean over largest-mass mean.
    pub reduction_ratio: f64,
    pub order_fit: Option<OrderFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    /// Candidate limits compared: paper limit and common-noise-only reference.
    pub winner: Variant,
    pub winner_final_w2: f64,
    pub runner_up_final_w2: f64,
    /// Runner-up minus winner at the smallest mass and final time.
    pub margin: f64,
    /// Whether the winner decreases strictly and at least halves across masses.
    pub winner_converges: bool,
    /// Final smallest-mass W2 of the opt-in classical system, if run.
    pub classical_final_w2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub provenance: Provenance,
    pub audit: Vec<ReplicaAudit>,
    pub cells: Vec<ConvergenceCell>,
    pub trends: Vec<VariantTrend>,
    pub verdict: Verdict,
}

pub type ConvergenceReport = Report<ConvergenceRow, ConvergenceSummary>;

fn final_means(study: &StudyResult, v: usize) -> Vec<f64> {
    let last = study.config.checkpoint_times.len() - 1;
    (0..study.config.eps_grid.len())
        .map(|e| {
            let xs: Vec<f64> = study.runs_at(e).map(|(_, run)| run.w2[last][v]).collect();
            MeanSe::of(&xs).mean
        })
        .collect()
}

pub fn convergence_report(study: &StudyResult) -> Result<ConvergenceReport> {
    let cfg = &study.config;
    let mut rows = Vec::new();
    for (e, &eps) in cfg.eps_grid.iter().enumerate() {
        for (r, run) in study.runs_at(e) {
            for (k, &time) in cfg.checkpoint_times.iter().enumerate() {
                for (v, &variant) in study.variants.iter().enumerate() {
                    rows.push(ConvergenceRow {
                        epsilon: eps,
                        replica: r,
                        time,
                        variant,
                        w2: run.w2[k][v],
                        n_particles: cfg.n_particles,
                        seed: cfg.seed,
                    });
                }
            }
        }
    }
    let mut cells = Vec::new();
    for (e, &eps) in cfg.eps_grid.iter().enumerate() {
        for (k, &time) in cfg.checkpoint_times.iter().enumerate() {
            for (v, &variant) in study.variants.iter().enumerate() {
                let xs: Vec<f64> = study.runs_at(e).map(|(_, run)| run.w2[k][v]).collect();
                cells.push(ConvergenceCell {
                    epsilon: eps,
                    time,
                    variant,
                    w2: MeanSe::of(&xs),
                });
            }
        }
    }
    let trends: Vec<VariantTrend> = study
        .variants
        .iter()
        .enumerate()
        .map(|(v, &variant)| {
            let means = final_means(study, v);
            let pts: Vec<(f64, f64)> = cfg.eps_grid.iter().copied().zip(means.iter().copied()).collect();
            VariantTrend {
                variant,
                strictly_decreasing: means.windows(2).all(|w| w[1] < w[0]),
                reduction_ratio: means[means.len() - 1] / means[0],
                order_fit: order_fit(&pts).ok(),
                final_means: means,
            }
        })
        .collect();
    let paper = &trends[0];
    let reference = &trends[2];
    let last = |t: &VariantTrend| t.final_means[t.final_means.len() - 1];
    let (win, lose) = if last(reference) < last(paper) {
        (reference, paper)
    } else {
        (paper, reference)
    };
    let verdict = Verdict {
        winner: win.variant,
        winner_final_w2: last(win),
        runner_up_final_w2: last(lose),
        margin: last(lose) - last(win),
        winner_converges: win.strictly_decreasing && win.reduction_ratio <= 0.5,
        classical_final_w2: trends.get(3).map(last),
    };
    Ok(Report {
        name: "convergence",
        rows,
        summary: ConvergenceSummary {
            provenance: Provenance::new("convergence", cfg, &study.model_name),
            audit: audits(study),
            cells,
            trends,
            verdict,
        },
    })
}

// ------------------------------------------------------------------- ablation

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub epsilon: f64,
    pub replica: u32,
    pub time: f64,
    pub w2_ablated: f64,
    pub w2_paper_limit: f64,
    pub w2_reference: f64,
    /// `w2_ablated - w2_paper_limit`: removing only the drift term.
    pub diff_vs_paper_limit: f64,
    pub diff_vs_best: f64,
}

impl TableRow for AblationRow {
    const HEADER: &'static str =
        "epsilon,replica,time,w2_ablated,w2_paper_limit,w2_reference,diff_vs_paper_limit,diff_vs_best";
    fn csv_line(&self, out: &mut String) {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{}",
            self.epsilon,
            self.replica,
            self.time,
            self.w2_ablated,
            self.w2_paper_limit,
            self.w2_reference,
            self.diff_vs_paper_limit,
            self.diff_vs_best
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedDifference {
    pub against: Variant,
    pub difference: MeanSe,
    pub n_positive: usize,
    pub n_negative: usize,
    pub n_zero: usize,
    /// Mean over standard error, when defined.
    pub z: Option<f64>,
}

impl PairedDifference {
    fn of(against: Variant, diffs: &[f64]) -> Self {
        let difference = MeanSe::of(diffs);
        Self {
            against,
            difference,
            n_positive: diffs.iter().filter(|d| **d > 0.0).count(),
            n_negative: diffs.iter().filter(|d| **d < 0.0).count(),
            n_zero: diffs.iter().filter(|d| **d == 0.0).count(),
            z: difference.se.filter(|s| *s > 0.0).map(|s| difference.mean / s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationSummary {
    pub provenance: Provenance,
    pub audit: Vec<ReplicaAudit>,
    pub epsilon: f64,
    pub time: f64,
    pub w2_ablated: MeanSe,
    pub w2_paper_limit: MeanSe,
    pub w2_reference: MeanSe,
    pub best_variant: Variant,
    pub vs_paper_limit: PairedDifference,
    pub vs_best: PairedDifference,
}

pub type AblationReport = Report<AblationRow, AblationSummary>;

pub fn ablation_report(study: &StudyResult) -> Result<AblationReport> {
    let cfg = &study.config;
    let e = cfg.eps_grid.len() - 1;
    let k = cfg.checkpoint_times.len() - 1;
    let eps = cfg.eps_grid[e];
    let time = cfg.checkpoint_times[k];
    let col = |v: usize| -> Vec<f64> { study.runs_at(e).map(|(_, run)| run.w2[k][v]).collect() };
    let (paper, ablated, reference) = (col(0), col(1), col(2));
    let best_variant = if MeanSe::of(&reference).mean < MeanSe::of(&paper).mean {
        Variant::Reference
    } else {
        Variant::PaperLimit
    };
    let best = if best_variant == Variant::Reference { &reference } else { &paper };
    let rows: Vec<AblationRow> = study
        .runs_at(e)
        .enumerate()
        .map(|(i, (r, _))| AblationRow {
            epsilon: eps,
            replica: r,
            time,
            w2_ablated: ablated[i],
            w2_paper_limit: paper[i],
            w2_reference: reference[i],
            diff_vs_paper_limit: ablated[i] - paper[i],
            diff_vs_best: ablated[i] - best[i],
        })
        .collect();
    let d_paper: Vec<f64> = rows.iter().map(|r| r.diff_vs_paper_limit).collect();
    let d_best: Vec<f64> = rows.iter().map(|r| r.diff_vs_best).collect();
    Ok(Report {
        name: "ablation",
        summary: AblationSummary {
            provenance: Provenance::new("ablation", cfg, &study.model_name),
            audit: audits(study),
            epsilon: eps,
            time,
            w2_ablated: MeanSe::of(&ablated),
            w2_paper_limit: MeanSe::of(&paper),
            w2_reference: MeanSe::of(&reference),
            best_variant,
            vs_paper_limit: PairedDifference::of(Variant::PaperLimit, &d_paper),
            vs_best: PairedDifference::of(best_variant, &d_best),
        },
        rows,
    })
}

// --------------------------------------------------------------------- lemmas

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaCheck {
    SupMoment,
    Holder,
    FrozenResidual,
}

impl LemmaCheck {
    fn label(self) -> &'static str {
        match self {
            LemmaCheck::SupMoment => "sup_moment",
            LemmaCheck::Holder => "holder",
            LemmaCheck::FrozenResidual => "frozen_residual",
        }
    }
}

/// Long-format row: `abscissa` is the horizon, the lag, or the time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaRow {
    pub check: LemmaCheck,
    pub epsilon: f64,
    pub replica: Option<u32>,
    pub abscissa: f64,
    pub value: f64,
}

impl TableRow for LemmaRow {
    const HEADER: &'static str = "check,epsilon,replica,abscissa,value";
    fn csv_line(&self, out: &mut String) {
        let replica = self.replica.map(|r| r.to_string()).unwrap_or_default();
        let _ = write!(
            out,
            "{},{},{},{},{}",
            self.check.label(),
            self.epsilon,
            replica,
            self.abscissa,
            self.value
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupMomentSummary {
    pub per_epsilon: Vec<(f64, MeanSe)>,
    /// Largest over smallest replica-mean across masses.
    pub spread_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderSummary {
    pub epsilon: f64,
    pub curve: Vec<HolderPoint>,
    pub fit: Option<OrderFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrozenResidualSummary {
    pub x: f64,
    pub force: f64,
    pub time: f64,
    pub points: Vec<(f64, f64)>,
    pub fit: Option<OrderFit>,
    /// `max residual / (eps (1 + |x|^2))` over the sweep.
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrozenSampleSummary {
    pub epsilon: f64,
    pub time: f64,
    pub n_samples: usize,
    /// `eps * mean(V_0^2)` over exact samples.
    pub sampled: f64,
    /// `S_00 / (2 gamma(x))`.
    pub target: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaSummary {
    pub provenance: Provenance,
    pub sup_moment: SupMomentSummary,
    pub holder: Vec<HolderSummary>,
    pub frozen_residual: FrozenResidualSummary,
    pub frozen_sample: FrozenSampleSummary,
}

pub type LemmaReport = Report<LemmaRow, LemmaSummary>;

fn lemma_point(cfg: &ExperimentConfig, model: &ModelSpec) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; model.d];
    let mut f = vec![0.0; model.d];
    x[0] = cfg.lemma.x;
    f[0] = cfg.lemma.force;
    (x, f)
}

fn initial_velocity_law(model: &ModelSpec) -> (Vec<f64>, Vec<f64>) {
    let d = model.d;
    let mut cov = vec![0.0; d * d];
    for c in 0..d {
        cov[c * d + c] = model.initial.v_std[c] * model.initial.v_std[c];
    }
    (model.initial.v_mean.clone(), cov)
}

/// `|| eps E[V V^T](t) - S / (2 gamma) ||_F` for the frozen process.
pub fn frozen_residual(model: &ModelSpec, x: &[f64], force: &[f64], eps: f64, t: f64) -> f64 {
    let (m0, c0) = initial_velocity_law(model);
    let fm = frozen_velocity_moments(x, force, eps, t, &m0, &c0, model);
    let g = model.friction.gamma(x);
    let s = model.noise_covariance(x);
    fm.second_moment
        .iter()
        .zip(&s)
        .map(|(p, q)| {
            let r = p - q / (2.0 * g);
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

pub fn frozen_sample_check(cfg: &ExperimentConfig, model: &ModelSpec) -> FrozenSampleSummary {
    let (x, f) = lemma_point(cfg, model);
    let l = &cfg.lemma;
    let d = model.d;
    let samples = frozen_velocity_sample(&x, &f, l.sample_eps, l.sample_t, l.n_samples, cfg.seed, model);
    let sampled = l.sample_eps * samples.chunks_exact(d).map(|v| v[0] * v[0]).sum::<f64>() / l.n_samples as f64;
    let target = model.noise_covariance(&x)[0] / (2.0 * model.friction.gamma(&x));
    FrozenSampleSummary {
        epsilon: l.sample_eps,
        time: l.sample_t,
        n_samples: l.n_samples,
        sampled,
        target,
        relative_error: (sampled - target).abs() / target,
    }
}

pub fn lemma_report(study: &StudyResult, model: &ModelSpec) -> Result<LemmaReport> {
    let cfg = &study.config;
    let mut rows = Vec::new();
    let mut per_eps = Vec::new();
    let mut holder = Vec::new();
    for (e, &eps) in cfg.eps_grid.iter().enumerate() {
        let sups: Vec<f64> = study.runs_at(e).map(|(_, run)| run.sup_second_moment).collect();
        for (r, run) in study.runs_at(e) {
            rows.push(LemmaRow {
                check: LemmaCheck::SupMoment,
                epsilon: eps,
                replica: Some(r),
                abscissa: cfg.horizon,
                value: run.sup_second_moment,
            });
        }
        per_eps.push((eps, MeanSe::of(&sups)));
        let mut curve = Vec::new();
        for (j, &lag) in cfg.holder_lags.iter().enumerate() {
            let msd: Vec<f64> = study.runs_at(e).map(|(_, run)| run.holder[j].msd).collect();
            for (r, run) in study.runs_at(e) {
                rows.push(LemmaRow {
                    check: LemmaCheck::Holder,
                    epsilon: eps,
                    replica: Some(r),
                    abscissa: lag,
                    value: run.holder[j].msd,
                });
            }
            curve.push(HolderPoint {
                lag,
                msd: MeanSe::of(&msd).mean,
            });
        }
        let fit = order_fit(&curve.iter().map(|p| (p.lag, p.msd)).collect::<Vec<_>>()).ok();
        holder.push(HolderSummary {
            epsilon: eps,
            curve,
            fit,
        });
    }
    let means: Vec<f64> = per_eps.iter().map(|(_, m)| m.mean).collect();
    let spread_ratio =
        means.iter().copied().fold(f64::MIN, f64::max) / means.iter().copied().fold(f64::MAX, f64::min);

    let (x, f) = lemma_point(cfg, model);
    let l = &cfg.lemma;
    let mut points = Vec::new();
    for &eps in &l.eps_grid {
        let res = frozen_residual(model, &x, &f, eps, l.t);
        rows.push(LemmaRow {
            check: LemmaCheck::FrozenResidual,
            epsilon: eps,
            replica: None,
            abscissa: l.t,
            value: res,
        });
        points.push((eps, res));
    }
    let x2: f64 = x.iter().map(|v| v * v).sum();
    let constant = points
        .iter()
        .map(|(e, r)| r / (e * (1.0 + x2)))
        .fold(0.0, f64::max);
    let frozen_residual = FrozenResidualSummary {
        x: l.x,
        force: l.force,
        time: l.t,
        fit: order_fit(&points).ok(),
        points,
        constant,
    };
    Ok(Report {
        name: "lemmas",
        rows,
        summary: LemmaSummary {
            provenance: Provenance::new("lemmas", cfg, &study.model_name),
            sup_moment: SupMomentSummary {
                per_epsilon: per_eps,
                spread_ratio,
            },
            holder,
            frozen_residual,
            frozen_sample: frozen_sample_check(cfg, model),
        },
    })
}

// ------------------------------------------------------------------- momentum

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentumRow {
    pub epsilon: f64,
    pub replica: u32,
    pub window_length: f64,
    pub n_windows: usize,
    pub kinetic: f64,
    pub averaged: f64,
    pub gap: f64,
}

impl TableRow for MomentumRow {
    const HEADER: &'static str = "epsilon,replica,window_length,n_windows,kinetic,averaged,gap";
    fn csv_line(&self, out: &mut String) {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            self.epsilon, self.replica, self.window_length, self.n_windows, self.kinetic, self.averaged, self.gap
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentumSummary {
    pub provenance: Provenance,
    pub per_epsilon: Vec<(f64, MeanSe)>,
    /// Largest-mass mean gap over smallest-mass mean gap.
    pub decrease_factor: f64,
}

pub type MomentumReport = Report<MomentumRow, MomentumSummary>;

pub fn momentum_report(study: &StudyResult, model: &ModelSpec) -> Result<MomentumReport> {
    if model.d != 1 {
        return Err(Error::UnsupportedDimension {
            op: "momentum diagnostic",
            expected: 1,
            got: model.d,
        });
    }
    let cfg = &study.config;
    let mut rows = Vec::new();
    let mut per_eps = Vec::new();
    for (e, &eps) in cfg.eps_grid.iter().enumerate() {
        let mut gaps = Vec::new();
        for (r, run) in study.runs_at(e) {
            let Some(mom) = &run.momentum else {
                return Err(Error::config(format!(
                    "no averaging window fits in [s0, T] at eps = {eps}; lower delta_coeff"
                )));
            };
            gaps.push(mom.gap);
            rows.push(MomentumRow {
                epsilon: eps,
                replica: r,
                window_length: mom.window_length,
                n_windows: mom.n_windows,
                kinetic: mom.kinetic,
                averaged: mom.averaged,
                gap: mom.gap,
            });
        }
        per_eps.push((eps, MeanSe::of(&gaps)));
    }
    let decrease_factor = per_eps[0].1.mean / per_eps[per_eps.len() - 1].1.mean;
    Ok(Report {
        name: "momentum",
        rows,
        summary: MomentumSummary {
            provenance: Provenance::new("momentum", cfg, &study.model_name),
            per_epsilon: per_eps,
            decrease_factor,
        },
    })
}

// ------------------------------------------------------------------- validate

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub assumption: String,
    pub metric: String,
    pub observed: f64,
    pub limit: f64,
    pub passed: bool,
}

impl TableRow for ValidationRow {
    const HEADER: &'static str = "assumption,metric,observed,limit,passed";
    fn csv_line(&self, out: &mut String) {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            self.assumption, self.metric, self.observed, self.limit, self.passed
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub provenance: Provenance,
    pub report: ValidationReport,
}

pub type ValidationOutput = Report<ValidationRow, ValidationSummary>;

pub fn validation_output(cfg: &ExperimentConfig, report: ValidationReport) -> ValidationOutput {
    let rows = report
        .checks
        .iter()
        .flat_map(|c| {
            c.margins.iter().map(|m| ValidationRow {
                assumption: c.assumption.clone(),
                metric: m.metric.clone(),
                observed: m.observed,
                limit: m.limit,
                passed: m.passed,
            })
        })
        .collect();
    Report {
        name: "validation",
        rows,
        summary: ValidationSummary {
            provenance: Provenance::new("validate", cfg, &report.model),
            report,
        },
    }
}

// ------------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldRow {
    pub time: f64,
    pub bin_center: f64,
    pub mass: f64,
    pub momentum: f64,
}

impl TableRow for FieldRow {
    const HEADER: &'static str = crate::meanfield::BinnedField::CSV_HEADER;
    fn csv_line(&self, out: &mut String) {
        let _ = write!(out, "{},{},{},{}", self.time, self.bin_center, self.mass, self.momentum);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub provenance: Provenance,
    pub epsilon: f64,
    pub dt: f64,
    pub replica: u32,
    pub times: Vec<f64>,
    pub out_of_range_mass: Vec<f64>,
    pub final_mean_position: Vec<f64>,
    pub final_second_moment: f64,
}

pub type SimulationReport = Report<FieldRow, SimulationSummary>;

pub(crate) fn simulation_provenance(cfg: &ExperimentConfig, model: &str) -> Provenance {
    Provenance::new("simulate", cfg, model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_basics() {
        let m = MeanSe::of(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.se.unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanSe::of(&[4.0]).se, None);
    }

    #[test]
    fn paired_difference_counts() {
        let p = PairedDifference::of(Variant::PaperLimit, &[0.1, -0.2, 0.0, 0.3]);
        assert_eq!((p.n_positive, p.n_negative, p.n_zero), (2, 1, 1));
        assert!(p.z.is_some());
    }

    #[test]
    fn frozen_residual_vanishes_when_relaxed() {
        use crate::model::{FrictionSpec, InitialLaw, KernelSpec, NoiseFamily};
        let model = ModelSpec::new(
            "frozen",
            1,
            FrictionSpec::constant(2.0),
            KernelSpec::zero(),
            NoiseFamily::constant(vec![vec![1.0]]),
            InitialLaw::standard_gaussian(1),
        )
        .unwrap();
        assert!(frozen_residual(&model, &[0.0], &[0.0], 1e-3, 1.0) < 1e-10);
    }

    #[test]
    fn csv_rows_render() {
        let mut s = String::new();
        ConvergenceRow {
            epsilon: 0.05,
            replica: 3,
            time: 1.0,
            variant: Variant::Reference,
            w2: 0.125,
            n_particles: 10,
            seed: 7,
        }
        .csv_line(&mut s);
        assert_eq!(s, "0.05,3,1,reference,0.125,10,7");
        let mut s = String::new();
        LemmaRow {
            check: LemmaCheck::FrozenResidual,
            epsilon: 0.1,
            replica: None,
            abscissa: 0.2,
            value: 1.5,
        }
        .csv_line(&mut s);
        assert_eq!(s, "frozen_residual,0.1,,0.2,1.5");
    }
}
