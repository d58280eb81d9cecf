//! Config-driven experiments and their reports.

mod config;
mod reports;
mod study;

pub use config::{
    BinSection, ExperimentConfig, LemmaSection, ModelSection, OutputFormat, PsiSection, SimulateSection,
    ValidateSection,
};
pub use reports::{
    ablation_report, convergence_report, frozen_residual, frozen_sample_check, lemma_report, momentum_report,
    validation_output, AblationReport, AblationRow, AblationSummary, ConvergenceCell, ConvergenceReport,
    ConvergenceRow, ConvergenceSummary, FieldRow, FrozenResidualSummary, FrozenSampleSummary, HolderSummary,
    LemmaCheck, LemmaReport, LemmaRow, LemmaSummary, MeanSe, MomentumReport, MomentumRow, MomentumSummary,
    PairedDifference, Provenance, ReplicaAudit, Report, SimulationReport, SimulationSummary, SupMomentSummary,
    TableRow, ValidationOutput, ValidationRow, ValidationSummary, Verdict, VariantTrend, ARTIFACT, VERSION,
};
pub use study::{
    run_study, run_study_with, AuditEntry, KineticRun, MomentumRun, ReplicaOutcome, StudyResult, Variant,
};

use crate::dynamics::{step_kinetic_with_buffer, KineticEnsemble};
use crate::error::Result;
use crate::meanfield::{local_fields, BinGrid};
use crate::model::{validate_model, ModelSpec, SampleBox};
use crate::noise::{generate_common, Role, SeedDerivation};
use config::grid_steps;

pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    convergence_report(&run_study(cfg)?)
}

pub fn run_ablation(cfg: &ExperimentConfig) -> Result<AblationReport> {
    ablation_report(&run_study(cfg)?)
}

pub fn run_lemma_checks(cfg: &ExperimentConfig) -> Result<LemmaReport> {
    let model = cfg.model_spec()?;
    lemma_report(&run_study_with(cfg, &model)?, &model)
}

pub fn run_momentum_diagnostic(cfg: &ExperimentConfig) -> Result<MomentumReport> {
    let model = cfg.model_spec()?;
    if model.d != 1 {
        return Err(crate::Error::UnsupportedDimension {
            op: "momentum diagnostic",
            expected: 1,
            got: model.d,
        });
    }
    momentum_report(&run_study_with(cfg, &model)?, &model)
}

/// All study-based reports from a single simulation.
#[derive(Debug, Clone)]
pub struct StudyReports {
    pub convergence: ConvergenceReport,
    pub ablation: AblationReport,
    pub lemmas: LemmaReport,
    pub momentum: Option<MomentumReport>,
}

pub fn run_all(cfg: &ExperimentConfig) -> Result<StudyReports> {
    let model = cfg.model_spec()?;
    reports_for(&run_study_with(cfg, &model)?, &model)
}

pub fn reports_for(study: &StudyResult, model: &ModelSpec) -> Result<StudyReports> {
    Ok(StudyReports {
        convergence: convergence_report(study)?,
        ablation: ablation_report(study)?,
        lemmas: lemma_report(study, model)?,
        momentum: if model.d == 1 {
            Some(momentum_report(study, model)?)
        } else {
            None
        },
    })
}

pub fn run_validation(cfg: &ExperimentConfig) -> Result<ValidationOutput> {
    cfg.validate()?;
    let model = cfg.model_spec()?;
    let v = &cfg.validate;
    let report = validate_model(
        &model,
        v.n_samples,
        &SampleBox::cube(model.d, v.box_lo, v.box_hi),
        v.tol,
        cfg.seed,
    )?;
    Ok(validation_output(cfg, report))
}

/// One kinetic run (replica 0) at `simulate.eps`, recording binned local
/// mass and momentum at t = 0 and at every checkpoint.
pub fn run_simulation(cfg: &ExperimentConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    let model = cfg.model_spec()?;
    if model.d != 1 {
        return Err(crate::Error::UnsupportedDimension {
            op: "simulate",
            expected: 1,
            got: model.d,
        });
    }
    let eps = cfg
        .simulate
        .eps
        .unwrap_or_else(|| cfg.eps_grid[cfg.eps_grid.len() - 1]);
    let level = study::kinetic_level(cfg, &model, eps);
    let dt = cfg.dt_fine / f64::from(1u32 << level);
    let m = model.noise.channels();
    let common = generate_common(SeedDerivation::new(cfg.seed, Role::Common, 0, 0), m, cfg.horizon, dt)?;
    let (x0, v0) = model
        .initial
        .sample(&mut SeedDerivation::new(cfg.seed, Role::InitialLaw, 0, 0).rng(), cfg.n_particles);
    let grid = BinGrid::new(cfg.bins.x_min, cfg.bins.x_max, cfg.bins.n_bins)?;
    let mut ens = KineticEnsemble::new(1, x0, v0, eps)?;
    let mut force = vec![0.0; ens.positions.len()];
    let mut rows = Vec::new();
    let mut times = Vec::new();
    let mut outside = Vec::new();
    let mut record = |ens: &KineticEnsemble, t: f64| -> Result<()> {
        let f = local_fields(ens, &grid)?;
        for b in 0..grid.n_bins {
            rows.push(FieldRow {
                time: t,
                bin_center: grid.center(b),
                mass: f.mass[b],
                momentum: f.momentum[b],
            });
        }
        times.push(t);
        outside.push(f.out_of_range_mass);
        Ok(())
    };
    record(&ens, 0.0)?;
    let marks: Vec<(usize, f64)> = cfg
        .checkpoint_times
        .iter()
        .filter(|t| **t > 0.0)
        .map(|&t| (grid_steps(t, dt).expect("validated"), t))
        .collect();
    let n_steps = grid_steps(cfg.horizon, dt).expect("validated");
    let mut next = 0;
    for s in 0..n_steps {
        step_kinetic_with_buffer(&mut ens, common.step(s), dt, &model, cfg.scheme, &mut force)?;
        while next < marks.len() && marks[next].0 == s + 1 {
            record(&ens, marks[next].1)?;
            next += 1;
        }
    }
    let n = ens.len() as f64;
    let mean = ens.positions.iter().sum::<f64>() / n;
    let second = ens.positions.iter().map(|x| x * x).sum::<f64>() / n;
    Ok(Report {
        name: "fields",
        rows,
        summary: SimulationSummary {
            provenance: reports::simulation_provenance(cfg, &model.name),
            epsilon: eps,
            dt,
            replica: 0,
            times,
            out_of_range_mass: outside,
            final_mean_position: vec![mean],
            final_second_moment: second,
        },
    })
}
