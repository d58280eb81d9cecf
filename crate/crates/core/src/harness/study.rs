//! One coupled simulation per replica: a common path, an initial cloud,
//! the kinetic system at every mass and the three overdamped variants,
//! with all measurements taken on the fly.

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{grid_steps, ExperimentConfig};
use crate::dynamics::{
    step_kinetic_with_buffer, step_overdamped_with_buffer, KineticEnsemble, OverdampedEnsemble, Scheme, TermFlags,
};
use crate::error::{Error, Result};
use crate::meanfield::{averaged_momentum_pairing, pair_momentum, TestFunction};
use crate::metrics::{holder_curve, sliced_w2, w2_1d_exact, HolderPoint, RunningSup, SampleCloud};
use crate::model::ModelSpec;
use crate::noise::{coarsen_rows, generate_common, generate_idiosyncratic, BrownianGrid, Role, SeedDerivation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    PaperLimit,
    Ablated,
    Reference,
    /// Opt-in: reversed drift sign, no independent noise.
    Classical,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::PaperLimit, Variant::Ablated, Variant::Reference];

    pub fn flags(self) -> TermFlags {
        match self {
            Variant::PaperLimit => TermFlags::PAPER_LIMIT,
            Variant::Ablated => TermFlags::ABLATED,
            Variant::Reference => TermFlags::REFERENCE,
            Variant::Classical => TermFlags::CLASSICAL,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::PaperLimit => "paper_limit",
            Variant::Ablated => "ablated",
            Variant::Reference => "reference",
            Variant::Classical => "classical",
        }
    }
}

/// Accumulated pairing of `psi` with the kinetic momentum and with the
/// averaged momentum over windows covering `[s0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentumRun {
    pub window_steps: usize,
    pub window_length: f64,
    pub n_windows: usize,
    pub kinetic: f64,
    pub averaged: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KineticRun {
    pub eps: f64,
    pub dt: f64,
    /// `w2[checkpoint][variant]`, variants in [`StudyResult::variants`] order.
    pub w2: Vec<Vec<f64>>,
    pub sup_second_moment: f64,
    pub holder: Vec<HolderPoint>,
    pub momentum: Option<MomentumRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditEntry {
    pub system: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaOutcome {
    pub replica: u32,
    pub kinetic: Vec<KineticRun>,
    pub audit: Vec<AuditEntry>,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub config: ExperimentConfig,
    pub model_name: String,
    /// The three standard variants, then any opt-in ones.
    pub variants: Vec<Variant>,
    pub replicas: Vec<ReplicaOutcome>,
}

impl StudyResult {
    /// `(replica, run)` pairs for mass index `e`.
    pub fn runs_at(&self, e: usize) -> impl Iterator<Item = (u32, &KineticRun)> {
        self.replicas.iter().map(move |r| (r.replica, &r.kinetic[e]))
    }
}

/// Step plan derived from the config and the model.
#[derive(Debug, Clone)]
struct Plan {
    /// Base common grid step `dt_fine / 2^levels`.
    base_dt: f64,
    levels: u32,
    /// Per mass: number of halvings below `dt_fine` used by the kinetic run.
    kinetic_levels: Vec<u32>,
    od_factor: usize,
    od_steps: usize,
}

impl Plan {
    fn new(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<Self> {
        let kinetic_levels: Vec<u32> = cfg
            .eps_grid
            .iter()
            .map(|&eps| kinetic_level(cfg, model, eps))
            .collect();
        let levels = kinetic_levels.iter().copied().max().unwrap_or(0);
        if levels > 20 {
            return Err(Error::config(format!(
                "euler_maruyama would need dt below {:e}; use the exponential scheme",
                cfg.dt_fine / f64::from(1u32 << 20)
            )));
        }
        let od_factor = grid_steps(cfg.dt_overdamped, cfg.dt_fine).expect("validated");
        let od_steps = grid_steps(cfg.horizon, cfg.dt_overdamped).expect("validated");
        Ok(Self {
            base_dt: cfg.dt_fine / f64::from(1u32 << levels),
            levels,
            kinetic_levels,
            od_factor,
            od_steps,
        })
    }

    fn kinetic_dt(&self, cfg: &ExperimentConfig, e: usize) -> f64 {
        cfg.dt_fine / f64::from(1u32 << self.kinetic_levels[e])
    }
}

/// Halvings of `dt_fine` used for a kinetic run at mass `eps`: none for
/// the exponential scheme, otherwise enough to reach
/// `min(dt_fine, eps / (10 gamma_max))`.
pub(crate) fn kinetic_level(cfg: &ExperimentConfig, model: &ModelSpec, eps: f64) -> u32 {
    match cfg.scheme {
        Scheme::Exponential => 0,
        Scheme::EulerMaruyama => {
            let target = cfg.dt_fine.min(eps / (10.0 * model.friction.gamma_max));
            let mut j = 0;
            while j < 31 && cfg.dt_fine / f64::from(1u32 << j) > target * (1.0 + 1e-12) {
                j += 1;
            }
            j
        }
    }
}

/// Coarsens rows at `levels` halvings below `dt_fine` up to the overdamped
/// grid. Every system's consumed increments pass through this same chain,
/// so equal inputs give bit-equal outputs.
fn lift_to_overdamped(rows: &[f64], width: usize, levels: u32, od_factor: usize) -> Vec<f64> {
    let mut cur = rows.to_vec();
    for _ in 0..levels {
        cur = coarsen_rows(&cur, width, 2);
    }
    coarsen_rows(&cur, width, od_factor)
}

fn digest(rows: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in rows {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn w2_between(a: &[f64], b: &[f64], d: usize, n_proj: usize, seed: SeedDerivation) -> Result<f64> {
    let ca = SampleCloud::new(d, a.to_vec())?;
    let cb = SampleCloud::new(d, b.to_vec())?;
    if d == 1 {
        w2_1d_exact(&ca, &cb)
    } else {
        sliced_w2(&ca, &cb, n_proj, seed)
    }
}

/// Runs every replica with the config's preset model.
pub fn run_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    let model = cfg.model_spec()?;
    run_study_with(cfg, &model)
}

/// Runs every replica with an explicit model; replicas execute in
/// parallel on `cfg.threads` workers and are collected in index order.
pub fn run_study_with(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<StudyResult> {
    cfg.validate()?;
    let plan = Plan::new(cfg, model)?;
    let variants = study_variants(cfg);
    let work = || -> Result<Vec<ReplicaOutcome>> {
        (0..cfg.replicas as u32)
            .into_par_iter()
            .map(|r| run_replica(cfg, model, &plan, &variants, r))
            .collect()
    };
    let replicas = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(format!("cannot start {n} worker threads: {e}")))?
            .install(work)?,
        None => work()?,
    };
    Ok(StudyResult {
        config: cfg.clone(),
        model_name: model.name.clone(),
        variants,
        replicas,
    })
}

pub(crate) fn study_variants(cfg: &ExperimentConfig) -> Vec<Variant> {
    let mut v = Variant::ALL.to_vec();
    if cfg.classical_variant {
        v.push(Variant::Classical);
    }
    v
}

fn run_replica(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    plan: &Plan,
    variants: &[Variant],
    r: u32,
) -> Result<ReplicaOutcome> {
    let d = model.d;
    let n = cfg.n_particles;
    let m = model.noise.channels();
    let root = cfg.seed;
    let base = generate_common(SeedDerivation::new(root, Role::Common, r, 0), m, cfg.horizon, plan.base_dt)?;
    let (x0, v0) = model
        .initial
        .sample(&mut SeedDerivation::new(root, Role::InitialLaw, r, 0).rng(), n);
    let projection = SeedDerivation::new(root, Role::Projection, r, 0);

    let od_common = lift_to_overdamped(base.increments(), m, plan.levels, plan.od_factor);
    let idio = generate_idiosyncratic(
        SeedDerivation::new(root, Role::Idiosyncratic, r, 0),
        n,
        d,
        cfg.horizon,
        cfg.dt_overdamped,
    )?;
    let od_checkpoints: Vec<usize> = cfg
        .checkpoint_times
        .iter()
        .map(|&t| grid_steps(t, cfg.dt_overdamped).expect("validated"))
        .collect();

    let mut audit = Vec::new();
    let mut od_clouds: Vec<Vec<Vec<f64>>> = Vec::with_capacity(variants.len());
    for &variant in variants {
        let (clouds, consumed) = run_overdamped(cfg, model, plan, &x0, variant, &od_common, &idio, &od_checkpoints)?;
        audit.push(AuditEntry {
            system: variant.label().to_string(),
            sha256: digest(&consumed),
        });
        od_clouds.push(clouds);
    }

    let mut kinetic = Vec::with_capacity(cfg.eps_grid.len());
    for (e, &eps) in cfg.eps_grid.iter().enumerate() {
        let lvl = plan.kinetic_levels[e];
        let mut grid = base.increments().to_vec();
        for _ in lvl..plan.levels {
            grid = coarsen_rows(&grid, m, 2);
        }
        let (run, consumed) =
            run_kinetic(cfg, model, plan, e, eps, &x0, &v0, &grid, &od_clouds, projection)?;
        audit.push(AuditEntry {
            system: format!("kinetic eps={eps}"),
            sha256: digest(&lift_to_overdamped(&consumed, m, lvl, plan.od_factor)),
        });
        kinetic.push(run);
    }

    if let Some(bad) = audit.iter().find(|a| a.sha256 != audit[0].sha256) {
        return Err(Error::numerical(format!(
            "coupling audit failed in replica {r}: {} consumed a different common path",
            bad.system
        )));
    }
    Ok(ReplicaOutcome {
        replica: r,
        kinetic,
        audit,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_overdamped(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    plan: &Plan,
    x0: &[f64],
    variant: Variant,
    common: &[f64],
    idio: &BrownianGrid,
    checkpoints: &[usize],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let m = model.noise.channels();
    let mut ens = OverdampedEnsemble::new(model.d, x0.to_vec(), variant.flags())?;
    let mut force = vec![0.0; x0.len()];
    let mut consumed = Vec::with_capacity(common.len());
    let mut clouds = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    while next < checkpoints.len() && checkpoints[next] == 0 {
        clouds.push(x0.to_vec());
        next += 1;
    }
    for s in 0..plan.od_steps {
        let row = &common[s * m..(s + 1) * m];
        let w = variant.flags().independent_noise.then(|| idio.step(s));
        step_overdamped_with_buffer(&mut ens, row, w, cfg.dt_overdamped, model, &mut force)?;
        consumed.extend_from_slice(row);
        while next < checkpoints.len() && checkpoints[next] == s + 1 {
            clouds.push(ens.positions.clone());
            next += 1;
        }
    }
    Ok((clouds, consumed))
}

#[allow(clippy::too_many_arguments)]
fn run_kinetic(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    plan: &Plan,
    e: usize,
    eps: f64,
    x0: &[f64],
    v0: &[f64],
    common: &[f64],
    od_clouds: &[Vec<Vec<f64>>],
    projection: SeedDerivation,
) -> Result<(KineticRun, Vec<f64>)> {
    let d = model.d;
    let m = model.noise.channels();
    let dt = plan.kinetic_dt(cfg, e);
    let steps_of = |t: f64| grid_steps(t, dt).expect("validated grid times are on every kinetic grid");
    let n_steps = steps_of(cfg.horizon);
    let checkpoints: Vec<usize> = cfg.checkpoint_times.iter().map(|&t| steps_of(t)).collect();
    let snap_every = steps_of(cfg.trajectory_interval);

    let mut ens = KineticEnsemble::new(d, x0.to_vec(), v0.to_vec(), eps)?;
    let mut force = vec![0.0; x0.len()];
    let mut sup = RunningSup::new(d, ens.len());
    sup.observe(&ens.positions);
    let mut snapshots = vec![ens.positions.clone()];
    let mut w2 = Vec::with_capacity(checkpoints.len());
    let mut next_ck = 0;
    let record_w2 = |ens: &KineticEnsemble, k: usize, w2: &mut Vec<Vec<f64>>| -> Result<()> {
        let row = od_clouds
            .iter()
            .map(|clouds| w2_between(&ens.positions, &clouds[k], d, cfg.n_projections, projection))
            .collect::<Result<Vec<f64>>>()?;
        w2.push(row);
        Ok(())
    };
    while next_ck < checkpoints.len() && checkpoints[next_ck] == 0 {
        record_w2(&ens, next_ck, &mut w2)?;
        next_ck += 1;
    }

    // Momentum windows tile [s0, s0 + n_windows * L dt] inside [s0, T].
    let psi = TestFunction::new(vec![cfg.psi.center; d], cfg.psi.half_width)?;
    let window_steps = ((cfg.delta_coeff * eps.powi(3) / dt).round() as usize).max(10);
    let start_step = steps_of(cfg.s0);
    let n_windows = (n_steps - start_step) / window_steps;
    let track_momentum = d == 1 && n_windows > 0;
    let end_step = start_step + n_windows * window_steps;
    let mut mom_kinetic = 0.0;
    let mut mom_averaged = 0.0;
    let mut window_x: Vec<f64> = Vec::new();
    let mut window_db = vec![0.0; m];
    let mut prev_pair = 0.0;

    let mut consumed = Vec::with_capacity(common.len());
    for s in 0..n_steps {
        let in_window = track_momentum && s >= start_step && s < end_step;
        if in_window {
            if (s - start_step) % window_steps == 0 {
                window_x.clone_from(&ens.positions);
                window_db.fill(0.0);
            }
            if s == start_step {
                prev_pair = pair_momentum(&ens, &psi);
            }
        }
        let row = &common[s * m..(s + 1) * m];
        step_kinetic_with_buffer(&mut ens, row, dt, model, cfg.scheme, &mut force).map_err(|err| match err {
            Error::Numerical(msg) => Error::Numerical(format!("{msg} (eps = {eps}, dt = {dt:e})")),
            other => other,
        })?;
        consumed.extend_from_slice(row);
        sup.observe(&ens.positions);
        if in_window {
            for (a, b) in window_db.iter_mut().zip(row) {
                *a += b;
            }
            let pair = pair_momentum(&ens, &psi);
            mom_kinetic += 0.5 * (prev_pair + pair) * dt;
            prev_pair = pair;
            if (s + 1 - start_step) % window_steps == 0 {
                mom_averaged +=
                    averaged_momentum_pairing(&window_x, &psi, &window_db, window_steps as f64 * dt, model)?;
            }
        }
        if (s + 1) % snap_every == 0 {
            snapshots.push(ens.positions.clone());
        }
        while next_ck < checkpoints.len() && checkpoints[next_ck] == s + 1 {
            record_w2(&ens, next_ck, &mut w2)?;
            next_ck += 1;
        }
    }

    let holder = if cfg.holder_lags.is_empty() {
        Vec::new()
    } else {
        holder_curve(&snapshots, d, cfg.trajectory_interval, &cfg.holder_lags)?
    };
    let momentum = track_momentum.then(|| MomentumRun {
        window_steps,
        window_length: window_steps as f64 * dt,
        n_windows,
        kinetic: mom_kinetic,
        averaged: mom_averaged,
        gap: (mom_kinetic - mom_averaged).abs(),
    });
    Ok((
        KineticRun {
            eps,
            dt,
            w2,
            sup_second_moment: sup.value(),
            holder,
            momentum,
        },
        consumed,
    ))
}
