//! Time steppers for the finite-mass kinetic system and the overdamped
//! limit SDE, plus exact statistics of the frozen-coefficient velocity
//! process.
//!
//! Environmental noise enters both systems as one increment per channel
//! per step, shared by every particle. Since every `sigma_k` is
//! divergence free, the Stratonovich and Itô forms coincide and no
//! correction term is added.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KernelShape, KernelSpec, ModelSpec};

/// Positions and velocities of N particles, each row-major `N x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticEnsemble {
    pub d: usize,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub t: f64,
    /// Particle mass.
    pub eps: f64,
}

impl KineticEnsemble {
    pub fn new(d: usize, positions: Vec<f64>, velocities: Vec<f64>, eps: f64) -> Result<Self> {
        if d == 0 || positions.is_empty() || !positions.len().is_multiple_of(d) {
            return Err(Error::config("kinetic ensemble needs N >= 1 rows of width d"));
        }
        if velocities.len() != positions.len() {
            return Err(Error::config("positions and velocities differ in shape"));
        }
        if !(eps > 0.0) {
            return Err(Error::config(format!("mass must be positive, got {eps}")));
        }
        if !all_finite(&positions) || !all_finite(&velocities) {
            return Err(Error::numerical("initial kinetic state is not finite"));
        }
        Ok(Self {
            d,
            positions,
            velocities,
            t: 0.0,
            eps,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Which optional terms of the limit SDE are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TermFlags {
    pub noise_induced_drift: bool,
    pub independent_noise: bool,
    /// Applies the drift term with the opposite sign.
    pub reversed_drift: bool,
}

impl TermFlags {
    pub const PAPER_LIMIT: TermFlags = TermFlags {
        noise_induced_drift: true,
        independent_noise: true,
        reversed_drift: false,
    };
    pub const ABLATED: TermFlags = TermFlags {
        noise_induced_drift: false,
        independent_noise: true,
        reversed_drift: false,
    };
    pub const REFERENCE: TermFlags = TermFlags {
        noise_induced_drift: true,
        independent_noise: false,
        reversed_drift: false,
    };
    pub const NONE: TermFlags = TermFlags {
        noise_induced_drift: false,
        independent_noise: false,
        reversed_drift: false,
    };
    /// Drift with reversed sign and no independent noise.
    pub const CLASSICAL: TermFlags = TermFlags {
        noise_induced_drift: true,
        independent_noise: false,
        reversed_drift: true,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverdampedEnsemble {
    pub d: usize,
    pub positions: Vec<f64>,
    pub t: f64,
    flags: TermFlags,
}

impl OverdampedEnsemble {
    pub fn new(d: usize, positions: Vec<f64>, flags: TermFlags) -> Result<Self> {
        if d == 0 || positions.is_empty() || !positions.len().is_multiple_of(d) {
            return Err(Error::config("overdamped ensemble needs N >= 1 rows of width d"));
        }
        if !all_finite(&positions) {
            return Err(Error::numerical("initial overdamped state is not finite"));
        }
        Ok(Self {
            d,
            positions,
            t: 0.0,
            flags,
        })
    }

    pub fn flags(&self) -> TermFlags {
        self.flags
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    #[default]
    Exponential,
}

impl Scheme {
    /// Largest admissible step, if the scheme has one.
    pub fn stability_bound(self, eps: f64, gamma_max: f64) -> Option<f64> {
        match self {
            Scheme::EulerMaruyama => Some(2.0 * eps / gamma_max),
            Scheme::Exponential => None,
        }
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// `phi_1(z) = (e^z - 1) / z`, with `phi_1(0) = 1`.
#[inline]
pub fn phi1(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        z.exp_m1() / z
    }
}

/// Mean-field force `F_i = (1/N) sum_j K(x_i - x_j)`, self term included.
pub fn meanfield_force(positions: &[f64], d: usize, kernel: &KernelSpec) -> Vec<f64> {
    let mut out = vec![0.0; positions.len()];
    meanfield_force_into(positions, d, kernel, &mut out);
    out
}

/// [`meanfield_force`] into a caller-provided buffer.
///
/// The summation order depends only on the positions, so the result is
/// bit-identical however many threads the caller runs.
pub fn meanfield_force_into(positions: &[f64], d: usize, kernel: &KernelSpec, out: &mut [f64]) {
    let n = positions.len() / d;
    debug_assert_eq!(out.len(), positions.len());
    match &kernel.shape {
        KernelShape::Zero => out.fill(0.0),
        KernelShape::Linear(c) => {
            for comp in 0..d {
                let mean = (0..n).map(|i| positions[i * d + comp]).sum::<f64>() / n as f64;
                for i in 0..n {
                    out[i * d + comp] = -c * (positions[i * d + comp] - mean);
                }
            }
        }
        KernelShape::NegTanh => {
            let mut col = vec![0.0; n];
            let mut acc = vec![0.0; n];
            for comp in 0..d {
                for (i, c) in col.iter_mut().enumerate() {
                    *c = positions[i * d + comp];
                }
                neg_tanh_column(&col, &mut acc);
                for (i, a) in acc.iter().enumerate() {
                    out[i * d + comp] = a / n as f64;
                }
            }
        }
        KernelShape::Custom(_) => meanfield_force_direct_into(positions, d, kernel, out),
    }
}

/// Pairwise evaluation of the kernel, row by row. Reference path for every
/// kernel shape.
pub fn meanfield_force_direct(positions: &[f64], d: usize, kernel: &KernelSpec) -> Vec<f64> {
    let mut out = vec![0.0; positions.len()];
    meanfield_force_direct_into(positions, d, kernel, &mut out);
    out
}

fn meanfield_force_direct_into(positions: &[f64], d: usize, kernel: &KernelSpec, out: &mut [f64]) {
    let n = positions.len() / d;
    let mut disp = vec![0.0; d];
    let mut k = vec![0.0; d];
    let mut acc = vec![0.0; d];
    for i in 0..n {
        acc.fill(0.0);
        let xi = &positions[i * d..(i + 1) * d];
        for xj in positions.chunks_exact(d) {
            for c in 0..d {
                disp[c] = xi[c] - xj[c];
            }
            kernel.eval(&disp, &mut k);
            for c in 0..d {
                acc[c] += k[c];
            }
        }
        for c in 0..d {
            out[i * d + c] = acc[c] / n as f64;
        }
    }
}

/// Beyond this radius `1 - tanh(a) tanh(b)` loses too many digits for the
/// addition formula, so pairs of tail particles are evaluated directly.
const TANH_CORE_RADIUS: f64 = 3.0;

/// Unnormalised `acc_i = sum_j tanh(x_j - x_i)` for one coordinate.
///
/// Uses `tanh(b - a) = (tb - ta) / (1 - ta tb)` and antisymmetry, so each
/// unordered pair costs one division.
fn neg_tanh_column(x: &[f64], acc: &mut [f64]) {
    let n = x.len();
    let (mut core, mut tail) = (Vec::with_capacity(n), Vec::new());
    for (i, &xi) in x.iter().enumerate() {
        if xi.abs() <= TANH_CORE_RADIUS {
            core.push(i);
        } else {
            tail.push(i);
        }
    }
    let tc: Vec<f64> = core.iter().map(|&i| x[i].tanh()).collect();
    let tt: Vec<f64> = tail.iter().map(|&i| x[i].tanh()).collect();
    let mut ac = vec![0.0; core.len()];
    let mut at = vec![0.0; tail.len()];

    core_pairs(&tc, &mut ac);
    for (q, &tq) in tt.iter().enumerate() {
        let mut s = 0.0;
        for (a, &ta) in tc.iter().enumerate() {
            let f = (tq - ta) / (1.0 - ta * tq);
            ac[a] += f;
            s -= f;
        }
        at[q] += s;
    }
    for p in 0..tail.len() {
        for q in p + 1..tail.len() {
            let f = (x[tail[q]] - x[tail[p]]).tanh();
            at[p] += f;
            at[q] -= f;
        }
    }
    for (&i, v) in core.iter().zip(&ac) {
        acc[i] = *v;
    }
    for (&i, v) in tail.iter().zip(&at) {
        acc[i] = *v;
    }
}

/// Antisymmetric pair sums over the core particles. Kept as its own
/// function so the lane loop vectorises.
#[inline(never)]
fn core_pairs(tc: &[f64], ac: &mut [f64]) {
    const LANES: usize = 8;
    for a in 0..tc.len() {
        let ta = tc[a];
        let (head, rest) = ac.split_at_mut(a + 1);
        let others = &tc[a + 1..];
        let mut lanes = [0.0f64; LANES];
        let mut oc = others.chunks_exact(LANES);
        let mut rc = rest.chunks_exact_mut(LANES);
        for (tb, rb) in (&mut oc).zip(&mut rc) {
            for l in 0..LANES {
                let f = (tb[l] - ta) / (1.0 - ta * tb[l]);
                lanes[l] += f;
                rb[l] -= f;
            }
        }
        let mut s: f64 = lanes.iter().sum();
        for (tb, rb) in oc.remainder().iter().zip(rc.into_remainder()) {
            let f = (tb - ta) / (1.0 - ta * tb);
            s += f;
            *rb -= f;
        }
        head[a] += s;
    }
}

/// `out = sum_k sigma_k(x) dB_k`.
fn noise_displacement(model: &ModelSpec, x: &[f64], common: &[f64], sk: &mut [f64], out: &mut [f64]) {
    out.fill(0.0);
    for (k, db) in common.iter().enumerate() {
        model.noise.eval(k, x, sk);
        for (o, s) in out.iter_mut().zip(sk.iter()) {
            *o += s * db;
        }
    }
}

/// Precomputed `sum_k sigma_k dB_k` when the noise fields are constant.
fn constant_noise_displacement(model: &ModelSpec, common: &[f64]) -> Option<Vec<f64>> {
    model.noise.constant_vectors().map(|vs| {
        let mut out = vec![0.0; model.d];
        for (v, db) in vs.iter().zip(common) {
            for (o, s) in out.iter_mut().zip(v) {
                *o += s * db;
            }
        }
        out
    })
}

fn check_common(model: &ModelSpec, common: &[f64]) -> Result<()> {
    if common.len() != model.noise.channels() {
        return Err(Error::config(format!(
            "common increment slice has {} channels, model has {}",
            common.len(),
            model.noise.channels()
        )));
    }
    Ok(())
}

/// Advances the kinetic ensemble by one step of size `dt`.
///
/// Euler-Maruyama: `V += (dt/eps)(-gamma V + F) + (1/eps) sum_k sigma_k dB_k`.
/// Exponential: with `a = gamma(x) dt / eps` frozen at the pre-step
/// position, `V = e^-a V + (1 - e^-a) F / gamma + phi_1(-a)/eps sum_k sigma_k dB_k`.
/// Both then move `X += dt V` with the updated velocity.
pub fn step_kinetic(
    ens: &mut KineticEnsemble,
    common: &[f64],
    dt: f64,
    model: &ModelSpec,
    scheme: Scheme,
) -> Result<()> {
    let mut force = vec![0.0; ens.positions.len()];
    step_kinetic_with_buffer(ens, common, dt, model, scheme, &mut force)
}

pub(crate) fn step_kinetic_with_buffer(
    ens: &mut KineticEnsemble,
    common: &[f64],
    dt: f64,
    model: &ModelSpec,
    scheme: Scheme,
    force: &mut [f64],
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::config(format!("time step must be positive, got {dt}")));
    }
    check_common(model, common)?;
    let eps = ens.eps;
    if let Some(bound) = scheme.stability_bound(eps, model.friction.gamma_max) {
        if dt >= bound {
            return Err(Error::numerical(format!(
                "euler_maruyama requires dt < 2*eps/gamma_max = {bound:.6e}; got dt = {dt:.6e} at eps = {eps}"
            )));
        }
    }
    let d = ens.d;
    meanfield_force_into(&ens.positions, d, &model.kernel, force);

    let shared = constant_noise_displacement(model, common);
    let mut sk = vec![0.0; d];
    let mut noise = vec![0.0; d];
    for i in 0..ens.len() {
        let x = &ens.positions[i * d..(i + 1) * d];
        let g = model.friction.gamma(x);
        match &shared {
            Some(s) => noise.copy_from_slice(s),
            None => noise_displacement(model, x, common, &mut sk, &mut noise),
        }
        let f = &force[i * d..(i + 1) * d];
        let v = &mut ens.velocities[i * d..(i + 1) * d];
        match scheme {
            Scheme::EulerMaruyama => {
                for c in 0..d {
                    v[c] += dt / eps * (-g * v[c] + f[c]) + noise[c] / eps;
                }
            }
            Scheme::Exponential => {
                let a = g * dt / eps;
                let one_minus = -(-a).exp_m1();
                let decay = 1.0 - one_minus;
                let filter = phi1(-a) / eps;
                for c in 0..d {
                    v[c] = decay * v[c] + one_minus / g * f[c] + filter * noise[c];
                }
            }
        }
        let x = &mut ens.positions[i * d..(i + 1) * d];
        for c in 0..d {
            x[c] += dt * v[c];
        }
    }
    if !all_finite(&ens.positions) || !all_finite(&ens.velocities) {
        return Err(Error::numerical(format!(
            "kinetic state became non-finite at t = {:.6}, eps = {eps}",
            ens.t + dt
        )));
    }
    ens.t += dt;
    Ok(())
}

/// `(1/2) (sum_k |sigma_k(x)|^2) grad gamma(x) / gamma(x)^3`.
pub fn noise_induced_drift(x: &[f64], model: &ModelSpec) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    noise_induced_drift_into(x, model, &mut out);
    out
}

fn noise_induced_drift_into(x: &[f64], model: &ModelSpec, out: &mut [f64]) {
    model.friction.grad_gamma(x, out);
    let g = model.friction.gamma(x);
    let scale = 0.5 * model.noise.sq_norm_sum(x) / (g * g * g);
    for o in out.iter_mut() {
        *o *= scale;
    }
}

/// One Euler-Maruyama step of the overdamped limit SDE. The interaction
/// `E~ K(X - X~)` is the in-ensemble empirical mean.
pub fn step_overdamped(
    ens: &mut OverdampedEnsemble,
    common: &[f64],
    idio: Option<&[f64]>,
    dt: f64,
    model: &ModelSpec,
) -> Result<()> {
    let mut force = vec![0.0; ens.positions.len()];
    step_overdamped_with_buffer(ens, common, idio, dt, model, &mut force)
}

pub(crate) fn step_overdamped_with_buffer(
    ens: &mut OverdampedEnsemble,
    common: &[f64],
    idio: Option<&[f64]>,
    dt: f64,
    model: &ModelSpec,
    force: &mut [f64],
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::config(format!("time step must be positive, got {dt}")));
    }
    check_common(model, common)?;
    let flags = ens.flags;
    match (flags.independent_noise, idio) {
        (true, None) => {
            return Err(Error::config(
                "independent noise is enabled but no idiosyncratic increments were supplied",
            ))
        }
        (false, Some(_)) => {
            return Err(Error::config(
                "idiosyncratic increments supplied to an ensemble without independent noise",
            ))
        }
        (true, Some(w)) if w.len() != ens.positions.len() => {
            return Err(Error::config(format!(
                "idiosyncratic slice has {} components, ensemble needs {}",
                w.len(),
                ens.positions.len()
            )))
        }
        _ => {}
    }
    let d = ens.d;
    meanfield_force_into(&ens.positions, d, &model.kernel, force);
    let shared = constant_noise_displacement(model, common);
    let mut sk = vec![0.0; d];
    let mut noise = vec![0.0; d];
    let mut drift = vec![0.0; d];
    for i in 0..ens.len() {
        let x = &ens.positions[i * d..(i + 1) * d];
        let g = model.friction.gamma(x);
        match &shared {
            Some(s) => noise.copy_from_slice(s),
            None => noise_displacement(model, x, common, &mut sk, &mut noise),
        }
        if flags.noise_induced_drift {
            noise_induced_drift_into(x, model, &mut drift);
            if flags.reversed_drift {
                drift.iter_mut().for_each(|v| *v = -*v);
            }
        } else {
            drift.fill(0.0);
        }
        let indep_scale = if flags.independent_noise {
            (0.5 * model.noise.sq_norm_sum(x)).sqrt() / g
        } else {
            0.0
        };
        let f = &force[i * d..(i + 1) * d];
        let x = &mut ens.positions[i * d..(i + 1) * d];
        for c in 0..d {
            let mut dx = dt * (f[c] / g + drift[c]) + noise[c] / g;
            if let Some(w) = idio {
                dx += indep_scale * w[i * d + c];
            }
            x[c] += dx;
        }
    }
    if !all_finite(&ens.positions) {
        return Err(Error::numerical(format!(
            "overdamped state became non-finite at t = {:.6}",
            ens.t + dt
        )));
    }
    ens.t += dt;
    Ok(())
}

/// Gaussian law of the frozen velocity process
/// `eps dV = (-gamma(x) V + force) dt + sum_k sigma_k(x) dB_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrozenMoments {
    pub mean: Vec<f64>,
    /// Covariance of V, row-major d x d.
    pub covariance: Vec<f64>,
    /// `eps E[V V^T]`, row-major d x d.
    pub second_moment: Vec<f64>,
}

/// Closed-form moments at time `t` with `a = gamma(x)/eps`:
///
/// ```text
/// mean(t) = e^{-a t} m0 + (1 - e^{-a t}) force / gamma
/// cov(t)  = e^{-2 a t} C0 + (1 - e^{-2 a t}) S / (2 gamma eps),   S = sum_k sigma_k sigma_k^T
/// eps E[V V^T] = eps cov(t) + eps mean mean^T
/// ```
///
/// As `t / eps` grows, `eps E[V V^T] -> S / (2 gamma) + eps force force^T / gamma^2`.
pub fn frozen_velocity_moments(
    x: &[f64],
    force: &[f64],
    eps: f64,
    t: f64,
    v0_mean: &[f64],
    v0_cov: &[f64],
    model: &ModelSpec,
) -> FrozenMoments {
    let d = model.d;
    let g = model.friction.gamma(x);
    let rate = g / eps;
    let decay = (-rate * t).exp();
    let decay2 = (-2.0 * rate * t).exp();
    let relax = -(-rate * t).exp_m1();
    let relax2 = -(-2.0 * rate * t).exp_m1();

    let mean: Vec<f64> = (0..d)
        .map(|c| decay * v0_mean[c] + relax * force[c] / g)
        .collect();
    let s = model.noise_covariance(x);
    let covariance: Vec<f64> = (0..d * d)
        .map(|ij| decay2 * v0_cov[ij] + relax2 * s[ij] / (2.0 * g * eps))
        .collect();
    let second_moment = (0..d * d)
        .map(|ij| eps * (covariance[ij] + mean[ij / d] * mean[ij % d]))
        .collect();
    FrozenMoments {
        mean,
        covariance,
        second_moment,
    }
}

/// Exact Gaussian samples of the frozen velocity at time `t`, started from
/// the model's initial velocity law. Returns `n x d` row-major.
pub fn frozen_velocity_sample(
    x: &[f64],
    force: &[f64],
    eps: f64,
    t: f64,
    n: usize,
    seed: u64,
    model: &ModelSpec,
) -> Vec<f64> {
    let d = model.d;
    let init = &model.initial;
    let mut v0_cov = vec![0.0; d * d];
    for c in 0..d {
        v0_cov[c * d + c] = init.v_std[c] * init.v_std[c];
    }
    let m = frozen_velocity_moments(x, force, eps, t, &init.v_mean, &v0_cov, model);
    let chol = cholesky_psd(&m.covariance, d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; d];
    let mut out = Vec::with_capacity(n * d);
    for _ in 0..n {
        for zc in z.iter_mut() {
            *zc = rng.sample(StandardNormal);
        }
        for r in 0..d {
            let mut v = m.mean[r];
            for c in 0..=r {
                v += chol[r * d + c] * z[c];
            }
            out.push(v);
        }
    }
    out
}

/// Lower Cholesky factor of a symmetric positive semidefinite matrix;
/// zero pivots yield zero columns.
fn cholesky_psd(a: &[f64], d: usize) -> Vec<f64> {
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        if diag <= 0.0 {
            continue;
        }
        let pivot = diag.sqrt();
        l[j * d + j] = pivot;
        for i in j + 1..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = v / pivot;
        }
    }
    l
}
