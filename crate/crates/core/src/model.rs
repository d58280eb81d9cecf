//! Model data: friction field, interaction kernel, environmental noise
//! family and initial law, plus Monte Carlo validation of the structural
//! assumptions they must satisfy (bounded friction with bounded gradient,
//! Lipschitz kernel, summable divergence-free noise with `Q(0) = I`).

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

/// Scalar field on position space.
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Vector field on position space, written into the output slice (length d).
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

pub const PRESET_NAMES: [&str; 3] = ["1d-tanh-friction", "1d-constant-friction", "2d-constant-sigma"];

/// State-dependent friction `gamma(x)` with its gradient and the constants
/// `gamma_min <= gamma <= gamma_max`, `|grad gamma| <= grad_bound`.
#[derive(Clone)]
pub struct FrictionSpec {
    gamma: ScalarField,
    grad_gamma: VectorField,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub grad_bound: f64,
    constant: Option<f64>,
}

impl FrictionSpec {
    pub fn new(
        gamma: ScalarField,
        grad_gamma: VectorField,
        gamma_min: f64,
        gamma_max: f64,
        grad_bound: f64,
    ) -> Self {
        Self {
            gamma,
            grad_gamma,
            gamma_min,
            gamma_max,
            grad_bound,
            constant: None,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            gamma: Arc::new(move |_| value),
            grad_gamma: Arc::new(|_, out| out.fill(0.0)),
            gamma_min: value,
            gamma_max: value,
            grad_bound: 0.0,
            constant: Some(value),
        }
    }

    /// `gamma(x) = base + tanh(x[axis])`.
    pub fn tanh_profile(base: f64, axis: usize) -> Self {
        Self::new(
            Arc::new(move |x| base + x[axis].tanh()),
            Arc::new(move |x, out| {
                out.fill(0.0);
                let c = x[axis].cosh();
                out[axis] = 1.0 / (c * c);
            }),
            base - 1.0,
            base + 1.0,
            1.0,
        )
    }

    #[inline]
    pub fn gamma(&self, x: &[f64]) -> f64 {
        (self.gamma)(x)
    }

    #[inline]
    pub fn grad_gamma(&self, x: &[f64], out: &mut [f64]) {
        (self.grad_gamma)(x, out)
    }

    /// `Some(g)` when the friction was built with [`FrictionSpec::constant`].
    pub fn constant_value(&self) -> Option<f64> {
        self.constant
    }
}

impl fmt::Debug for FrictionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrictionSpec")
            .field("gamma_min", &self.gamma_min)
            .field("gamma_max", &self.gamma_max)
            .field("grad_bound", &self.grad_bound)
            .finish_non_exhaustive()
    }
}

/// Functional form of the interaction kernel `K: R^d -> R^d`.
///
/// The closed forms let the mean-field force use specialised O(N^2) loops;
/// `Custom` falls back to direct evaluation of every pair.
#[derive(Clone)]
pub enum KernelShape {
    Zero,
    /// `K(x) = -c x`
    Linear(f64),
    /// `K(x)_c = -tanh(x_c)` componentwise.
    NegTanh,
    Custom(VectorField),
}

#[derive(Clone)]
pub struct KernelSpec {
    pub shape: KernelShape,
    /// Lipschitz constant `L_K`.
    pub lip: f64,
}

impl KernelSpec {
    pub fn zero() -> Self {
        Self {
            shape: KernelShape::Zero,
            lip: 0.0,
        }
    }

    pub fn linear(c: f64) -> Self {
        Self {
            shape: KernelShape::Linear(c),
            lip: c.abs(),
        }
    }

    pub fn neg_tanh() -> Self {
        Self {
            shape: KernelShape::NegTanh,
            lip: 1.0,
        }
    }

    pub fn custom(k: VectorField, lip: f64) -> Self {
        Self {
            shape: KernelShape::Custom(k),
            lip,
        }
    }

    pub fn eval(&self, disp: &[f64], out: &mut [f64]) {
        match &self.shape {
            KernelShape::Zero => out.fill(0.0),
            KernelShape::Linear(c) => {
                for (o, &x) in out.iter_mut().zip(disp) {
                    *o = -c * x;
                }
            }
            KernelShape::NegTanh => {
                for (o, &x) in out.iter_mut().zip(disp) {
                    *o = -x.tanh();
                }
            }
            KernelShape::Custom(k) => k(disp, out),
        }
    }
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = match &self.shape {
            KernelShape::Zero => "zero".to_string(),
            KernelShape::Linear(c) => format!("linear({c})"),
            KernelShape::NegTanh => "neg_tanh".to_string(),
            KernelShape::Custom(_) => "custom".to_string(),
        };
        f.debug_struct("KernelSpec")
            .field("shape", &shape)
            .field("lip", &self.lip)
            .finish()
    }
}

/// Finite family of environmental noise fields `sigma_1..sigma_m`.
#[derive(Clone)]
pub struct NoiseFamily {
    fields: Vec<VectorField>,
    /// `L_sigma = sum_k sup_x |sigma_k(x)|`.
    pub sup_sum: f64,
    constant: Option<Vec<Vec<f64>>>,
}

impl NoiseFamily {
    pub fn new(fields: Vec<VectorField>, sup_sum: f64) -> Self {
        Self {
            fields,
            sup_sum,
            constant: None,
        }
    }

    /// Position-independent fields, one vector per channel.
    pub fn constant(vectors: Vec<Vec<f64>>) -> Self {
        let sup_sum = vectors
            .iter()
            .map(|v| v.iter().map(|c| c * c).sum::<f64>().sqrt())
            .sum();
        let fields = vectors
            .iter()
            .cloned()
            .map(|v| -> VectorField { Arc::new(move |_, out: &mut [f64]| out.copy_from_slice(&v)) })
            .collect();
        Self {
            fields,
            sup_sum,
            constant: Some(vectors),
        }
    }

    pub fn channels(&self) -> usize {
        self.fields.len()
    }

    #[inline]
    pub fn eval(&self, k: usize, x: &[f64], out: &mut [f64]) {
        (self.fields[k])(x, out)
    }

    /// `sum_k |sigma_k(x)|^2`.
    pub fn sq_norm_sum(&self, x: &[f64]) -> f64 {
        if let Some(c) = &self.constant {
            return c.iter().flatten().map(|v| v * v).sum();
        }
        let mut buf = vec![0.0; x.len()];
        self.fields
            .iter()
            .map(|f| {
                f(x, &mut buf);
                buf.iter().map(|v| v * v).sum::<f64>()
            })
            .sum()
    }

    pub fn constant_vectors(&self) -> Option<&[Vec<f64>]> {
        self.constant.as_deref()
    }
}

impl fmt::Debug for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoiseFamily")
            .field("channels", &self.channels())
            .field("sup_sum", &self.sup_sum)
            .field("constant", &self.constant)
            .finish()
    }
}

/// Product Gaussian law for `(X0, V0)`, independent components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialLaw {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub v_mean: Vec<f64>,
    pub v_std: Vec<f64>,
}

impl InitialLaw {
    pub fn standard_gaussian(d: usize) -> Self {
        Self {
            x_mean: vec![0.0; d],
            x_std: vec![1.0; d],
            v_mean: vec![0.0; d],
            v_std: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.x_mean.len()
    }

    /// Draws `n` i.i.d. pairs. Per particle the d position components are
    /// drawn first, then the d velocity components.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut pos = Vec::with_capacity(n * d);
        let mut vel = Vec::with_capacity(n * d);
        for _ in 0..n {
            for c in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                pos.push(self.x_mean[c] + self.x_std[c] * z);
            }
            for c in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                vel.push(self.v_mean[c] + self.v_std[c] * z);
            }
        }
        (pos, vel)
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub d: usize,
    pub friction: FrictionSpec,
    pub kernel: KernelSpec,
    pub noise: NoiseFamily,
    pub initial: InitialLaw,
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        d: usize,
        friction: FrictionSpec,
        kernel: KernelSpec,
        noise: NoiseFamily,
        initial: InitialLaw,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("model dimension must be at least 1"));
        }
        if noise.channels() == 0 {
            return Err(Error::config("noise family needs at least one channel"));
        }
        if initial.dim() != d
            || initial.x_std.len() != d
            || initial.v_mean.len() != d
            || initial.v_std.len() != d
        {
            return Err(Error::config(format!(
                "initial law dimension does not match model dimension {d}"
            )));
        }
        if let Some(vs) = noise.constant_vectors() {
            if vs.iter().any(|v| v.len() != d) {
                return Err(Error::config("noise vectors must have length d"));
            }
        }
        Ok(Self {
            name: name.into(),
            d,
            friction,
            kernel,
            noise,
            initial,
        })
    }

    /// Named presets addressable from configs and the CLI.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "1d-tanh-friction" => Self::new(
                name,
                1,
                FrictionSpec::tanh_profile(2.0, 0),
                KernelSpec::neg_tanh(),
                NoiseFamily::constant(vec![vec![1.0]]),
                InitialLaw::standard_gaussian(1),
            ),
            "1d-constant-friction" => Self::new(
                name,
                1,
                FrictionSpec::constant(2.0),
                KernelSpec::neg_tanh(),
                NoiseFamily::constant(vec![vec![1.0]]),
                InitialLaw::standard_gaussian(1),
            ),
            "2d-constant-sigma" => Self::new(
                name,
                2,
                FrictionSpec::tanh_profile(2.0, 0),
                KernelSpec::neg_tanh(),
                NoiseFamily::constant(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
                InitialLaw::standard_gaussian(2),
            ),
            other => Err(Error::config(format!(
                "unknown model preset '{other}'; valid presets: {}",
                PRESET_NAMES.join(", ")
            ))),
        }
    }

    /// `Q(x, x) = sum_k sigma_k(x) sigma_k(x)^T`, row-major d x d.
    pub fn noise_covariance(&self, x: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut q = vec![0.0; d * d];
        let mut s = vec![0.0; d];
        for k in 0..self.noise.channels() {
            self.noise.eval(k, x, &mut s);
            for i in 0..d {
                for j in 0..d {
                    q[i * d + j] += s[i] * s[j];
                }
            }
        }
        q
    }
}

/// One metric observed while checking an assumption.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margin {
    pub metric: String,
    pub observed: f64,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub assumption: String,
    pub passed: bool,
    pub margins: Vec<Margin>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub n_samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub checks: Vec<AssumptionCheck>,
    pub all_passed: bool,
}

impl ValidationReport {
    pub fn check(&self, assumption: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.assumption == assumption)
    }

    pub fn margin(&self, assumption: &str, metric: &str) -> Option<f64> {
        self.check(assumption)?
            .margins
            .iter()
            .find(|m| m.metric == metric)
            .map(|m| m.observed)
    }
}

/// Axis-aligned sampling box, one `(lo, hi)` pair per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox(pub Vec<(f64, f64)>);

impl SampleBox {
    pub fn cube(d: usize, lo: f64, hi: f64) -> Self {
        Self(vec![(lo, hi); d])
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (o, &(lo, hi)) in out.iter_mut().zip(&self.0) {
            *o = lo + (hi - lo) * rng.random::<f64>();
        }
    }
}

const FD_STEP: f64 = 1e-5;

fn margin(metric: &str, observed: f64, limit: f64, passed: bool) -> Margin {
    Margin {
        metric: metric.to_string(),
        observed,
        limit,
        passed,
    }
}

fn le(observed: f64, limit: f64, tol: f64) -> bool {
    observed.is_finite() && observed <= limit + tol
}

/// Monte Carlo check of the model assumptions on `domain`. Failures are
/// reported in the returned value, never raised.
pub fn validate_model(
    spec: &ModelSpec,
    n_samples: usize,
    domain: &SampleBox,
    tol: f64,
    seed: u64,
) -> Result<ValidationReport> {
    let d = spec.d;
    if n_samples == 0 {
        return Err(Error::config("validation needs at least one sample"));
    }
    if !(tol > 0.0) {
        return Err(Error::config("validation tolerance must be positive"));
    }
    if domain.0.len() != d || domain.0.iter().any(|&(lo, hi)| !(hi > lo)) {
        return Err(Error::config(format!(
            "validation box must have {d} nondegenerate intervals"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![0.0; n_samples * d];
    for p in points.chunks_exact_mut(d) {
        domain.sample(&mut rng, p);
    }
    let mut partners = vec![0.0; n_samples * d];
    for p in partners.chunks_exact_mut(d) {
        domain.sample(&mut rng, p);
    }

    let mut checks = Vec::with_capacity(4);

    // H1: Lipschitz kernel
    {
        let mut kx = vec![0.0; d];
        let mut ky = vec![0.0; d];
        let mut worst: f64 = 0.0;
        for (x, y) in points.chunks_exact(d).zip(partners.chunks_exact(d)) {
            let dist = norm_diff(x, y);
            if dist == 0.0 {
                continue;
            }
            spec.kernel.eval(x, &mut kx);
            spec.kernel.eval(y, &mut ky);
            worst = worst.max(norm_diff(&kx, &ky) / dist);
        }
        let ok = le(worst, spec.kernel.lip, tol);
        checks.push(AssumptionCheck {
            assumption: "H1".into(),
            passed: ok,
            margins: vec![margin("max_lipschitz_ratio", worst, spec.kernel.lip, ok)],
        });
    }

    // H2: bounded friction, bounded gradient, gradient consistent with gamma
    {
        let fr = &spec.friction;
        let mut gmin = f64::INFINITY;
        let mut gmax = f64::NEG_INFINITY;
        let mut grad_max: f64 = 0.0;
        let mut fd_err: f64 = 0.0;
        let mut grad = vec![0.0; d];
        let mut xp = vec![0.0; d];
        for x in points.chunks_exact(d) {
            let g = fr.gamma(x);
            gmin = gmin.min(g);
            gmax = gmax.max(g);
            fr.grad_gamma(x, &mut grad);
            grad_max = grad_max.max(grad.iter().map(|v| v * v).sum::<f64>().sqrt());
            for c in 0..d {
                xp.copy_from_slice(x);
                xp[c] = x[c] + FD_STEP;
                let up = fr.gamma(&xp);
                xp[c] = x[c] - FD_STEP;
                let down = fr.gamma(&xp);
                let fd = (up - down) / (2.0 * FD_STEP);
                fd_err = fd_err.max((fd - grad[c]).abs());
            }
        }
        let positive = fr.gamma_min > 0.0 && fr.gamma_min <= fr.gamma_max;
        let lower_ok = gmin.is_finite() && gmin >= fr.gamma_min - tol;
        let upper_ok = le(gmax, fr.gamma_max, tol);
        let grad_ok = le(grad_max, fr.grad_bound, tol);
        let fd_ok = le(fd_err, 0.0, tol.max(1e-8));
        checks.push(AssumptionCheck {
            assumption: "H2".into(),
            passed: positive && lower_ok && upper_ok && grad_ok && fd_ok,
            margins: vec![
                margin("gamma_min_declared", fr.gamma_min, 0.0, positive),
                margin("min_gamma", gmin, fr.gamma_min, lower_ok),
                margin("max_gamma", gmax, fr.gamma_max, upper_ok),
                margin("max_grad_norm", grad_max, fr.grad_bound, grad_ok),
                margin("max_grad_fd_error", fd_err, tol.max(1e-8), fd_ok),
            ],
        });
    }

    // H3: summable, divergence-free, Q(0) = I
    {
        let m = spec.noise.channels();
        let mut sups = vec![0.0_f64; m];
        let mut div_max: f64 = 0.0;
        let mut q_err: f64 = 0.0;
        let mut s = vec![0.0; d];
        let mut sp = vec![0.0; d];
        let mut xp = vec![0.0; d];
        for x in points.chunks_exact(d) {
            for (k, sup) in sups.iter_mut().enumerate() {
                spec.noise.eval(k, x, &mut s);
                *sup = sup.max(s.iter().map(|v| v * v).sum::<f64>().sqrt());
                let mut div = 0.0;
                for c in 0..d {
                    xp.copy_from_slice(x);
                    xp[c] = x[c] + FD_STEP;
                    spec.noise.eval(k, &xp, &mut sp);
                    let up = sp[c];
                    xp[c] = x[c] - FD_STEP;
                    spec.noise.eval(k, &xp, &mut sp);
                    div += (up - sp[c]) / (2.0 * FD_STEP);
                }
                div_max = div_max.max(div.abs());
            }
            let q = spec.noise_covariance(x);
            for i in 0..d {
                for j in 0..d {
                    let target = if i == j { 1.0 } else { 0.0 };
                    q_err = q_err.max((q[i * d + j] - target).abs());
                }
            }
        }
        let sup_sum: f64 = sups.iter().sum();
        let sum_ok = le(sup_sum, spec.noise.sup_sum, tol);
        let div_ok = le(div_max, 0.0, tol);
        let q_ok = le(q_err, 0.0, tol);
        checks.push(AssumptionCheck {
            assumption: "H3".into(),
            passed: sum_ok && div_ok && q_ok,
            margins: vec![
                margin("sum_sup_sigma", sup_sum, spec.noise.sup_sum, sum_ok),
                margin("max_abs_divergence", div_max, tol, div_ok),
                margin("max_q_identity_error", q_err, tol, q_ok),
            ],
        });
    }

    // H4: initial law yields finite, reproducible second moments
    {
        let n = n_samples.min(4096);
        let draw = || {
            let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_1a11);
            spec.initial.sample(&mut r, n)
        };
        let (x1, v1) = draw();
        let (x2, v2) = draw();
        let m2 = (x1.iter().chain(&v1).map(|v| v * v).sum::<f64>()) / n as f64;
        let finite = m2.is_finite();
        let reproducible = x1 == x2 && v1 == v2;
        checks.push(AssumptionCheck {
            assumption: "H4".into(),
            passed: finite && reproducible,
            margins: vec![
                margin("second_moment", m2, f64::INFINITY, finite),
                margin(
                    "reproducible",
                    if reproducible { 1.0 } else { 0.0 },
                    1.0,
                    reproducible,
                ),
            ],
        });
    }

    let all_passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport {
        model: spec.name.clone(),
        n_samples,
        seed,
        tol,
        checks,
        all_passed,
    })
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_preset_values_at_origin() {
        let m = ModelSpec::preset("1d-tanh-friction").unwrap();
        assert_eq!(m.friction.gamma(&[0.0]), 2.0);
        let mut g = [0.0];
        m.friction.grad_gamma(&[0.0], &mut g);
        assert_eq!(g[0], 1.0);
        assert_eq!(m.noise_covariance(&[0.3]), vec![1.0]);
    }

    #[test]
    fn two_dim_preset_has_identity_q() {
        let m = ModelSpec::preset("2d-constant-sigma").unwrap();
        assert_eq!(m.noise_covariance(&[0.1, -2.0]), vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn unknown_preset_lists_valid_names() {
        let err = ModelSpec::preset("3d-foo").unwrap_err().to_string();
        for name in PRESET_NAMES {
            assert!(err.contains(name), "{err}");
        }
    }

    #[test]
    fn presets_validate_on_default_box() {
        for name in PRESET_NAMES {
            let m = ModelSpec::preset(name).unwrap();
            let r = validate_model(&m, 10_000, &SampleBox::cube(m.d, -5.0, 5.0), 1e-6, 7).unwrap();
            assert!(r.all_passed, "{name}: {r:#?}");
        }
    }

    #[test]
    fn tanh_gamma_range_and_lipschitz_ratio() {
        let m = ModelSpec::preset("1d-tanh-friction").unwrap();
        let r = validate_model(&m, 10_000, &SampleBox::cube(1, -5.0, 5.0), 1e-6, 1).unwrap();
        assert!(r.margin("H2", "min_gamma").unwrap() >= 1.0);
        assert!(r.margin("H2", "max_gamma").unwrap() <= 3.0);
        assert!(r.margin("H1", "max_lipschitz_ratio").unwrap() <= 1.0);
    }

    #[test]
    fn constant_sigma_has_exactly_zero_divergence() {
        let m = ModelSpec::preset("2d-constant-sigma").unwrap();
        let r = validate_model(&m, 1000, &SampleBox::cube(2, -5.0, 5.0), 1e-6, 3).unwrap();
        assert_eq!(r.margin("H3", "max_abs_divergence").unwrap(), 0.0);
    }

    #[test]
    fn identity_friction_fails_h2() {
        let mut m = ModelSpec::preset("1d-tanh-friction").unwrap();
        m.friction = FrictionSpec::new(
            Arc::new(|x| x[0]),
            Arc::new(|_, out| out[0] = 1.0),
            1.0,
            3.0,
            1.0,
        );
        let r = validate_model(&m, 1000, &SampleBox::cube(1, -5.0, 5.0), 1e-6, 3).unwrap();
        assert!(!r.check("H2").unwrap().passed);
        assert!(r.check("H1").unwrap().passed);
        assert!(!r.all_passed);
    }

    #[test]
    fn rotating_field_fails_divergence_free_check() {
        let mut m = ModelSpec::preset("1d-tanh-friction").unwrap();
        m.noise = NoiseFamily::new(vec![Arc::new(|x, out| out[0] = x[0].sin())], 1.0);
        let r = validate_model(&m, 1000, &SampleBox::cube(1, -5.0, 5.0), 1e-6, 3).unwrap();
        let h3 = r.check("H3").unwrap();
        assert!(!h3.passed);
        assert!(r.margin("H3", "max_abs_divergence").unwrap() > 0.5);
    }

    #[test]
    fn validation_report_is_deterministic() {
        let m = ModelSpec::preset("2d-constant-sigma").unwrap();
        let b = SampleBox::cube(2, -5.0, 5.0);
        let a = serde_json::to_string(&validate_model(&m, 500, &b, 1e-6, 11).unwrap()).unwrap();
        let c = serde_json::to_string(&validate_model(&m, 500, &b, 1e-6, 11).unwrap()).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn validation_rejects_bad_arguments() {
        let m = ModelSpec::preset("1d-tanh-friction").unwrap();
        assert!(validate_model(&m, 0, &SampleBox::cube(1, -1.0, 1.0), 1e-6, 0).is_err());
        assert!(validate_model(&m, 10, &SampleBox::cube(1, 1.0, 1.0), 1e-6, 0).is_err());
        assert!(validate_model(&m, 10, &SampleBox::cube(2, -1.0, 1.0), 1e-6, 0).is_err());
        assert!(validate_model(&m, 10, &SampleBox::cube(1, -1.0, 1.0), 0.0, 0).is_err());
    }
}
