//! Empirical-measure views of an ensemble: binned local mass and momentum,
//! test-function pairings, and the window-integrated pairing with the
//! averaged momentum field.

use std::fmt::Write as _;

use serde::Serialize;

use crate::dynamics::{meanfield_force, noise_induced_drift, KineticEnsemble, OverdampedEnsemble};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::noise::BrownianGrid;

/// All systems of one replica, driven by a single common-noise path.
#[derive(Debug, Clone)]
pub struct ConditionalReplica {
    pub replica_id: u32,
    pub common: BrownianGrid,
    pub kinetic: Option<KineticEnsemble>,
    pub overdamped: Vec<OverdampedEnsemble>,
}

impl ConditionalReplica {
    pub fn new(
        replica_id: u32,
        common: BrownianGrid,
        kinetic: Option<KineticEnsemble>,
        overdamped: Vec<OverdampedEnsemble>,
    ) -> Result<Self> {
        let mut sizes = kinetic
            .iter()
            .map(|k| k.len())
            .chain(overdamped.iter().map(|o| o.len()));
        if let Some(first) = sizes.next() {
            if sizes.any(|n| n != first) {
                return Err(Error::config("replica members have different particle counts"));
            }
        }
        Ok(Self {
            replica_id,
            common,
            kinetic,
            overdamped,
        })
    }
}

/// Equal-width partition of `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_bins: usize,
}

impl BinGrid {
    pub fn new(x_min: f64, x_max: f64, n_bins: usize) -> Result<Self> {
        if !(x_max > x_min) || n_bins == 0 {
            return Err(Error::config("bin grid needs x_max > x_min and at least one bin"));
        }
        Ok(Self { x_min, x_max, n_bins })
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_bins as f64
    }

    pub fn center(&self, b: usize) -> f64 {
        self.x_min + (b as f64 + 0.5) * self.width()
    }

    /// Bins are half-open `[lo, hi)` except the last, which includes `x_max`.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(x >= self.x_min && x <= self.x_max) {
            return None;
        }
        let b = ((x - self.x_min) / self.width()) as usize;
        Some(b.min(self.n_bins - 1))
    }
}

/// Histogram estimates of local mass and local momentum (d = 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedField {
    pub grid: BinGrid,
    pub mass: Vec<f64>,
    pub momentum: Vec<f64>,
    pub out_of_range_mass: f64,
}

impl BinnedField {
    pub const CSV_HEADER: &'static str = "time,bin_center,mass,momentum";

    /// CSV rows `time,bin_center,mass,momentum`, without header.
    pub fn csv_rows(&self, time: f64) -> String {
        let mut s = String::new();
        for b in 0..self.grid.n_bins {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                time,
                self.grid.center(b),
                self.mass[b],
                self.momentum[b]
            );
        }
        s
    }
}

pub fn local_fields(ens: &KineticEnsemble, grid: &BinGrid) -> Result<BinnedField> {
    if ens.d != 1 {
        return Err(Error::UnsupportedDimension {
            op: "local_fields",
            expected: 1,
            got: ens.d,
        });
    }
    let n = ens.len();
    let mut counts = vec![0usize; grid.n_bins];
    let mut momentum = vec![0.0; grid.n_bins];
    let mut outside = 0usize;
    for (&x, &v) in ens.positions.iter().zip(&ens.velocities) {
        match grid.locate(x) {
            Some(b) => {
                counts[b] += 1;
                momentum[b] += v;
            }
            None => outside += 1,
        }
    }
    let inv = 1.0 / n as f64;
    Ok(BinnedField {
        grid: *grid,
        mass: counts.iter().map(|&c| c as f64 * inv).collect(),
        momentum: momentum.iter().map(|m| m * inv).collect(),
        out_of_range_mass: outside as f64 * inv,
    })
}

/// Smooth compactly supported bump
/// `psi(x) = exp(1 - 1 / (1 - r^2))`, `r = |x - c| / a`, zero for `r >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestFunction {
    pub center: Vec<f64>,
    pub half_width: f64,
}

impl TestFunction {
    pub fn new(center: Vec<f64>, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) || center.is_empty() {
            return Err(Error::config("test function needs a center and positive half-width"));
        }
        Ok(Self { center, half_width })
    }

    fn r2(&self, x: &[f64]) -> f64 {
        let a2 = self.half_width * self.half_width;
        x.iter()
            .zip(&self.center)
            .map(|(xi, ci)| (xi - ci) * (xi - ci))
            .sum::<f64>()
            / a2
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r2 = self.r2(x);
        if r2 >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - r2)).exp()
        }
    }

    /// `grad psi = -psi * 2 (x - c) / (a^2 (1 - r^2)^2)`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let r2 = self.r2(x);
        if r2 >= 1.0 {
            out.fill(0.0);
            return;
        }
        let one_minus = 1.0 - r2;
        let scale = -self.value(x) * 2.0 / (self.half_width * self.half_width * one_minus * one_minus);
        for ((o, xi), ci) in out.iter_mut().zip(x).zip(&self.center) {
            *o = scale * (xi - ci);
        }
    }
}

/// `(1/N) sum_i psi(x_i) . v_i`, with `psi` replicated across components.
pub fn pair_momentum(ens: &KineticEnsemble, psi: &TestFunction) -> f64 {
    let d = ens.d;
    let total: f64 = ens
        .positions
        .chunks_exact(d)
        .zip(ens.velocities.chunks_exact(d))
        .map(|(x, v)| {
            let w = psi.value(x);
            if w == 0.0 {
                0.0
            } else {
                w * v.iter().sum::<f64>()
            }
        })
        .sum();
    total / ens.len() as f64
}

/// Window integral of the pairing of `psi` with the averaged momentum,
/// evaluated at the window-start positions (d = 1):
///
/// ```text
/// dt_window * [ (1/N) sum_i psi(x_i) F_i / gamma_i
///             + (1/N) sum_i psi(x_i) (1/2) S(x_i) gamma'_i / gamma_i^3
///             - (1/N) sum_i psi'(x_i) (1/2) S(x_i) / gamma_i^2 ]
///   + sum_k dB_k (1/N) sum_i psi(x_i) sigma_k(x_i) / gamma_i
/// ```
///
/// with `F` the mean-field force, `S = sum_k |sigma_k|^2` and `dB_k` the
/// common increments over the window.
pub fn averaged_momentum_pairing(
    positions: &[f64],
    psi: &TestFunction,
    window_db: &[f64],
    dt_window: f64,
    model: &ModelSpec,
) -> Result<f64> {
    if model.d != 1 {
        return Err(Error::UnsupportedDimension {
            op: "averaged_momentum_pairing",
            expected: 1,
            got: model.d,
        });
    }
    if !(dt_window > 0.0) {
        return Err(Error::config("averaging window must have positive length"));
    }
    if window_db.len() != model.noise.channels() {
        return Err(Error::config("window increments do not match the noise channels"));
    }
    let n = positions.len();
    let weights: Vec<f64> = positions.iter().map(|&x| psi.value(&[x])).collect();
    let mut grads = vec![0.0; n];
    for (g, &x) in grads.iter_mut().zip(positions) {
        let mut out = [0.0];
        psi.gradient(&[x], &mut out);
        *g = out[0];
    }
    if weights.iter().all(|w| *w == 0.0) && grads.iter().all(|g| *g == 0.0) {
        return Ok(0.0);
    }
    let force = meanfield_force(positions, 1, &model.kernel);
    let mut transport = 0.0;
    let mut drift = 0.0;
    let mut diffusion = 0.0;
    let mut flux = vec![0.0; window_db.len()];
    let mut sk = [0.0];
    for i in 0..n {
        let (w, dw) = (weights[i], grads[i]);
        if w == 0.0 && dw == 0.0 {
            continue;
        }
        let x = [positions[i]];
        let g = model.friction.gamma(&x);
        transport += w * force[i] / g;
        drift += w * noise_induced_drift(&x, model)[0];
        diffusion += dw * 0.5 * model.noise.sq_norm_sum(&x) / (g * g);
        for (k, fk) in flux.iter_mut().enumerate() {
            model.noise.eval(k, &x, &mut sk);
            *fk += w * sk[0] / g;
        }
    }
    let inv = 1.0 / n as f64;
    let deterministic = dt_window * inv * (transport + drift - diffusion);
    let stochastic: f64 = flux.iter().zip(window_db).map(|(f, db)| f * inv * db).sum();
    Ok(deterministic + stochastic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FrictionSpec, InitialLaw, KernelSpec, NoiseFamily};

    fn ens(xs: &[f64], vs: &[f64]) -> KineticEnsemble {
        KineticEnsemble::new(1, xs.to_vec(), vs.to_vec(), 0.1).unwrap()
    }

    #[test]
    fn single_particle_single_bin() {
        let f = local_fields(&ens(&[0.5], &[2.0]), &BinGrid::new(0.0, 1.0, 1).unwrap()).unwrap();
        assert_eq!(f.mass, vec![1.0]);
        assert_eq!(f.momentum, vec![2.0]);
        assert_eq!(f.out_of_range_mass, 0.0);
    }

    #[test]
    fn all_particles_out_of_range() {
        let f = local_fields(&ens(&[-3.0, 4.0], &[1.0, 1.0]), &BinGrid::new(0.0, 1.0, 4).unwrap()).unwrap();
        assert!(f.mass.iter().all(|m| *m == 0.0));
        assert!(f.momentum.iter().all(|m| *m == 0.0));
        assert_eq!(f.out_of_range_mass, 1.0);
    }

    #[test]
    fn symmetric_pair_momenta() {
        let f = local_fields(&ens(&[-0.25, 0.25], &[-1.0, 1.0]), &BinGrid::new(-1.0, 1.0, 2).unwrap()).unwrap();
        assert_eq!(f.momentum, vec![-0.5, 0.5]);
        assert_eq!(f.mass, vec![0.5, 0.5]);
    }

    #[test]
    fn local_fields_rejects_two_dimensions() {
        let e = KineticEnsemble::new(2, vec![0.0, 0.0], vec![0.0, 0.0], 0.1).unwrap();
        let err = local_fields(&e, &BinGrid::new(0.0, 1.0, 1).unwrap()).unwrap_err();
        assert!(matches!(err, Error::UnsupportedDimension { .. }));
    }

    #[test]
    fn csv_rows_layout() {
        let f = local_fields(&ens(&[0.25], &[2.0]), &BinGrid::new(0.0, 1.0, 2).unwrap()).unwrap();
        assert_eq!(f.csv_rows(0.5), "0.5,0.25,1,2\n0.5,0.75,0,0\n");
    }

    #[test]
    fn bump_properties() {
        let psi = TestFunction::new(vec![0.5], 2.0).unwrap();
        assert_eq!(psi.value(&[0.5]), 1.0);
        assert_eq!(psi.value(&[2.5]), 0.0);
        assert_eq!(psi.value(&[-1.6]), 0.0);
        let h = 1e-6;
        for x in [-1.2, -0.3, 0.5, 1.0, 2.2] {
            let mut g = [0.0];
            psi.gradient(&[x], &mut g);
            let fd = (psi.value(&[x + h]) - psi.value(&[x - h])) / (2.0 * h);
            assert!((g[0] - fd).abs() < 1e-7, "x = {x}: {} vs {fd}", g[0]);
        }
    }

    #[test]
    fn pair_momentum_cases() {
        let psi = TestFunction::new(vec![0.0], 2.0).unwrap();
        assert_eq!(pair_momentum(&ens(&[0.0], &[3.0]), &psi), 3.0);
        assert_eq!(pair_momentum(&ens(&[5.0, -7.0], &[3.0, 1.0]), &psi), 0.0);
        assert_eq!(pair_momentum(&ens(&[0.0, 0.0], &[1.0, -1.0]), &psi), 0.0);
    }

    fn flat_model(kernel: KernelSpec) -> ModelSpec {
        ModelSpec::new(
            "flat",
            1,
            FrictionSpec::constant(2.0),
            kernel,
            NoiseFamily::constant(vec![vec![1.0]]),
            InitialLaw::standard_gaussian(1),
        )
        .unwrap()
    }

    #[test]
    fn averaged_pairing_vanishes_off_support() {
        let m = ModelSpec::preset("1d-tanh-friction").unwrap();
        let psi = TestFunction::new(vec![10.0], 1.0).unwrap();
        let v = averaged_momentum_pairing(&[0.0, 0.5, -1.0], &psi, &[0.3], 0.01, &m).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn averaged_pairing_diffusion_term_only() {
        let m = flat_model(KernelSpec::zero());
        let psi = TestFunction::new(vec![0.0], 2.0).unwrap();
        let xs = [0.3, -0.9, 1.4];
        let dt = 0.02;
        let v = averaged_momentum_pairing(&xs, &psi, &[0.0], dt, &m).unwrap();
        let expect: f64 = -xs
            .iter()
            .map(|&x| {
                let mut g = [0.0];
                psi.gradient(&[x], &mut g);
                g[0] * 0.125 * dt
            })
            .sum::<f64>()
            / 3.0;
        assert!((v - expect).abs() < 1e-16);
    }

    #[test]
    fn averaged_pairing_drift_term_at_center() {
        let mut m = ModelSpec::preset("1d-tanh-friction").unwrap();
        m.kernel = KernelSpec::zero();
        let psi = TestFunction::new(vec![0.0], 1.0).unwrap();
        let v = averaged_momentum_pairing(&[0.0], &psi, &[0.0], 0.01, &m).unwrap();
        assert!((v - 0.01 * 0.0625).abs() < 1e-17);
    }

    #[test]
    fn averaged_pairing_common_flux() {
        let m = flat_model(KernelSpec::zero());
        let psi = TestFunction::new(vec![0.0], 2.0).unwrap();
        // psi'(0) = 0, so only the common-noise flux remains: dB * sigma / gamma
        let v = averaged_momentum_pairing(&[0.0], &psi, &[0.4], 0.01, &m).unwrap();
        assert!((v - 0.2).abs() < 1e-16);
    }

    #[test]
    fn averaged_pairing_is_additive_over_windows() {
        let m = ModelSpec::preset("1d-tanh-friction").unwrap();
        let psi = TestFunction::new(vec![0.0], 2.0).unwrap();
        let xs = [0.1, -0.4, 0.9, 1.7];
        let whole = averaged_momentum_pairing(&xs, &psi, &[0.5], 0.2, &m).unwrap();
        let parts = averaged_momentum_pairing(&xs, &psi, &[0.2], 0.05, &m).unwrap()
            + averaged_momentum_pairing(&xs, &psi, &[0.3], 0.15, &m).unwrap();
        assert!((whole - parts).abs() < 1e-15);
    }

    #[test]
    fn binned_pairing_converges_to_particle_pairing() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let vs: Vec<f64> = xs.iter().map(|x| 1.0 + x).collect();
        let e = ens(&xs, &vs);
        let psi = TestFunction::new(vec![0.3], 1.5).unwrap();
        let exact = pair_momentum(&e, &psi);
        let binned = |bins: usize| {
            let f = local_fields(&e, &BinGrid::new(-3.0, 3.0, bins).unwrap()).unwrap();
            (0..bins)
                .map(|b| f.momentum[b] * psi.value(&[f.grid.center(b)]))
                .sum::<f64>()
        };
        let coarse = (binned(24) - exact).abs();
        let fine = (binned(96) - exact).abs();
        assert!(fine < coarse, "{fine} !< {coarse}");
        assert!(fine < 0.25 * 0.25 * 1.5, "{fine}");
    }

    #[test]
    fn mass_conservation_exact() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let f = local_fields(&ens(&xs, &vec![0.0; 1000]), &BinGrid::new(-2.0, 2.0, 7).unwrap()).unwrap();
        let counts: usize = f.mass.iter().map(|m| (m * 1000.0).round() as usize).sum::<usize>()
            + (f.out_of_range_mass * 1000.0).round() as usize;
        assert_eq!(counts, 1000);
        assert!((f.mass.iter().sum::<f64>() + f.out_of_range_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn replica_members_must_agree_in_size() {
        use crate::dynamics::TermFlags;
        use crate::noise::{generate_common, Role, SeedDerivation};
        let g = generate_common(SeedDerivation::new(1, Role::Common, 0, 0), 1, 1.0, 0.1).unwrap();
        let k = ens(&[0.0, 1.0], &[0.0, 0.0]);
        let o = OverdampedEnsemble::new(1, vec![0.0], TermFlags::NONE).unwrap();
        assert!(ConditionalReplica::new(0, g.clone(), Some(k.clone()), vec![o]).is_err());
        let o = OverdampedEnsemble::new(1, vec![0.0, 1.0], TermFlags::NONE).unwrap();
        assert!(ConditionalReplica::new(0, g, Some(k), vec![o]).is_ok());
    }
}
