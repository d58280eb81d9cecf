//! Seeded Brownian increment grids.
//!
//! Every stream is addressed by `(root, role, replica, index)` and maps to
//! its own ChaCha8 stream, so a grid never depends on generation order or
//! on how many workers are running.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Common,
    Idiosyncratic,
    InitialLaw,
    Projection,
}

impl Role {
    fn tag(self) -> u8 {
        match self {
            Role::Common => 1,
            Role::Idiosyncratic => 2,
            Role::InitialLaw => 3,
            Role::Projection => 4,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            1 => Role::Common,
            2 => Role::Idiosyncratic,
            3 => Role::InitialLaw,
            4 => Role::Projection,
            _ => return None,
        })
    }
}

/// Pure derivation of an RNG stream from a root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct SeedDerivation {
    pub root: u64,
    pub role: Role,
    pub replica: u32,
    /// Channel or particle id.
    pub index: u32,
}

impl SeedDerivation {
    pub fn new(root: u64, role: Role, replica: u32, index: u32) -> Self {
        Self {
            root,
            role,
            replica,
            index,
        }
    }

    pub fn with_index(self, index: u32) -> Self {
        Self { index, ..self }
    }

    /// 64-bit ChaCha stream id; injective in `(role, replica < 2^24, index)`.
    pub fn stream_id(&self) -> u64 {
        (u64::from(self.role.tag()) << 56)
            | ((u64::from(self.replica) & 0x00ff_ffff) << 32)
            | u64::from(self.index)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(self.stream_id());
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridLayout {
    /// `channels` real-valued Brownian motions shared by all particles.
    Common { channels: usize },
    /// One d-dimensional Brownian motion per particle.
    Idiosyncratic { particles: usize, dim: usize },
}

impl GridLayout {
    pub fn width(&self) -> usize {
        match *self {
            GridLayout::Common { channels } => channels,
            GridLayout::Idiosyncratic { particles, dim } => particles * dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GridLineage {
    pub seed: SeedDerivation,
    /// Product of all coarsening factors applied since generation.
    pub coarsening: u64,
}

/// Gaussian increments on a uniform time grid, stored step-major:
/// `increments[step * width + component]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianGrid {
    pub dt: f64,
    pub n_steps: usize,
    pub layout: GridLayout,
    pub lineage: GridLineage,
    increments: Vec<f64>,
}

/// Number of steps of size `dt` covering `[0, horizon]`.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::config(format!("time step must be positive, got {dt}")));
    }
    if !(horizon >= dt) || !horizon.is_finite() {
        return Err(Error::config(format!(
            "horizon {horizon} must be at least one step ({dt})"
        )));
    }
    let ratio = horizon / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        Ok(nearest as usize)
    } else {
        Ok(ratio.ceil() as usize)
    }
}

impl BrownianGrid {
    pub fn width(&self) -> usize {
        self.layout.width()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// All components of one step.
    #[inline]
    pub fn step(&self, s: usize) -> &[f64] {
        let w = self.width();
        &self.increments[s * w..(s + 1) * w]
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Per-component sums over steps `start..start + len`.
    pub fn window_sum(&self, start: usize, len: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.width()];
        for s in start..(start + len).min(self.n_steps) {
            for (a, v) in acc.iter_mut().zip(self.step(s)) {
                *a += v;
            }
        }
        acc
    }

    /// Builds a grid from explicit increments (tests, replay).
    pub fn from_increments(
        dt: f64,
        layout: GridLayout,
        lineage: GridLineage,
        increments: Vec<f64>,
    ) -> Result<Self> {
        let w = layout.width();
        if !(dt > 0.0) {
            return Err(Error::config("grid dt must be positive"));
        }
        let n_steps = increments.len().checked_div(w).unwrap_or(0);
        if w > 0 && increments.len() != n_steps * w {
            return Err(Error::config(format!(
                "{} increments do not fill rows of width {w}",
                increments.len()
            )));
        }
        Ok(Self {
            dt,
            n_steps,
            layout,
            lineage,
            increments,
        })
    }

    /// Binary dump: little-endian header then f64 increments.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(GRID_MAGIC)?;
        let seed = &self.lineage.seed;
        w.write_all(&seed.root.to_le_bytes())?;
        w.write_all(&[seed.role.tag()])?;
        w.write_all(&seed.replica.to_le_bytes())?;
        w.write_all(&seed.index.to_le_bytes())?;
        w.write_all(&self.lineage.coarsening.to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.n_steps as u64).to_le_bytes())?;
        let (kind, a, b) = match self.layout {
            GridLayout::Common { channels } => (0u8, channels as u64, 1u64),
            GridLayout::Idiosyncratic { particles, dim } => (1u8, particles as u64, dim as u64),
        };
        w.write_all(&[kind])?;
        w.write_all(&a.to_le_bytes())?;
        w.write_all(&b.to_le_bytes())?;
        for v in &self.increments {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let bad = |m: &str| Error::config(format!("malformed grid dump: {m}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("short header"))?;
        if &magic != GRID_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u64b = [0u8; 8];
        let mut u32b = [0u8; 4];
        let mut u8b = [0u8; 1];
        macro_rules! read {
            ($buf:ident, $t:ty) => {{
                r.read_exact(&mut $buf).map_err(|_| bad("short header"))?;
                <$t>::from_le_bytes($buf)
            }};
        }
        let root = read!(u64b, u64);
        let role = Role::from_tag(read!(u8b, u8)).ok_or_else(|| bad("unknown role"))?;
        let replica = read!(u32b, u32);
        let index = read!(u32b, u32);
        let coarsening = read!(u64b, u64);
        let dt = read!(u64b, f64);
        let n_steps = read!(u64b, u64) as usize;
        let kind = read!(u8b, u8);
        let a = read!(u64b, u64) as usize;
        let b = read!(u64b, u64) as usize;
        let layout = match kind {
            0 => GridLayout::Common { channels: a },
            1 => GridLayout::Idiosyncratic {
                particles: a,
                dim: b,
            },
            _ => return Err(bad("unknown layout")),
        };
        let total = n_steps * layout.width();
        let mut increments = Vec::with_capacity(total);
        for _ in 0..total {
            increments.push(read!(u64b, f64));
        }
        let lineage = GridLineage {
            seed: SeedDerivation::new(root, role, replica, index),
            coarsening,
        };
        Ok(Self {
            dt,
            n_steps,
            layout,
            lineage,
            increments,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_binary(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_binary(std::io::BufReader::new(f))
    }
}

const GRID_MAGIC: &[u8; 8] = b"MVSKBG01";

/// `m` independent scalar channels; channel k uses stream index k.
pub fn generate_common(seed: SeedDerivation, m: usize, horizon: f64, dt: f64) -> Result<BrownianGrid> {
    if m == 0 {
        return Err(Error::config("common noise needs at least one channel"));
    }
    let n_steps = step_count(horizon, dt)?;
    let sd = dt.sqrt();
    let mut increments = vec![0.0; n_steps * m];
    for k in 0..m {
        let mut rng = seed.with_index(k as u32).rng();
        for s in 0..n_steps {
            let z: f64 = rng.sample(StandardNormal);
            increments[s * m + k] = sd * z;
        }
    }
    Ok(BrownianGrid {
        dt,
        n_steps,
        layout: GridLayout::Common { channels: m },
        lineage: GridLineage {
            seed: SeedDerivation {
                role: Role::Common,
                index: 0,
                ..seed
            },
            coarsening: 1,
        },
        increments,
    })
}

/// One d-dimensional Brownian motion per particle; particle i uses stream
/// index i and draws its d components step by step.
pub fn generate_idiosyncratic(
    seed: SeedDerivation,
    n_particles: usize,
    d: usize,
    horizon: f64,
    dt: f64,
) -> Result<BrownianGrid> {
    let n_steps = step_count(horizon, dt)?;
    let w = n_particles * d;
    let sd = dt.sqrt();
    let mut increments = vec![0.0; n_steps * w];
    for i in 0..n_particles {
        let mut rng = seed.with_index(i as u32).rng();
        for s in 0..n_steps {
            let row = &mut increments[s * w + i * d..s * w + (i + 1) * d];
            for v in row {
                let z: f64 = rng.sample(StandardNormal);
                *v = sd * z;
            }
        }
    }
    Ok(BrownianGrid {
        dt,
        n_steps,
        layout: GridLayout::Idiosyncratic {
            particles: n_particles,
            dim: d,
        },
        lineage: GridLineage {
            seed: SeedDerivation {
                role: Role::Idiosyncratic,
                index: 0,
                ..seed
            },
            coarsening: 1,
        },
        increments,
    })
}

/// Sums blocks of `factor` consecutive steps, left to right.
pub fn coarsen(grid: &BrownianGrid, factor: usize) -> Result<BrownianGrid> {
    if factor == 0 || !grid.n_steps.is_multiple_of(factor) {
        return Err(Error::config(format!(
            "coarsening factor {factor} does not divide {} steps",
            grid.n_steps
        )));
    }
    let w = grid.width();
    let n = grid.n_steps / factor;
    let increments = coarsen_rows(&grid.increments, w, factor);
    Ok(BrownianGrid {
        dt: grid.dt * factor as f64,
        n_steps: n,
        layout: grid.layout,
        lineage: GridLineage {
            seed: grid.lineage.seed,
            coarsening: grid.lineage.coarsening * factor as u64,
        },
        increments,
    })
}

/// Row-block summation shared by [`coarsen`] and the coupling audit.
pub(crate) fn coarsen_rows(rows: &[f64], width: usize, factor: usize) -> Vec<f64> {
    if width == 0 {
        return Vec::new();
    }
    let n = rows.len() / width / factor;
    let mut out = vec![0.0; n * width];
    for (c, block) in out.chunks_exact_mut(width).zip(rows.chunks_exact(width * factor)) {
        for fine in block.chunks_exact(width) {
            for (o, v) in c.iter_mut().zip(fine) {
                *o += v;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(role: Role) -> SeedDerivation {
        SeedDerivation::new(42, role, 0, 0)
    }

    fn lineage() -> GridLineage {
        GridLineage {
            seed: seed(Role::Common),
            coarsening: 1,
        }
    }

    #[test]
    fn common_grid_counts_steps() {
        let g = generate_common(seed(Role::Common), 1, 1.0, 0.5).unwrap();
        assert_eq!(g.n_steps, 2);
        assert_eq!(g.increments().len(), 2);
        let g = generate_common(seed(Role::Common), 3, 1.0, 1e-3).unwrap();
        assert_eq!(g.n_steps, 1000);
        assert!((g.horizon() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn common_grid_is_deterministic() {
        let a = generate_common(seed(Role::Common), 2, 1.0, 0.01).unwrap();
        let b = generate_common(seed(Role::Common), 2, 1.0, 0.01).unwrap();
        assert_eq!(a, b);
        let c = generate_common(SeedDerivation::new(43, Role::Common, 0, 0), 2, 1.0, 0.01).unwrap();
        assert_ne!(a.increments(), c.increments());
    }

    #[test]
    fn rejects_bad_time_parameters() {
        assert!(generate_common(seed(Role::Common), 1, 1.0, 0.0).is_err());
        assert!(generate_common(seed(Role::Common), 1, -1.0, 0.1).is_err());
        assert!(generate_common(seed(Role::Common), 1, 0.01, 0.1).is_err());
        assert!(generate_common(seed(Role::Common), 0, 1.0, 0.1).is_err());
    }

    #[test]
    fn gaussian_moments_of_common_increments() {
        let dt = 0.01;
        let n = 100_000;
        let g = generate_common(seed(Role::Common), 1, n as f64 * dt, dt).unwrap();
        assert_eq!(g.n_steps, n);
        let mean = g.increments().iter().sum::<f64>() / n as f64;
        let var = g.increments().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 * (dt / n as f64).sqrt(), "mean {mean}");
        assert!((var / dt - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn empty_idiosyncratic_grid_is_valid() {
        let g = generate_idiosyncratic(seed(Role::Idiosyncratic), 0, 1, 1.0, 0.1).unwrap();
        assert_eq!(g.width(), 0);
        assert!(g.increments().is_empty());
        assert_eq!(g.n_steps, 10);
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn particle_streams_are_uncorrelated() {
        let n = 100_000;
        let g = generate_idiosyncratic(seed(Role::Idiosyncratic), 2, 1, n as f64, 1.0).unwrap();
        let a: Vec<f64> = (0..n).map(|s| g.step(s)[0]).collect();
        let b: Vec<f64> = (0..n).map(|s| g.step(s)[1]).collect();
        let r = correlation(&a, &b);
        assert!(r.abs() < 4.0 / (n as f64).sqrt(), "r = {r}");
    }

    #[test]
    fn common_and_idiosyncratic_roles_are_uncorrelated() {
        let n = 100_000;
        let c = generate_common(seed(Role::Common), 1, n as f64, 1.0).unwrap();
        let i = generate_idiosyncratic(seed(Role::Idiosyncratic), 1, 1, n as f64, 1.0).unwrap();
        let r = correlation(c.increments(), i.increments());
        assert!(r.abs() < 4.0 / (n as f64).sqrt(), "r = {r}");
    }

    #[test]
    fn idiosyncratic_grid_reproducible_bytes() {
        let a = generate_idiosyncratic(seed(Role::Idiosyncratic), 5, 2, 1.0, 0.1).unwrap();
        let b = generate_idiosyncratic(seed(Role::Idiosyncratic), 5, 2, 1.0, 0.1).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write_binary(&mut ba).unwrap();
        b.write_binary(&mut bb).unwrap();
        assert_eq!(ba, bb);
    }

    #[test]
    fn particle_stream_independent_of_population_size() {
        let small = generate_idiosyncratic(seed(Role::Idiosyncratic), 3, 1, 1.0, 0.1).unwrap();
        let large = generate_idiosyncratic(seed(Role::Idiosyncratic), 50, 1, 1.0, 0.1).unwrap();
        for s in 0..10 {
            assert_eq!(small.step(s), &large.step(s)[..3]);
        }
    }

    #[test]
    fn coarsen_sums_pairs() {
        let g = BrownianGrid::from_increments(0.5, GridLayout::Common { channels: 1 }, lineage(), vec![0.3, -0.1])
            .unwrap();
        let c = coarsen(&g, 2).unwrap();
        assert_eq!(c.n_steps, 1);
        assert_eq!(c.dt, 1.0);
        assert!((c.increments()[0] - 0.2).abs() < 1e-15);
        assert_eq!(c.lineage.coarsening, 2);
        assert_eq!(c.lineage.seed, g.lineage.seed);
    }

    #[test]
    fn coarsen_by_one_is_identity() {
        let g = generate_common(seed(Role::Common), 2, 1.0, 0.1).unwrap();
        let c = coarsen(&g, 1).unwrap();
        assert_eq!(c.increments(), g.increments());
        assert_eq!(c.dt, g.dt);
    }

    #[test]
    fn coarsen_rejects_non_divisor() {
        let g = generate_common(seed(Role::Common), 1, 1.0, 0.1).unwrap();
        assert!(coarsen(&g, 3).is_err());
        assert!(coarsen(&g, 0).is_err());
    }

    #[test]
    fn binary_dump_round_trips() {
        let g = coarsen(&generate_idiosyncratic(seed(Role::Idiosyncratic), 4, 2, 1.0, 0.05).unwrap(), 2).unwrap();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 8 + 1 + 4 + 4 + 8 + 8 + 8 + 1 + 8 + 8 + 8 * g.increments().len());
        let back = BrownianGrid::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, g);
        assert!(BrownianGrid::read_binary(&buf[..20]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn coarsen_preserves_totals(seed_root in any::<u64>(), k in 1usize..4, f in 1usize..5) {
                let n = 12 * f;
                let g = generate_common(SeedDerivation::new(seed_root, Role::Common, 0, 0), k, n as f64 * 0.01, 0.01).unwrap();
                let c = coarsen(&g, f).unwrap();
                let fine = g.window_sum(0, g.n_steps);
                let coarse = c.window_sum(0, c.n_steps);
                for (a, b) in fine.iter().zip(&coarse) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }

            #[test]
            fn coarsen_composes(seed_root in any::<u64>()) {
                let g = generate_common(SeedDerivation::new(seed_root, Role::Common, 1, 0), 2, 0.32, 0.01).unwrap();
                let twice = coarsen(&coarsen(&g, 2).unwrap(), 2).unwrap();
                let once = coarsen(&g, 4).unwrap();
                prop_assert_eq!(twice.n_steps, once.n_steps);
                for (a, b) in twice.increments().iter().zip(once.increments()) {
                    prop_assert!((a - b).abs() < 1e-14);
                }
            }
        }
    }
}
