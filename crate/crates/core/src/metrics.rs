//! Distances between equal-size empirical laws, moment and Hölder
//! estimators, and log-log order fits.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::SeedDerivation;

/// Equal-weight point cloud, stored row-major (`n x d`).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCloud {
    d: usize,
    points: Vec<f64>,
}

impl SampleCloud {
    pub fn new(d: usize, points: Vec<f64>) -> Result<Self> {
        if d == 0 || points.is_empty() || !points.len().is_multiple_of(d) {
            return Err(Error::config("sample cloud needs d >= 1 and a whole number of points"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::numerical("sample cloud has non-finite entries"));
        }
        Ok(Self { d, points })
    }

    pub fn from_1d(points: &[f64]) -> Result<Self> {
        Self::new(1, points.to_vec())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.points.len() / self.d
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }
}

fn same_shape(a: &SampleCloud, b: &SampleCloud) -> Result<()> {
    if a.d != b.d {
        return Err(Error::config(format!("clouds differ in dimension ({} vs {})", a.d, b.d)));
    }
    if a.n() != b.n() {
        return Err(Error::config(format!(
            "clouds differ in size ({} vs {}); subsample to a common size first",
            a.n(),
            b.n()
        )));
    }
    Ok(())
}

/// Mean squared gap between sorted copies of two equal-length samples.
fn sorted_cost(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Exact W2 between two equal-size empirical measures on the line.
pub fn w2_1d_exact(a: &SampleCloud, b: &SampleCloud) -> Result<f64> {
    if a.d != 1 || b.d != 1 {
        return Err(Error::UnsupportedDimension {
            op: "w2_1d_exact",
            expected: 1,
            got: a.d.max(b.d),
        });
    }
    same_shape(a, b)?;
    let mut x = a.points.clone();
    let mut y = b.points.clone();
    Ok(sorted_cost(&mut x, &mut y).sqrt())
}

pub const MATCHING_ORACLE_MAX_N: usize = 10;

/// Minimal mean squared pairing cost over every permutation (Heap's
/// algorithm). Intended as a reference for small clouds only.
pub fn w2_matching_oracle(a: &SampleCloud, b: &SampleCloud) -> Result<f64> {
    same_shape(a, b)?;
    let n = a.n();
    if n > MATCHING_ORACLE_MAX_N {
        return Err(Error::config(format!(
            "matching oracle is limited to n <= {MATCHING_ORACLE_MAX_N}, got {n}"
        )));
    }
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = a
                .point(i)
                .iter()
                .zip(b.point(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
        }
    }
    let total = |perm: &[usize]| -> f64 { perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum() };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = total(&perm);
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok((best / n as f64).sqrt())
}

/// Root-mean over `n_proj` uniform random directions of the squared 1D W2
/// between projected clouds.
pub fn sliced_w2(a: &SampleCloud, b: &SampleCloud, n_proj: usize, seed: SeedDerivation) -> Result<f64> {
    same_shape(a, b)?;
    if n_proj == 0 {
        return Err(Error::config("sliced W2 needs at least one projection"));
    }
    let d = a.d;
    let n = a.n();
    let mut rng = seed.rng();
    let mut dir = vec![0.0; d];
    let mut pa = vec![0.0; n];
    let mut pb = vec![0.0; n];
    let mut acc = 0.0;
    for _ in 0..n_proj {
        let norm = loop {
            for u in dir.iter_mut() {
                *u = rng.sample(StandardNormal);
            }
            let s = dir.iter().map(|u| u * u).sum::<f64>().sqrt();
            if s > 1e-12 {
                break s;
            }
        };
        dir.iter_mut().for_each(|u| *u /= norm);
        for i in 0..n {
            pa[i] = a.point(i).iter().zip(&dir).map(|(x, u)| x * u).sum();
            pb[i] = b.point(i).iter().zip(&dir).map(|(x, u)| x * u).sum();
        }
        acc += sorted_cost(&mut pa, &mut pb);
    }
    Ok((acc / n_proj as f64).sqrt())
}

/// Per-particle running maximum of `|x_i|^2` across checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningSup {
    d: usize,
    max_sq: Vec<f64>,
}

impl RunningSup {
    pub fn new(d: usize, n: usize) -> Self {
        Self {
            d,
            max_sq: vec![0.0; n],
        }
    }

    pub fn observe(&mut self, positions: &[f64]) {
        for (m, x) in self.max_sq.iter_mut().zip(positions.chunks_exact(self.d)) {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            if r2 > *m {
                *m = r2;
            }
        }
    }

    /// `(1/N) sum_i max_t |x_i(t)|^2`.
    pub fn value(&self) -> f64 {
        self.max_sq.iter().sum::<f64>() / self.max_sq.len() as f64
    }
}

/// Pathwise supremum of `|x_i|^2` over checkpoints, averaged over particles.
pub fn second_moment_sup(checkpoints: &[Vec<f64>], d: usize) -> Result<f64> {
    let first = checkpoints
        .first()
        .ok_or_else(|| Error::config("second_moment_sup needs at least one checkpoint"))?;
    if d == 0 || first.is_empty() || first.len() % d != 0 {
        return Err(Error::config("checkpoint length is not a multiple of d"));
    }
    let mut sup = RunningSup::new(d, first.len() / d);
    for c in checkpoints {
        if c.len() != first.len() {
            return Err(Error::config("checkpoints differ in particle count"));
        }
        sup.observe(c);
    }
    Ok(sup.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderPoint {
    pub lag: f64,
    pub msd: f64,
}

/// Mean squared displacement per lag from snapshots spaced `spacing` apart.
/// Each lag must be a positive whole multiple of the spacing and shorter
/// than the recorded span; averaging runs over particles and every
/// admissible start time.
pub fn holder_curve(snapshots: &[Vec<f64>], d: usize, spacing: f64, lags: &[f64]) -> Result<Vec<HolderPoint>> {
    if snapshots.len() < 2 || !(spacing > 0.0) || d == 0 {
        return Err(Error::config("holder_curve needs two or more snapshots and a positive spacing"));
    }
    let width = snapshots[0].len();
    if width == 0 || !width.is_multiple_of(d) || snapshots.iter().any(|s| s.len() != width) {
        return Err(Error::config("snapshots must share a particle count"));
    }
    let n = width / d;
    let mut out = Vec::with_capacity(lags.len());
    for &lag in lags {
        let k = (lag / spacing).round();
        if !(k >= 1.0) || ((k * spacing - lag).abs() > 1e-9 * spacing.max(lag)) {
            return Err(Error::config(format!("lag {lag} is not a positive multiple of {spacing}")));
        }
        let k = k as usize;
        if k >= snapshots.len() {
            return Err(Error::config(format!("lag {lag} exceeds the recorded span")));
        }
        let mut acc = 0.0;
        let starts = snapshots.len() - k;
        for s in 0..starts {
            acc += snapshots[s]
                .iter()
                .zip(&snapshots[s + k])
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>();
        }
        out.push(HolderPoint {
            lag,
            msd: acc / (starts * n) as f64,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(ln h, ln err)`.
pub fn order_fit(points: &[(f64, f64)]) -> Result<OrderFit> {
    if points.len() < 3 {
        return Err(Error::config("order fit needs at least 3 points"));
    }
    if points.iter().any(|&(h, e)| !(h > 0.0 && e > 0.0 && h.is_finite() && e.is_finite())) {
        return Err(Error::config("order fit needs positive finite values"));
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::config("order fit needs at least two distinct h values"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(OrderFit {
        slope,
        intercept,
        r_squared,
    })
}
