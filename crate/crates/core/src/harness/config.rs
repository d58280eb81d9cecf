use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dynamics::Scheme;
use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub preset: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            preset: "1d-tanh-friction".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsiSection {
    pub center: f64,
    pub half_width: f64,
}

impl Default for PsiSection {
    fn default() -> Self {
        Self {
            center: 0.0,
            half_width: 2.0,
        }
    }
}

/// Frozen-velocity checks at a fixed position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LemmaSection {
    pub x: f64,
    pub force: f64,
    /// Time of the residual-versus-mass sweep.
    pub t: f64,
    pub eps_grid: Vec<f64>,
    /// Exact-sample check of the relaxed second moment.
    pub sample_eps: f64,
    pub sample_t: f64,
    pub n_samples: usize,
}

impl Default for LemmaSection {
    fn default() -> Self {
        Self {
            x: 0.7,
            force: 0.5,
            t: 0.2,
            eps_grid: vec![0.1, 0.05, 0.025, 0.0125],
            sample_eps: 1e-3,
            sample_t: 0.05,
            n_samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinSection {
    pub x_min: f64,
    pub x_max: f64,
    pub n_bins: usize,
}

impl Default for BinSection {
    fn default() -> Self {
        Self {
            x_min: -4.0,
            x_max: 4.0,
            n_bins: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    /// Mass for `simulate`; defaults to the smallest entry of `eps_grid`.
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    pub n_samples: usize,
    pub box_lo: f64,
    pub box_hi: f64,
    pub tol: f64,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            box_lo: -5.0,
            box_hi: 5.0,
            tol: 1e-6,
        }
    }
}

/// Everything an experiment needs. Unknown keys are rejected; nested
/// objects and dotted keys (`"model.preset"`) are interchangeable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub eps_grid: Vec<f64>,
    pub n_particles: usize,
    pub replicas: usize,
    #[serde(rename = "T", alias = "horizon")]
    pub horizon: f64,
    pub s0: f64,
    pub dt_fine: f64,
    pub dt_overdamped: f64,
    pub scheme: Scheme,
    pub checkpoint_times: Vec<f64>,
    pub delta_coeff: f64,
    /// Spacing of the position snapshots used for the Hölder curve.
    pub trajectory_interval: f64,
    pub holder_lags: Vec<f64>,
    /// Adds a fourth overdamped system with reversed drift sign and no
    /// independent noise.
    pub classical_variant: bool,
    /// Random directions for sliced W2 when d >= 2.
    pub n_projections: usize,
    pub psi: PsiSection,
    pub lemma: LemmaSection,
    pub bins: BinSection,
    pub simulate: SimulateSection,
    pub validate: ValidateSection,
    pub seed: u64,
    /// Worker count; never affects results.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSection::default(),
            eps_grid: vec![0.2, 0.05, 0.0125],
            n_particles: 2000,
            replicas: 8,
            horizon: 1.0,
            s0: 0.2,
            dt_fine: 1e-4,
            dt_overdamped: 1e-3,
            scheme: Scheme::Exponential,
            checkpoint_times: vec![0.25, 0.5, 1.0],
            delta_coeff: 10.0,
            trajectory_interval: 0.05,
            holder_lags: vec![0.05, 0.1, 0.2, 0.4],
            classical_variant: false,
            n_projections: 64,
            psi: PsiSection::default(),
            lemma: LemmaSection::default(),
            bins: BinSection::default(),
            simulate: SimulateSection::default(),
            validate: ValidateSection::default(),
            seed: 20240101,
            threads: None,
            out_dir: None,
            format: OutputFormat::Csv,
        }
    }
}

/// Rewrites `{"a.b": v}` into `{"a": {"b": v}}`, merging with any nested
/// object already present.
fn expand_dotted(value: Value) -> Result<Value> {
    let Value::Object(map) = value else {
        return Err(Error::config("config root must be a JSON object"));
    };
    let mut out = Map::new();
    for (key, v) in map {
        let v = if v.is_object() { expand_dotted(v)? } else { v };
        let mut parts = key.split('.').rev();
        let leaf = parts.next().unwrap_or_default().to_string();
        let mut wrapped = Map::new();
        wrapped.insert(leaf, v);
        for p in parts {
            let mut outer = Map::new();
            outer.insert(p.to_string(), Value::Object(wrapped));
            wrapped = outer;
        }
        merge(&mut out, wrapped)?;
    }
    Ok(Value::Object(out))
}

fn merge(into: &mut Map<String, Value>, from: Map<String, Value>) -> Result<()> {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(Value::Object(a)), Value::Object(b)) => merge(a, b)?,
            (Some(_), _) => return Err(Error::config(format!("config key '{k}' given twice"))),
            (None, v) => {
                into.insert(k, v);
            }
        }
    }
    Ok(())
}

/// Number of whole steps of `dt` in `t`, if `t` lies on the grid.
pub(crate) fn grid_steps(t: f64, dt: f64) -> Option<usize> {
    let r = t / dt;
    let k = r.round();
    (k >= 0.0 && (r - k).abs() <= 1e-9 * k.max(1.0)).then_some(k as usize)
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: Value = serde_json::from_str(text).map_err(|e| Error::config(format!("malformed config: {e}")))?;
        let cfg: Self = serde_json::from_value(expand_dotted(raw)?)
            .map_err(|e| Error::config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        ModelSpec::preset(&self.model.preset)
    }

    /// Structural checks that do not depend on the model.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.eps_grid.is_empty() || self.eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return fail("eps_grid must be a non-empty list of positive masses".into());
        }
        if self.eps_grid.windows(2).any(|w| w[1] >= w[0]) {
            return fail("eps_grid must be strictly decreasing".into());
        }
        if self.n_particles == 0 || self.replicas == 0 {
            return fail("n_particles and replicas must be positive".into());
        }
        if self.replicas > 0x00ff_ffff {
            return fail("at most 2^24 - 1 replicas are supported".into());
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return fail(format!("T must be positive, got {}", self.horizon));
        }
        if !(self.s0 >= 0.0 && self.s0 < self.horizon) {
            return fail(format!("s0 must satisfy 0 <= s0 < T, got s0 = {}", self.s0));
        }
        if !(self.dt_fine > 0.0) || !(self.dt_overdamped > 0.0) {
            return fail("time steps must be positive".into());
        }
        if grid_steps(self.dt_overdamped, self.dt_fine).filter(|k| *k >= 1).is_none() {
            return fail(format!(
                "dt_overdamped ({}) must be a whole multiple of dt_fine ({})",
                self.dt_overdamped, self.dt_fine
            ));
        }
        let on_grid = |t: f64| grid_steps(t, self.dt_overdamped).is_some();
        if !on_grid(self.horizon) {
            return fail(format!("T must be a whole number of dt_overdamped steps, got {}", self.horizon));
        }
        if !on_grid(self.s0) {
            return fail(format!("s0 must lie on the dt_overdamped grid, got {}", self.s0));
        }
        if self.checkpoint_times.is_empty() {
            return fail("checkpoint_times must not be empty".into());
        }
        if self.checkpoint_times.windows(2).any(|w| w[1] <= w[0]) {
            return fail("checkpoint_times must be strictly increasing".into());
        }
        for &t in &self.checkpoint_times {
            if t < self.s0 - 1e-12 || t > self.horizon + 1e-12 {
                return fail(format!("checkpoint {t} lies outside [s0, T] = [{}, {}]", self.s0, self.horizon));
            }
            if !on_grid(t) {
                return fail(format!("checkpoint {t} is not on the dt_overdamped grid"));
            }
        }
        if !(self.delta_coeff > 0.0) {
            return fail("delta_coeff must be positive".into());
        }
        if !on_grid(self.trajectory_interval) || !(self.trajectory_interval > 0.0) {
            return fail("trajectory_interval must be a positive multiple of dt_overdamped".into());
        }
        if grid_steps(self.horizon, self.trajectory_interval).is_none() {
            return fail("T must be a whole number of trajectory intervals".into());
        }
        for &lag in &self.holder_lags {
            match grid_steps(lag, self.trajectory_interval) {
                Some(k) if k >= 1 && lag < self.horizon => {}
                _ => {
                    return fail(format!(
                        "holder lag {lag} must be a positive multiple of trajectory_interval below T"
                    ))
                }
            }
        }
        if self.n_projections == 0 {
            return fail("n_projections must be positive".into());
        }
        if !(self.psi.half_width > 0.0) {
            return fail("psi.half_width must be positive".into());
        }
        let l = &self.lemma;
        if l.eps_grid.iter().any(|e| !(*e > 0.0)) || !(l.t >= 0.0) || !(l.sample_eps > 0.0) || !(l.sample_t >= 0.0) {
            return fail("lemma masses must be positive and times non-negative".into());
        }
        if !(self.bins.x_max > self.bins.x_min) || self.bins.n_bins == 0 {
            return fail("bins need x_max > x_min and n_bins >= 1".into());
        }
        if let Some(e) = self.simulate.eps {
            if !(e > 0.0) {
                return fail("simulate.eps must be positive".into());
            }
        }
        if self.validate.n_samples == 0 || !(self.validate.box_hi > self.validate.box_lo) || !(self.validate.tol > 0.0) {
            return fail("validate section needs samples, a nondegenerate box and a positive tolerance".into());
        }
        if self.threads == Some(0) {
            return fail("threads must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
        let cfg = ExperimentConfig::from_json_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn dotted_and_nested_keys_agree() {
        let a = ExperimentConfig::from_json_str(r#"{"model.preset": "1d-constant-friction", "psi.half_width": 1.5}"#).unwrap();
        let b = ExperimentConfig::from_json_str(r#"{"model": {"preset": "1d-constant-friction"}, "psi": {"half_width": 1.5}}"#)
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.model.preset, "1d-constant-friction");
    }

    #[test]
    fn duplicate_and_unknown_keys_rejected() {
        assert!(ExperimentConfig::from_json_str(r#"{"model.preset": "a", "model": {"preset": "b"}}"#).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"n_particle": 3}"#).is_err());
        assert!(ExperimentConfig::from_json_str("[1, 2]").is_err());
        assert!(ExperimentConfig::from_json_str("{not json").is_err());
    }

    #[test]
    fn horizon_key_and_alias() {
        let a = ExperimentConfig::from_json_str(r#"{"T": 0.5, "checkpoint_times": [0.5]}"#).unwrap();
        let b = ExperimentConfig::from_json_str(r#"{"horizon": 0.5, "checkpoint_times": [0.5]}"#).unwrap();
        assert_eq!(a.horizon, 0.5);
        assert_eq!(a, b);
    }

    #[test]
    fn invariants_enforced() {
        for bad in [
            r#"{"eps_grid": [0.1, 0.2]}"#,
            r#"{"eps_grid": []}"#,
            r#"{"s0": 1.0}"#,
            r#"{"checkpoint_times": [0.1]}"#,
            r#"{"checkpoint_times": [0.2505]}"#,
            r#"{"dt_overdamped": 1.5e-4}"#,
            r#"{"holder_lags": [0.07]}"#,
            r#"{"threads": 0}"#,
            r#"{"replicas": 0}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json_str(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn grid_steps_tolerates_rounding() {
        assert_eq!(grid_steps(0.3, 0.1), Some(3));
        assert_eq!(grid_steps(1.0, 1e-4), Some(10_000));
        assert_eq!(grid_steps(0.25, 0.1), None);
    }
}
