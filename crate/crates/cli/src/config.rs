//! Experiment configuration: TOML in, validated and normalized, with a
//! content hash over the canonical JSON form.

use std::path::{Path, PathBuf};

use kacsim::chaos::{BaseLaw, InitMode, InitialDataSpec};
use kacsim::scalar::sphere_area;
use kacsim::{AngularLaw, Kernel, Potential, Selection};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A validation failure, tagged with the dotted path of the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

fn bad<T>(key: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { key: key.into(), message: message.into() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Simulate,
    Lln,
    Chaos,
    Contraction,
    Mehler,
    Battery,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    /// `maxwell` or `hard_spheres`.
    pub family: String,
    pub d: usize,
    /// `constant` (default) or `power_law`.
    #[serde(default = "default_angular")]
    pub angular: String,
    /// Constant angular density; defaults to unit angular mass.
    #[serde(default)]
    pub b_const: Option<f64>,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub eps_cut: Option<f64>,
    #[serde(default)]
    pub c_b: Option<f64>,
    #[serde(default)]
    pub selection: Selection,
}

fn default_angular() -> String {
    "constant".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    /// `gaussian`, `uniform_ball`, `shell` or `two_point`.
    pub law: String,
    /// Dimension; defaults to `kernel.d`.
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub mean: Option<Vec<f64>>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub a: Option<Vec<f64>>,
    #[serde(default)]
    pub b: Option<Vec<f64>>,
    /// `tensor` (default), `kac_sphere` or `conditioned`.
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default)]
    pub energy: Option<f64>,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub thin: Option<usize>,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub project_momentum: bool,
}

fn default_mode() -> String {
    "tensor".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    /// Particle-number grid.
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default = "one")]
    pub replicas: usize,
}

impl Default for RunBlock {
    fn default() -> Self {
        RunBlock { n: Vec::new(), times: Vec::new(), replicas: 1 }
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub r_min: f64,
    pub r_max: f64,
    pub radii: usize,
    pub directions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricBlock {
    /// LLN distances: `hneg`, `w1`, `w2_squared`.
    pub distance: Vec<String>,
    /// Negative Sobolev exponents (LLN) or Toscani exponent (first entry,
    /// contraction).
    pub s: Vec<f64>,
    pub ell: Vec<usize>,
    /// Chaos dictionary norm: `fourier`, `lipschitz` or `sup`.
    pub dictionary: String,
    pub bootstrap: usize,
    pub n_ref: usize,
    pub ref_replicas: usize,
    /// Reference sample size as a multiple of N (LLN transport distances).
    pub ref_factor: usize,
    /// Dimension for the kernel-free experiments (mehler, battery).
    pub d: usize,
    /// Points per batch (mehler) or per measure (battery).
    pub points: usize,
    pub batches: usize,
    pub trials: usize,
    /// Support size of each random measure in the battery.
    pub pair_points: usize,
    pub q: f64,
    pub grid: Option<GridBlock>,
}

impl Default for MetricBlock {
    fn default() -> Self {
        MetricBlock {
            distance: vec!["hneg".into()],
            s: Vec::new(),
            ell: vec![1],
            dictionary: "fourier".into(),
            bootstrap: 100,
            n_ref: 10_000,
            ref_replicas: 2,
            ref_factor: 50,
            d: 1,
            points: 2000,
            batches: 20,
            trials: 1000,
            pair_points: 12,
            q: 2.0,
            grid: None,
        }
    }
}

/// Thresholds the report checks fitted slopes against.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceBlock {
    #[serde(default)]
    pub slope_max: Option<f64>,
    #[serde(default)]
    pub slope_min: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Kind,
    /// Master seed; required.
    pub seed: u64,
    /// Output directory, relative to the config file.
    pub output: PathBuf,
    #[serde(default)]
    pub kernel: Option<KernelBlock>,
    #[serde(default)]
    pub initial: Option<InitialBlock>,
    /// Second initial law (contraction only).
    #[serde(default)]
    pub initial_other: Option<InitialBlock>,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub metric: MetricBlock,
    #[serde(default)]
    pub acceptance: AcceptanceBlock,
}

/// Parse TOML text, mapping serde errors to the key they concern.
pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let value: toml::Table = toml::from_str(text).map_err(|e| ConfigError { key: "<file>".into(), message: e.message().to_string() })?;
    for req in ["experiment", "seed", "output"] {
        if !value.contains_key(req) {
            return bad(req, "missing required key");
        }
    }
    toml::from_str::<ExperimentConfig>(text).map_err(|e| {
        let msg = e.message().to_string();
        let key = e.span().and_then(|sp| key_at(text, sp.start)).unwrap_or_else(|| "<file>".into());
        ConfigError { key, message: msg }
    })
}

/// Dotted key of the `key = value` line containing byte offset `pos`.
fn key_at(text: &str, pos: usize) -> Option<String> {
    let line_start = text[..pos.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next()?;
    let key = line.split('=').next()?.trim().trim_matches('"');
    if key.is_empty() || key.starts_with('[') {
        return None;
    }
    let section = text[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && !l.starts_with("[["))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    Some(match section {
        Some(sec) => format!("{sec}.{key}"),
        None => key.to_string(),
    })
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError { key: "<file>".into(), message: format!("{}: {e}", path.display()) })?;
    let cfg = parse(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// SHA-256 of the canonical JSON form (sorted keys, defaults filled in).
    /// The output directory is not part of the content.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().unwrap().remove("output");
        hex::encode(Sha256::digest(canonical_json(&v).as_bytes()))
    }

    pub fn canonical(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let needs_kernel = matches!(self.experiment, Kind::Simulate | Kind::Chaos | Kind::Contraction);
        let needs_initial = matches!(self.experiment, Kind::Simulate | Kind::Lln | Kind::Chaos | Kind::Contraction);
        if needs_kernel {
            let Some(k) = &self.kernel else { return bad("kernel", "missing block") };
            self.kernel_spec_of(k)?;
        }
        if needs_initial {
            if self.initial.is_none() {
                return bad("initial", "missing block");
            }
            self.initial_spec()?;
        }
        let r = &self.run;
        if r.replicas == 0 {
            return bad("run.replicas", "must be positive");
        }
        if !matches!(self.experiment, Kind::Battery | Kind::Contraction) {
            if r.n.is_empty() {
                return bad("run.n", "needs at least one particle number");
            }
            if r.n.iter().any(|&n| n < 2) {
                return bad("run.n", "particle numbers must be >= 2");
            }
        }
        if matches!(self.experiment, Kind::Simulate | Kind::Chaos | Kind::Contraction) {
            if r.times.is_empty() {
                return bad("run.times", "needs at least one snapshot time");
            }
            if r.times.iter().any(|t| !(*t >= 0.0)) || r.times.windows(2).any(|w| w[1] <= w[0]) {
                return bad("run.times", "must be nonnegative and strictly increasing");
            }
        }
        let m = &self.metric;
        match self.experiment {
            Kind::Lln => {
                if m.distance.is_empty() {
                    return bad("metric.distance", "needs at least one distance");
                }
                for d in &m.distance {
                    if !["hneg", "w1", "w2_squared"].contains(&d.as_str()) {
                        return bad("metric.distance", format!("unknown distance `{d}` (expected hneg, w1, w2_squared)"));
                    }
                }
                if m.distance.iter().any(|d| d == "hneg") {
                    let dim = self.dim() as f64;
                    if m.s.is_empty() {
                        return bad("metric.s", "hneg needs at least one exponent");
                    }
                    if let Some(s) = m.s.iter().find(|&&s| !(s > dim / 2.0 && s < dim / 2.0 + 1.0)) {
                        return bad("metric.s", format!("{s} outside ({}, {})", dim / 2.0, dim / 2.0 + 1.0));
                    }
                }
                if self.initial.as_ref().is_some_and(|i| i.mode != "tensor") {
                    return bad("initial.mode", "LLN scans need tensor initial data");
                }
                if m.ref_factor == 0 {
                    return bad("metric.ref_factor", "must be positive");
                }
            }
            Kind::Chaos => {
                if m.ell.is_empty() || m.ell.iter().any(|&l| l == 0) {
                    return bad("metric.ell", "needs positive marginal orders");
                }
                let lmax = *m.ell.iter().max().unwrap();
                if let Some(n) = r.n.iter().find(|&&n| n < 2 * lmax) {
                    return bad("run.n", format!("N = {n} is below 2 * max ell = {}", 2 * lmax));
                }
                if !["fourier", "lipschitz", "sup"].contains(&m.dictionary.as_str()) {
                    return bad("metric.dictionary", format!("unknown dictionary `{}` (expected fourier, lipschitz, sup)", m.dictionary));
                }
                if m.n_ref < 1000 {
                    return bad("metric.n_ref", "reference needs at least 1000 particles");
                }
                if m.ref_replicas == 0 {
                    return bad("metric.ref_replicas", "must be positive");
                }
            }
            Kind::Contraction => {
                if self.initial_other.is_none() {
                    return bad("initial_other", "contraction needs a second initial law");
                }
                self.other_spec()?;
                if self.initial.as_ref().unwrap().mode != "tensor" {
                    return bad("initial.mode", "contraction compares tensor laws");
                }
                if self.initial_other.as_ref().unwrap().mode != "tensor" {
                    return bad("initial_other.mode", "contraction compares tensor laws");
                }
                if self.kernel.as_ref().unwrap().family != "maxwell" {
                    return bad("kernel.family", "contraction is only checked for maxwell");
                }
                if m.n_ref < 1000 {
                    return bad("metric.n_ref", "reference needs at least 1000 particles");
                }
                if m.ref_replicas < 2 || m.ref_replicas % 2 != 0 {
                    return bad("metric.ref_replicas", "needs an even number >= 2 for the noise floor");
                }
            }
            Kind::Mehler => {
                if m.d == 0 || m.ell.len() != 1 || m.ell[0] * m.d > 3 {
                    return bad("metric.ell", "mehler needs a single ell with ell * d <= 3");
                }
                if m.points < 10 || m.batches < 2 {
                    return bad("metric.batches", "mehler needs points >= 10 and batches >= 2");
                }
            }
            Kind::Battery => {
                if !(1..=3).contains(&m.d) {
                    return bad("metric.d", "battery supports d in 1..=3");
                }
                if m.trials == 0 {
                    return bad("metric.trials", "must be positive");
                }
                if m.pair_points == 0 {
                    return bad("metric.pair_points", "must be positive");
                }
                if !(m.q > 1.0) {
                    return bad("metric.q", "must exceed 1");
                }
            }
            Kind::Simulate => {}
        }
        if let Some(g) = &m.grid {
            if !(g.r_min > 0.0 && g.r_max >= g.r_min) {
                return bad("metric.grid.r_min", "need 0 < r_min <= r_max");
            }
            if g.radii == 0 || g.directions == 0 {
                return bad("metric.grid.radii", "radii and directions must be positive");
            }
        }
        Ok(())
    }

    /// Velocity dimension of the experiment.
    pub fn dim(&self) -> usize {
        if let Some(k) = &self.kernel {
            return k.d;
        }
        if let Some(i) = &self.initial {
            if let Some(d) = i.d {
                return d;
            }
            if let Some(m) = i.mean.as_ref().or(i.a.as_ref()) {
                return m.len();
            }
        }
        self.metric.d
    }

    pub fn kernel_spec(&self) -> Result<Kernel, ConfigError> {
        match &self.kernel {
            Some(k) => self.kernel_spec_of(k),
            None => bad("kernel", "missing block"),
        }
    }

    fn kernel_spec_of(&self, k: &KernelBlock) -> Result<Kernel, ConfigError> {
        let potential = match k.family.as_str() {
            "maxwell" => Potential::Maxwell,
            "hard_spheres" => Potential::HardSpheres,
            other => return bad("kernel.family", format!("unknown family `{other}` (expected maxwell, hard_spheres)")),
        };
        if k.d < 2 {
            return bad("kernel.d", format!("must be >= 2, got {}", k.d));
        }
        let law = match k.angular.as_str() {
            "constant" => {
                let b = k.b_const.unwrap_or(1.0 / sphere_area(k.d));
                if !(b > 0.0 && b.is_finite()) {
                    return bad("kernel.b_const", format!("must be positive, got {b}"));
                }
                AngularLaw::GradCutoff { b_const: b }
            }
            "power_law" => {
                let Some(nu) = k.nu else { return bad("kernel.nu", "required for power_law") };
                let Some(eps) = k.eps_cut else { return bad("kernel.eps_cut", "required for power_law") };
                if !(nu > 0.0 && nu < 2.0) {
                    return bad("kernel.nu", format!("must lie in (0, 2), got {nu}"));
                }
                if !(eps > 0.0 && eps < std::f64::consts::PI) {
                    return bad("kernel.eps_cut", format!("must lie in (0, pi), got {eps}"));
                }
                let c_b = k.c_b.unwrap_or(1.0);
                if !(c_b > 0.0) {
                    return bad("kernel.c_b", format!("must be positive, got {c_b}"));
                }
                AngularLaw::PowerLaw { nu, eps_cut: eps, c_b }
            }
            other => return bad("kernel.angular", format!("unknown angular law `{other}` (expected constant, power_law)")),
        };
        Kernel::new(k.d, potential, law).or_else(|e| bad("kernel", e.to_string()))
    }

    pub fn initial_spec(&self) -> Result<InitialDataSpec, ConfigError> {
        initial_of(self.initial.as_ref().unwrap(), "initial", self.dim())
    }

    pub fn other_spec(&self) -> Result<InitialDataSpec, ConfigError> {
        initial_of(self.initial_other.as_ref().unwrap(), "initial_other", self.dim())
    }
}

fn initial_of(b: &InitialBlock, sec: &str, kernel_dim: usize) -> Result<InitialDataSpec, ConfigError> {
    let key = |k: &str| format!("{sec}.{k}");
    let dim = b.d.unwrap_or(kernel_dim);
    if dim == 0 {
        return bad(&key("d"), "must be positive");
    }
    if b.d.is_some_and(|d| d != kernel_dim) {
        return bad(&key("d"), format!("{} disagrees with the experiment dimension {kernel_dim}", b.d.unwrap()));
    }
    let need = |v: Option<f64>, k: &str| v.map_or_else(|| bad(&key(k), format!("required for law `{}`", b.law)), Ok);
    let base = match b.law.as_str() {
        "gaussian" => {
            let theta = b.theta.unwrap_or(1.0);
            if !(theta > 0.0) {
                return bad(&key("theta"), format!("must be positive, got {theta}"));
            }
            let mean = b.mean.clone().unwrap_or_else(|| vec![0.0; dim]);
            if mean.len() != dim {
                return bad(&key("mean"), format!("has length {}, expected {dim}", mean.len()));
            }
            BaseLaw::Gaussian { mean, theta }
        }
        "uniform_ball" | "shell" => {
            let radius = need(b.radius, "radius")?;
            if !(radius > 0.0) {
                return bad(&key("radius"), format!("must be positive, got {radius}"));
            }
            if b.law == "shell" {
                BaseLaw::Shell { dim, radius }
            } else {
                BaseLaw::UniformBall { dim, radius }
            }
        }
        "two_point" => {
            let Some(a) = b.a.clone() else { return bad(&key("a"), "required for law `two_point`") };
            let Some(bb) = b.b.clone() else { return bad(&key("b"), "required for law `two_point`") };
            if a.len() != dim {
                return bad(&key("a"), format!("has length {}, expected {dim}", a.len()));
            }
            if bb.len() != dim {
                return bad(&key("b"), format!("has length {}, expected {dim}", bb.len()));
            }
            BaseLaw::TwoPoint { a, b: bb }
        }
        other => return bad(&key("law"), format!("unknown law `{other}` (expected gaussian, uniform_ball, shell, two_point)")),
    };
    let mode = match b.mode.as_str() {
        "tensor" => InitMode::Tensor,
        "kac_sphere" => InitMode::KacSphere { energy: need(b.energy, "energy")? },
        "conditioned" => InitMode::ConditionedTensor {
            energy: need(b.energy, "energy")?,
            burn_in: b.burn_in.unwrap_or(200),
            thin: b.thin.unwrap_or(5),
            trace: 40,
            step: b.step.unwrap_or(1.0),
        },
        other => return bad(&key("mode"), format!("unknown mode `{other}` (expected tensor, kac_sphere, conditioned)")),
    };
    if let InitMode::KacSphere { energy } | InitMode::ConditionedTensor { energy, .. } = &mode {
        if !(*energy > 0.0) {
            return bad(&key("energy"), format!("must be positive, got {energy}"));
        }
    }
    let spec = InitialDataSpec { base, mode, project_momentum: b.project_momentum };
    spec.validate().or_else(|e| bad(&key("law"), e.to_string()))?;
    Ok(spec)
}

/// Compact JSON with object keys in sorted order.
pub fn canonical_json(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let body: Vec<String> = keys.iter().map(|k| format!("{}:{}", serde_json::Value::String((*k).clone()), canonical_json(&m[*k]))).collect();
            format!("{{{}}}", body.join(","))
        }
        serde_json::Value::Array(a) => format!("[{}]", a.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}
