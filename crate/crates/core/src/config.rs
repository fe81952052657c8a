//! Run configuration: a TOML file with `domain`, `plant`, `actuators`,
//! `sensors`, `design` and `simulation` sections. Every field is optional;
//! missing fields take the two-dimensional windowed-actuator experiment
//! values.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::simulator::grid::Grid;
use crate::spectral::BoxDomain;
use crate::synthesis::sweep::{table1_queries, table2_queries, Bracket, SigmaQuery};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted path of the offending field, e.g. `actuators[1].windows[0]`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(path: impl Into<String>, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        path: path.into(),
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub plant: PlantConfig,
    pub actuators: Vec<ActuatorConfig>,
    pub sensors: Vec<SensorConfig>,
    pub design: DesignConfig,
    pub simulation: SimulationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    /// `a_1 .. a_M`; the actuated face is `x_M = 0`.
    pub edges: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityKind {
    /// `f = σ_f sin z`.
    Sin,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `g = σ_g sin z`.
    Multiplicative,
    /// `g ≡ 1`, `Σ ≡ additive_sigma`.
    Additive,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    pub q: f64,
    pub delta: f64,
    pub sigma_f: f64,
    pub sigma_g: f64,
    pub nonlinearity: NonlinearityKind,
    pub noise: NoiseKind,
    pub additive_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorConfig {
    pub amplitude: f64,
    /// `a*_1 .. a*_{M-1}`.
    pub windows: Vec<f64>,
    pub wavenumbers: Vec<u32>,
    /// `a*_M`.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub amplitude: f64,
    pub windows: Vec<f64>,
    pub wavenumbers: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Stability,
    Nss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Table1,
    Table2,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QueryConfig {
    SigmaG { sigma_f: f64 },
    SigmaF { sigma_g: f64 },
    SigmaFNss,
}

impl From<QueryConfig> for SigmaQuery {
    fn from(q: QueryConfig) -> Self {
        match q {
            QueryConfig::SigmaG { sigma_f } => SigmaQuery::SigmaG { sigma_f },
            QueryConfig::SigmaF { sigma_g } => SigmaQuery::SigmaF { sigma_g },
            QueryConfig::SigmaFNss => SigmaQuery::SigmaFNss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    /// Observer size `N`.
    pub n: usize,
    pub mode: ModeKind,
    /// Fixed `L₀` (N₀ rows, d columns); synthesized when absent.
    pub observer_gain: Option<Vec<Vec<f64>>>,
    pub n_list: Vec<usize>,
    pub sweep: SweepKind,
    /// Used when `sweep = "custom"`.
    pub queries: Vec<QueryConfig>,
    /// Bisection interval `[lo, hi]`.
    pub bracket: [f64; 2],
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Polynomial,
    Mode,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    /// Advance `w = z − ψᵀu` with homogeneous boundary data.
    Lifted,
    /// Advance `z` with the actuation as a Neumann flux.
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub dt: f64,
    /// One spacing for every axis, or one per axis.
    pub h: Vec<f64>,
    pub horizon: f64,
    /// Record every `stride` steps.
    pub stride: usize,
    pub plant: PlantKind,
    pub paths: usize,
    pub seed: u64,
    pub initial: InitialKind,
    /// Multi-index used when `initial = "mode"`.
    pub initial_mode: Vec<u32>,
    /// Apply the synthesized feedback; `false` runs the plant open loop.
    pub control: bool,
}

/// Reference `L₀` for the two-dimensional experiment.
pub fn l0_2d() -> Vec<Vec<f64>> {
    vec![vec![55.0284, 0.0], vec![0.0, 15.0583], vec![-2.4175, 0.0]]
}

/// Reference `L₀` for the three-dimensional experiment.
pub fn l0_3d() -> Vec<Vec<f64>> {
    vec![
        vec![62.4643, 0.0, 0.0],
        vec![0.0, 6.7736, 0.0],
        vec![0.0, 0.0, 6.7736],
        vec![-2.5743, 0.0, 0.0],
    ]
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            edges: vec![1.5f64.sqrt(), 1.0],
        }
    }
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            q: 28.8,
            delta: 1e-3,
            sigma_f: 0.33,
            sigma_g: 0.05,
            nonlinearity: NonlinearityKind::Sin,
            noise: NoiseKind::Multiplicative,
            additive_sigma: 1.0,
        }
    }
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            n: 9,
            mode: ModeKind::Stability,
            observer_gain: Some(l0_2d()),
            n_list: vec![9, 11, 13, 15, 17, 19],
            sweep: SweepKind::Table1,
            queries: Vec::new(),
            bracket: [1e-4, 2.0],
            tol: 5e-3,
        }
    }
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: 5e-5,
            h: vec![0.02],
            horizon: 1.0,
            stride: 100,
            plant: PlantKind::Lifted,
            paths: 20,
            seed: 2024,
            initial: InitialKind::Polynomial,
            initial_mode: Vec::new(),
            control: true,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let a1 = 1.5f64.sqrt();
        let w1 = 0.8 * a1;
        let s = 1.0 / a1.sqrt();
        Self {
            domain: DomainConfig::default(),
            plant: PlantConfig::default(),
            actuators: vec![
                ActuatorConfig {
                    amplitude: 1.0 / (w1 * 0.8).sqrt(),
                    windows: vec![w1],
                    wavenumbers: vec![1],
                    depth: 0.8,
                },
                ActuatorConfig {
                    amplitude: 1.2 / w1.sqrt(),
                    windows: vec![w1],
                    wavenumbers: vec![2],
                    depth: 1.0,
                },
            ],
            sensors: vec![
                SensorConfig {
                    amplitude: s,
                    windows: vec![a1],
                    wavenumbers: vec![1],
                },
                SensorConfig {
                    amplitude: 0.1 * s,
                    windows: vec![a1],
                    wavenumbers: vec![2],
                },
            ],
            design: DesignConfig::default(),
            simulation: SimulationConfig::default(),
        }
    }
}

fn finite(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        err(path, format!("must be finite, got {v}"))
    }
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        err(path, format!("must be positive and finite, got {v}"))
    }
}

fn nonnegative(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        err(path, format!("must be nonnegative and finite, got {v}"))
    }
}

fn check_face(path: &str, windows: &[f64], wavenumbers: &[u32], face: &[f64]) -> Result<(), ConfigError> {
    if windows.len() != face.len() {
        return err(format!("{path}.windows"), format!("expected {} entries, got {}", face.len(), windows.len()));
    }
    if wavenumbers.len() != face.len() {
        return err(
            format!("{path}.wavenumbers"),
            format!("expected {} entries, got {}", face.len(), wavenumbers.len()),
        );
    }
    for (j, (&w, &a)) in windows.iter().zip(face).enumerate() {
        if !(w.is_finite() && w > 0.0 && w <= a * (1.0 + 1e-12)) {
            return err(format!("{path}.windows[{j}]"), format!("must lie in (0, {a}], got {w}"));
        }
    }
    for (j, &k) in wavenumbers.iter().enumerate() {
        if k == 0 {
            return err(format!("{path}.wavenumbers[{j}]"), "must be at least 1");
        }
    }
    Ok(())
}

impl RunConfig {
    /// Parse and validate.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError {
            path: "<toml>".into(),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let edges = &self.domain.edges;
        if edges.len() < 2 {
            return err("domain.edges", format!("need at least 2 edges, got {}", edges.len()));
        }
        for (k, &a) in edges.iter().enumerate() {
            positive(&format!("domain.edges[{k}]"), a)?;
        }
        let m = edges.len();
        let face = &edges[..m - 1];
        let depth = edges[m - 1];

        let p = &self.plant;
        finite("plant.q", p.q)?;
        positive("plant.delta", p.delta)?;
        nonnegative("plant.sigma_f", p.sigma_f)?;
        nonnegative("plant.sigma_g", p.sigma_g)?;
        nonnegative("plant.additive_sigma", p.additive_sigma)?;

        if self.actuators.is_empty() {
            return err("actuators", "at least one actuator is required");
        }
        for (i, a) in self.actuators.iter().enumerate() {
            let path = format!("actuators[{i}]");
            finite(&format!("{path}.amplitude"), a.amplitude)?;
            check_face(&path, &a.windows, &a.wavenumbers, face)?;
            if !(a.depth.is_finite() && a.depth > 0.0 && a.depth <= depth * (1.0 + 1e-12)) {
                return err(format!("{path}.depth"), format!("must lie in (0, {depth}], got {}", a.depth));
            }
        }
        if self.sensors.len() != self.actuators.len() {
            return err(
                "sensors",
                format!("expected {} sensors (one per actuator), got {}", self.actuators.len(), self.sensors.len()),
            );
        }
        for (i, s) in self.sensors.iter().enumerate() {
            let path = format!("sensors[{i}]");
            finite(&format!("{path}.amplitude"), s.amplitude)?;
            check_face(&path, &s.windows, &s.wavenumbers, face)?;
        }

        let d = &self.design;
        if d.n == 0 {
            return err("design.n", "must be at least 1");
        }
        if let Some(l0) = &d.observer_gain {
            if l0.is_empty() {
                return err("design.observer_gain", "must have at least one row");
            }
            for (r, row) in l0.iter().enumerate() {
                if row.len() != self.actuators.len() {
                    return err(
                        format!("design.observer_gain[{r}]"),
                        format!("expected {} columns, got {}", self.actuators.len(), row.len()),
                    );
                }
                for (c, &v) in row.iter().enumerate() {
                    finite(&format!("design.observer_gain[{r}][{c}]"), v)?;
                }
            }
        }
        if d.n_list.is_empty() {
            return err("design.n_list", "must not be empty");
        }
        for (i, &n) in d.n_list.iter().enumerate() {
            if n == 0 {
                return err(format!("design.n_list[{i}]"), "must be at least 1");
            }
        }
        let [lo, hi] = d.bracket;
        nonnegative("design.bracket[0]", lo)?;
        positive("design.bracket[1]", hi)?;
        if lo >= hi {
            return err("design.bracket", format!("lower end {lo} must be below upper end {hi}"));
        }
        positive("design.tol", d.tol)?;
        if d.sweep == SweepKind::Custom && d.queries.is_empty() {
            return err("design.queries", "custom sweeps need at least one query");
        }
        for (i, q) in d.queries.iter().enumerate() {
            match *q {
                QueryConfig::SigmaG { sigma_f: v } => nonnegative(&format!("design.queries[{i}].sigma_f"), v)?,
                QueryConfig::SigmaF { sigma_g: v } => nonnegative(&format!("design.queries[{i}].sigma_g"), v)?,
                QueryConfig::SigmaFNss => {}
            }
        }

        let s = &self.simulation;
        positive("simulation.dt", s.dt)?;
        positive("simulation.horizon", s.horizon)?;
        if s.h.is_empty() || (s.h.len() != 1 && s.h.len() != m) {
            return err("simulation.h", format!("expected 1 or {m} entries, got {}", s.h.len()));
        }
        for (k, &h) in s.h.iter().enumerate() {
            positive(&format!("simulation.h[{k}]"), h)?;
        }
        if s.stride == 0 {
            return err("simulation.stride", "must be at least 1");
        }
        if s.paths == 0 {
            return err("simulation.paths", "must be at least 1");
        }
        if s.initial == InitialKind::Mode {
            if s.initial_mode.len() != m {
                return err("simulation.initial_mode", format!("expected {m} entries, got {}", s.initial_mode.len()));
            }
            if s.initial_mode.contains(&0) {
                return err("simulation.initial_mode", "entries must be at least 1");
            }
        }
        let domain = self.domain()?;
        let grid = Grid::new(&domain, &s.h).map_err(|e| ConfigError {
            path: "simulation.h".into(),
            message: e.to_string(),
        })?;
        let cfl = grid.cfl(s.dt);
        if cfl > 1.0 {
            return err("simulation.dt", format!("CFL number {cfl:.4} exceeds 1"));
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<BoxDomain, ConfigError> {
        BoxDomain::new(self.domain.edges.clone()).map_err(|e| ConfigError {
            path: "domain.edges".into(),
            message: e.to_string(),
        })
    }

    pub fn queries(&self) -> Vec<SigmaQuery> {
        self.queries_for(self.design.sweep)
    }

    pub fn queries_for(&self, kind: SweepKind) -> Vec<SigmaQuery> {
        match kind {
            SweepKind::Table1 => table1_queries(),
            SweepKind::Table2 => table2_queries(),
            SweepKind::Custom => self.design.queries.iter().map(|&q| q.into()).collect(),
        }
    }

    pub fn bracket(&self) -> Bracket {
        Bracket {
            lo: self.design.bracket[0],
            hi: self.design.bracket[1],
            tol: self.design.tol,
        }
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex_digest(self.to_toml_string().as_bytes())
    }

    /// SHA-256 over everything the synthesis reads; the simulation section
    /// and the simulated nonlinearity and noise are left out.
    pub fn design_hash(&self) -> String {
        let mut c = self.clone();
        let plant = PlantConfig::default();
        c.simulation = SimulationConfig::default();
        c.plant.nonlinearity = plant.nonlinearity;
        c.plant.noise = plant.noise;
        c.plant.additive_sigma = plant.additive_sigma;
        c.hash()
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn round_trip_is_exact() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn errors_carry_field_paths() {
        let e = RunConfig::from_toml_str("[domain]\nedges = [-1.0, 1.0]").unwrap_err();
        assert_eq!(e.path, "domain.edges[0]");
        let e = RunConfig::from_toml_str("[[actuators]]\namplitude = 1.0\nwindows = [5.0]\nwavenumbers = [1]\ndepth = 1.0").unwrap_err();
        assert_eq!(e.path, "actuators[0].windows[0]");
        let e = RunConfig::from_toml_str("[design]\nn_list = []").unwrap_err();
        assert_eq!(e.path, "design.n_list");
        let e = RunConfig::from_toml_str("[simulation]\ndt = 1e-3").unwrap_err();
        assert_eq!(e.path, "simulation.dt");
        let e = RunConfig::from_toml_str("[plant]\nbogus = 1").unwrap_err();
        assert_eq!(e.path, "<toml>");
    }

    #[test]
    fn custom_queries_parse() {
        let text = "[design]\nsweep = \"custom\"\nqueries = [{ kind = \"sigma_g\", sigma_f = 0.2 }, { kind = \"sigma_f_nss\" }]";
        let c = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(c.queries(), vec![SigmaQuery::SigmaG { sigma_f: 0.2 }, SigmaQuery::SigmaFNss]);
    }

    #[test]
    fn design_hash_ignores_simulation() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.simulation.paths = 3;
        assert_eq!(a.design_hash(), b.design_hash());
        assert_ne!(a.hash(), b.hash());
    }
}
