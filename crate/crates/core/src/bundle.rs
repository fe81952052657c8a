//! Synthesis artifact: gains, witness, the spectral data the simulator needs
//! and provenance, stored as TOML. Matrices are written as `rows`, `cols` and
//! row-major `data`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synthesis::design::{DesignData, DesignMode, SynthesisResult};
use crate::synthesis::lmi::Witness;

pub const FORMAT: &str = "heatctl-bundle/1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BundleError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid<T>(field: impl Into<String>, reason: impl Into<String>) -> Result<T, BundleError> {
    Err(BundleError::Invalid {
        field: field.into(),
        reason: reason.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn check(&self, field: &str, rows: usize, cols: usize) -> Result<(), BundleError> {
        if self.rows != rows || self.cols != cols {
            return invalid(field, format!("expected {rows}x{cols}, got {}x{}", self.rows, self.cols));
        }
        self.check_data(field)
    }

    fn check_data(&self, field: &str) -> Result<(), BundleError> {
        if self.rows.checked_mul(self.cols) != Some(self.data.len()) {
            return invalid(field, format!("{} entries for a {}x{} matrix", self.data.len(), self.rows, self.cols));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return invalid(field, "non-finite entry");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub version: String,
    /// Design hash of the configuration that produced the bundle.
    pub config_hash: String,
    /// Seconds since the Unix epoch.
    pub created: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSummary {
    /// `stability` or `nss`.
    pub mode: String,
    pub sigma_f: f64,
    /// Absent in the noise-to-state mode.
    pub sigma_g: Option<f64>,
    pub closed_loop_abscissa: f64,
    pub observer_abscissa: f64,
    pub min_margin: f64,
    pub epsilon: f64,
    pub iterations: usize,
    /// `[ν, k̄]` of the gain bound imposed during synthesis.
    pub gain_bound: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spectral {
    pub n: usize,
    pub n0: usize,
    pub d: usize,
    pub q: f64,
    pub delta: f64,
    /// Multi-indices of modes `1..=N`.
    pub modes: Vec<Vec<u32>>,
    pub lambdas: Vec<f64>,
    pub lambda_next: f64,
    pub kappa: f64,
    pub psi_tail: f64,
    /// `μ_i` of each actuator.
    pub mu: Vec<f64>,
    pub xi0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    /// `K` (d × (d+N)).
    pub k: Matrix,
    /// `L₀` (N₀ × d).
    pub l0: Matrix,
    /// `B` (N × d).
    pub b: Matrix,
    /// `C` (d × N).
    pub c: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedMatrix {
    pub name: String,
    #[serde(flatten)]
    pub matrix: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bundle {
    pub format: String,
    pub provenance: Provenance,
    pub design: DesignSummary,
    pub spectral: Spectral,
    pub gains: Gains,
    #[serde(default)]
    pub witness: Vec<NamedMatrix>,
}

impl Bundle {
    /// Package a verified synthesis. `modes` and `mu` come from the basis and
    /// the actuators the data was built from.
    pub fn from_synthesis(
        data: &DesignData,
        result: &SynthesisResult,
        modes: Vec<Vec<u32>>,
        mu: Vec<f64>,
        config_hash: String,
        created: u64,
    ) -> Result<Self, BundleError> {
        let k = result.k.as_ref().map_or_else(|| invalid("gains.k", "synthesis produced no gain"), Ok)?;
        let (mode, sigma_f, sigma_g) = match result.mode {
            DesignMode::Stability { sigma_f, sigma_g } => ("stability", sigma_f, Some(sigma_g)),
            DesignMode::Nss { sigma_f } => ("nss", sigma_f, None),
        };
        let witness = result
            .witness
            .names
            .iter()
            .zip(&result.witness.values)
            .map(|(name, m)| NamedMatrix {
                name: name.clone(),
                matrix: Matrix::from_dmatrix(m),
            })
            .collect();
        let bundle = Self {
            format: FORMAT.into(),
            provenance: Provenance {
                version: env!("CARGO_PKG_VERSION").into(),
                config_hash,
                created,
            },
            design: DesignSummary {
                mode: mode.into(),
                sigma_f,
                sigma_g,
                closed_loop_abscissa: result.closed_loop_abscissa.unwrap_or(f64::NAN),
                observer_abscissa: result.observer_abscissa,
                min_margin: result.margins.as_ref().map_or(f64::NAN, |m| m.min_margin()),
                epsilon: result.diagnostics.epsilon,
                iterations: result.diagnostics.iterations,
                gain_bound: result.gain_bound.map(|(nu, k)| [nu, k]),
            },
            spectral: Spectral {
                n: data.n,
                n0: data.n0,
                d: data.d,
                q: data.q,
                delta: data.delta,
                modes,
                lambdas: data.lambdas.clone(),
                lambda_next: data.lambda_next,
                kappa: data.kappa,
                psi_tail: data.psi_tail,
                mu,
                xi0: data.xi0.clone(),
            },
            gains: Gains {
                k: Matrix::from_dmatrix(k),
                l0: Matrix::from_dmatrix(&result.l0),
                b: Matrix::from_dmatrix(&data.b),
                c: Matrix::from_dmatrix(&data.c),
            },
            witness,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("bundle serializes")
    }

    /// Parse and validate.
    pub fn from_toml_str(text: &str) -> Result<Self, BundleError> {
        let b: Bundle = toml::from_str(text).map_err(|e| BundleError::Parse(e.message().to_string()))?;
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), BundleError> {
        if self.format != FORMAT {
            return invalid("format", format!("expected {FORMAT}, got {}", self.format));
        }
        let s = &self.spectral;
        let (n, n0, d) = (s.n, s.n0, s.d);
        if d == 0 || n0 == 0 || n < n0 {
            return invalid("spectral", format!("need 1 <= N0 <= N and d >= 1, got N = {n}, N0 = {n0}, d = {d}"));
        }
        if s.modes.len() != n || s.lambdas.len() != n {
            return invalid("spectral.modes", "one multi-index and one eigenvalue per retained mode");
        }
        let m = s.modes[0].len();
        if m < 2 || s.modes.iter().any(|i| i.len() != m || i.contains(&0)) {
            return invalid("spectral.modes", "multi-indices need a common length >= 2 and entries >= 1");
        }
        if s.mu.len() != d || s.xi0.len() != d {
            return invalid("spectral.mu", "one entry per actuator");
        }
        let scalars = [s.q, s.delta, s.lambda_next, s.kappa, s.psi_tail];
        if scalars.iter().chain(&s.lambdas).chain(&s.mu).chain(&s.xi0).any(|v| !v.is_finite()) {
            return invalid("spectral", "non-finite value");
        }
        if s.lambdas.windows(2).any(|w| w[1] < w[0]) || s.lambda_next < s.lambdas[n - 1] {
            return invalid("spectral.lambdas", "eigenvalues must be nondecreasing");
        }
        let g = &self.gains;
        g.k.check("gains.k", d, d + n)?;
        g.l0.check("gains.l0", n0, d)?;
        g.b.check("gains.b", n, d)?;
        g.c.check("gains.c", d, n)?;
        for w in &self.witness {
            w.matrix.check_data(&format!("witness.{}", w.name))?;
        }
        if self.design.mode != "stability" && self.design.mode != "nss" {
            return invalid("design.mode", format!("unknown mode {}", self.design.mode));
        }
        Ok(())
    }

    pub fn witness(&self) -> Witness {
        Witness {
            names: self.witness.iter().map(|w| w.name.clone()).collect(),
            values: self.witness.iter().map(|w| w.matrix.to_dmatrix()).collect(),
        }
    }

    /// `L = [L₀; 0]` (N × d).
    pub fn observer_gain(&self) -> DMatrix<f64> {
        let s = &self.spectral;
        let mut l = DMatrix::zeros(s.n, s.d);
        l.view_mut((0, 0), (s.n0, s.d)).copy_from(&self.gains.l0.to_dmatrix());
        l
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Bundle {
        let (n, n0, d) = (3, 2, 1);
        Bundle {
            format: FORMAT.into(),
            provenance: Provenance {
                version: "0.1.0".into(),
                config_hash: "abc".into(),
                created: 1,
            },
            design: DesignSummary {
                mode: "nss".into(),
                sigma_f: 0.1,
                sigma_g: None,
                closed_loop_abscissa: -1.0,
                observer_abscissa: -2.0,
                min_margin: 1e-3,
                epsilon: 1e-7,
                iterations: 10,
                gain_bound: Some([0.1, 1e4]),
            },
            spectral: Spectral {
                n,
                n0,
                d,
                q: 1.0,
                delta: 1e-3,
                modes: vec![vec![1, 1], vec![2, 1], vec![1, 2]],
                lambdas: vec![1.0, 2.0, 3.0],
                lambda_next: 4.0,
                kappa: 0.1,
                psi_tail: 0.01,
                mu: vec![5.0],
                xi0: vec![-4.0],
            },
            gains: Gains {
                k: Matrix::from_dmatrix(&DMatrix::from_element(d, d + n, 0.1 + 1.0 / 3.0)),
                l0: Matrix::from_dmatrix(&DMatrix::from_element(n0, d, 2.0)),
                b: Matrix::from_dmatrix(&DMatrix::from_element(n, d, 1e-300)),
                c: Matrix::from_dmatrix(&DMatrix::from_element(d, n, -7.25)),
            },
            witness: vec![NamedMatrix {
                name: "Q1".into(),
                matrix: Matrix::from_dmatrix(&DMatrix::identity(2, 2)),
            }],
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let b = sample();
        let text = b.to_toml_string();
        let back = Bundle::from_toml_str(&text).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.witness().get("Q1").unwrap(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn shape_errors_name_the_field() {
        let mut b = sample();
        b.gains.k.data.pop();
        assert!(matches!(Bundle::from_toml_str(&b.to_toml_string()), Err(BundleError::Invalid { field, .. }) if field == "gains.k"));
        let mut b = sample();
        b.format = "other".into();
        assert!(matches!(b.validate(), Err(BundleError::Invalid { field, .. }) if field == "format"));
        assert!(matches!(Bundle::from_toml_str("format = 3"), Err(BundleError::Parse(_))));
    }

    #[test]
    fn observer_gain_is_padded() {
        let l = sample().observer_gain();
        assert_eq!(l.shape(), (3, 1));
        assert_eq!(l[(2, 0)], 0.0);
        assert_eq!(l[(1, 0)], 2.0);
    }
}
