//! Eigenpairs of the mixed Dirichlet–Neumann Laplacian on a box.
//!
//! The face `x_M = 0` carries the Neumann condition, every other face is
//! Dirichlet. Eigenvalues are
//! `π² [ Σ_{k<M} (n_k/a_k)² + ((n_M − ½)/a_M)² ]` with orthonormal
//! eigenfunctions that are products of sines (tangential) and a cosine
//! (normal direction).

use std::f64::consts::PI;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::profile::FaceProfile;

/// Relative tolerance under which two eigenvalues are treated as equal.
pub const GROUP_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("box dimension must be at least 2, got {0}")]
    Dimension(usize),
    #[error("edge length {index} must be positive and finite, got {value}")]
    Edge { index: usize, value: f64 },
    #[error("insufficient modes: -λ_n + q + δ + σ_f stays nonnegative through all {0} retained modes")]
    InsufficientModes(usize),
    #[error("requested {requested} modes but only {available} are retained")]
    NotRetained { requested: usize, available: usize },
    #[error("sensor {sensor}: {reason}")]
    Sensor { sensor: usize, reason: String },
    #[error("trace coefficient ({sensor}, {mode}) disagrees with quadrature: {analytic} vs {numeric}")]
    Quadrature {
        sensor: usize,
        mode: usize,
        analytic: f64,
        numeric: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    edges: Vec<f64>,
}

impl BoxDomain {
    pub fn new(edges: Vec<f64>) -> Result<Self, SpectralError> {
        if edges.len() < 2 {
            return Err(SpectralError::Dimension(edges.len()));
        }
        for (index, &value) in edges.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(SpectralError::Edge { index, value });
            }
        }
        Ok(Self { edges })
    }

    pub fn dim(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Tangential edges of the actuated face.
    pub fn face_edges(&self) -> &[f64] {
        &self.edges[..self.edges.len() - 1]
    }

    /// Edge length normal to the actuated face.
    pub fn depth(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    pub fn eigenvalue(&self, index: &[u32]) -> f64 {
        let m = self.dim();
        let mut s = 0.0;
        for k in 0..m - 1 {
            let r = index[k] as f64 / self.edges[k];
            s += r * r;
        }
        let r = (index[m - 1] as f64 - 0.5) / self.edges[m - 1];
        PI * PI * (s + r * r)
    }

    pub fn eigenfunction(&self, index: &[u32], x: &[f64]) -> f64 {
        let m = self.dim();
        let mut v = 1.0;
        for k in 0..m - 1 {
            let a = self.edges[k];
            v *= (2.0 / a).sqrt() * (index[k] as f64 * PI * x[k] / a).sin();
        }
        let a = self.edges[m - 1];
        v * (2.0 / a).sqrt() * ((index[m - 1] as f64 - 0.5) * PI * x[m - 1] / a).cos()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub index: Vec<u32>,
    pub lambda: f64,
    /// 1-based position in the nondecreasing ordering.
    pub rank: usize,
}

impl Mode {
    pub fn tangential(&self) -> &[u32] {
        &self.index[..self.index.len() - 1]
    }

    pub fn normal(&self) -> u32 {
        self.index[self.index.len() - 1]
    }
}

fn collect_below(domain: &BoxDomain, cutoff: f64, out: &mut Vec<Vec<u32>>) {
    let m = domain.dim();
    let mut idx = vec![1u32; m];
    fn rec(domain: &BoxDomain, cutoff: f64, k: usize, partial: f64, idx: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        let m = domain.dim();
        let a = domain.edges[k];
        let mut n = 1u32;
        loop {
            let r = if k == m - 1 {
                (n as f64 - 0.5) / a
            } else {
                n as f64 / a
            };
            let s = partial + PI * PI * r * r;
            // remaining axes contribute at least their n = 1 term
            let mut rest = 0.0;
            for j in k + 1..m {
                let r = if j == m - 1 { 0.5 / domain.edges[j] } else { 1.0 / domain.edges[j] };
                rest += PI * PI * r * r;
            }
            if s + rest > cutoff {
                break;
            }
            idx[k] = n;
            if k == m - 1 {
                out.push(idx.clone());
            } else {
                rec(domain, cutoff, k + 1, s, idx, out);
            }
            n += 1;
        }
    }
    rec(domain, cutoff, 0, 0.0, &mut idx, out);
}

/// All modes below `cutoff`, ordered by eigenvalue; numerically equal
/// eigenvalues are snapped to a common value and ordered by descending
/// lexicographic multi-index, so `(2,1)` precedes `(1,2)`.
fn ordered_below(domain: &BoxDomain, cutoff: f64) -> Vec<Mode> {
    let mut idx = Vec::new();
    collect_below(domain, cutoff, &mut idx);
    let mut modes: Vec<(f64, Vec<u32>)> = idx.into_iter().map(|i| (domain.eigenvalue(&i), i)).collect();
    modes.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(&a.1)));
    let mut out: Vec<Mode> = Vec::with_capacity(modes.len());
    let mut start = 0;
    while start < modes.len() {
        let head = modes[start].0;
        let mut end = start + 1;
        while end < modes.len() && modes[end].0 - head <= GROUP_TOL * modes[end].0 {
            end += 1;
        }
        let mut group: Vec<Vec<u32>> = modes[start..end].iter().map(|m| m.1.clone()).collect();
        group.sort_by(|a, b| b.cmp(a));
        let lambda = domain.eigenvalue(&group[0]);
        for index in group {
            out.push(Mode {
                index,
                lambda,
                rank: out.len() + 1,
            });
        }
        start = end;
    }
    out
}

/// First `count + margin` modes in nondecreasing eigenvalue order.
pub fn enumerate_modes(domain: &BoxDomain, count: usize, margin: usize) -> Vec<Mode> {
    let want = count.max(1) + margin;
    let mut cutoff = domain.eigenvalue(&vec![1; domain.dim()]) * 2.0;
    loop {
        let modes = ordered_below(domain, cutoff);
        if modes.len() >= want {
            // every mode with λ ≤ cutoff is present, so the prefix is exact
            let mut modes = modes;
            modes.truncate(want);
            return modes;
        }
        cutoff *= 2.0;
    }
}

/// Number of modes with `-λ_n + q + δ + σ_f ≥ 0` beyond which every mode is
/// stable, clamped to at least one.
pub fn select_unstable_count(modes: &[Mode], q: f64, delta: f64, sigma_f: f64) -> Result<usize, SpectralError> {
    let shift = q + delta + sigma_f;
    let last_unstable = modes.iter().rposition(|m| -m.lambda + shift >= 0.0);
    match last_unstable {
        None => Ok(1),
        Some(p) if p + 1 == modes.len() => Err(SpectralError::InsufficientModes(modes.len())),
        Some(p) => Ok((p + 1).max(1)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Multiplicity {
    /// Sizes `n_1..n_p` of the consecutive equal-eigenvalue runs.
    pub group_sizes: Vec<usize>,
    pub group_lambdas: Vec<f64>,
    /// Largest group size.
    pub d: usize,
}

impl Multiplicity {
    pub fn p(&self) -> usize {
        self.group_sizes.len()
    }

    /// Start offsets of each group within the first `N₀` modes.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.group_sizes
            .iter()
            .map(|&s| {
                let o = acc;
                acc += s;
                o
            })
            .collect()
    }
}

pub fn multiplicity_structure(modes: &[Mode], n0: usize, tol: f64) -> Multiplicity {
    let mut group_sizes = Vec::new();
    let mut group_lambdas = Vec::new();
    let mut i = 0;
    while i < n0.min(modes.len()) {
        let l = modes[i].lambda;
        let mut j = i + 1;
        while j < n0.min(modes.len()) && (modes[j].lambda - l).abs() <= tol * modes[j].lambda.max(l) {
            j += 1;
        }
        group_sizes.push(j - i);
        group_lambdas.push(l);
        i = j;
    }
    let d = group_sizes.iter().copied().max().unwrap_or(0);
    Multiplicity {
        group_sizes,
        group_lambdas,
        d,
    }
}

/// Ordered modes with the design quantities derived from the plant data.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub domain: BoxDomain,
    pub modes: Vec<Mode>,
    pub n0: usize,
    pub multiplicity: Multiplicity,
}

impl SpectralBasis {
    /// Retain the first `n` modes plus the default margin: `10·n` extra
    /// modes, and at least every mode with `λ ≤ 4 λ_{n+1}`.
    pub fn build(domain: BoxDomain, n: usize, q: f64, delta: f64, sigma_f: f64) -> Result<Self, SpectralError> {
        let mut margin = 10 * n.max(1);
        let mut modes = enumerate_modes(&domain, n, margin);
        let cap = 4.0 * modes[n.min(modes.len() - 1)].lambda;
        while modes.last().map(|m| m.lambda <= cap).unwrap_or(false) {
            margin *= 2;
            modes = enumerate_modes(&domain, n, margin);
        }
        Self::from_modes(domain, modes, q, delta, sigma_f)
    }

    pub fn with_margin(domain: BoxDomain, n: usize, margin: usize, q: f64, delta: f64, sigma_f: f64) -> Result<Self, SpectralError> {
        let modes = enumerate_modes(&domain, n, margin);
        Self::from_modes(domain, modes, q, delta, sigma_f)
    }

    fn from_modes(domain: BoxDomain, mut modes: Vec<Mode>, q: f64, delta: f64, sigma_f: f64) -> Result<Self, SpectralError> {
        let mut n0 = select_unstable_count(&modes, q, delta, sigma_f);
        while let Err(SpectralError::InsufficientModes(k)) = n0 {
            modes = enumerate_modes(&domain, k, k);
            n0 = select_unstable_count(&modes, q, delta, sigma_f);
        }
        let n0 = n0?;
        let multiplicity = multiplicity_structure(&modes, n0, GROUP_TOL);
        Ok(Self {
            domain,
            modes,
            n0,
            multiplicity,
        })
    }

    pub fn d(&self) -> usize {
        self.multiplicity.d
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn lambda(&self, rank: usize) -> f64 {
        self.modes[rank - 1].lambda
    }

    pub fn lambdas(&self, n: usize) -> Vec<f64> {
        self.modes[..n].iter().map(|m| m.lambda).collect()
    }

    pub fn ensure(&self, n: usize) -> Result<(), SpectralError> {
        if n > self.modes.len() {
            return Err(SpectralError::NotRetained {
                requested: n,
                available: self.modes.len(),
            });
        }
        Ok(())
    }
}

/// Boundary sensor functions `c_m` on the face `x_M = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSet {
    pub sensors: Vec<FaceProfile>,
}

impl SensorSet {
    pub fn new(sensors: Vec<FaceProfile>, domain: &BoxDomain) -> Result<Self, SpectralError> {
        let edges = domain.face_edges();
        for (sensor, s) in sensors.iter().enumerate() {
            if s.tangential_dim() != edges.len() || s.wavenumbers.len() != edges.len() {
                return Err(SpectralError::Sensor {
                    sensor,
                    reason: format!("expected {} tangential axes", edges.len()),
                });
            }
            for (j, (&w, &a)) in s.windows.iter().zip(edges).enumerate() {
                if !(w > 0.0 && w <= a * (1.0 + 1e-12)) {
                    return Err(SpectralError::Sensor {
                        sensor,
                        reason: format!("window {j} = {w} outside (0, {a}]"),
                    });
                }
            }
            if !s.amplitude.is_finite() {
                return Err(SpectralError::Sensor {
                    sensor,
                    reason: "amplitude is not finite".into(),
                });
            }
        }
        Ok(Self { sensors })
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }
}

/// `⟨c, φ_n⟩_{Γ₁}`: the trace of `φ_n` on the actuated face does not depend on
/// `n_M`, it is `sqrt(2/a_M)` times the tangential face function.
pub fn trace_coefficient(profile: &FaceProfile, domain: &BoxDomain, mode: &Mode) -> f64 {
    (2.0 / domain.depth()).sqrt() * profile.face_overlap(domain.face_edges(), mode.tangential())
}

/// `C` (d × n): entry `(m, n)` is `⟨c_m, φ_n⟩_{Γ₁}`.
pub fn trace_coefficients(sensors: &SensorSet, basis: &SpectralBasis, n: usize) -> Result<DMatrix<f64>, SpectralError> {
    basis.ensure(n)?;
    Ok(DMatrix::from_fn(sensors.len(), n, |m, k| {
        trace_coefficient(&sensors.sensors[m], &basis.domain, &basis.modes[k])
    }))
}

/// Cross-check of [`trace_coefficients`] by separable Simpson quadrature.
pub fn verify_trace_coefficients(sensors: &SensorSet, basis: &SpectralBasis, n: usize, tol: f64) -> Result<(), SpectralError> {
    let c = trace_coefficients(sensors, basis, n)?;
    let scale = (2.0 / basis.domain.depth()).sqrt();
    for (m, s) in sensors.sensors.iter().enumerate() {
        for k in 0..n {
            let numeric = scale * s.face_overlap_quadrature(basis.domain.face_edges(), basis.modes[k].tangential(), 1024);
            let analytic = c[(m, k)];
            if (numeric - analytic).abs() > tol * analytic.abs().max(1.0) {
                return Err(SpectralError::Quadrature {
                    sensor: m,
                    mode: k,
                    analytic,
                    numeric,
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaEstimate {
    /// Certified upper bound on `Σ_m Σ_{n>N} c²_{m,n}/λ_n`.
    pub value: f64,
    /// Sum over retained modes `N+1..=K`.
    pub partial: f64,
    /// Bound on the modes beyond the retained set (zero on the exact path).
    pub remainder: f64,
    /// True when the sum was evaluated in closed form.
    pub exact: bool,
    pub retained: usize,
}

impl KappaEstimate {
    /// The remainder bound exceeds a tenth of the partial sum.
    pub fn tail_dominates(&self) -> bool {
        !self.exact && self.remainder > 0.1 * self.partial
    }
}

/// `Σ_{n ≥ 1} 1/λ` along the normal index for fixed tangential part with
/// `s = Σ (n_k/a_k)²`: `(a²/π²) · π/(2b) · tanh(π b)` with `b = a √s`.
fn normal_series(s: f64, depth: f64) -> f64 {
    let b = depth * s.sqrt();
    depth * depth / (PI * PI) * PI / (2.0 * b) * (PI * b).tanh()
}

/// `κ_N`. Sensors spanning the full face are single face eigenfunctions, and
/// the tail sum reduces to a normal-direction series known in closed form.
/// Otherwise the retained modes are summed and the rest is bounded by
/// `(2/a_M) ‖c_m‖² [ n*/λ_{K+1} + a_M² / (π² (n* − ½)) ]`.
pub fn kappa_n(sensors: &SensorSet, basis: &SpectralBasis, n: usize) -> Result<KappaEstimate, SpectralError> {
    basis.ensure(n + 1)?;
    let domain = &basis.domain;
    let edges = domain.face_edges();
    let depth = domain.depth();
    let k = basis.len();
    if sensors.sensors.iter().all(|s| s.is_full_face(edges)) {
        let mut value = 0.0;
        for s in &sensors.sensors {
            let tangential: Vec<u32> = s.wavenumbers.clone();
            let c_tilde = s.face_overlap(edges, &tangential);
            let weight = 2.0 / depth * c_tilde * c_tilde;
            if weight == 0.0 {
                continue;
            }
            let tsum: f64 = tangential
                .iter()
                .zip(edges)
                .map(|(&t, &a)| (t as f64 / a).powi(2))
                .sum();
            let mut tail = normal_series(tsum, depth);
            for mode in &basis.modes[..n] {
                if mode.tangential() == tangential.as_slice() {
                    tail -= 1.0 / mode.lambda;
                }
            }
            value += weight * tail.max(0.0);
        }
        let partial = trace_tail_partial(sensors, basis, n);
        return Ok(KappaEstimate {
            value,
            partial,
            remainder: 0.0,
            exact: true,
            retained: k,
        });
    }
    let partial = trace_tail_partial(sensors, basis, n);
    let lam = if k > n { basis.modes[k - 1].lambda } else { basis.lambda(n + 1) };
    let n_star = ((depth / PI) * lam.sqrt() + 0.5).floor().max(1.0);
    let per_norm = n_star / lam + depth * depth / (PI * PI * (n_star - 0.5));
    let norms: f64 = sensors.sensors.iter().map(|s| s.norm_sq()).sum();
    let remainder = 2.0 / depth * norms * per_norm;
    Ok(KappaEstimate {
        value: partial + remainder,
        partial,
        remainder,
        exact: false,
        retained: k,
    })
}

fn trace_tail_partial(sensors: &SensorSet, basis: &SpectralBasis, n: usize) -> f64 {
    let mut partial = 0.0;
    for mode in &basis.modes[n..] {
        for s in &sensors.sensors {
            let c = trace_coefficient(s, &basis.domain, mode);
            partial += c * c / mode.lambda;
        }
    }
    partial
}
