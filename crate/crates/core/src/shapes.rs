//! Actuator shape functions on the face `x_M = 0`, their lifted companions
//! `ψ_i`, and the matrices they induce in the modal design.
//!
//! Each actuator is a windowed product-sine `b_i` on the face together with a
//! depth `a*_M`. The lifting function is
//! `ψ_i(x) = −(a*_M/π) b_i(x̄) sin(π x_M / a*_M)` on the sub-box
//! `Π [0, a*_j] × [0, a*_M]` and zero elsewhere, which solves
//! `Δψ_i = −μ_i ψ_i` there with `∂ψ_i/∂ν = b_i` on the face window.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::profile::{int_sin_cos, int_sin_sin, simpson, FaceProfile};
use crate::spectral::{kappa_n, trace_coefficients, KappaEstimate, SensorSet, SpectralBasis, SpectralError};

/// Relative distance to the spectrum below which `μ` counts as resonant.
pub const RESONANCE_TOL: f64 = 1e-6;
/// Negative Parseval tails above this are clamped to zero.
pub const TAIL_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("actuator {actuator}: {reason}")]
    Invalid { actuator: usize, reason: String },
    #[error("actuator {actuator}: resonant μ = {mu} (closest eigenvalue {lambda})")]
    Resonant { actuator: usize, mu: f64, lambda: f64 },
    #[error("load entry ({mode}, {actuator}) disagrees with quadrature: {analytic} vs {numeric}")]
    Quadrature {
        mode: usize,
        actuator: usize,
        analytic: f64,
        numeric: f64,
    },
    #[error("negative tail norm {0}: basis and actuators are inconsistent")]
    NegativeTail(f64),
    #[error("expected {expected} actuators and sensors, got {actuators} and {sensors}")]
    Count {
        expected: usize,
        actuators: usize,
        sensors: usize,
    },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Actuator {
    pub shape: FaceProfile,
    /// Extent `a*_M` of the lifting sub-box in the normal direction.
    pub depth: f64,
    pub mu: f64,
}

/// Build an actuator and reject `μ` too close to any retained eigenvalue.
pub fn make_actuator(index: usize, shape: FaceProfile, depth: f64, basis: &SpectralBasis) -> Result<Actuator, ShapeError> {
    let domain = &basis.domain;
    let edges = domain.face_edges();
    let invalid = |reason: String| ShapeError::Invalid { actuator: index, reason };
    if shape.windows.len() != edges.len() || shape.wavenumbers.len() != edges.len() {
        return Err(invalid(format!("expected {} tangential axes", edges.len())));
    }
    for (j, (&w, &a)) in shape.windows.iter().zip(edges).enumerate() {
        if !(w > 0.0 && w <= a * (1.0 + 1e-12)) {
            return Err(invalid(format!("window {j} = {w} outside (0, {a}]")));
        }
    }
    if shape.wavenumbers.iter().any(|&k| k == 0) {
        return Err(invalid("wavenumbers must be positive".into()));
    }
    if !(depth > 0.0 && depth <= domain.depth() * (1.0 + 1e-12)) {
        return Err(invalid(format!("depth {depth} outside (0, {}]", domain.depth())));
    }
    let mut s = 1.0 / (depth * depth);
    for j in 0..edges.len() {
        let r = shape.wavenumbers[j] as f64 / shape.windows[j];
        s += r * r;
    }
    let mu = PI * PI * s;
    if let Some(closest) = basis
        .modes
        .iter()
        .min_by(|a, b| ((a.lambda - mu).abs() / a.lambda).total_cmp(&((b.lambda - mu).abs() / b.lambda)))
    {
        if (closest.lambda - mu).abs() / closest.lambda < RESONANCE_TOL {
            return Err(ShapeError::Resonant {
                actuator: index,
                mu,
                lambda: closest.lambda,
            });
        }
    }
    Ok(Actuator { shape, depth, mu })
}

impl Actuator {
    /// Boundary profile `b(x̄)`.
    pub fn boundary(&self, xt: &[f64]) -> f64 {
        self.shape.value(xt)
    }

    /// Lifting function `ψ(x)`.
    pub fn psi(&self, x: &[f64]) -> f64 {
        let m = x.len();
        let xm = x[m - 1];
        if !(0.0..=self.depth).contains(&xm) {
            return 0.0;
        }
        -(self.depth / PI) * self.shape.value(&x[..m - 1]) * (PI * xm / self.depth).sin()
    }

    /// `−∂ψ/∂x_M` at the face, which equals `b` by construction.
    pub fn normal_flux(&self, xt: &[f64]) -> f64 {
        (self.depth / PI) * self.shape.value(xt) * (PI / self.depth)
    }

    /// `∫₀^{a*} sin(π x/a*) · sqrt(2/a_M) cos((n_M − ½) π x / a_M) dx`
    fn normal_overlap(&self, depth_total: f64, n_m: u32) -> f64 {
        let beta = (n_m as f64 - 0.5) * PI / depth_total;
        (2.0 / depth_total).sqrt() * int_sin_cos(PI / self.depth, beta, self.depth)
    }

    /// `⟨−ψ, φ_n⟩` in closed form.
    pub fn load(&self, basis: &SpectralBasis, rank: usize) -> f64 {
        let mode = &basis.modes[rank - 1];
        let domain = &basis.domain;
        (self.depth / PI)
            * self.shape.face_overlap(domain.face_edges(), mode.tangential())
            * self.normal_overlap(domain.depth(), mode.normal())
    }

    /// `⟨−ψ, φ_n⟩` by separable Simpson quadrature.
    pub fn load_quadrature(&self, basis: &SpectralBasis, rank: usize, panels: usize) -> f64 {
        let mode = &basis.modes[rank - 1];
        let domain = &basis.domain;
        let a = domain.depth();
        let beta = (mode.normal() as f64 - 0.5) * PI / a;
        let w = PI / self.depth;
        let normal = (2.0 / a).sqrt() * simpson(|x| (w * x).sin() * (beta * x).cos(), 0.0, self.depth, panels);
        (self.depth / PI) * self.shape.face_overlap_quadrature(domain.face_edges(), mode.tangential(), panels) * normal
    }

    pub fn inner(&self, other: &Actuator) -> f64 {
        let l = self.depth.min(other.depth);
        (self.depth / PI) * (other.depth / PI) * self.shape.inner(&other.shape) * int_sin_sin(PI / self.depth, PI / other.depth, l)
    }
}

/// `B` (n × d) with entries `⟨−ψ_i, φ_n⟩`.
pub fn load_vectors(actuators: &[Actuator], basis: &SpectralBasis, n: usize) -> Result<DMatrix<f64>, ShapeError> {
    basis.ensure(n)?;
    Ok(DMatrix::from_fn(n, actuators.len(), |k, i| actuators[i].load(basis, k + 1)))
}

/// Compare every closed-form load entry against quadrature.
pub fn verify_load_vectors(actuators: &[Actuator], basis: &SpectralBasis, b: &DMatrix<f64>, tol: f64) -> Result<(), ShapeError> {
    for k in 0..b.nrows() {
        for (i, act) in actuators.iter().enumerate() {
            let numeric = act.load_quadrature(basis, k + 1, 1024);
            let analytic = b[(k, i)];
            if (numeric - analytic).abs() > tol * analytic.abs().max(1.0) {
                return Err(ShapeError::Quadrature {
                    mode: k + 1,
                    actuator: i,
                    analytic,
                    numeric,
                });
            }
        }
    }
    Ok(())
}

/// Gram matrix `Ψ_ij = ⟨ψ_i, ψ_j⟩` and the Parseval tail `‖ψ‖²_N = tr Ψ − Σ_{n≤N} |b_n|²`.
pub fn gram_and_tail(actuators: &[Actuator], b: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64), ShapeError> {
    let d = actuators.len();
    let gram = DMatrix::from_fn(d, d, |i, j| actuators[i].inner(&actuators[j]));
    let tail = gram.trace() - b.iter().map(|v| v * v).sum::<f64>();
    if tail < 0.0 {
        if tail < -TAIL_CLAMP {
            return Err(ShapeError::NegativeTail(tail));
        }
        return Ok((gram, 0.0));
    }
    Ok((gram, tail))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankFailure {
    Load,
    Trace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRank {
    pub group: usize,
    pub size: usize,
    pub trace_rank: usize,
    pub load_rank: usize,
}

impl GroupRank {
    pub fn failure(&self) -> Option<RankFailure> {
        if self.trace_rank != self.size {
            Some(RankFailure::Trace)
        } else if self.load_rank != self.size {
            Some(RankFailure::Load)
        } else {
            None
        }
    }
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let largest = sv.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-8 * largest).count()
}

/// Rank of every per-group block `C_j` (d × n_j) and `B_j` (n_j × d).
pub fn check_rank_conditions(b0: &DMatrix<f64>, c0: &DMatrix<f64>, group_sizes: &[usize]) -> Vec<GroupRank> {
    let mut offset = 0;
    let mut out = Vec::with_capacity(group_sizes.len());
    for (group, &size) in group_sizes.iter().enumerate() {
        let cj = c0.columns(offset, size).into_owned();
        let bj = b0.rows(offset, size).into_owned();
        out.push(GroupRank {
            group,
            size,
            trace_rank: numerical_rank(&cj),
            load_rank: numerical_rank(&bj),
        });
        offset += size;
    }
    out
}

/// First failing group, if any.
pub fn first_rank_failure(ranks: &[GroupRank]) -> Option<(usize, RankFailure)> {
    ranks.iter().find_map(|g| g.failure().map(|f| (g.group, f)))
}

/// Everything the design needs from actuation and sensing at observer size `N`.
#[derive(Debug, Clone)]
pub struct ActuationSensing {
    pub actuators: Vec<Actuator>,
    pub sensors: SensorSet,
    pub n: usize,
    /// `B` (N × d).
    pub b: DMatrix<f64>,
    /// `Ψ` (d × d).
    pub gram: DMatrix<f64>,
    /// `‖ψ‖²_N`.
    pub psi_tail: f64,
    /// `C` (d × N).
    pub c: DMatrix<f64>,
    pub kappa: KappaEstimate,
    /// Diagonal of `Ξ₀ = diag(−μ_i + q)`.
    pub xi0: Vec<f64>,
}

impl ActuationSensing {
    pub fn build(
        shapes: Vec<(FaceProfile, f64)>,
        sensors: SensorSet,
        basis: &SpectralBasis,
        n: usize,
        q: f64,
    ) -> Result<Self, ShapeError> {
        if shapes.len() != sensors.len() || shapes.is_empty() {
            return Err(ShapeError::Count {
                expected: basis.d(),
                actuators: shapes.len(),
                sensors: sensors.len(),
            });
        }
        let actuators = shapes
            .into_iter()
            .enumerate()
            .map(|(i, (shape, depth))| make_actuator(i, shape, depth, basis))
            .collect::<Result<Vec<_>, _>>()?;
        let b = load_vectors(&actuators, basis, n)?;
        verify_load_vectors(&actuators, basis, &b, 1e-8)?;
        crate::spectral::verify_trace_coefficients(&sensors, basis, n, 1e-8)?;
        let (gram, psi_tail) = gram_and_tail(&actuators, &b)?;
        let c = trace_coefficients(&sensors, basis, n)?;
        let kappa = kappa_n(&sensors, basis, n)?;
        let xi0 = actuators.iter().map(|a| -a.mu + q).collect();
        Ok(Self {
            actuators,
            sensors,
            n,
            b,
            gram,
            psi_tail,
            c,
            kappa,
            xi0,
        })
    }

    pub fn d(&self) -> usize {
        self.actuators.len()
    }

    pub fn b0(&self, n0: usize) -> DMatrix<f64> {
        self.b.rows(0, n0).into_owned()
    }

    pub fn c0(&self, n0: usize) -> DMatrix<f64> {
        self.c.columns(0, n0).into_owned()
    }

    /// `Λ₂ = [[Ψ, −Bᵀ], [−B, I_N]]`.
    pub fn lambda2(&self) -> DMatrix<f64> {
        let d = self.d();
        let n = self.n;
        let mut m = DMatrix::zeros(n + d, n + d);
        m.view_mut((0, 0), (d, d)).copy_from(&self.gram);
        m.view_mut((0, d), (d, n)).copy_from(&(-self.b.transpose()));
        m.view_mut((d, 0), (n, d)).copy_from(&(-&self.b));
        for k in 0..n {
            m[(d + k, d + k)] = 1.0;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::BoxDomain;

    fn basis_2d(n: usize) -> SpectralBasis {
        let domain = BoxDomain::new(vec![1.5f64.sqrt(), 1.0]).unwrap();
        SpectralBasis::build(domain, n, 28.8, 1e-3, 0.1).unwrap()
    }

    fn windowed_b1(a1: f64, a2: f64) -> (FaceProfile, f64) {
        let (w1, w2) = (0.8 * a1, 0.8 * a2);
        (FaceProfile::new(1.0 / (w1 * w2).sqrt(), vec![w1], vec![1]), w2)
    }

    #[test]
    fn windowed_mu_closed_form() {
        let basis = basis_2d(9);
        let a1 = 1.5f64.sqrt();
        let (shape, depth) = windowed_b1(a1, 1.0);
        let act = make_actuator(0, shape, depth, &basis).unwrap();
        assert!((act.mu - PI * PI * (1.0 / 0.96 + 1.0 / 0.64)).abs() < 1e-12);
        assert!((act.mu - 25.702).abs() < 1e-3);
    }

    #[test]
    fn full_window_mu_and_flux() {
        let basis = basis_2d(9);
        let a1 = 1.5f64.sqrt();
        let shape = FaceProfile::new(1.2 / a1.sqrt(), vec![a1], vec![2]);
        let act = make_actuator(1, shape, 1.0, &basis).unwrap();
        assert!((act.mu - PI * PI * (4.0 / 1.5 + 1.0)).abs() < 1e-12);
        for x in [0.1, 0.5, 1.0] {
            assert!((act.normal_flux(&[x]) - act.boundary(&[x])).abs() < 1e-14);
            let h = 1e-6;
            let fd = -(act.psi(&[x, h]) - act.psi(&[x, 0.0])) / h;
            assert!((fd - act.boundary(&[x])).abs() < 1e-5);
        }
    }

    #[test]
    fn resonance_is_rejected() {
        let basis = basis_2d(9);
        // μ = π²(1/a₁² + 1/a*²) equals λ₁ when a* = 2 a_M
        let a1 = 1.5f64.sqrt();
        let shape = FaceProfile::new(1.0, vec![a1], vec![1]);
        let err = make_actuator(0, shape, 2.0, &basis).unwrap_err();
        assert!(matches!(err, ShapeError::Invalid { .. }));
        // a depth inside the box that hits λ for the (1,2) mode: (1/a*)² = (1.5)²
        let shape = FaceProfile::new(1.0, vec![a1], vec![1]);
        let err = make_actuator(0, shape, 1.0 / 1.5, &basis).unwrap_err();
        assert!(matches!(err, ShapeError::Resonant { .. }));
    }

    #[test]
    fn eigen_shape_is_orthogonal_to_other_tangential_modes() {
        let basis = basis_2d(9);
        let a1 = 1.5f64.sqrt();
        let shape = FaceProfile::new(1.2 / a1.sqrt(), vec![a1], vec![2]);
        let act = make_actuator(1, shape, 1.0, &basis).unwrap();
        for mode in &basis.modes[..30] {
            if mode.index[0] == 1 {
                assert!(act.load(&basis, mode.rank).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn windowed_psi_norm() {
        let basis = basis_2d(9);
        let a1 = 1.5f64.sqrt();
        let (shape, depth) = windowed_b1(a1, 1.0);
        let act = make_actuator(0, shape, depth, &basis).unwrap();
        let norm = act.inner(&act);
        assert!((norm - 0.64 / (PI * PI) / 4.0).abs() < 1e-12);
        assert!((norm - 0.016211).abs() < 1e-6);
    }

    #[test]
    fn disjoint_windows_give_diagonal_gram() {
        let basis = basis_2d(9);
        let a1 = 1.5f64.sqrt();
        let a = make_actuator(0, FaceProfile::new(1.0, vec![a1], vec![1]), 0.3, &basis).unwrap();
        // second actuator lives in the same face window but a disjoint depth
        // slab cannot be expressed; use orthogonal tangential wavenumbers instead
        let b = make_actuator(1, FaceProfile::new(1.0, vec![a1], vec![2]), 0.3, &basis).unwrap();
        let (gram, _) = gram_and_tail(&[a.clone(), b.clone()], &DMatrix::zeros(0, 2)).unwrap();
        assert!(gram[(0, 1)].abs() < 1e-14);
        assert!(gram[(0, 0)] > 0.0 && gram[(1, 1)] > 0.0);
    }

    #[test]
    fn parseval_tail_decreases() {
        let basis = basis_2d(40);
        let a1 = 1.5f64.sqrt();
        let (s1, d1) = windowed_b1(a1, 1.0);
        let acts = vec![make_actuator(0, s1, d1, &basis).unwrap()];
        let mut prev = f64::INFINITY;
        for n in [1, 5, 9, 20, 40, 200] {
            let b = load_vectors(&acts, &basis, n).unwrap();
            let (_, tail) = gram_and_tail(&acts, &b).unwrap();
            assert!(tail >= 0.0 && tail <= prev + 1e-15);
            prev = tail;
        }
        assert!(prev < 1e-3 * acts[0].inner(&acts[0]));
    }

    #[test]
    fn rank_condition_detects_zero_sensor_row() {
        let b0 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.2]);
        let c0 = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let ranks = check_rank_conditions(&b0, &c0, &[1, 2]);
        assert_eq!(first_rank_failure(&ranks), Some((1, RankFailure::Trace)));
        let c0 = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 0.1, 0.0]);
        assert_eq!(first_rank_failure(&check_rank_conditions(&b0, &c0, &[1, 2])), None);
    }
}
