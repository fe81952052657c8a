//! Design data for the finite-dimensional observer-based controller and the
//! matrix inequalities that certify it.

use nalgebra::DMatrix;
use thiserror::Error;

use super::lmi::{constraint_margins, LmiBuilder, LmiProblem, MarginReport, VarCone, VarShape, Witness};
use super::sdp::{solve_feasibility, SdpDiagnostics, SdpError, SdpOptions, SdpStatus};
use crate::psdcheck::{max_eigenvalue, spectral_abscissa, sqrt_psd, PsdError};
use crate::shapes::ActuationSensing;
use crate::spectral::SpectralBasis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("a posteriori verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Solver(#[from] SdpError),
    #[error(transparent)]
    Psd(#[from] PsdError),
}

/// Everything the controller inequalities depend on, at observer size `N`.
#[derive(Debug, Clone)]
pub struct DesignData {
    pub n: usize,
    pub n0: usize,
    pub d: usize,
    pub q: f64,
    pub delta: f64,
    /// `λ_1 .. λ_N`.
    pub lambdas: Vec<f64>,
    /// `λ_{N+1}`.
    pub lambda_next: f64,
    /// Diagonal of `Ξ₀`.
    pub xi0: Vec<f64>,
    /// `B` (N × d).
    pub b: DMatrix<f64>,
    /// `C` (d × N).
    pub c: DMatrix<f64>,
    /// `L₀` (N₀ × d).
    pub l0: DMatrix<f64>,
    /// `Ψ` (d × d).
    pub gram: DMatrix<f64>,
    pub psi_tail: f64,
    pub kappa: f64,
    /// Symmetric square root of `Λ₂`.
    pub lambda2_sqrt: DMatrix<f64>,
    /// `Λ₃ = diag(Ψ^{1/2}, I_N)`.
    pub lambda3: DMatrix<f64>,
}

impl DesignData {
    pub fn new(basis: &SpectralBasis, shapes: &ActuationSensing, q: f64, delta: f64, l0: DMatrix<f64>) -> Result<Self, SynthesisError> {
        let n = shapes.n;
        let d = shapes.d();
        let n0 = basis.n0;
        if n < n0 {
            return Err(SynthesisError::Dimension(format!("N = {n} below N0 = {n0}")));
        }
        if l0.nrows() != n0 || l0.ncols() != d {
            return Err(SynthesisError::Dimension(format!(
                "L0 is {}x{}, expected {n0}x{d}",
                l0.nrows(),
                l0.ncols()
            )));
        }
        let lambda2_sqrt = sqrt_psd(&shapes.lambda2())?;
        let mut lambda3 = DMatrix::identity(n + d, n + d);
        lambda3.view_mut((0, 0), (d, d)).copy_from(&sqrt_psd(&shapes.gram)?);
        Ok(Self {
            n,
            n0,
            d,
            q,
            delta,
            lambdas: basis.lambdas(n),
            lambda_next: basis.lambda(n + 1),
            xi0: shapes.xi0.clone(),
            b: shapes.b.clone(),
            c: shapes.c.clone(),
            l0,
            gram: shapes.gram.clone(),
            psi_tail: shapes.psi_tail,
            kappa: shapes.kappa.value,
            lambda2_sqrt,
            lambda3,
        })
    }

    /// `A = diag(−λ_n + q)`.
    pub fn a(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| if i == j { -self.lambdas[i] + self.q } else { 0.0 })
    }

    pub fn a0(&self) -> DMatrix<f64> {
        self.a().view((0, 0), (self.n0, self.n0)).into_owned()
    }

    pub fn c0(&self) -> DMatrix<f64> {
        self.c.columns(0, self.n0).into_owned()
    }

    /// `Ã = diag(Ξ₀, A)`.
    pub fn a_tilde(&self) -> DMatrix<f64> {
        let n1 = self.n + self.d;
        DMatrix::from_fn(n1, n1, |i, j| {
            if i != j {
                0.0
            } else if i < self.d {
                self.xi0[i]
            } else {
                -self.lambdas[i - self.d] + self.q
            }
        })
    }

    /// `B̃ = [I_d; B]`.
    pub fn b_tilde(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n + self.d, self.d);
        m.view_mut((0, 0), (self.d, self.d)).fill_with_identity();
        m.view_mut((self.d, 0), (self.n, self.d)).copy_from(&self.b);
        m
    }

    /// `L = [L₀; 0]`.
    pub fn l(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.d);
        m.view_mut((0, 0), (self.n0, self.d)).copy_from(&self.l0);
        m
    }

    /// `I₁ = [0_{d×N}; I_N]`.
    pub fn i1(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n + self.d, self.n);
        m.view_mut((self.d, 0), (self.n, self.n)).fill_with_identity();
        m
    }

    /// `Λ₄ = [0_{d×N}; I_N]`.
    pub fn lambda4(&self) -> DMatrix<f64> {
        self.i1()
    }

    /// `Λ₂ = [[Ψ, −Bᵀ], [−B, I]]`.
    pub fn lambda2(&self) -> DMatrix<f64> {
        &self.lambda2_sqrt * &self.lambda2_sqrt
    }

    /// `A − L C`.
    pub fn observer_matrix(&self) -> DMatrix<f64> {
        self.a() - self.l() * &self.c
    }

    /// Constant part of `Υ̃`: `−2λ_{N+1} + 2q + 2δ`.
    pub fn upsilon_constant(&self) -> f64 {
        -2.0 * self.lambda_next + 2.0 * self.q + 2.0 * self.delta
    }
}

/// Which theorem's inequalities are being posed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesignMode {
    /// Mean-square exponential stability under multiplicative noise.
    Stability { sigma_f: f64, sigma_g: f64 },
    /// Noise-to-state stability under additive noise.
    Nss { sigma_f: f64 },
}

impl DesignMode {
    pub fn sigma_f(&self) -> f64 {
        match *self {
            DesignMode::Stability { sigma_f, .. } | DesignMode::Nss { sigma_f } => sigma_f,
        }
    }
}

fn eye(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

fn shift_identity(m: &DMatrix<f64>, s: f64) -> DMatrix<f64> {
    m + eye(m.nrows()) * s
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// Observer-gain inequality in `(P_o, W = P_o L₀)`.
pub fn observer_problem(a0: &DMatrix<f64>, c0: &DMatrix<f64>, delta: f64) -> LmiProblem {
    let n0 = a0.nrows();
    let d = c0.nrows();
    let mut p = LmiProblem::new();
    let po = p.add_var("Po", VarShape::Sym(n0), VarCone::Positive);
    let w = p.add_var("W", VarShape::Full(n0, d), VarCone::Free);
    let mut b = LmiBuilder::new("observer", &[n0]);
    b.term(po, 0, 0, shift_identity(&a0.transpose(), delta), eye(n0));
    b.term(w, 0, 0, -eye(n0), c0.clone());
    p.add_lmi(b.finish());
    p
}

/// Lyapunov inequality with `L₀` fixed and `P_o` free.
pub fn observer_certificate_problem(a0: &DMatrix<f64>, c0: &DMatrix<f64>, l0: &DMatrix<f64>, delta: f64) -> LmiProblem {
    let n0 = a0.nrows();
    let mut p = LmiProblem::new();
    let po = p.add_var("Po", VarShape::Sym(n0), VarCone::Positive);
    let closed = a0 - l0 * c0;
    let mut b = LmiBuilder::new("observer", &[n0]);
    b.term(po, 0, 0, shift_identity(&closed.transpose(), delta), eye(n0));
    p.add_lmi(b.finish());
    p
}

#[derive(Debug, Clone)]
pub struct ObserverGain {
    pub l0: DMatrix<f64>,
    pub p_o: DMatrix<f64>,
    /// Spectral abscissa of `A₀ − L₀ C₀`.
    pub abscissa: f64,
    pub diagnostics: SdpDiagnostics,
}

pub fn observer_gain(a0: &DMatrix<f64>, c0: &DMatrix<f64>, delta: f64, opts: &SdpOptions) -> Result<ObserverGain, SynthesisError> {
    let problem = observer_problem(a0, c0, delta);
    let sol = solve_feasibility(&problem, opts)?;
    if !sol.is_feasible() {
        return Err(SynthesisError::Infeasible(format!(
            "observer gain: margin {:.3e} after {} iterations",
            sol.diagnostics.margin, sol.diagnostics.iterations
        )));
    }
    let p_o = sol.witness.get("Po").cloned().unwrap_or_else(|| eye(a0.nrows()));
    let w = sol.witness.get("W").cloned().unwrap_or_else(|| DMatrix::zeros(a0.nrows(), c0.nrows()));
    let l0 = p_o
        .clone()
        .cholesky()
        .ok_or_else(|| SynthesisError::Verification("P_o not positive definite".into()))?
        .solve(&w);
    let abscissa = spectral_abscissa(&(a0 - &l0 * c0))?;
    if abscissa >= -delta {
        return Err(SynthesisError::Verification(format!("observer abscissa {abscissa} not below -{delta}")));
    }
    Ok(ObserverGain {
        l0,
        p_o,
        abscissa,
        diagnostics: sol.diagnostics,
    })
}

/// Find `P_o` certifying a given `L₀`.
pub fn certify_observer_gain(
    a0: &DMatrix<f64>,
    c0: &DMatrix<f64>,
    l0: &DMatrix<f64>,
    delta: f64,
    opts: &SdpOptions,
) -> Result<(DMatrix<f64>, MarginReport), SynthesisError> {
    let problem = observer_certificate_problem(a0, c0, l0, delta);
    let sol = solve_feasibility(&problem, opts)?;
    if !sol.is_feasible() {
        return Err(SynthesisError::Infeasible("no P_o certifies the given L0".into()));
    }
    let report = constraint_margins(&problem, &sol.witness)?;
    Ok((sol.witness.get("Po").cloned().unwrap_or_else(|| eye(a0.nrows())), report))
}

/// Block sizes of the main stability inequality.
pub fn stability_block_sizes(n: usize, d: usize, with_tail: bool) -> [usize; 8] {
    let n1 = n + d;
    [n1, n, d, n, n, n1, n1 + if with_tail { d } else { 0 }, n]
}

/// The main 8-block inequality, the tail-gain inequalities and the scalar
/// inequality for the modes beyond `N`.
pub fn assemble_stability_lmis(data: &DesignData, sigma_f: f64, sigma_g: f64) -> LmiProblem {
    let (n, d) = (data.n, data.d);
    let n1 = n + d;
    let with_tail = data.psi_tail > 0.0;
    let mut p = LmiProblem::new();
    let q1 = p.add_var("Q1", VarShape::Sym(n1), VarCone::Positive);
    let q2 = p.add_var("Q2", VarShape::Sym(n), VarCone::Positive);
    let y = p.add_var("Y", VarShape::Full(d, n1), VarCone::Free);
    let beta1 = p.add_var("beta1", VarShape::Scalar, VarCone::Positive);
    let beta2 = p.add_var("beta2t", VarShape::Scalar, VarCone::Positive);
    let beta3 = p.add_var("beta3t", VarShape::Scalar, VarCone::Positive);
    let beta4 = p.add_var("beta4t", VarShape::Scalar, VarCone::Positive);
    let alpha = p.add_var("alpha", VarShape::Scalar, VarCone::Positive);

    let at = data.a_tilde();
    let bt = data.b_tilde();
    let l = data.l();
    let i1 = data.i1();
    let alc = data.observer_matrix();

    let mut b = LmiBuilder::new("stability", &stability_block_sizes(n, d, with_tail));
    b.term(q1, 0, 0, shift_identity(&at, data.delta), eye(n1));
    b.term(y, 0, 0, -&bt, eye(n1));
    b.term(q2, 0, 1, &i1 * &l * &data.c, eye(n));
    b.constant(0, 2, &(&i1 * &l), 0, 0);
    b.term(beta3, 0, 3, i1.clone(), eye(n));
    b.term(q1, 0, 5, eye(n1) * sigma_g, data.lambda3.transpose());
    b.term(q1, 0, 6, eye(n1) * sigma_f, data.lambda2_sqrt.clone());
    if with_tail {
        b.term_at(y, 6, n1, 0, 0, eye(d), eye(n1));
    }
    b.term(q2, 1, 1, shift_identity(&alc, data.delta), eye(n));
    b.constant(1, 2, &(-&l), 0, 0);
    b.term(beta2, 1, 4, eye(n), eye(n));
    b.term(q2, 1, 5, eye(n) * sigma_g, data.lambda4().transpose());
    b.term(q2, 1, 7, eye(n) * sigma_f, eye(n));
    b.scaled_identity(beta1, 2, -1.0);
    b.scaled_identity(beta3, 3, -1.0);
    b.scaled_identity(beta2, 4, -1.0);
    b.scaled_identity(beta4, 5, -0.5);
    b.scaled_identity_at(beta3, 6, 0, n1, -1.0);
    if with_tail {
        b.scaled_identity_at(alpha, 6, n1, d, -1.0 / data.psi_tail);
    }
    b.scaled_identity(beta2, 7, -1.0);
    p.add_lmi(b.finish());

    let mut b = LmiBuilder::new("tail gain", &[n]);
    b.term(q2, 0, 0, eye(n) * -0.5, eye(n));
    b.scaled_identity(beta4, 0, 1.0);
    p.add_lmi(b.finish());
    p.add_linear("beta4t < 1", -1.0, vec![(beta4, 1.0)]);

    let mut b = LmiBuilder::new("tail modes", &[1, 1, 1, 1, 1]);
    b.constant(0, 0, &scalar(data.upsilon_constant()), 0, 0);
    b.scaled_identity(alpha, 0, 1.0);
    b.scaled_identity(beta1, 0, data.kappa * data.lambda_next);
    b.term(beta3, 0, 1, scalar(1.0), scalar(1.0));
    b.term(beta2, 0, 2, scalar(1.0), scalar(1.0));
    b.constant(0, 3, &scalar(sigma_f), 0, 0);
    b.constant(0, 4, &scalar(sigma_g), 0, 0);
    b.scaled_identity(beta3, 1, -1.0);
    b.scaled_identity(beta2, 2, -1.0);
    b.scaled_identity(beta2, 3, -1.0);
    b.scaled_identity(beta4, 4, -0.5);
    p.add_lmi(b.finish());

    p.add_linear("beta1 kappa < 2", -2.0, vec![(beta1, data.kappa)]);
    p
}

pub fn nss_block_sizes(n: usize, d: usize, with_tail: bool) -> [usize; 6] {
    let n1 = n + d;
    [n1, n, d, n, n, n1 + if with_tail { d } else { 0 }]
}

/// Inequalities for noise-to-state stability under additive noise.
pub fn assemble_nss_lmis(data: &DesignData, sigma_f: f64) -> LmiProblem {
    let (n, d) = (data.n, data.d);
    let n1 = n + d;
    let with_tail = data.psi_tail > 0.0;
    let mut p = LmiProblem::new();
    let q1 = p.add_var("Q1", VarShape::Sym(n1), VarCone::Positive);
    let p2 = p.add_var("P2", VarShape::Sym(n), VarCone::Positive);
    let y = p.add_var("Y", VarShape::Full(d, n1), VarCone::Free);
    let beta1 = p.add_var("beta1", VarShape::Scalar, VarCone::Positive);
    let beta2 = p.add_var("beta2", VarShape::Scalar, VarCone::Positive);
    let beta3 = p.add_var("beta3t", VarShape::Scalar, VarCone::Positive);
    let alpha = p.add_var("alpha", VarShape::Scalar, VarCone::Positive);

    let at = data.a_tilde();
    let bt = data.b_tilde();
    let l = data.l();
    let i1 = data.i1();
    let alc = data.observer_matrix();

    let mut b = LmiBuilder::new("nss", &nss_block_sizes(n, d, with_tail));
    b.term(q1, 0, 0, shift_identity(&at, data.delta), eye(n1));
    b.term(y, 0, 0, -&bt, eye(n1));
    b.constant(0, 1, &(&i1 * &l * &data.c), 0, 0);
    b.constant(0, 2, &(&i1 * &l), 0, 0);
    b.term(beta3, 0, 3, i1.clone(), eye(n));
    b.term(q1, 0, 5, eye(n1) * sigma_f, data.lambda2_sqrt.clone());
    if with_tail {
        b.term_at(y, 5, n1, 0, 0, eye(d), eye(n1));
    }
    b.term(p2, 1, 1, shift_identity(&alc.transpose(), data.delta), eye(n));
    b.scaled_identity(beta2, 1, sigma_f * sigma_f);
    b.term(p2, 1, 2, -eye(n), l.clone());
    b.term(p2, 1, 4, -eye(n), eye(n));
    b.scaled_identity(beta1, 2, -1.0);
    b.scaled_identity(beta3, 3, -1.0);
    b.scaled_identity(beta2, 4, -1.0);
    b.scaled_identity_at(beta3, 5, 0, n1, -1.0);
    if with_tail {
        b.scaled_identity_at(alpha, 5, n1, d, -1.0 / data.psi_tail);
    }
    p.add_lmi(b.finish());

    let mut b = LmiBuilder::new("tail modes", &[1, 1, 1]);
    b.constant(0, 0, &scalar(data.upsilon_constant()), 0, 0);
    b.scaled_identity(alpha, 0, 1.0);
    b.scaled_identity(beta1, 0, data.kappa * data.lambda_next);
    b.scaled_identity(beta2, 0, sigma_f * sigma_f);
    b.term(beta3, 0, 1, scalar(1.0), scalar(1.0));
    b.constant(0, 2, &scalar(1.0), 0, 0);
    b.scaled_identity(beta3, 1, -1.0);
    b.scaled_identity(beta2, 2, -1.0);
    p.add_lmi(b.finish());

    p.add_linear("beta1 kappa < 2", -2.0, vec![(beta1, data.kappa)]);
    p
}

/// `Q₁ ≻ νI` and `[[Q₁, Yᵀ/k̄], [Y/k̄, νI]] ≻ 0`, which give `‖K‖ ≤ k̄` for
/// `K = Y Q₁⁻¹`.
pub fn add_gain_bound(p: &mut LmiProblem, nu: f64, k_max: f64) {
    let q1 = p.var("Q1").expect("problem has Q1");
    let y = p.var("Y").expect("problem has Y");
    let (d, n1) = p.vars[y].shape.dims();
    let mut b = LmiBuilder::new("Q1 floor", &[n1]);
    b.term(q1, 0, 0, eye(n1) * -0.5, eye(n1));
    b.constant(0, 0, &(eye(n1) * nu), 0, 0);
    p.add_lmi(b.finish());
    let mut b = LmiBuilder::new("gain bound", &[n1, d]);
    b.term(q1, 0, 0, eye(n1) * -0.5, eye(n1));
    b.term(y, 1, 0, eye(d) * (-1.0 / k_max), eye(n1));
    b.constant(1, 1, &(eye(d) * -nu), 0, 0);
    p.add_lmi(b.finish());
}

pub fn assemble(data: &DesignData, mode: DesignMode) -> LmiProblem {
    match mode {
        DesignMode::Stability { sigma_f, sigma_g } => assemble_stability_lmis(data, sigma_f, sigma_g),
        DesignMode::Nss { sigma_f } => assemble_nss_lmis(data, sigma_f),
    }
}

/// Largest eigenvalue of each inequality before the congruence and Schur
/// steps, evaluated at `P₁ = Q₁⁻¹`, `K = Y Q₁⁻¹`, `P₂ = Q₂⁻¹`, `βᵢ = 1/β̃ᵢ`.
/// Values are normalized by the matrix scale; all must be negative.
pub fn unfolded_stability_check(data: &DesignData, w: &Witness, sigma_f: f64, sigma_g: f64) -> Result<Vec<(String, f64)>, SynthesisError> {
    let get = |name: &str| {
        w.get(name)
            .cloned()
            .ok_or_else(|| SynthesisError::Verification(format!("witness lacks {name}")))
    };
    let inv = |m: DMatrix<f64>, name: &str| {
        m.try_inverse()
            .ok_or_else(|| SynthesisError::Verification(format!("{name} is singular")))
    };
    let q1 = get("Q1")?;
    let q2 = get("Q2")?;
    let y = get("Y")?;
    let s = |name: &str| get(name).map(|m| m[(0, 0)]);
    let (beta1, beta2, beta3, beta4, alpha) = (s("beta1")?, 1.0 / s("beta2t")?, 1.0 / s("beta3t")?, 1.0 / s("beta4t")?, s("alpha")?);
    let p1 = inv(q1.clone(), "Q1")?;
    let p2 = inv(q2, "Q2")?;
    let k = &y * &p1;
    let (n, d) = (data.n, data.d);
    let n1 = n + d;
    let at = data.a_tilde();
    let bt = data.b_tilde();
    let l = data.l();
    let i1 = data.i1();
    let alc = data.observer_matrix();
    let cl = &at - &bt * &k;
    let mut th11 = &p1 * &cl + cl.transpose() * &p1 + &p1 * (2.0 * data.delta) + data.lambda2() * (beta3 * sigma_f * sigma_f);
    if data.psi_tail > 0.0 {
        th11 += k.transpose() * &k * (data.psi_tail / alpha);
    }
    let th22 = &p2 * &alc + alc.transpose() * &p2 + &p2 * (2.0 * data.delta) + eye(n) * (beta2 * sigma_f * sigma_f);
    let sizes = [n1, n, d, n, n];
    let total: usize = sizes.iter().sum();
    let off = |k: usize| sizes[..k].iter().sum::<usize>();
    let mut th = DMatrix::zeros(total, total);
    let mut put = |r: usize, c: usize, m: &DMatrix<f64>| {
        th.view_mut((off(r), off(c)), m.shape()).copy_from(m);
        if r != c {
            th.view_mut((off(c), off(r)), (m.ncols(), m.nrows())).copy_from(&m.transpose());
        }
    };
    put(0, 0, &th11);
    put(0, 1, &(&p1 * &i1 * &l * &data.c));
    put(0, 2, &(&p1 * &i1 * &l));
    put(0, 3, &(&p1 * &i1));
    put(1, 1, &th22);
    put(1, 2, &(-(&p2 * &l)));
    put(1, 4, &p2);
    put(2, 2, &(-eye(d) * beta1));
    put(3, 3, &(-eye(n) * beta3));
    put(4, 4, &(-eye(n) * beta2));
    let mut lam = DMatrix::zeros(n1, total);
    lam.view_mut((0, 0), (n1, n1)).copy_from(&data.lambda3);
    lam.view_mut((0, n1), (n1, n)).copy_from(&data.lambda4());
    th += lam.transpose() * &lam * (2.0 * beta4 * sigma_g * sigma_g);
    let scale = th.amax().max(1.0);
    let mut out = vec![("theta".to_string(), max_eigenvalue(&th)? / scale)];

    let ln = data.lambda_next;
    let ups = -2.0 * (ln - data.q - data.delta) + alpha + beta1 * data.kappa * ln + beta2 * sigma_f * sigma_f + 2.0 * beta4 * sigma_g * sigma_g;
    let gamma = DMatrix::from_row_slice(3, 3, &[ups, 1.0, 1.0, 1.0, -beta3, 0.0, 1.0, 0.0, -beta2]);
    out.push(("gamma".to_string(), max_eigenvalue(&gamma)? / gamma.amax().max(1.0)));
    let tail = &p2 - eye(n) * beta4;
    out.push(("p2 - beta4".to_string(), max_eigenvalue(&tail)? / tail.amax().max(1.0)));
    out.push(("1 - beta4".to_string(), 1.0 - beta4));
    out.push(("beta1 kappa - 2".to_string(), beta1 * data.kappa - 2.0));
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub mode: DesignMode,
    pub feasible: bool,
    /// `K = Y Q₁⁻¹` (d × (N+d)) when feasible.
    pub k: Option<DMatrix<f64>>,
    pub l0: DMatrix<f64>,
    pub witness: Witness,
    pub diagnostics: SdpDiagnostics,
    /// Independent re-validation of every inequality at the witness.
    pub margins: Option<MarginReport>,
    /// Whether every margin is at least `ε/2`.
    pub witness_valid: bool,
    /// Spectral abscissa of `Ã − B̃K`.
    pub closed_loop_abscissa: Option<f64>,
    /// Spectral abscissa of `A − LC`.
    pub observer_abscissa: f64,
    /// `(ν, k̄)` of the gain bound the witness satisfies, if one was imposed.
    pub gain_bound: Option<(f64, f64)>,
}

/// Solve the inequalities for `mode` and check the witness independently.
/// Infeasibility is reported in the result, not as an error.
pub fn solve_design(data: &DesignData, mode: DesignMode, opts: &SdpOptions) -> Result<SynthesisResult, SynthesisError> {
    solve_problem(data, mode, &assemble(data, mode), None, opts)
}

fn solve_problem(
    data: &DesignData,
    mode: DesignMode,
    problem: &LmiProblem,
    gain_bound: Option<(f64, f64)>,
    opts: &SdpOptions,
) -> Result<SynthesisResult, SynthesisError> {
    let sol = solve_feasibility(problem, opts)?;
    let observer_abscissa = spectral_abscissa(&data.observer_matrix())?;
    let feasible = sol.status == SdpStatus::Feasible;
    let mut result = SynthesisResult {
        mode,
        feasible,
        k: None,
        l0: data.l0.clone(),
        witness: sol.witness,
        diagnostics: sol.diagnostics,
        margins: None,
        witness_valid: false,
        closed_loop_abscissa: None,
        observer_abscissa,
        gain_bound,
    };
    if !feasible {
        return Ok(result);
    }
    let report = constraint_margins(problem, &result.witness)?;
    result.witness_valid = report.min_margin() >= 0.5 * result.diagnostics.epsilon;
    result.margins = Some(report);
    let q1 = result.witness.get("Q1").cloned().unwrap_or_else(|| eye(data.n + data.d));
    let y = result.witness.get("Y").cloned().unwrap_or_else(|| DMatrix::zeros(data.d, data.n + data.d));
    if let Some(ch) = q1.cholesky() {
        let k = ch.solve(&y.transpose()).transpose();
        result.closed_loop_abscissa = Some(spectral_abscissa(&(data.a_tilde() - data.b_tilde() * &k))?);
        result.k = Some(k);
    }
    Ok(result)
}

/// Require a valid witness, a gain, both Hurwitz margins and, for the
/// stability mode, the unfolded inequalities.
pub fn verify_result(data: &DesignData, result: &SynthesisResult) -> Result<(), SynthesisError> {
    if !result.feasible {
        return Err(SynthesisError::Infeasible(format!(
            "{} iterations, best margin {:.3e} (needed {:.3e})",
            result.diagnostics.iterations,
            result.diagnostics.margin,
            result.diagnostics.epsilon
        )));
    }
    if !result.witness_valid {
        let worst = result.margins.as_ref().and_then(|m| m.worst().cloned());
        return Err(SynthesisError::Verification(format!("witness margin below eps/2: {worst:?}")));
    }
    let abscissa = result
        .closed_loop_abscissa
        .ok_or_else(|| SynthesisError::Verification("Q1 not positive definite".into()))?;
    if abscissa >= -data.delta {
        return Err(SynthesisError::Verification(format!("closed-loop abscissa {abscissa} not below -delta")));
    }
    if result.observer_abscissa >= -data.delta {
        return Err(SynthesisError::Verification(format!(
            "observer abscissa {} not below -delta",
            result.observer_abscissa
        )));
    }
    if let DesignMode::Stability { sigma_f, sigma_g } = result.mode {
        for (name, v) in unfolded_stability_check(data, &result.witness, sigma_f, sigma_g)? {
            if v >= 1e-9 {
                return Err(SynthesisError::Verification(format!("unfolded inequality {name}: {v:e}")));
            }
        }
    }
    Ok(())
}

/// `(ν, k̄)` pairs tried in order by [`synthesize_controller`] before the
/// unbounded problem. Near the feasibility boundary the unbounded witness can
/// carry gains too stiff for an explicit time step.
pub const GAIN_LADDER: [(f64, f64); 4] = [(0.1, 1e4), (0.1, 3e4), (0.1, 1e5), (0.1, 1e6)];

/// Solve with each bound of `ladder` in turn, then without a bound, and
/// return the first result that passes [`verify_result`]. Errors report the
/// unbounded attempt.
pub fn synthesize_with_ladder(
    data: &DesignData,
    mode: DesignMode,
    ladder: &[(f64, f64)],
    opts: &SdpOptions,
) -> Result<SynthesisResult, SynthesisError> {
    for &(nu, k_max) in ladder {
        let mut problem = assemble(data, mode);
        add_gain_bound(&mut problem, nu, k_max);
        if let Ok(r) = solve_problem(data, mode, &problem, Some((nu, k_max)), opts) {
            if verify_result(data, &r).is_ok() {
                return Ok(r);
            }
        }
    }
    let result = solve_design(data, mode, opts)?;
    verify_result(data, &result)?;
    Ok(result)
}

/// [`synthesize_with_ladder`] with [`GAIN_LADDER`].
pub fn synthesize_controller(data: &DesignData, mode: DesignMode, opts: &SdpOptions) -> Result<SynthesisResult, SynthesisError> {
    synthesize_with_ladder(data, mode, &GAIN_LADDER, opts)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::profile::FaceProfile;
    use crate::spectral::{BoxDomain, SensorSet};

    pub(crate) fn reference_l0_2d() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 2, &[55.0284, 0.0, 0.0, 15.0583, -2.4175, 0.0])
    }

    pub(crate) fn data_2d(n: usize, windowed: bool) -> DesignData {
        let a1 = 1.5f64.sqrt();
        let domain = BoxDomain::new(vec![a1, 1.0]).unwrap();
        let basis = SpectralBasis::build(domain.clone(), n, 28.8, 1e-3, 0.1).unwrap();
        let amp = 1.0 / a1.sqrt();
        let sensors = SensorSet::new(
            vec![FaceProfile::new(amp, vec![a1], vec![1]), FaceProfile::new(0.1 * amp, vec![a1], vec![2])],
            &domain,
        )
        .unwrap();
        let shapes = if windowed {
            let (w1, d1) = (0.8 * a1, 0.8);
            vec![
                (FaceProfile::new(1.0 / (w1 * d1).sqrt(), vec![w1], vec![1]), d1),
                (FaceProfile::new(1.2 / w1.sqrt(), vec![w1], vec![2]), 1.0),
            ]
        } else {
            vec![
                (FaceProfile::new(1.0 / a1.sqrt(), vec![a1], vec![1]), 1.0),
                (FaceProfile::new(1.2 / a1.sqrt(), vec![a1], vec![2]), 1.0),
            ]
        };
        let act = ActuationSensing::build(shapes, sensors, &basis, n, 28.8).unwrap();
        DesignData::new(&basis, &act, 28.8, 1e-3, reference_l0_2d()).unwrap()
    }

    #[test]
    fn reference_observer_gain_is_certified() {
        let data = data_2d(9, true);
        let (po, report) = certify_observer_gain(&data.a0(), &data.c0(), &data.l0, 1e-3, &SdpOptions::default()).unwrap();
        assert!(report.min_margin() > 0.0);
        assert!(po.cholesky().is_some());
    }

    #[test]
    fn synthesized_observer_gain_is_hurwitz() {
        let data = data_2d(9, true);
        let g = observer_gain(&data.a0(), &data.c0(), 1e-3, &SdpOptions::default()).unwrap();
        assert!(g.abscissa < -1e-3);
    }

    #[test]
    fn stability_bracket_at_n9() {
        let data = data_2d(9, true);
        let opts = SdpOptions::default();
        let ok = synthesize_controller(&data, DesignMode::Stability { sigma_f: 0.1, sigma_g: 0.14 }, &opts).unwrap();
        assert!(ok.k.is_some());
        let bad = solve_design(&data, DesignMode::Stability { sigma_f: 0.1, sigma_g: 0.2 }, &opts).unwrap();
        assert!(!bad.feasible);
    }

    #[test]
    fn nss_bracket_at_n9() {
        let data = data_2d(9, true);
        let opts = SdpOptions::default();
        assert!(synthesize_controller(&data, DesignMode::Nss { sigma_f: 0.35 }, &opts).is_ok());
        assert!(!solve_design(&data, DesignMode::Nss { sigma_f: 0.42 }, &opts).unwrap().feasible);
    }

    #[test]
    fn gain_ladder_bounds_the_gain_near_the_boundary() {
        let data = data_2d(9, true);
        let mode = DesignMode::Stability { sigma_f: 0.33, sigma_g: 0.05 };
        let r = synthesize_controller(&data, mode, &SdpOptions::default()).unwrap();
        let (_, k_max) = r.gain_bound.expect("a bounded witness exists at this point");
        let k = r.k.unwrap();
        assert!(k.norm() <= k_max * (data.d as f64).sqrt() * (1.0 + 1e-6));
        let q1_min = r.witness.get("Q1").unwrap().clone().symmetric_eigenvalues().min();
        assert!(q1_min > 0.1);
    }
}
