//! Dense primal-dual interior-point method for LMI feasibility.
//!
//! Every strict inequality `F_k(y) ≺ 0` and every positivity cone is given a
//! common margin `t`, and the solver maximizes `t` in the dual form
//! `max t  s.t.  Z_k = −F_k(y) − t·I ⪰ 0`, with one extra linear row bounding the
//! traces of the positive variables so the optimum is attained. Iterates stay
//! dual feasible (each `Z_k` is recomputed from `y`), so any iterate with
//! `t ≥ ε` is a strictly feasible witness. The search direction is HKM with a
//! Mehrotra predictor-corrector step.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::lmi::{LmiProblem, VarCone, VarShape, Witness};

#[derive(Debug, Clone, PartialEq)]
pub struct SdpOptions {
    pub max_iterations: usize,
    /// Required margin; `None` means `1e-7 · scale` of the problem data.
    pub margin: Option<f64>,
    /// Initial bound on the summed traces of positive variables.
    pub trace_bound: f64,
    /// The bound is enlarged up to this value when it limits the margin.
    pub max_trace_bound: f64,
    pub step_fraction: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            margin: None,
            trace_bound: 1e4,
            max_trace_bound: 1e8,
            step_fraction: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Feasible,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("numerical failure after {iterations} iterations: {reason}")]
    Numerical { iterations: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpDiagnostics {
    pub iterations: usize,
    /// Largest common margin reached.
    pub margin: f64,
    /// Required margin.
    pub epsilon: f64,
    pub primal_objective: f64,
    pub primal_residual: f64,
    pub complementarity: f64,
    pub trace_bound: f64,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub witness: Witness,
    pub diagnostics: SdpDiagnostics,
}

impl SdpSolution {
    pub fn is_feasible(&self) -> bool {
        self.status == SdpStatus::Feasible
    }
}

struct Piece {
    var: usize,
    lrow: usize,
    lmat: DMatrix<f64>,
    rcol: usize,
    rmat: DMatrix<f64>,
    transposed: bool,
}

struct Cone {
    dim: usize,
    f0: DMatrix<f64>,
    terms: Vec<(usize, usize, usize, DMatrix<f64>, DMatrix<f64>)>,
    pieces: Vec<Piece>,
}

struct Row {
    f0: f64,
    coeffs: Vec<(usize, f64)>,
    margin: bool,
}

struct Instance {
    shapes: Vec<VarShape>,
    offsets: Vec<usize>,
    m: usize,
    cones: Vec<Cone>,
    rows: Vec<Row>,
    bound_row: usize,
    scale: f64,
}

fn build_instance(problem: &LmiProblem, bound: f64) -> Instance {
    let shapes: Vec<VarShape> = problem.vars.iter().map(|v| v.shape).collect();
    let offsets: Vec<usize> = problem.vars.iter().map(|v| v.offset).collect();
    let m = problem.num_scalars();
    let mut cones = Vec::new();
    let mut scale: f64 = 1.0;
    let make_pieces = |terms: &[(usize, usize, usize, DMatrix<f64>, DMatrix<f64>)]| {
        let mut pieces = Vec::with_capacity(2 * terms.len());
        for (var, row, col, p, q) in terms {
            pieces.push(Piece {
                var: *var,
                lrow: *row,
                lmat: p.clone(),
                rcol: *col,
                rmat: q.clone(),
                transposed: false,
            });
            pieces.push(Piece {
                var: *var,
                lrow: *col,
                lmat: q.transpose(),
                rcol: *row,
                rmat: p.transpose(),
                transposed: true,
            });
        }
        pieces
    };
    for lmi in &problem.lmis {
        scale = scale.max(lmi.constant.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max));
        let terms: Vec<_> = lmi
            .terms
            .iter()
            .map(|t| (t.var, t.row, t.col, t.left.clone(), t.right.clone()))
            .collect();
        cones.push(Cone {
            dim: lmi.dim,
            f0: lmi.constant.clone(),
            pieces: make_pieces(&terms),
            terms,
        });
    }
    let mut rows = Vec::new();
    for (i, v) in problem.vars.iter().enumerate() {
        if v.cone != VarCone::Positive {
            continue;
        }
        match v.shape {
            VarShape::Scalar => rows.push(Row {
                f0: 0.0,
                coeffs: vec![(v.offset, -1.0)],
                margin: true,
            }),
            VarShape::Sym(n) => {
                let terms = vec![(i, 0, 0, DMatrix::identity(n, n) * -0.5, DMatrix::identity(n, n))];
                cones.push(Cone {
                    dim: n,
                    f0: DMatrix::zeros(n, n),
                    pieces: make_pieces(&terms),
                    terms,
                });
            }
            VarShape::Full(..) => {}
        }
    }
    for lc in &problem.linear {
        scale = scale.max(lc.constant.abs());
        rows.push(Row {
            f0: lc.constant,
            coeffs: lc.coeffs.iter().map(|&(v, c)| (problem.vars[v].offset, c)).collect(),
            margin: true,
        });
    }
    let mut bound_coeffs = Vec::new();
    for v in &problem.vars {
        if v.cone != VarCone::Positive {
            continue;
        }
        match v.shape {
            VarShape::Scalar => bound_coeffs.push((v.offset, 1.0)),
            VarShape::Sym(n) => {
                for k in 0..v.shape.count() {
                    let (a, b) = v.shape.position(k);
                    if a == b {
                        bound_coeffs.push((v.offset + k, 1.0));
                    }
                }
                let _ = n;
            }
            VarShape::Full(..) => {}
        }
    }
    rows.push(Row {
        f0: -bound,
        coeffs: bound_coeffs,
        margin: false,
    });
    let bound_row = rows.len() - 1;
    Instance {
        shapes,
        offsets,
        m,
        cones,
        rows,
        bound_row,
        scale,
    }
}

/// Index pairs `(a, b)` of the unit entries of basis element `k`.
fn basis_entries(shape: VarShape, k: usize, transposed: bool, out: &mut Vec<(usize, usize)>) {
    out.clear();
    let (a, b) = shape.position(k);
    match shape {
        VarShape::Sym(_) => {
            out.push((a, b));
            if a != b {
                out.push((b, a));
            }
        }
        VarShape::Full(..) => out.push(if transposed { (b, a) } else { (a, b) }),
        VarShape::Scalar => out.push((0, 0)),
    }
}

impl Instance {
    fn var_values(&self, y: &[f64]) -> Vec<DMatrix<f64>> {
        self.shapes
            .iter()
            .zip(&self.offsets)
            .map(|(s, &o)| s.assemble(&y[o..o + s.count()]))
            .collect()
    }

    /// `Σ_terms (T + Tᵀ)` for the given variable values.
    fn cone_linear(&self, cone: &Cone, values: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(cone.dim, cone.dim);
        for (var, row, col, p, q) in &cone.terms {
            let block = if let VarShape::Scalar = self.shapes[*var] {
                p * q * values[*var][(0, 0)]
            } else {
                p * &values[*var] * q
            };
            let (h, w) = block.shape();
            let mut v = f.view_mut((*row, *col), (h, w));
            v += &block;
            let mut v = f.view_mut((*col, *row), (w, h));
            v += block.transpose();
        }
        f
    }

    /// Slacks `Z_k = −F_k(y) − t I` and `z_r`.
    fn slacks(&self, y: &[f64]) -> (Vec<DMatrix<f64>>, Vec<f64>) {
        let t = y[self.m];
        let values = self.var_values(y);
        let zs = self
            .cones
            .iter()
            .map(|c| {
                let mut z = -(&c.f0 + self.cone_linear(c, &values));
                for i in 0..c.dim {
                    z[(i, i)] -= t;
                }
                z
            })
            .collect();
        let zr = self
            .rows
            .iter()
            .map(|r| {
                let mut v = -r.f0 - r.coeffs.iter().map(|&(k, c)| c * y[k]).sum::<f64>();
                if r.margin {
                    v -= t;
                }
                v
            })
            .collect();
        (zs, zr)
    }

    /// Direction of the slacks for a step `dy` (no constant part).
    fn slack_direction(&self, dy: &[f64]) -> (Vec<DMatrix<f64>>, Vec<f64>) {
        let dt = dy[self.m];
        let values = self.var_values(dy);
        let zs = self
            .cones
            .iter()
            .map(|c| {
                let mut z = -self.cone_linear(c, &values);
                for i in 0..c.dim {
                    z[(i, i)] -= dt;
                }
                z
            })
            .collect();
        let zr = self
            .rows
            .iter()
            .map(|r| {
                let mut v = -r.coeffs.iter().map(|&(k, c)| c * dy[k]).sum::<f64>();
                if r.margin {
                    v -= dt;
                }
                v
            })
            .collect();
        (zs, zr)
    }

    /// `⟨A_i, W⟩` for every decision entry and the margin, `W` per cone and row.
    fn adjoint(&self, ws: &[DMatrix<f64>], wr: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m + 1);
        let mut ents = Vec::with_capacity(2);
        for (cone, w) in self.cones.iter().zip(ws) {
            for p in &cone.pieces {
                let sub = w.view((p.rcol, p.lrow), (p.rmat.ncols(), p.lmat.nrows()));
                let g = &p.rmat * sub * &p.lmat;
                let shape = self.shapes[p.var];
                let off = self.offsets[p.var];
                if let VarShape::Scalar = shape {
                    out[off] += g.trace();
                    continue;
                }
                for k in 0..shape.count() {
                    basis_entries(shape, k, p.transposed, &mut ents);
                    out[off + k] += ents.iter().map(|&(a, b)| g[(b, a)]).sum::<f64>();
                }
            }
            out[self.m] += w.trace();
        }
        for (row, &x) in self.rows.iter().zip(wr) {
            for &(k, c) in &row.coeffs {
                out[k] += c * x;
            }
            if row.margin {
                out[self.m] += x;
            }
        }
        out
    }

    /// Schur complement `M_ij = Σ_k tr(A_i X_k A_j Z_k⁻¹) + Σ_r a_ri a_rj x_r / z_r`.
    fn schur(&self, xs: &[DMatrix<f64>], zinv: &[DMatrix<f64>], xr: &[f64], zr: &[f64]) -> DMatrix<f64> {
        let n = self.m + 1;
        let mut mat = DMatrix::zeros(n, n);
        let mut ei = Vec::with_capacity(2);
        let mut ej = Vec::with_capacity(2);
        for ((cone, x), zi) in self.cones.iter().zip(xs).zip(zinv) {
            for p in &cone.pieces {
                for q in &cone.pieces {
                    if p.var > q.var {
                        continue;
                    }
                    let xg = x.view((p.rcol, q.lrow), (p.rmat.ncols(), q.lmat.nrows()));
                    let g = &p.rmat * xg * &q.lmat;
                    let zh = zi.view((q.rcol, p.lrow), (q.rmat.ncols(), p.lmat.nrows()));
                    let h = &q.rmat * zh * &p.lmat;
                    let (sp, sq) = (self.shapes[p.var], self.shapes[q.var]);
                    let (op, oq) = (self.offsets[p.var], self.offsets[q.var]);
                    match (sp, sq) {
                        (VarShape::Scalar, VarShape::Scalar) => {
                            mat[(op, oq)] += (&g * &h).trace();
                        }
                        (VarShape::Scalar, _) => {
                            let k = &h * &g;
                            for j in 0..sq.count() {
                                basis_entries(sq, j, q.transposed, &mut ej);
                                mat[(op, oq + j)] += ej.iter().map(|&(c, d)| k[(d, c)]).sum::<f64>();
                            }
                        }
                        (_, VarShape::Scalar) => {
                            let k = &g * &h;
                            for i in 0..sp.count() {
                                basis_entries(sp, i, p.transposed, &mut ei);
                                mat[(op + i, oq)] += ei.iter().map(|&(a, b)| k[(b, a)]).sum::<f64>();
                            }
                        }
                        _ => {
                            for i in 0..sp.count() {
                                basis_entries(sp, i, p.transposed, &mut ei);
                                for j in 0..sq.count() {
                                    basis_entries(sq, j, q.transposed, &mut ej);
                                    let mut s = 0.0;
                                    for &(a, b) in &ei {
                                        for &(c, d) in &ej {
                                            s += g[(b, c)] * h[(d, a)];
                                        }
                                    }
                                    mat[(op + i, oq + j)] += s;
                                }
                            }
                        }
                    }
                }
            }
        }
        // margin row: tr(I X A_j Z⁻¹) = ⟨A_j, Z⁻¹X⟩ and tr(X Z⁻¹)
        let w: Vec<DMatrix<f64>> = xs.iter().zip(zinv).map(|(x, zi)| zi * x).collect();
        let zero_rows = vec![0.0; self.rows.len()];
        let mut tcol = self.adjoint(&w, &zero_rows);
        tcol[self.m] = 0.0;
        for (x, zi) in xs.iter().zip(zinv) {
            tcol[self.m] += (x * zi).trace();
        }
        for i in 0..n {
            mat[(i, self.m)] += tcol[i];
        }
        // blocks with var(p) < var(q) were filled above the diagonal only;
        // same-variable blocks are already complete and symmetric
        for i in 0..n {
            for j in 0..i {
                mat[(i, j)] = mat[(j, i)];
            }
        }
        for (row, (&x, &z)) in self.rows.iter().zip(xr.iter().zip(zr)) {
            let mut coeffs = row.coeffs.clone();
            if row.margin {
                coeffs.push((self.m, 1.0));
            }
            let w = x / z;
            for &(a, ca) in &coeffs {
                for &(b, cb) in &coeffs {
                    mat[(a, b)] += w * ca * cb;
                }
            }
        }
        mat
    }
}

fn chol_inverse(z: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let ch = z.clone().cholesky()?;
    let inv = ch.inverse();
    Some((&inv + inv.transpose()) * 0.5)
}

/// Largest `α` with `X + α ΔX ⪰ 0`, or infinity.
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Option<f64> {
    let ch = x.clone().cholesky()?;
    let l = ch.l();
    let linv = l.solve_lower_triangular(&DMatrix::identity(x.nrows(), x.nrows()))?;
    let s = &linv * dx * linv.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let ev = s.symmetric_eigenvalues();
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    Some(if min < 0.0 { -1.0 / min } else { f64::INFINITY })
}

fn max_step_lp(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let reg = 1e-12 * m.diagonal().amax().max(1.0);
    let mut mr = m.clone();
    for i in 0..mr.nrows() {
        mr[(i, i)] += reg;
    }
    if let Some(ch) = mr.cholesky() {
        return Some(ch.solve(rhs));
    }
    m.clone().lu().solve(rhs)
}

struct Outcome {
    status: SdpStatus,
    y: Vec<f64>,
    diag: SdpDiagnostics,
    bound_multiplier: f64,
}

fn initial_point(problem: &LmiProblem) -> Vec<f64> {
    let mut y = vec![0.0; problem.num_scalars() + 1];
    for v in &problem.vars {
        if v.cone != VarCone::Positive {
            continue;
        }
        match v.shape {
            VarShape::Scalar => y[v.offset] = 1.0,
            VarShape::Sym(_) => {
                for k in 0..v.shape.count() {
                    let (a, b) = v.shape.position(k);
                    if a == b {
                        y[v.offset + k] = 1.0;
                    }
                }
            }
            VarShape::Full(..) => {}
        }
    }
    y
}

fn run(inst: &Instance, y0: &[f64], eps: f64, opts: &SdpOptions, trace_bound: f64) -> Result<Outcome, SdpError> {
    let m = inst.m;
    let mut y = y0.to_vec();
    let numerical = |iterations: usize, reason: &str| SdpError::Numerical {
        iterations,
        reason: reason.to_string(),
    };
    // shift the margin so every slack starts at least at one
    y[m] = 0.0;
    let (zs, zr) = inst.slacks(&y);
    let mut lo = f64::INFINITY;
    for z in &zs {
        let ev = z.symmetric_eigenvalues();
        lo = lo.min(ev.iter().copied().fold(f64::INFINITY, f64::min));
    }
    for (r, &v) in inst.rows.iter().zip(&zr) {
        if r.margin {
            lo = lo.min(v);
        }
    }
    y[m] = lo - 1.0;
    let (mut zs, mut zr) = inst.slacks(&y);
    if zr[inst.bound_row] <= 0.0 {
        return Err(numerical(0, "trace bound below the starting point"));
    }
    let n_margin: usize =
        inst.cones.iter().map(|c| c.dim).sum::<usize>() + inst.rows.iter().filter(|r| r.margin).count();
    let xi = 1.0 / n_margin as f64;
    let mut xs: Vec<DMatrix<f64>> = inst.cones.iter().map(|c| DMatrix::identity(c.dim, c.dim) * xi).collect();
    let mut xr: Vec<f64> = vec![xi; inst.rows.len()];
    let n_tot = (n_margin + 1) as f64;
    let mut b = DVector::zeros(m + 1);
    b[m] = 1.0;

    let mut diag = SdpDiagnostics {
        iterations: 0,
        margin: y[m],
        epsilon: eps,
        primal_objective: f64::INFINITY,
        primal_residual: f64::INFINITY,
        complementarity: f64::INFINITY,
        trace_bound,
        restarts: 0,
    };
    let primal_objective = |xs: &[DMatrix<f64>], xr: &[f64]| {
        let mut p = 0.0;
        for (c, x) in inst.cones.iter().zip(xs) {
            p -= inner(&c.f0, x);
        }
        for (r, &x) in inst.rows.iter().zip(xr) {
            p -= r.f0 * x;
        }
        p
    };
    // A stall is decided by the primal certificate when it is nearly feasible.
    macro_rules! stall {
        ($iter:expr, $reason:expr) => {{
            if diag.primal_residual < 1e-6 && diag.primal_objective < eps {
                return Ok(Outcome {
                    status: SdpStatus::Infeasible,
                    y,
                    diag,
                    bound_multiplier: xr[inst.bound_row],
                });
            }
            return Err(numerical($iter, $reason));
        }};
    }
    for iter in 0..opts.max_iterations {
        diag.iterations = iter;
        diag.margin = y[m];
        if y[m] >= eps {
            return Ok(Outcome {
                status: SdpStatus::Feasible,
                y,
                diag,
                bound_multiplier: xr[inst.bound_row],
            });
        }
        let Some(zinv) = zs.iter().map(chol_inverse).collect::<Option<Vec<DMatrix<f64>>>>() else {
            stall!(iter, "slack lost definiteness")
        };
        let mu = (xs.iter().zip(&zs).map(|(x, z)| inner(x, z)).sum::<f64>()
            + xr.iter().zip(&zr).map(|(a, b)| a * b).sum::<f64>())
            / n_tot;
        let ax = inst.adjoint(&xs, &xr);
        let rp = &b - &ax;
        let pres = rp.amax();
        let pobj = primal_objective(&xs, &xr);
        diag.primal_objective = pobj;
        diag.primal_residual = pres;
        diag.complementarity = mu;
        let converged = pres < 1e-9 && (pobj - y[m]).abs() < 1e-8 * (1.0 + y[m].abs());
        if (pres < 1e-9 && pobj < eps) || converged {
            return Ok(Outcome {
                status: SdpStatus::Infeasible,
                y,
                diag,
                bound_multiplier: xr[inst.bound_row],
            });
        }
        let mmat = inst.schur(&xs, &zinv, &xr, &zr);
        let azinv = inst.adjoint(&zinv, &zr.iter().map(|z| 1.0 / z).collect::<Vec<_>>());

        let direction = |rhs: &DVector<f64>, sigma_mu: f64, corr: Option<(&[DMatrix<f64>], &[f64])>| {
            let dy = solve_spd(&mmat, rhs)?;
            let (dzs, dzr) = inst.slack_direction(dy.as_slice());
            let mut dxs = Vec::with_capacity(xs.len());
            for k in 0..xs.len() {
                let mut t = &xs[k] * &dzs[k] * &zinv[k];
                if let Some((cxs, _)) = corr {
                    t += &cxs[k];
                }
                let sym = (&t + t.transpose()) * 0.5;
                dxs.push(&zinv[k] * sigma_mu - &xs[k] - sym);
            }
            let dxr: Vec<f64> = (0..xr.len())
                .map(|r| {
                    let mut v = sigma_mu / zr[r] - xr[r] - xr[r] * dzr[r] / zr[r];
                    if let Some((_, cr)) = corr {
                        v -= cr[r];
                    }
                    v
                })
                .collect();
            Some((dy, dzs, dzr, dxs, dxr))
        };
        let steps = |dxs: &[DMatrix<f64>], dzs: &[DMatrix<f64>], dxr: &[f64], dzr: &[f64]| -> Option<(f64, f64)> {
            let mut ap = max_step_lp(&xr, dxr);
            let mut ad = max_step_lp(&zr, dzr);
            for k in 0..xs.len() {
                ap = ap.min(max_step(&xs[k], &dxs[k])?);
                ad = ad.min(max_step(&zs[k], &dzs[k])?);
            }
            Some((ap, ad))
        };

        // predictor
        let Some((_, dzs_a, dzr_a, dxs_a, dxr_a)) = direction(&b, 0.0, None) else {
            stall!(iter, "singular Schur complement")
        };
        let Some((ap, ad)) = steps(&dxs_a, &dzs_a, &dxr_a, &dzr_a) else {
            stall!(iter, "step length")
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut mu_aff = 0.0;
        for k in 0..xs.len() {
            mu_aff += inner(&(&xs[k] + &dxs_a[k] * ap), &(&zs[k] + &dzs_a[k] * ad));
        }
        for r in 0..xr.len() {
            mu_aff += (xr[r] + ap * dxr_a[r]) * (zr[r] + ad * dzr_a[r]);
        }
        mu_aff /= n_tot;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let cxs: Vec<DMatrix<f64>> = (0..xs.len()).map(|k| &dxs_a[k] * &dzs_a[k] * &zinv[k]).collect();
        let cxr: Vec<f64> = (0..xr.len()).map(|r| dxr_a[r] * dzr_a[r] / zr[r]).collect();
        let rhs = &b - &azinv * (sigma * mu) + inst.adjoint(&cxs, &cxr);
        let Some((dy, dzs, dzr, dxs, dxr)) = direction(&rhs, sigma * mu, Some((&cxs, &cxr))) else {
            stall!(iter, "singular Schur complement")
        };
        let Some((ap, ad)) = steps(&dxs, &dzs, &dxr, &dzr) else {
            stall!(iter, "step length")
        };
        let mut ap = (opts.step_fraction * ap).min(1.0);
        let mut ad = (opts.step_fraction * ad).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            stall!(iter, "stalled")
        }
        // primal update, backing off when rounding breaks definiteness
        let mut tries = 0;
        loop {
            let xt: Vec<DMatrix<f64>> = (0..xs.len())
                .map(|k| {
                    let x = &xs[k] + &dxs[k] * ap;
                    (&x + x.transpose()) * 0.5
                })
                .collect();
            let xrt: Vec<f64> = (0..xr.len()).map(|r| xr[r] + ap * dxr[r]).collect();
            if xrt.iter().all(|&v| v > 0.0) && xt.iter().all(|x| x.clone().cholesky().is_some()) {
                xs = xt;
                xr = xrt;
                break;
            }
            tries += 1;
            ap *= 0.5;
            if tries > 30 {
                break;
            }
        }
        // recompute slacks from y so dual feasibility is exact; back off on loss of definiteness
        tries = 0;
        loop {
            let ytry: Vec<f64> = y.iter().zip(dy.iter()).map(|(a, d)| a + ad * d).collect();
            let (zt, zrt) = inst.slacks(&ytry);
            let ok = zrt.iter().all(|&v| v > 0.0) && zt.iter().all(|z| z.clone().cholesky().is_some());
            if ok {
                y = ytry;
                zs = zt;
                zr = zrt;
                break;
            }
            tries += 1;
            ad *= 0.5;
            if tries > 30 {
                stall!(iter, "dual step rejected")
            }
        }
    }
    diag.iterations = opts.max_iterations;
    diag.margin = y[m];
    Ok(Outcome {
        status: if y[m] >= eps {
            SdpStatus::Feasible
        } else {
            SdpStatus::IterationLimit
        },
        y,
        diag,
        bound_multiplier: xr[inst.bound_row],
    })
}

/// Search for a strictly feasible point of every inequality in `problem`.
pub fn solve_feasibility(problem: &LmiProblem, opts: &SdpOptions) -> Result<SdpSolution, SdpError> {
    problem.validate().map_err(SdpError::Malformed)?;
    let y0 = initial_point(problem);
    let start_trace: f64 = {
        let inst = build_instance(problem, 0.0);
        let row = &inst.rows[inst.bound_row];
        row.coeffs.iter().map(|&(k, c)| c * y0[k]).sum()
    };
    let mut bound = opts.trace_bound.max(10.0 * start_trace);
    let mut restarts = 0;
    loop {
        let inst = build_instance(problem, bound);
        let eps = opts.margin.unwrap_or(1e-7 * inst.scale);
        let out = run(&inst, &y0, eps, opts, bound)?;
        let mut diag = out.diag;
        diag.restarts = restarts;
        // concavity of the optimal margin in the bound gives an upper estimate
        let reachable = diag.primal_objective + out.bound_multiplier * (opts.max_trace_bound - bound);
        if out.status != SdpStatus::Feasible && bound < opts.max_trace_bound && reachable >= eps {
            bound = (bound * 100.0).min(opts.max_trace_bound);
            restarts += 1;
            continue;
        }
        let witness = problem.unpack(&out.y[..inst.m]);
        return Ok(SdpSolution {
            status: out.status,
            witness,
            diagnostics: diag,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::lmi::{constraint_margins, LmiBuilder};

    fn mixed_problem() -> LmiProblem {
        let mut p = LmiProblem::new();
        let q = p.add_var("Q", VarShape::Sym(3), VarCone::Positive);
        let y = p.add_var("Y", VarShape::Full(2, 3), VarCone::Free);
        let s = p.add_var("s", VarShape::Scalar, VarCone::Positive);
        let m = |r, c, seed: f64| DMatrix::from_fn(r, c, |i, j| ((i * 7 + j * 3) as f64 * 0.37 + seed).sin());
        let mut b = LmiBuilder::new("mixed", &[3, 2, 3]);
        b.term(q, 0, 0, m(3, 3, 0.1), DMatrix::identity(3, 3));
        b.term(y, 0, 0, m(3, 2, 0.2), DMatrix::identity(3, 3));
        b.term(q, 2, 0, m(3, 3, 0.3), m(3, 3, 0.4));
        b.term(y, 1, 0, DMatrix::identity(2, 2), m(3, 3, 0.5));
        b.term(s, 0, 2, m(3, 4, 0.6), m(4, 3, 0.7));
        b.scaled_identity(s, 1, -1.0);
        b.constant(0, 1, &m(3, 2, 0.8), 0, 0);
        p.add_lmi(b.finish());
        p
    }

    #[test]
    fn schur_and_adjoint_match_dense_evaluation() {
        let p = mixed_problem();
        let inst = build_instance(&p, 100.0);
        let n = inst.m + 1;
        let dense_a = |i: usize| -> Vec<DMatrix<f64>> {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            inst.slack_direction(&e).0.into_iter().map(|z| -z).collect()
        };
        let rnd_spd = |d: usize, seed: f64| {
            let g = DMatrix::from_fn(d, d, |i, j| ((i * 5 + j * 11) as f64 * 0.61 + seed).cos());
            &g * g.transpose() + DMatrix::identity(d, d)
        };
        let xs: Vec<_> = inst.cones.iter().enumerate().map(|(k, c)| rnd_spd(c.dim, k as f64)).collect();
        let zs: Vec<_> = inst.cones.iter().enumerate().map(|(k, c)| rnd_spd(c.dim, 3.0 + k as f64)).collect();
        let zinv: Vec<_> = zs.iter().map(|z| z.clone().try_inverse().unwrap()).collect();
        let xr = vec![0.5; inst.rows.len()];
        let zr = vec![2.0; inst.rows.len()];
        let mat = inst.schur(&xs, &zinv, &xr, &zr);
        let adj = inst.adjoint(&xs, &xr);
        let all: Vec<_> = (0..n).map(dense_a).collect();
        for i in 0..n {
            let mut a_x = 0.0;
            for k in 0..xs.len() {
                a_x += inner(&all[i][k], &xs[k]);
            }
            for j in 0..n {
                let mut v = 0.0;
                for k in 0..xs.len() {
                    v += (&all[i][k] * &xs[k] * &all[j][k] * &zinv[k]).trace();
                }
                let mut ei = vec![0.0; n];
                ei[i] = 1.0;
                let mut ej = vec![0.0; n];
                ej[j] = 1.0;
                let (_, ri) = inst.slack_direction(&ei);
                let (_, rj) = inst.slack_direction(&ej);
                for r in 0..xr.len() {
                    v += ri[r] * rj[r] * xr[r] / zr[r];
                }
                assert!((mat[(i, j)] - v).abs() < 1e-9 * (1.0 + v.abs()), "M[{i},{j}] {} vs {v}", mat[(i, j)]);
            }
            let lp: f64 = {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                let (_, r) = inst.slack_direction(&e);
                r.iter().zip(&xr).map(|(a, b)| -a * b).sum()
            };
            assert!((adj[i] - a_x - lp).abs() < 1e-10 * (1.0 + a_x.abs()), "A(X)[{i}]");
        }
    }

    #[test]
    fn trivially_feasible_with_free_scalar() {
        let mut p = LmiProblem::new();
        let s = p.add_var("s", VarShape::Scalar, VarCone::Free);
        let mut b = LmiBuilder::new("neg", &[3]);
        b.constant(0, 0, &(-DMatrix::<f64>::identity(3, 3)), 0, 0);
        b.scaled_identity(s, 0, 0.0);
        p.add_lmi(b.finish());
        let sol = solve_feasibility(&p, &SdpOptions::default()).unwrap();
        assert!(sol.is_feasible());
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        // x I ⪰ I and x I ⪯ −I
        let mut p = LmiProblem::new();
        let x = p.add_var("x", VarShape::Scalar, VarCone::Free);
        let mut b = LmiBuilder::new("lower", &[2]);
        b.constant(0, 0, &DMatrix::identity(2, 2), 0, 0);
        b.scaled_identity(x, 0, -1.0);
        p.add_lmi(b.finish());
        let mut b = LmiBuilder::new("upper", &[2]);
        b.constant(0, 0, &DMatrix::identity(2, 2), 0, 0);
        b.scaled_identity(x, 0, 1.0);
        p.add_lmi(b.finish());
        let sol = solve_feasibility(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn lyapunov_inequality_for_stable_matrix() {
        // Aᵀ P + P A ≺ 0, P ≻ 0 for a stable non-normal A
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 10.0, 0.0, 0.0, -2.0, 5.0, 0.0, 0.0, -0.5]);
        let mut p = LmiProblem::new();
        let pv = p.add_var("P", VarShape::Sym(3), VarCone::Positive);
        let mut b = LmiBuilder::new("lyap", &[3]);
        b.term(pv, 0, 0, a.transpose(), DMatrix::identity(3, 3));
        p.add_lmi(b.finish());
        let sol = solve_feasibility(&p, &SdpOptions::default()).unwrap();
        assert!(sol.is_feasible());
        let report = constraint_margins(&p, &sol.witness).unwrap();
        assert!(report.min_margin() >= 0.5 * sol.diagnostics.epsilon, "{report:?}");
    }

    #[test]
    fn lyapunov_inequality_for_unstable_matrix_is_infeasible() {
        let a = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 0.0, -1.0]);
        let mut p = LmiProblem::new();
        let pv = p.add_var("P", VarShape::Sym(2), VarCone::Positive);
        let mut b = LmiBuilder::new("lyap", &[2]);
        b.term(pv, 0, 0, a.transpose(), DMatrix::identity(2, 2));
        p.add_lmi(b.finish());
        let sol = solve_feasibility(&p, &SdpOptions::default()).unwrap();
        assert_ne!(sol.status, SdpStatus::Feasible);
    }

    #[test]
    fn state_feedback_synthesis() {
        // (A Q + Q Aᵀ − B Y − Yᵀ Bᵀ) ≺ 0 for an unstable controllable pair
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 2.0]);
        let bm = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let mut p = LmiProblem::new();
        let q = p.add_var("Q", VarShape::Sym(2), VarCone::Positive);
        let y = p.add_var("Y", VarShape::Full(1, 2), VarCone::Free);
        let mut b = LmiBuilder::new("stab", &[2]);
        b.term(q, 0, 0, a.clone(), DMatrix::identity(2, 2));
        b.term(y, 0, 0, -&bm, DMatrix::identity(2, 2));
        p.add_lmi(b.finish());
        let sol = solve_feasibility(&p, &SdpOptions::default()).unwrap();
        assert!(sol.is_feasible());
        let qv = sol.witness.get("Q").unwrap();
        let k = sol.witness.get("Y").unwrap() * qv.clone().try_inverse().unwrap();
        let closed = &a - &bm * k;
        assert!(crate::psdcheck::spectral_abscissa(&closed).unwrap() < 0.0);
    }
}
