//! Symmetric affine matrix inequalities over named decision variables.
//!
//! An inequality is `F₀ + Σ_t (T_t + T_tᵀ) ≺ 0`, where each term `T_t` places
//! `left · V · right` at a block position of the full matrix. Scalar
//! variables enter as `s · left · right`.

use nalgebra::DMatrix;

use crate::psdcheck::{max_eigenvalue, PsdError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarShape {
    /// Symmetric `n × n`.
    Sym(usize),
    /// Unstructured `r × c`.
    Full(usize, usize),
    Scalar,
}

impl VarShape {
    /// Number of free scalar entries.
    pub fn count(&self) -> usize {
        match *self {
            VarShape::Sym(n) => n * (n + 1) / 2,
            VarShape::Full(r, c) => r * c,
            VarShape::Scalar => 1,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match *self {
            VarShape::Sym(n) => (n, n),
            VarShape::Full(r, c) => (r, c),
            VarShape::Scalar => (1, 1),
        }
    }

    /// Matrix position of the `k`-th free entry (upper triangle for symmetric).
    pub fn position(&self, k: usize) -> (usize, usize) {
        match *self {
            VarShape::Sym(n) => {
                let mut row = 0;
                let mut rem = k;
                while rem >= n - row {
                    rem -= n - row;
                    row += 1;
                }
                (row, row + rem)
            }
            VarShape::Full(_, c) => (k / c, k % c),
            VarShape::Scalar => (0, 0),
        }
    }

    /// Assemble the matrix value from its free entries.
    pub fn assemble(&self, entries: &[f64]) -> DMatrix<f64> {
        let (r, c) = self.dims();
        let mut m = DMatrix::zeros(r, c);
        for (k, &v) in entries.iter().enumerate() {
            let (i, j) = self.position(k);
            m[(i, j)] = v;
            if let VarShape::Sym(_) = self {
                m[(j, i)] = v;
            }
        }
        m
    }

    /// Free entries of a matrix value.
    pub fn flatten(&self, m: &DMatrix<f64>) -> Vec<f64> {
        (0..self.count())
            .map(|k| {
                let (i, j) = self.position(k);
                m[(i, j)]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarCone {
    Free,
    /// Positive definite matrix or positive scalar.
    Positive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub shape: VarShape,
    pub cone: VarCone,
    /// Position of the first free entry in the stacked decision vector.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub var: usize,
    pub row: usize,
    pub col: usize,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lmi {
    pub name: String,
    pub dim: usize,
    pub constant: DMatrix<f64>,
    pub terms: Vec<Term>,
}

/// `constant + Σ coeff·s < 0` over scalar variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub name: String,
    pub constant: f64,
    pub coeffs: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LmiProblem {
    pub vars: Vec<Variable>,
    pub lmis: Vec<Lmi>,
    pub linear: Vec<LinearConstraint>,
}

/// Decision values, one matrix per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub names: Vec<String>,
    pub values: Vec<DMatrix<f64>>,
}

impl Witness {
    pub fn get(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.get(name).map(|m| m[(0, 0)])
    }
}

impl LmiProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: &str, shape: VarShape, cone: VarCone) -> usize {
        let offset = self.num_scalars();
        self.vars.push(Variable {
            name: name.to_string(),
            shape,
            cone,
            offset,
        });
        self.vars.len() - 1
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.vars.iter().map(|v| v.shape.count()).sum()
    }

    pub fn add_lmi(&mut self, lmi: Lmi) {
        self.lmis.push(lmi);
    }

    pub fn add_linear(&mut self, name: &str, constant: f64, coeffs: Vec<(usize, f64)>) {
        self.linear.push(LinearConstraint {
            name: name.to_string(),
            constant,
            coeffs,
        });
    }

    /// Split a stacked decision vector into per-variable matrices.
    pub fn unpack(&self, y: &[f64]) -> Witness {
        Witness {
            names: self.vars.iter().map(|v| v.name.clone()).collect(),
            values: self
                .vars
                .iter()
                .map(|v| v.shape.assemble(&y[v.offset..v.offset + v.shape.count()]))
                .collect(),
        }
    }

    pub fn pack(&self, w: &Witness) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.num_scalars());
        for (v, m) in self.vars.iter().zip(&w.values) {
            y.extend(v.shape.flatten(m));
        }
        y
    }

    /// Check term shapes against variable and block dimensions.
    pub fn validate(&self) -> Result<(), String> {
        for lmi in &self.lmis {
            if lmi.constant.nrows() != lmi.dim || lmi.constant.ncols() != lmi.dim {
                return Err(format!("{}: constant is not {}x{}", lmi.name, lmi.dim, lmi.dim));
            }
            for (k, t) in lmi.terms.iter().enumerate() {
                let v = self.vars.get(t.var).ok_or_else(|| format!("{}: term {k} has unknown variable", lmi.name))?;
                let (vr, vc) = v.shape.dims();
                let ok_inner = match v.shape {
                    VarShape::Scalar => t.left.ncols() == t.right.nrows(),
                    _ => t.left.ncols() == vr && t.right.nrows() == vc,
                };
                if !ok_inner {
                    return Err(format!("{}: term {k} does not conform with {}", lmi.name, v.name));
                }
                if t.row + t.left.nrows() > lmi.dim || t.col + t.right.ncols() > lmi.dim {
                    return Err(format!("{}: term {k} exceeds the matrix", lmi.name));
                }
            }
        }
        for lc in &self.linear {
            for &(v, _) in &lc.coeffs {
                if self.vars.get(v).map(|x| x.shape) != Some(VarShape::Scalar) {
                    return Err(format!("{}: linear constraints take scalar variables only", lc.name));
                }
            }
        }
        Ok(())
    }
}

impl Lmi {
    /// `F(V)` at the given variable values.
    pub fn evaluate(&self, values: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut f = self.constant.clone();
        for t in &self.terms {
            let v = &values[t.var];
            let block = if v.nrows() == 1 && v.ncols() == 1 && t.left.ncols() != 1 {
                &t.left * &t.right * v[(0, 0)]
            } else {
                &t.left * v * &t.right
            };
            let (r, c) = (t.row, t.col);
            let (h, w) = block.shape();
            let mut view = f.view_mut((r, c), (h, w));
            view += &block;
            let mut view = f.view_mut((c, r), (w, h));
            view += block.transpose();
        }
        f
    }
}

impl LinearConstraint {
    pub fn evaluate(&self, values: &[DMatrix<f64>]) -> f64 {
        self.constant + self.coeffs.iter().map(|&(v, c)| c * values[v][(0, 0)]).sum::<f64>()
    }
}

/// Block-partitioned construction of one inequality.
pub struct LmiBuilder {
    name: String,
    offsets: Vec<usize>,
    sizes: Vec<usize>,
    constant: DMatrix<f64>,
    terms: Vec<Term>,
}

impl LmiBuilder {
    pub fn new(name: &str, sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &s in sizes {
            offsets.push(acc);
            acc += s;
        }
        Self {
            name: name.to_string(),
            offsets,
            sizes: sizes.to_vec(),
            constant: DMatrix::zeros(acc, acc),
            terms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    pub fn size(&self, block: usize) -> usize {
        self.sizes[block]
    }

    /// Constant contribution at block `(r, c)`; the mirror block gets the transpose.
    /// Diagonal contributions are symmetrized.
    pub fn constant(&mut self, r: usize, c: usize, m: &DMatrix<f64>, row_shift: usize, col_shift: usize) {
        let (ro, co) = (self.offsets[r] + row_shift, self.offsets[c] + col_shift);
        let (h, w) = m.shape();
        if r == c && row_shift == col_shift {
            let s = (m + m.transpose()) * 0.5;
            let mut view = self.constant.view_mut((ro, co), (h, w));
            view += &s;
        } else {
            let mut view = self.constant.view_mut((ro, co), (h, w));
            view += m;
            let mut view = self.constant.view_mut((co, ro), (w, h));
            view += m.transpose();
        }
    }

    /// Block `(r, c)` receives `left · V · right`, its mirror the transpose. On
    /// the diagonal both land in the same block.
    pub fn term(&mut self, var: usize, r: usize, c: usize, left: DMatrix<f64>, right: DMatrix<f64>) {
        self.term_at(var, r, 0, c, 0, left, right);
    }

    /// As [`term`](Self::term) with offsets inside the blocks.
    #[allow(clippy::too_many_arguments)]
    pub fn term_at(
        &mut self,
        var: usize,
        r: usize,
        row_shift: usize,
        c: usize,
        col_shift: usize,
        left: DMatrix<f64>,
        right: DMatrix<f64>,
    ) {
        self.terms.push(Term {
            var,
            row: self.offsets[r] + row_shift,
            col: self.offsets[c] + col_shift,
            left,
            right,
        });
    }

    /// `coef · s · I` on diagonal block `r` for a scalar variable `s`.
    pub fn scaled_identity(&mut self, var: usize, r: usize, coef: f64) {
        let n = self.sizes[r];
        self.term(var, r, r, DMatrix::identity(n, n) * (0.5 * coef), DMatrix::identity(n, n));
    }

    /// `coef · s · I` on a sub-range of diagonal block `r`.
    pub fn scaled_identity_at(&mut self, var: usize, r: usize, shift: usize, n: usize, coef: f64) {
        self.term_at(var, r, shift, r, shift, DMatrix::identity(n, n) * (0.5 * coef), DMatrix::identity(n, n));
    }

    pub fn finish(self) -> Lmi {
        Lmi {
            name: self.name,
            dim: self.constant.nrows(),
            constant: self.constant,
            terms: self.terms,
        }
    }
}

/// Margin by which each constraint of `problem` holds at `witness`, using the
/// independent eigen-solver. Positive means strictly satisfied.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    pub entries: Vec<(String, f64)>,
}

impl MarginReport {
    pub fn min_margin(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(f64::INFINITY, f64::min)
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.entries.iter().min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

pub fn constraint_margins(problem: &LmiProblem, witness: &Witness) -> Result<MarginReport, PsdError> {
    let mut entries = Vec::new();
    for lmi in &problem.lmis {
        let f = lmi.evaluate(&witness.values);
        entries.push((lmi.name.clone(), -max_eigenvalue(&f)?));
    }
    for lc in &problem.linear {
        entries.push((lc.name.clone(), -lc.evaluate(&witness.values)));
    }
    for (v, val) in problem.vars.iter().zip(&witness.values) {
        if v.cone == VarCone::Positive {
            let m = match v.shape {
                VarShape::Scalar => val[(0, 0)],
                _ => crate::psdcheck::min_eigenvalue(val)?,
            };
            entries.push((format!("{} > 0", v.name), m));
        }
    }
    Ok(MarginReport { entries })
}
