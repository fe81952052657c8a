//! Node grid for the finite-difference plant.
//!
//! Tangential axes keep their interior nodes only (both ends are Dirichlet).
//! The normal axis keeps `x_M = 0` (Neumann, handled with a ghost node) and
//! drops `x_M = a_M`. The normal axis is the fastest-varying index, so the
//! first node of every normal column lies on the actuated face.

use thiserror::Error;

use crate::spectral::BoxDomain;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("axis {axis}: spacing {spacing} must be positive and below the edge length")]
    Spacing { axis: usize, spacing: f64 },
    #[error("CFL number {0} exceeds 1")]
    Cfl(f64),
    #[error("discrete modes are not orthonormal: deviation {0:.3e}")]
    UnderResolved(f64),
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub edges: Vec<f64>,
    /// Actual spacing per axis, `a_k / n_k`.
    pub spacing: Vec<f64>,
    /// Retained node count per axis.
    pub counts: Vec<usize>,
    pub strides: Vec<usize>,
    /// Trapezoid weight of each node.
    pub weights: Vec<f64>,
    /// Trapezoid weight of each node on the actuated face.
    pub face_weights: Vec<f64>,
}

impl Grid {
    /// Cells of roughly `h[k]` along axis `k`, rounded so the edges are hit exactly.
    pub fn new(domain: &BoxDomain, h: &[f64]) -> Result<Self, GridError> {
        let edges = domain.edges().to_vec();
        let m = edges.len();
        let mut spacing = Vec::with_capacity(m);
        let mut counts = Vec::with_capacity(m);
        for (axis, &a) in edges.iter().enumerate() {
            let target = h.get(axis).copied().unwrap_or(h[h.len() - 1]);
            if !(target > 0.0 && target < a) {
                return Err(GridError::Spacing { axis, spacing: target });
            }
            let n = (a / target).round().max(2.0) as usize;
            spacing.push(a / n as f64);
            counts.push(if axis == m - 1 { n } else { n - 1 });
        }
        let mut strides = vec![1; m];
        for k in (0..m - 1).rev() {
            strides[k] = strides[k + 1] * counts[k + 1];
        }
        let cells: usize = counts.iter().product();
        let face_cell: f64 = spacing[..m - 1].iter().product();
        let hm = spacing[m - 1];
        let weights = (0..cells)
            .map(|c| if c % counts[m - 1] == 0 { face_cell * hm * 0.5 } else { face_cell * hm })
            .collect();
        let faces = cells / counts[m - 1];
        Ok(Self {
            edges,
            spacing,
            counts,
            strides,
            weights,
            face_weights: vec![face_cell; faces],
        })
    }

    pub fn dim(&self) -> usize {
        self.edges.len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn faces(&self) -> usize {
        self.face_weights.len()
    }

    /// Grid index along each axis.
    pub fn index(&self, cell: usize) -> Vec<usize> {
        let mut rest = cell;
        self.strides
            .iter()
            .map(|&s| {
                let i = rest / s;
                rest %= s;
                i
            })
            .collect()
    }

    pub fn coords(&self, cell: usize) -> Vec<f64> {
        let m = self.dim();
        self.index(cell)
            .iter()
            .enumerate()
            .map(|(k, &i)| if k == m - 1 { i as f64 * self.spacing[k] } else { (i + 1) as f64 * self.spacing[k] })
            .collect()
    }

    /// Cell on the actuated face of normal column `face`.
    pub fn face_cell(&self, face: usize) -> usize {
        face * self.counts[self.dim() - 1]
    }

    /// Tangential coordinates of face node `face`.
    pub fn face_coords(&self, face: usize) -> Vec<f64> {
        let mut x = self.coords(self.face_cell(face));
        x.pop();
        x
    }

    /// `Σ_k 2Δt/h_k²`.
    pub fn cfl(&self, dt: f64) -> f64 {
        self.spacing.iter().map(|h| 2.0 * dt / (h * h)).sum()
    }

    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|c| f(&self.coords(c))).collect()
    }

    pub fn sample_face<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.faces()).map(|i| f(&self.face_coords(i))).collect()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }

    pub fn norm_sq(&self, a: &[f64]) -> f64 {
        self.inner(a, a)
    }

    pub fn face_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.face_weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }

    fn index_cache(&self) -> Vec<Vec<usize>> {
        let m = self.dim();
        (0..m - 1)
            .map(|k| (0..self.len()).map(|c| (c / self.strides[k]) % self.counts[k]).collect())
            .collect()
    }
}

/// Finite-difference Laplacian with zero Dirichlet data and the ghost node
/// `z(−h) = z(h) + 2h·flux` on the face, `flux` indexed by face node.
#[derive(Debug, Clone)]
pub struct Stencil {
    grid: Grid,
    tangential: Vec<Vec<u32>>,
}

impl Stencil {
    pub fn new(grid: Grid) -> Self {
        let tangential = grid
            .index_cache()
            .into_iter()
            .map(|v| v.into_iter().map(|i| i as u32).collect())
            .collect();
        Self { grid, tangential }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn apply(&self, z: &[f64], flux: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let m = g.dim();
        let nm = g.counts[m - 1];
        let hm = g.spacing[m - 1];
        let im = 1.0 / (hm * hm);
        for (face, col) in z.chunks(nm).enumerate() {
            let base = face * nm;
            for j in 0..nm {
                let below = if j == 0 { col.get(1).copied().unwrap_or(0.0) + 2.0 * hm * flux[face] } else { col[j - 1] };
                let above = if j + 1 < nm { col[j + 1] } else { 0.0 };
                out[base + j] = (below + above - 2.0 * col[j]) * im;
            }
        }
        for k in 0..m - 1 {
            let s = g.strides[k];
            let n = g.counts[k] as u32;
            let ik = 1.0 / (g.spacing[k] * g.spacing[k]);
            let idx = &self.tangential[k];
            for c in 0..z.len() {
                let i = idx[c];
                let lo = if i > 0 { z[c - s] } else { 0.0 };
                let hi = if i + 1 < n { z[c + s] } else { 0.0 };
                out[c] += (lo + hi - 2.0 * z[c]) * ik;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_2d() -> Grid {
        Grid::new(&BoxDomain::new(vec![1.5f64.sqrt(), 1.0]).unwrap(), &[0.02]).unwrap()
    }

    #[test]
    fn layout_and_weights() {
        let g = grid_2d();
        assert_eq!(g.counts, vec![60, 50]);
        assert!((g.spacing[0] - 1.5f64.sqrt() / 61.0).abs() < 1e-15);
        let x = g.coords(g.face_cell(3));
        assert_eq!(x[1], 0.0);
        assert!((x[0] - 4.0 * g.spacing[0]).abs() < 1e-15);
        // constant 1 integrates to the area minus the dropped half-cells along Dirichlet edges
        let ones = vec![1.0; g.len()];
        let area = g.inner(&ones, &ones);
        let exact = 1.5f64.sqrt() * 1.0;
        assert!((area - exact).abs() < 0.05 * exact);
    }

    #[test]
    fn discrete_eigenfunction_is_exact_eigenvector() {
        let domain = BoxDomain::new(vec![1.5f64.sqrt(), 1.0]).unwrap();
        let g = Grid::new(&domain, &[0.02]).unwrap();
        let phi = g.sample(|x| domain.eigenfunction(&[2, 1], x));
        let mut out = vec![0.0; g.len()];
        Stencil::new(g.clone()).apply(&phi, &vec![0.0; g.faces()], &mut out);
        let mut ev = 0.0;
        for (k, &n) in [2.0f64, 0.5].iter().enumerate() {
            let kk = n * std::f64::consts::PI / domain.edges()[k];
            ev += 2.0 * (1.0 - (kk * g.spacing[k]).cos()) / (g.spacing[k] * g.spacing[k]);
        }
        for c in 0..g.len() {
            assert!((out[c] + ev * phi[c]).abs() < 1e-8 * ev);
        }
    }

    #[test]
    fn ghost_node_imposes_flux() {
        // z = -x_M·b has ∂z/∂ν = b; its second difference vanishes except at the face
        let domain = BoxDomain::new(vec![1.0, 1.0]).unwrap();
        let g = Grid::new(&domain, &[0.1]).unwrap();
        let z = g.sample(|x| -x[1]);
        let mut out = vec![0.0; g.len()];
        Stencil::new(g.clone()).apply(&z, &vec![1.0; g.faces()], &mut out);
        for face in 0..g.faces() {
            let c = g.face_cell(face);
            assert!(out[c].abs() < 1e-9, "{}", out[c]);
        }
    }

    #[test]
    fn spacing_validation() {
        let domain = BoxDomain::new(vec![1.0, 1.0]).unwrap();
        assert!(Grid::new(&domain, &[0.0]).is_err());
        assert!(Grid::new(&domain, &[2.0]).is_err());
    }
}
