//! Windowed product-sine profiles on the actuated face and the closed-form
//! one-dimensional integrals used to project them onto the Laplacian modes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// `sin(d*l)/d`, continuous at `d = 0`.
fn sin_over(d: f64, l: f64) -> f64 {
    let x = d * l;
    if x.abs() < 1e-5 {
        l * (1.0 - x * x / 6.0)
    } else {
        (x).sin() / d
    }
}

/// `(1 - cos(d*l))/d`, continuous at `d = 0`.
fn one_minus_cos_over(d: f64, l: f64) -> f64 {
    let x = d * l;
    if x.abs() < 1e-5 {
        d * l * l * 0.5 * (1.0 - x * x / 12.0)
    } else {
        (1.0 - x.cos()) / d
    }
}

/// ∫₀ˡ sin(αx)·sin(βx) dx
pub fn int_sin_sin(alpha: f64, beta: f64, l: f64) -> f64 {
    0.5 * (sin_over(alpha - beta, l) - sin_over(alpha + beta, l))
}

/// ∫₀ˡ sin(αx)·cos(βx) dx
pub fn int_sin_cos(alpha: f64, beta: f64, l: f64) -> f64 {
    0.5 * (one_minus_cos_over(alpha + beta, l) + one_minus_cos_over(alpha - beta, l))
}

/// Composite Simpson rule on `[lo, hi]` with `panels` (rounded up to even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, panels: usize) -> f64 {
    let n = panels.max(2) + panels % 2;
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + h * i as f64);
    }
    acc * h / 3.0
}

/// A separable profile `amplitude · Π_j sin(k_j π x_j / w_j) · χ[0, w_j](x_j)`
/// over the tangential coordinates of the face `x_M = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceProfile {
    pub amplitude: f64,
    /// Window extent along each tangential axis, anchored at the origin.
    pub windows: Vec<f64>,
    pub wavenumbers: Vec<u32>,
}

impl FaceProfile {
    pub fn new(amplitude: f64, windows: Vec<f64>, wavenumbers: Vec<u32>) -> Self {
        Self {
            amplitude,
            windows,
            wavenumbers,
        }
    }

    pub fn tangential_dim(&self) -> usize {
        self.windows.len()
    }

    /// Angular frequency `k_j π / w_j` along tangential axis `j`.
    pub fn frequency(&self, j: usize) -> f64 {
        self.wavenumbers[j] as f64 * PI / self.windows[j]
    }

    pub fn value(&self, xt: &[f64]) -> f64 {
        let mut v = self.amplitude;
        for (j, &x) in xt.iter().enumerate().take(self.windows.len()) {
            if x < 0.0 || x > self.windows[j] {
                return 0.0;
            }
            v *= (self.frequency(j) * x).sin();
        }
        v
    }

    /// Squared L² norm over the face.
    pub fn norm_sq(&self) -> f64 {
        self.amplitude * self.amplitude * self.windows.iter().map(|w| 0.5 * w).product::<f64>()
    }

    /// True when every window covers the full edge, in which case the profile
    /// is a multiple of a single face eigenfunction.
    pub fn is_full_face(&self, edges: &[f64]) -> bool {
        self.windows
            .iter()
            .zip(edges)
            .all(|(w, a)| ((w - a) / a).abs() < 1e-12)
    }

    /// Overlap with the orthonormal face function
    /// `Π_j sqrt(2/a_j) sin(n_j π x_j / a_j)`.
    pub fn face_overlap(&self, edges: &[f64], tangential_index: &[u32]) -> f64 {
        let mut v = self.amplitude;
        for j in 0..self.windows.len() {
            let a = edges[j];
            let beta = tangential_index[j] as f64 * PI / a;
            v *= (2.0 / a).sqrt() * int_sin_sin(self.frequency(j), beta, self.windows[j]);
        }
        v
    }

    /// Same overlap by separable Simpson quadrature over the window.
    pub fn face_overlap_quadrature(&self, edges: &[f64], tangential_index: &[u32], panels: usize) -> f64 {
        let mut v = self.amplitude;
        for j in 0..self.windows.len() {
            let a = edges[j];
            let beta = tangential_index[j] as f64 * PI / a;
            let alpha = self.frequency(j);
            v *= (2.0 / a).sqrt()
                * simpson(|x| (alpha * x).sin() * (beta * x).sin(), 0.0, self.windows[j], panels);
        }
        v
    }

    /// L² inner product of two profiles over the face.
    pub fn inner(&self, other: &FaceProfile) -> f64 {
        let mut v = self.amplitude * other.amplitude;
        for j in 0..self.windows.len() {
            let l = self.windows[j].min(other.windows[j]);
            v *= int_sin_sin(self.frequency(j), other.frequency(j), l);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin_sin_matches_simpson() {
        for &(a, b, l) in &[(1.0, 2.0, 1.3), (3.0, 3.0, 0.7), (2.0, 2.0 + 1e-9, 1.0), (PI, 2.0 * PI, 1.0)] {
            let q = simpson(|x| (a * x).sin() * (b * x).sin(), 0.0, l, 2048);
            assert!((int_sin_sin(a, b, l) - q).abs() < 1e-11, "{a} {b} {l}");
        }
    }

    #[test]
    fn sin_cos_matches_simpson() {
        for &(a, b, l) in &[(1.0, 2.0, 1.3), (3.0, 3.0, 0.7), (PI / 0.8, 0.5 * PI, 0.8)] {
            let q = simpson(|x| (a * x).sin() * (b * x).cos(), 0.0, l, 2048);
            assert!((int_sin_cos(a, b, l) - q).abs() < 1e-11, "{a} {b} {l}");
        }
    }

    #[test]
    fn full_face_profile_overlaps_single_mode() {
        let edges = [1.5f64.sqrt()];
        let p = FaceProfile::new(2.0, vec![edges[0]], vec![2]);
        assert!(p.is_full_face(&edges));
        assert!(p.face_overlap(&edges, &[1]).abs() < 1e-14);
        assert!(p.face_overlap(&edges, &[3]).abs() < 1e-14);
        let expected = 2.0 * (edges[0] / 2.0).sqrt();
        assert!((p.face_overlap(&edges, &[2]) - expected).abs() < 1e-13);
    }

    #[test]
    fn windowed_value_vanishes_outside() {
        let p = FaceProfile::new(1.0, vec![0.8], vec![1]);
        assert_eq!(p.value(&[0.9]), 0.0);
        assert!((p.value(&[0.4]) - 1.0).abs() < 1e-15);
    }
}
