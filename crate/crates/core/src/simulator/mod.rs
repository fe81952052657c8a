//! Closed-loop stochastic simulation: explicit finite differences for the
//! plant, explicit Euler for the observer and the actuator states, and
//! Euler–Maruyama for the noise.

pub mod grid;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::profile::FaceProfile;
use crate::shapes::Actuator;
use crate::spectral::BoxDomain;
use grid::{Grid, GridError, Stencil};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid setting: {0}")]
    Setting(String),
    #[error("path (seed {seed}, stream {stream}) diverged at t = {time}")]
    Diverged { seed: u64, stream: u64, time: f64 },
}

/// `f(x, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity {
    Zero,
    /// `scale · sin z`.
    Sin { scale: f64 },
}

impl Nonlinearity {
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Sin { scale } => scale * z.sin(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero) || matches!(self, Nonlinearity::Sin { scale } if *scale == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    None,
    /// `σ_g sin z · dW` with one scalar Brownian motion shared over the domain.
    Multiplicative { sigma_g: f64 },
    /// `g(x) Σ dW` with `g ≡ 1`, constant `Σ` and a scalar Brownian motion.
    Additive { sigma: f64 },
}

/// Which field the finite-difference scheme advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantForm {
    /// `w = z − ψᵀu` with zero flux on the actuated face and the source
    /// `−ψᵀv`; `z` is reconstructed for `f`, `g` and the measurement.
    Lifted,
    /// `z` itself, with the ghost node `z(−h) = z(h) + 2h·Σ bᵢuᵢ`.
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// `Π_{k<M} x_k (x_k/a_k − 1) · ((x_M/a_M)³ − (x_M/a_M)²)`.
    Polynomial,
    /// A single eigenfunction with the given multi-index.
    Mode(Vec<u32>),
    Zero,
}

impl InitialCondition {
    pub fn eval(&self, domain: &BoxDomain, x: &[f64]) -> f64 {
        match self {
            InitialCondition::Polynomial => {
                let e = domain.edges();
                let m = e.len();
                let mut v = 1.0;
                for k in 0..m - 1 {
                    v *= x[k] * (x[k] / e[k] - 1.0);
                }
                let s = x[m - 1] / e[m - 1];
                v * (s * s * s - s * s)
            }
            InitialCondition::Mode(index) => domain.eigenfunction(index, x),
            InitialCondition::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    /// Target spacing per axis; a single entry applies to every axis.
    pub h: Vec<f64>,
    pub horizon: f64,
    /// Record every `stride` steps.
    pub stride: usize,
    pub plant: PlantForm,
    pub nonlinearity: Nonlinearity,
    pub noise: NoiseModel,
    pub initial: InitialCondition,
    /// When false the input stays at zero.
    pub control: bool,
    /// Keep `(w_n, ŵ_n, u)` at every recorded time.
    pub record_modal: bool,
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Everything the simulated loop needs from the design.
#[derive(Debug, Clone)]
pub struct ClosedLoopModel {
    pub domain: BoxDomain,
    pub q: f64,
    pub actuators: Vec<Actuator>,
    pub sensors: Vec<FaceProfile>,
    /// Multi-indices of the `N` observer modes.
    pub modes: Vec<Vec<u32>>,
    pub lambdas: Vec<f64>,
    /// `B` (N × d).
    pub b: DMatrix<f64>,
    /// `L = [L₀; 0]` (N × d).
    pub l: DMatrix<f64>,
    /// `K` (d × (d+N)) acting on `(u, ŵ₁..ŵ_N)`.
    pub k: DMatrix<f64>,
    pub xi0: Vec<f64>,
}

impl ClosedLoopModel {
    pub fn n(&self) -> usize {
        self.modes.len()
    }

    pub fn d(&self) -> usize {
        self.actuators.len()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let (n, d) = (self.n(), self.d());
        let bad = |what: &str| Err(SimError::Dimension(what.to_string()));
        if self.sensors.len() != d || self.xi0.len() != d {
            return bad("sensor count or Ξ₀ length differs from the actuator count");
        }
        if self.lambdas.len() != n || self.b.shape() != (n, d) || self.l.shape() != (n, d) {
            return bad("λ, B or L does not match N × d");
        }
        if self.k.shape() != (d, n + d) {
            return bad("K is not d × (N+d)");
        }
        let m = self.domain.dim();
        if self.modes.iter().any(|i| i.len() != m) {
            return bad("mode index length differs from the domain dimension");
        }
        Ok(())
    }
}

/// Grid tensors shared read-only by every path.
#[derive(Debug, Clone)]
pub struct Precomputed {
    pub stencil: Stencil,
    /// `φ_n` at the nodes, row `n` contiguous.
    pub phi: Vec<f64>,
    /// `ψ_i` at the nodes, row `i` contiguous.
    pub psi: Vec<f64>,
    /// `b_i` on the face nodes.
    pub b_face: Vec<f64>,
    /// `c_m` on the face nodes.
    pub c_face: Vec<f64>,
    /// Discrete `⟨c_m, φ_n⟩_Γ` (d × N).
    pub cg: DMatrix<f64>,
    /// Discrete `⟨c_m, ψ_i⟩_Γ` (d × d).
    pub pg: DMatrix<f64>,
    pub z0: Vec<f64>,
    /// Largest deviation of the discrete Gram matrix of `φ_1..φ_N` from `I`.
    pub orthonormality: f64,
}

impl Precomputed {
    pub fn grid(&self) -> &Grid {
        self.stencil.grid()
    }
}

pub const ORTHONORMALITY_TOL: f64 = 1e-4;

pub fn precompute(model: &ClosedLoopModel, cfg: &SimConfig) -> Result<Precomputed, SimError> {
    model.validate()?;
    if !(cfg.dt > 0.0 && cfg.horizon > 0.0 && cfg.stride > 0) {
        return Err(SimError::Setting("dt, horizon and stride must be positive".into()));
    }
    let grid = Grid::new(&model.domain, &cfg.h)?;
    let cfl = grid.cfl(cfg.dt);
    if cfl > 1.0 {
        return Err(GridError::Cfl(cfl).into());
    }
    let (n, d) = (model.n(), model.d());
    let cells = grid.len();
    let mut phi = Vec::with_capacity(n * cells);
    for idx in &model.modes {
        phi.extend(grid.sample(|x| model.domain.eigenfunction(idx, x)));
    }
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in a..n {
            let g = grid.inner(&phi[a * cells..(a + 1) * cells], &phi[b * cells..(b + 1) * cells]);
            worst = worst.max((g - if a == b { 1.0 } else { 0.0 }).abs());
        }
    }
    if worst > ORTHONORMALITY_TOL {
        return Err(GridError::UnderResolved(worst).into());
    }
    let mut psi = Vec::with_capacity(d * cells);
    let mut b_face = Vec::with_capacity(d * grid.faces());
    for a in &model.actuators {
        psi.extend(grid.sample(|x| a.psi(x)));
        b_face.extend(grid.sample_face(|xt| a.boundary(xt)));
    }
    let mut c_face = Vec::with_capacity(d * grid.faces());
    for c in &model.sensors {
        c_face.extend(grid.sample_face(|xt| c.value(xt)));
    }
    let faces = grid.faces();
    let on_face = |row: &[f64]| -> Vec<f64> { (0..faces).map(|f| row[grid.face_cell(f)]).collect() };
    let cg = DMatrix::from_fn(d, n, |m, j| {
        grid.face_inner(&c_face[m * faces..(m + 1) * faces], &on_face(&phi[j * cells..(j + 1) * cells]))
    });
    let pg = DMatrix::from_fn(d, d, |m, i| {
        grid.face_inner(&c_face[m * faces..(m + 1) * faces], &on_face(&psi[i * cells..(i + 1) * cells]))
    });
    let z0 = grid.sample(|x| cfg.initial.eval(&model.domain, x));
    Ok(Precomputed {
        stencil: Stencil::new(grid),
        phi,
        psi,
        b_face,
        c_face,
        cg,
        pg,
        z0,
        orthonormality: worst,
    })
}

/// `(w_n, ŵ_n, u)` at one recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalSample {
    pub w: Vec<f64>,
    pub w_hat: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub seed: u64,
    pub stream: u64,
    pub times: Vec<f64>,
    /// `‖w‖²` with `w = z − ψᵀu`.
    pub w_sq: Vec<f64>,
    pub u_sq: Vec<f64>,
    /// `|e^N|²` with `e_n = ⟨w, φ_n⟩ − ŵ_n`.
    pub e_sq: Vec<f64>,
    pub z_sq: Vec<f64>,
    pub modal: Vec<ModalSample>,
}

impl PathRecord {
    /// `‖w‖² + |u|² + |e^N|²`.
    pub fn energy(&self) -> Vec<f64> {
        (0..self.times.len()).map(|i| self.w_sq[i] + self.u_sq[i] + self.e_sq[i]).collect()
    }
}

/// `z + sign·ψᵀu` into `out`.
fn shift_by_psi(pre: &Precomputed, field: &[f64], u: &[f64], sign: f64, out: &mut [f64]) {
    let cells = field.len();
    out.copy_from_slice(field);
    for (i, &ui) in u.iter().enumerate() {
        if ui != 0.0 {
            for (o, p) in out.iter_mut().zip(&pre.psi[i * cells..(i + 1) * cells]) {
                *o += sign * p * ui;
            }
        }
    }
}

fn record(pre: &Precomputed, w: &[f64], z: &[f64], u: &[f64], w_hat: &[f64], keep_modal: bool, t: f64, out: &mut PathRecord) -> bool {
    let grid = pre.grid();
    let cells = grid.len();
    let wn: Vec<f64> = (0..w_hat.len()).map(|n| grid.inner(&w, &pre.phi[n * cells..(n + 1) * cells])).collect();
    let e_sq: f64 = wn.iter().zip(w_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    let w_sq = grid.norm_sq(w);
    let u_sq: f64 = u.iter().map(|v| v * v).sum();
    let z_sq = grid.norm_sq(z);
    out.times.push(t);
    out.w_sq.push(w_sq);
    out.u_sq.push(u_sq);
    out.e_sq.push(e_sq);
    out.z_sq.push(z_sq);
    if keep_modal {
        out.modal.push(ModalSample {
            w: wn,
            w_hat: w_hat.to_vec(),
            u: u.to_vec(),
        });
    }
    [w_sq, u_sq, e_sq, z_sq].iter().all(|v| v.is_finite() && *v < 1e100)
}

/// One sample path, reproducible from `(seed, stream)`.
pub fn simulate_path(model: &ClosedLoopModel, pre: &Precomputed, cfg: &SimConfig, seed: u64, stream: u64) -> Result<PathRecord, SimError> {
    let grid = pre.grid();
    let cells = grid.len();
    let faces = grid.faces();
    let (n, d) = (model.n(), model.d());
    let dt = cfg.dt;
    let sqdt = dt.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let lifted = cfg.plant == PlantForm::Lifted;
    // the advanced field: w when lifted, z otherwise; u(0) = 0 makes both start at z₀
    let mut x = pre.z0.clone();
    let mut other = pre.z0.clone();
    let mut u = vec![0.0; d];
    let mut w_hat = vec![0.0; n];
    let mut lap = vec![0.0; cells];
    let mut flux = vec![0.0; faces];
    let mut z_hat = vec![0.0; cells];
    let mut source = vec![0.0; cells];
    let a_diag: Vec<f64> = model.lambdas.iter().map(|l| -l + model.q).collect();
    let observe_f = !cfg.nonlinearity.is_zero();
    let need_z = lifted && (observe_f || !matches!(cfg.noise, NoiseModel::None));

    let mut out = PathRecord {
        seed,
        stream,
        times: Vec::new(),
        w_sq: Vec::new(),
        u_sq: Vec::new(),
        e_sq: Vec::new(),
        z_sq: Vec::new(),
        modal: Vec::new(),
    };
    record(pre, &x, &x, &u, &w_hat, cfg.record_modal, 0.0, &mut out);
    let steps = cfg.steps();
    for step in 0..steps {
        // z, needed whole only for f and g in the lifted form
        if need_z {
            shift_by_psi(pre, &x, &u, 1.0, &mut other);
        }
        let z: &[f64] = if lifted { &other } else { &x };
        let y: Vec<f64> = (0..d)
            .map(|m| {
                (0..faces)
                    .map(|f| {
                        let c = grid.face_cell(f);
                        let zc = if lifted && !need_z { x[c] + (0..d).map(|i| pre.psi[i * cells + c] * u[i]).sum::<f64>() } else { z[c] };
                        pre.c_face[m * faces + f] * zc * grid.face_weights[f]
                    })
                    .sum()
            })
            .collect();
        let uv = DVector::from_column_slice(&u);
        let wv = DVector::from_column_slice(&w_hat);
        let y_hat = &pre.cg * &wv + &pre.pg * &uv;
        let v: Vec<f64> = if cfg.control {
            let ext = DVector::from_iterator(d + n, u.iter().chain(&w_hat).copied());
            (-&model.k * ext).iter().copied().collect()
        } else {
            vec![0.0; d]
        };
        let mut f_hat = vec![0.0; n];
        if observe_f {
            z_hat.iter_mut().for_each(|x| *x = 0.0);
            for j in 0..n {
                let c = w_hat[j];
                for (zc, p) in z_hat.iter_mut().zip(&pre.phi[j * cells..(j + 1) * cells]) {
                    *zc += c * p;
                }
            }
            for i in 0..d {
                for (zc, p) in z_hat.iter_mut().zip(&pre.psi[i * cells..(i + 1) * cells]) {
                    *zc += u[i] * p;
                }
            }
            for (zc, w) in z_hat.iter_mut().zip(&grid.weights) {
                *zc = cfg.nonlinearity.eval(*zc) * w;
            }
            for (j, fj) in f_hat.iter_mut().enumerate() {
                *fj = pre.phi[j * cells..(j + 1) * cells].iter().zip(&z_hat).map(|(p, g)| p * g).sum();
            }
        }
        if lifted {
            source.iter_mut().for_each(|s| *s = 0.0);
            for i in 0..d {
                if v[i] != 0.0 {
                    for (s, p) in source.iter_mut().zip(&pre.psi[i * cells..(i + 1) * cells]) {
                        *s -= p * v[i];
                    }
                }
            }
        } else {
            for (f, fl) in flux.iter_mut().enumerate() {
                *fl = (0..d).map(|i| pre.b_face[i * faces + f] * u[i]).sum();
            }
        }
        pre.stencil.apply(&x, &flux, &mut lap);
        let dw: f64 = match cfg.noise {
            NoiseModel::None => 0.0,
            _ => {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * sqdt
            }
        };
        let q = model.q;
        for c in 0..cells {
            let xc = x[c];
            let zc = if need_z { other[c] } else { xc };
            let noise = match cfg.noise {
                NoiseModel::None => 0.0,
                NoiseModel::Multiplicative { sigma_g } => sigma_g * zc.sin() * dw,
                NoiseModel::Additive { sigma } => sigma * dw,
            };
            x[c] += dt * (lap[c] + q * xc + source[c] + cfg.nonlinearity.eval(zc)) + noise;
        }
        let innov: Vec<f64> = (0..d).map(|m| y_hat[m] - y[m]).collect();
        for j in 0..n {
            let mut rhs = a_diag[j] * w_hat[j] + f_hat[j];
            for i in 0..d {
                rhs += model.b[(j, i)] * v[i] - model.l[(j, i)] * innov[i];
            }
            w_hat[j] += dt * rhs;
        }
        for i in 0..d {
            u[i] += dt * (model.xi0[i] * u[i] + v[i]);
        }
        if (step + 1) % cfg.stride == 0 || step + 1 == steps {
            let t = (step + 1) as f64 * dt;
            let recorded = if lifted {
                shift_by_psi(pre, &x, &u, 1.0, &mut other);
                record(pre, &x, &other, &u, &w_hat, cfg.record_modal, t, &mut out)
            } else {
                shift_by_psi(pre, &x, &u, -1.0, &mut other);
                record(pre, &other, &x, &u, &w_hat, cfg.record_modal, t, &mut out)
            };
            if !recorded {
                return Err(SimError::Diverged { seed, stream, time: t });
            }
        }
    }
    Ok(out)
}

/// Sample statistics over paths, per recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStats {
    pub times: Vec<f64>,
    pub mean_energy: Vec<f64>,
    /// Sample standard deviation (zero for a single path).
    pub std_energy: Vec<f64>,
    pub mean_u_sq: Vec<f64>,
    pub mean_e_sq: Vec<f64>,
    pub mean_w_sq: Vec<f64>,
    /// `(seed, stream)` of every path in order.
    pub seeds: Vec<(u64, u64)>,
}

impl TrajectoryStats {
    pub fn from_paths(paths: &[PathRecord]) -> Result<Self, SimError> {
        let first = paths.first().ok_or_else(|| SimError::Setting("no paths".into()))?;
        let nt = first.times.len();
        if paths.iter().any(|p| p.times.len() != nt) {
            return Err(SimError::Dimension("paths have different lengths".into()));
        }
        let k = paths.len() as f64;
        let energies: Vec<Vec<f64>> = paths.iter().map(|p| p.energy()).collect();
        let mean = |f: &dyn Fn(&PathRecord, usize) -> f64| -> Vec<f64> {
            (0..nt).map(|i| paths.iter().map(|p| f(p, i)).sum::<f64>() / k).collect()
        };
        let mean_energy: Vec<f64> = (0..nt).map(|i| energies.iter().map(|e| e[i]).sum::<f64>() / k).collect();
        let std_energy = (0..nt)
            .map(|i| {
                if paths.len() < 2 {
                    return 0.0;
                }
                let m = mean_energy[i];
                (energies.iter().map(|e| (e[i] - m) * (e[i] - m)).sum::<f64>() / (k - 1.0)).sqrt()
            })
            .collect();
        Ok(Self {
            times: first.times.clone(),
            mean_u_sq: mean(&|p, i| p.u_sq[i]),
            mean_e_sq: mean(&|p, i| p.e_sq[i]),
            mean_w_sq: mean(&|p, i| p.w_sq[i]),
            mean_energy,
            std_energy,
            seeds: paths.iter().map(|p| (p.seed, p.stream)).collect(),
        })
    }

    /// Mean energy at the recorded time closest to `t`.
    pub fn energy_at(&self, t: f64) -> f64 {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.mean_energy[i]
    }

    /// Mean of the mean energy over recorded times in `[from, to]`.
    pub fn plateau(&self, from: f64, to: f64) -> f64 {
        let vals: Vec<f64> = self
            .times
            .iter()
            .zip(&self.mean_energy)
            .filter(|(t, _)| **t >= from && **t <= to)
            .map(|(_, e)| *e)
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }

    pub fn to_csv(&self, comment: &str) -> String {
        let mut s = String::new();
        for line in comment.lines() {
            let _ = writeln!(s, "# {line}");
        }
        s.push_str("t,mean_energy,std_energy,mean_u2,mean_err2\n");
        for i in 0..self.times.len() {
            let _ = writeln!(
                s,
                "{:.6},{:.9e},{:.9e},{:.9e},{:.9e}",
                self.times[i], self.mean_energy[i], self.std_energy[i], self.mean_u_sq[i], self.mean_e_sq[i]
            );
        }
        s
    }

    /// Mean energy against time on a logarithmic axis.
    pub fn to_svg(&self, title: &str) -> String {
        let (w, h, pad) = (640.0, 400.0, 50.0);
        let t_max = self.times.last().copied().unwrap_or(1.0).max(1e-12);
        let logs: Vec<f64> = self.mean_energy.iter().map(|e| e.max(1e-300).log10()).collect();
        let lo = logs.iter().copied().fold(f64::INFINITY, f64::min).floor();
        let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil().max(lo + 1.0);
        let px = |t: f64| pad + (w - 2.0 * pad) * t / t_max;
        let py = |l: f64| h - pad - (h - 2.0 * pad) * (l - lo) / (hi - lo);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
        let _ = writeln!(
            s,
            r#"<path d="M{pad},{pad} V{} H{}" fill="none" stroke="black"/>"#,
            h - pad,
            w - pad
        );
        let mut decade = lo;
        while decade <= hi {
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">1e{}</text>"#, pad - 4.0, py(decade) + 4.0, decade as i64);
            decade += 1.0;
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">t = {t_max}</text>"#, w - pad, h - pad + 18.0);
        let points: Vec<String> = self.times.iter().zip(&logs).map(|(t, l)| format!("{:.2},{:.2}", px(*t), py(*l))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#, points.join(" "));
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `paths` independent paths on streams `0..paths` of `seed`, run in
/// parallel and reduced in stream order.
pub fn monte_carlo(
    model: &ClosedLoopModel,
    pre: &Precomputed,
    cfg: &SimConfig,
    paths: usize,
    seed: u64,
) -> Result<(TrajectoryStats, Vec<PathRecord>), SimError> {
    if paths == 0 {
        return Err(SimError::Setting("at least one path is required".into()));
    }
    let records = (0..paths as u64)
        .into_par_iter()
        .map(|s| simulate_path(model, pre, cfg, seed, s))
        .collect::<Result<Vec<_>, _>>()?;
    let stats = TrajectoryStats::from_paths(&records)?;
    Ok((stats, records))
}
