//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Numeric arguments select a subset, e.g. `-- 1 3 7`.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use heatctl_core::bundle::Bundle;
use heatctl_core::config::RunConfig;
use heatctl_core::psdcheck::spectral_abscissa;
use heatctl_core::setup::{closed_loop_model, design_setup, sensor_profiles, sim_config, spectral_basis, synthesize, DesignSetup};
use heatctl_core::simulator::{monte_carlo, precompute, simulate_path, InitialCondition, NoiseModel, Nonlinearity, TrajectoryStats};
use heatctl_core::spectral::{kappa_n, trace_coefficient, SensorSet, SpectralBasis};
use heatctl_core::synthesis::design::{certify_observer_gain, observer_gain, synthesize_controller, DesignMode};
use heatctl_core::synthesis::sdp::SdpOptions;
use heatctl_core::synthesis::sweep::{sweep_table, table1_queries, table2_queries, SigmaQuery, TableCell};
use nalgebra::{DMatrix, DVector};

type Check = Result<String, String>;

const TABLE1_N: [usize; 6] = [9, 11, 13, 15, 17, 19];
/// Columns σ_g^max (σ_f = 0.1), σ_f^max (σ_g = 0.05), NSS σ_f^max; `None` is "--".
const TABLE1_WINDOWED: [[Option<f64>; 3]; 6] = [
    [Some(0.156), Some(0.33), Some(0.37)],
    [Some(0.180), Some(0.40), Some(0.43)],
    [Some(0.207), Some(0.48), Some(0.52)],
    [Some(0.211), Some(0.49), Some(0.54)],
    [Some(0.218), Some(0.52), Some(0.56)],
    [Some(0.229), Some(0.55), Some(0.60)],
];
const TABLE1_FULL_FACE: [[Option<f64>; 3]; 6] = [
    [Some(0.035), None, Some(0.24)],
    [Some(0.039), None, Some(0.25)],
    [Some(0.076), Some(0.29), Some(0.41)],
    [Some(0.077), Some(0.30), Some(0.42)],
    [Some(0.080), Some(0.32), Some(0.44)],
    [Some(0.086), Some(0.37), Some(0.50)],
];
const TABLE2_N: [usize; 7] = [11, 13, 15, 17, 19, 21, 23];
const TABLE2_WINDOWED: [f64; 7] = [0.142, 0.142, 0.149, 0.162, 0.165, 0.165, 0.171];
const TABLE2_FULL: [f64; 7] = [0.016, 0.016, 0.028, 0.043, 0.047, 0.047, 0.053];

fn config(name: &str) -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    RunConfig::from_toml_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn within(ours: f64, reference: f64) -> bool {
    (ours - reference).abs() <= (0.1 * reference).max(0.02)
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "--".into())
}

fn table(cfg: &RunConfig, ns: &[usize], queries: &[SigmaQuery]) -> Vec<TableCell> {
    let opts = SdpOptions::default();
    let data: Vec<_> = ns.iter().map(|&n| design_setup(cfg, n, &opts).expect("design setup").data).collect();
    sweep_table(&data, queries, cfg.bracket(), &opts)
}

fn table1_windowed() -> &'static Vec<TableCell> {
    static CELLS: OnceLock<Vec<TableCell>> = OnceLock::new();
    CELLS.get_or_init(|| table(&config("2d_windowed.toml"), &TABLE1_N, &table1_queries()))
}

fn table1_full_face() -> &'static Vec<TableCell> {
    static CELLS: OnceLock<Vec<TableCell>> = OnceLock::new();
    CELLS.get_or_init(|| table(&config("2d_full_face.toml"), &TABLE1_N, &table1_queries()))
}

fn table2_windowed() -> &'static Vec<TableCell> {
    static CELLS: OnceLock<Vec<TableCell>> = OnceLock::new();
    CELLS.get_or_init(|| table(&config("3d_windowed.toml"), &TABLE2_N, &table2_queries()))
}

fn table2_full() -> &'static Vec<TableCell> {
    static CELLS: OnceLock<Vec<TableCell>> = OnceLock::new();
    CELLS.get_or_init(|| table(&config("3d_full_depth.toml"), &TABLE2_N, &table2_queries()))
}

fn cell_value(c: &TableCell) -> Result<Option<f64>, String> {
    match &c.result {
        Ok(r) => Ok(r.outcome.value()),
        Err(e) => Err(format!("N = {} {}: {e}", c.n, c.query.label())),
    }
}

fn c1_spectral() -> Check {
    let cfg = config("2d_windowed.toml");
    let s = design_setup(&cfg, 9, &SdpOptions::default()).map_err(|e| e.to_string())?;
    let b = &s.basis;
    let mut bad = Vec::new();
    if (b.n0, b.d()) != (3, 2) {
        bad.push(format!("2D N0 = {}, d = {}", b.n0, b.d()));
    }
    let (l2, l3) = (b.lambda(2), b.lambda(3));
    if (l2 - l3).abs() > 1e-12 * l2 || b.multiplicity.group_sizes[..2] != [1, 2] {
        bad.push(format!("lambda2 {l2} lambda3 {l3} not one group"));
    }
    let want = [[1.0, 0.0, 1.0], [0.0, 0.1, 0.0]];
    let mut c0_err: f64 = 0.0;
    for (i, row) in want.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            c0_err = c0_err.max((s.data.c[(i, j)] - v).abs());
        }
    }
    if c0_err > 1e-10 {
        bad.push(format!("C0 error {c0_err:e}"));
    }
    let b3 = spectral_basis(&config("3d_windowed.toml"), 11).map_err(|e| e.to_string())?;
    if (b3.n0, b3.d()) != (4, 3) {
        bad.push(format!("3D N0 = {}, d = {}", b3.n0, b3.d()));
    }
    let detail = format!(
        "2D N0=3 d=2 lambda = {:.4}, {:.4} (x2), {:.4}; C0 err {c0_err:.1e}; 3D N0={} d={}",
        b.lambda(1),
        l2,
        b.lambda(4),
        b3.n0,
        b3.d()
    );
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", bad.join("; ")))
    }
}

/// `Σ_m c_m² Σ_{n₂} 1/λ_{(m, n₂)}` over the modes outside the first `n`:
/// the full series over `n₂` with an integral remainder, less the retained
/// terms.
fn reduced_series(cfg: &RunConfig, basis: &SpectralBasis, n: usize) -> f64 {
    let (a1, a2) = (cfg.domain.edges[0], cfg.domain.edges[1]);
    let terms = 1_000_000u32;
    let lam = |n1: u32, n2: u32| (n1 as f64 * PI / a1).powi(2) + ((n2 as f64 - 0.5) * PI / a2).powi(2);
    let mut total = 0.0;
    for (m, sensor) in cfg.sensors.iter().enumerate() {
        let n1 = (m + 1) as u32;
        assert_eq!(sensor.wavenumbers, vec![n1]);
        let c = sensor.amplitude * (a1 / a2).sqrt();
        let mut sum: f64 = (1..=terms).rev().map(|n2| 1.0 / lam(n1, n2)).sum();
        sum += a2 * a2 / (PI * PI * terms as f64);
        for md in basis.modes[..n].iter().filter(|md| md.index[0] == n1) {
            sum -= 1.0 / lam(n1, md.index[1]);
        }
        total += c * c * sum;
    }
    total
}

fn c2_kappa() -> Check {
    let cfg = config("2d_windowed.toml");
    let basis = spectral_basis(&cfg, 40).map_err(|e| e.to_string())?;
    let sensors = SensorSet::new(sensor_profiles(&cfg), &basis.domain).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for n in 9..=39 {
        let k = kappa_n(&sensors, &basis, n).map_err(|e| e.to_string())?.value;
        let r = reduced_series(&cfg, &basis, n);
        worst = worst.max((k - r).abs() / r);
        let scaled = k * (n as f64).sqrt();
        lo = lo.min(scaled);
        hi = hi.max(scaled);
    }
    let detail = format!("max rel deviation {worst:.2e}; kappa_N sqrt(N) in [{lo:.4}, {hi:.4}] (ratio {:.2})", hi / lo);
    if worst < 0.01 && hi / lo < 3.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c3_observer() -> Check {
    let cfg = config("2d_windowed.toml");
    let opts = SdpOptions::default();
    let s = design_setup(&cfg, 9, &opts).map_err(|e| e.to_string())?;
    let (a0, c0) = (s.data.a0(), s.data.c0());
    let delta = cfg.plant.delta;
    let (_, report) = certify_observer_gain(&a0, &c0, &s.data.l0, delta, &opts).map_err(|e| format!("configured L0: {e}"))?;
    let own = observer_gain(&a0, &c0, delta, &opts).map_err(|e| format!("own L0: {e}"))?;
    let abscissa = spectral_abscissa(&(&a0 - &own.l0 * &c0)).map_err(|e| e.to_string())?;
    let detail = format!(
        "configured L0 certified (min margin {:.2e}); own L0 abscissa {abscissa:.4}",
        report.min_margin()
    );
    if abscissa < -delta {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c4_table1() -> Check {
    let mut lines = Vec::new();
    let mut misses = Vec::new();
    for (shapes, cells, reference) in [("windowed", table1_windowed(), &TABLE1_WINDOWED), ("full-face", table1_full_face(), &TABLE1_FULL_FACE)] {
        for (row, &n) in TABLE1_N.iter().enumerate() {
            let mut ours = Vec::new();
            for col in 0..3 {
                let v = cell_value(&cells[row * 3 + col])?;
                let want = reference[row][col];
                let ok = match (shapes, want, v) {
                    ("windowed", Some(p), Some(o)) => within(o, p),
                    ("windowed", _, _) => false,
                    // only the "--" cells are checked for the full-face shapes
                    (_, None, o) if col == 1 => o.is_none(),
                    _ => true,
                };
                if !ok {
                    misses.push(format!("{shapes} N={n} col {} ours {} reference {}", col + 1, fmt_cell(v), fmt_cell(want)));
                }
                ours.push(fmt_cell(v));
            }
            lines.push(format!("{shapes} N={n}: {}", ours.join(" ")));
        }
    }
    let detail = lines.join(" | ");
    if misses.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{} | {detail}", misses.join("; ")))
    }
}

fn c5_table2() -> Check {
    let (w, f) = (table2_windowed(), table2_full());
    let mut misses = Vec::new();
    let mut lines = Vec::new();
    for (i, &n) in TABLE2_N.iter().enumerate() {
        let ow = cell_value(&w[i])?;
        let of = cell_value(&f[i])?;
        if !ow.is_some_and(|v| within(v, TABLE2_WINDOWED[i])) {
            misses.push(format!("windowed N={n} {} vs {}", fmt_cell(ow), TABLE2_WINDOWED[i]));
        }
        if !of.is_some_and(|v| within(v, TABLE2_FULL[i])) {
            misses.push(format!("full N={n} {} vs {}", fmt_cell(of), TABLE2_FULL[i]));
        }
        let ratio = match (ow, of) {
            (Some(a), Some(b)) => a / b,
            (Some(_), None) => f64::INFINITY,
            _ => 0.0,
        };
        if ratio < 3.0 {
            misses.push(format!("ratio N={n} {ratio:.2}"));
        }
        lines.push(format!("N={n}: {} / {} (x{ratio:.1})", fmt_cell(ow), fmt_cell(of)));
    }
    let detail = lines.join(" | ");
    if misses.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{} | {detail}", misses.join("; ")))
    }
}

/// The 2D design at `σ_f = σ_g = 0`, N = 9.
fn linear_design() -> Result<(RunConfig, DesignSetup, DMatrix<f64>, Bundle), String> {
    let cfg = config("2d_windowed.toml");
    let opts = SdpOptions::default();
    let s = design_setup(&cfg, 9, &opts).map_err(|e| e.to_string())?;
    let mode = DesignMode::Stability {
        sigma_f: 0.0,
        sigma_g: 0.0,
    };
    let r = synthesize_controller(&s.data, mode, &opts).map_err(|e| e.to_string())?;
    let k = r.k.clone().ok_or("no gain")?;
    let bundle = Bundle::from_synthesis(&s.data, &r, s.modes(), s.mu(), cfg.design_hash(), 0).map_err(|e| e.to_string())?;
    Ok((cfg, s, k, bundle))
}

fn c6_open_loop() -> Check {
    let (cfg, s, _, bundle) = linear_design()?;
    let model = closed_loop_model(&cfg, &bundle).map_err(|e| e.to_string())?;
    let mut sc = sim_config(&cfg);
    sc.control = false;
    sc.noise = NoiseModel::None;
    sc.nonlinearity = Nonlinearity::Zero;
    sc.initial = InitialCondition::Mode(vec![1, 1]);
    sc.horizon = 0.5;
    sc.stride = 200;
    let pre = precompute(&model, &sc).map_err(|e| e.to_string())?;
    let p = simulate_path(&model, &pre, &sc, 0, 0).map_err(|e| e.to_string())?;
    let pts: Vec<(f64, f64)> = p.times.iter().zip(&p.z_sq).map(|(&t, &e)| (t, 0.5 * e.ln())).collect();
    let k = pts.len() as f64;
    let (mt, my) = (pts.iter().map(|p| p.0).sum::<f64>() / k, pts.iter().map(|p| p.1).sum::<f64>() / k);
    let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
    let want = cfg.plant.q - s.basis.lambda(1);
    let rel = (slope - want) / want;
    let detail = format!("fitted exponent {slope:.4} vs q - lambda1 = {want:.4} ({:+.3}%)", 100.0 * rel);
    if rel.abs() < 0.02 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Dense linear closed loop with state `[u, ŵ_1..ŵ_N, w_1..w_{N+tail}]`.
/// Plant modes use the eigenvalues of the five-point stencil on `spacing`.
fn reference_matrix(cfg: &RunConfig, s: &DesignSetup, k: &DMatrix<f64>, tail: usize, spacing: &[f64]) -> Result<(DMatrix<f64>, SpectralBasis), String> {
    let (n, d, q) = (s.data.n, s.data.d, cfg.plant.q);
    let nt = n + tail;
    let basis = SpectralBasis::build(cfg.domain().map_err(|e| e.to_string())?, nt, q, cfg.plant.delta, 0.0).map_err(|e| e.to_string())?;
    let dim = d + n + nt;
    let sensors = sensor_profiles(cfg);
    let act = &s.shapes.actuators;
    let c = DMatrix::from_fn(d, nt, |m, j| trace_coefficient(&sensors[m], &basis.domain, &basis.modes[j]));
    let b = DMatrix::from_fn(nt, d, |j, i| act[i].load(&basis, j + 1));
    let l = s.data.l();
    let (ih, iw) = (d, d + n);
    // v = −K [u; ŵ]
    let mut v = DMatrix::zeros(d, dim);
    v.view_mut((0, 0), (d, d + n)).copy_from(&(-k));
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..d {
        a[(i, i)] += s.data.xi0[i];
        for col in 0..dim {
            a[(i, col)] += v[(i, col)];
        }
    }
    let edges = basis.domain.edges().to_vec();
    let m = edges.len();
    for j in 0..nt {
        let idx = &basis.modes[j].index;
        let lam: f64 = (0..m)
            .map(|ax| {
                let shift = if ax + 1 == m { 0.5 } else { 0.0 };
                let kk = (idx[ax] as f64 - shift) * PI / edges[ax];
                4.0 / (spacing[ax] * spacing[ax]) * (kk * spacing[ax] / 2.0).sin().powi(2)
            })
            .sum();
        a[(iw + j, iw + j)] += q - lam;
        for i in 0..d {
            for col in 0..dim {
                a[(iw + j, col)] += b[(j, i)] * v[(i, col)];
            }
        }
    }
    for j in 0..n {
        a[(ih + j, ih + j)] += q - basis.lambda(j + 1);
        for i in 0..d {
            for col in 0..dim {
                a[(ih + j, col)] += b[(j, i)] * v[(i, col)];
            }
        }
        for mm in 0..d {
            let lv = l[(j, mm)];
            for jj in 0..n {
                a[(ih + j, ih + jj)] -= lv * c[(mm, jj)];
            }
            for jj in 0..nt {
                a[(ih + j, iw + jj)] += lv * c[(mm, jj)];
            }
        }
    }
    Ok((a, basis))
}

fn c7_cross_validation() -> Check {
    let (cfg, s, k, bundle) = linear_design()?;
    let model = closed_loop_model(&cfg, &bundle).map_err(|e| e.to_string())?;
    let mut sc = sim_config(&cfg);
    sc.noise = NoiseModel::None;
    sc.nonlinearity = Nonlinearity::Zero;
    sc.record_modal = true;
    sc.stride = 400;
    let pre = precompute(&model, &sc).map_err(|e| e.to_string())?;
    let p = simulate_path(&model, &pre, &sc, 0, 0).map_err(|e| e.to_string())?;
    let g = pre.grid();
    let tail = 30;
    let (a, basis) = reference_matrix(&cfg, &s, &k, tail, &g.spacing)?;
    let (n, d) = (s.data.n, s.data.d);
    let mut x0 = DVector::zeros(a.nrows());
    for j in 0..n + tail {
        let phi = g.sample(|x| basis.domain.eigenfunction(&basis.modes[j].index, x));
        x0[d + n + j] = g.inner(&pre.z0, &phi);
    }
    let mut err = [0.0f64; 3];
    let mut scale = [0.0f64; 3];
    for (i, &t) in p.times.iter().enumerate() {
        let x = (&a * t).exp() * &x0;
        let m = &p.modal[i];
        for j in 0..n {
            err[0] = err[0].max((m.w[j] - x[d + n + j]).abs());
            scale[0] = scale[0].max(x[d + n + j].abs());
            err[1] = err[1].max((m.w_hat[j] - x[d + j]).abs());
            scale[1] = scale[1].max(x[d + j].abs());
        }
        for j in 0..d {
            err[2] = err[2].max((m.u[j] - x[j]).abs());
            scale[2] = scale[2].max(x[j].abs());
        }
    }
    let rel: Vec<f64> = err.iter().zip(&scale).map(|(e, s)| e / s).collect();
    let detail = format!("sup-norm relative error w {:.2e}, w_hat {:.2e}, u {:.2e} (tail {tail})", rel[0], rel[1], rel[2]);
    if rel.iter().all(|&r| r < 0.01) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_paths(cfg: &RunConfig, bundle: &Bundle) -> Result<TrajectoryStats, String> {
    let model = closed_loop_model(cfg, bundle).map_err(|e| e.to_string())?;
    let sc = sim_config(cfg);
    let pre = precompute(&model, &sc).map_err(|e| e.to_string())?;
    let (stats, _) = monte_carlo(&model, &pre, &sc, cfg.simulation.paths, cfg.simulation.seed).map_err(|e| e.to_string())?;
    Ok(stats)
}

fn c8_stochastic() -> Check {
    let opts = SdpOptions::default();
    let cfg = config("2d_windowed.toml");
    let (_, _, bundle) = synthesize(&cfg, &opts, 0).map_err(|e| e.to_string())?;
    let stats = run_paths(&cfg, &bundle)?;
    let e0 = stats.mean_energy[0];
    let peak = stats.mean_energy.iter().copied().fold(0.0, f64::max);
    let decay = stats.energy_at(1.0) / e0;

    let nss = config("2d_nss.toml");
    let (_, _, nbundle) = synthesize(&nss, &opts, 0).map_err(|e| e.to_string())?;
    let mut half = nss.clone();
    half.plant.additive_sigma = 0.5;
    let p1 = run_paths(&nss, &nbundle)?.plateau(0.5, 1.0);
    let p05 = run_paths(&half, &nbundle)?.plateau(0.5, 1.0);
    let ratio = p1 / p05;
    let detail = format!(
        "multiplicative: E(1)/E(0) = {decay:.3e} (peak {:.3e}), {} paths; additive plateau ratio Sigma 1 vs 0.5 = {ratio:.3}",
        peak / e0,
        cfg.simulation.paths
    );
    if decay < 0.05 && (2.0..=8.0).contains(&ratio) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c9_witnesses() -> Check {
    let mut probes = 0;
    let mut feasible = 0;
    let mut rejected = 0;
    for cells in [table1_windowed(), table1_full_face(), table2_windowed(), table2_full()] {
        for c in cells {
            if let Ok(r) = &c.result {
                probes += r.probes.len();
                feasible += r.feasible_probes();
                rejected += r.witness_rejections();
            }
        }
    }
    let detail = format!("{probes} probes, {feasible} feasible witnesses, {rejected} rejected by the independent check");
    if rejected == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Check); 9] = [
        ("spectral golden values", c1_spectral),
        ("kappa_N law", c2_kappa),
        ("observer gain", c3_observer),
        ("table 1 reproduction", c4_table1),
        ("table 2 reproduction", c5_table2),
        ("open-loop growth", c6_open_loop),
        ("closed-loop cross-validation", c7_cross_validation),
        ("stochastic decay", c8_stochastic),
        ("witness independence", c9_witnesses),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let id = i + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {id} {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id} {name} ({secs:.1} s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
