//! The four workflows. Every file is written here, after the parallel work
//! has finished.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use heatctl_core::bundle::Bundle;
use heatctl_core::config::{RunConfig, SweepKind};
use heatctl_core::setup::{self, SetupError};
use heatctl_core::simulator::{self, SimError};
use heatctl_core::spectral::{kappa_n, SensorSet};
use heatctl_core::synthesis::design::SynthesisError;
use heatctl_core::synthesis::sdp::SdpOptions;
use heatctl_core::synthesis::sweep::{sweep_table, wide_table};

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_RANK: u8 = 4;
pub const EXIT_ARTIFACT: u8 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<SetupError> for Failure {
    fn from(e: SetupError) -> Self {
        let code = match &e {
            SetupError::Config(_) | SetupError::Spectral(_) | SetupError::Shape(_) => EXIT_CONFIG,
            SetupError::Rank { .. } => EXIT_RANK,
            SetupError::Synthesis(SynthesisError::Dimension(_)) => EXIT_RUNTIME,
            SetupError::Synthesis(_) => EXIT_INFEASIBLE,
            SetupError::Bundle(_) => EXIT_ARTIFACT,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match &e {
            SimError::Grid(_) | SimError::Setting(_) => EXIT_CONFIG,
            SimError::Dimension(_) => EXIT_ARTIFACT,
            SimError::Diverged { .. } => EXIT_RUNTIME,
        };
        Failure::new(code, e.to_string())
    }
}

/// Honour `HEATCTL_THREADS` for every parallel section.
pub fn init_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("HEATCTL_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::new(EXIT_CONFIG, format!("HEATCTL_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::new(EXIT_RUNTIME, e.to_string()))
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    RunConfig::from_toml_str(&text).map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::new(EXIT_RUNTIME, format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn index_label(index: &[u32]) -> String {
    index.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(":")
}

pub fn spectrum(config: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let n = cfg.design.n;
    let basis = setup::spectral_basis(&cfg, n)?;
    let sensors = SensorSet::new(setup::sensor_profiles(&cfg), &basis.domain).map_err(SetupError::from)?;
    let kappa = kappa_n(&sensors, &basis, n).map_err(SetupError::from)?;
    let mut s = String::new();
    let _ = writeln!(s, "# config {}", cfg.hash());
    let _ = writeln!(s, "# N0 = {}, d = {}", basis.n0, basis.d());
    let _ = writeln!(s, "# kappa_N (N = {n}) = {:.6e}{}", kappa.value, if kappa.exact { "" } else { " (bound)" });
    s.push_str("rank,index,lambda,group\n");
    let mut rank = 0;
    for (g, &size) in basis.multiplicity.group_sizes.iter().enumerate() {
        for _ in 0..size {
            let mode = &basis.modes[rank];
            let _ = writeln!(s, "{},{},{:.10},{}", rank + 1, index_label(&mode.index), mode.lambda, g + 1);
            rank += 1;
        }
    }
    for mode in &basis.modes[rank..n.max(rank)] {
        rank += 1;
        let _ = writeln!(s, "{},{},{:.10},", rank, index_label(&mode.index), mode.lambda);
    }
    emit(out, &s)
}

pub fn synthesize(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let (setup, result, bundle) = setup::synthesize(&cfg, &SdpOptions::default(), created)?;
    write(out, &bundle.to_toml_string())?;
    let d = &bundle.design;
    println!("mode: {}", d.mode);
    println!("N = {}, N0 = {}, d = {}", setup.data.n, setup.data.n0, setup.data.d);
    println!("kappa_N = {:.6e}, psi tail = {:.6e}", setup.data.kappa, setup.data.psi_tail);
    println!(
        "L0: {}",
        if setup.fixed_observer_gain { "from configuration" } else { "synthesized" }
    );
    println!("margin = {:.3e} (epsilon {:.3e}) after {} iterations", d.min_margin, d.epsilon, d.iterations);
    if let Some([nu, k]) = d.gain_bound {
        println!("gain bound: |K| <= {k:.0e} with Q1 >= {nu}");
    }
    println!(
        "closed-loop abscissa {:.4}, observer abscissa {:.4}, |K| = {:.3e}",
        d.closed_loop_abscissa,
        d.observer_abscissa,
        result.k.as_ref().map(|k| k.norm()).unwrap_or(0.0)
    );
    println!("bundle written to {}", out.display());
    Ok(())
}

pub fn sweep(config: &Path, mode: Option<SweepKind>, out: Option<&Path>) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let kind = mode.unwrap_or(cfg.design.sweep);
    let queries = cfg.queries_for(kind);
    if queries.is_empty() {
        return Err(Failure::new(EXIT_CONFIG, "design.queries: the custom sweep has no queries"));
    }
    if cfg.design.n_list.is_empty() {
        return Err(Failure::new(EXIT_CONFIG, "design.n_list: empty"));
    }
    let opts = SdpOptions::default();
    let mut data = Vec::with_capacity(cfg.design.n_list.len());
    for &n in &cfg.design.n_list {
        data.push(setup::design_setup(&cfg, n, &opts)?.data);
    }
    let cells = sweep_table(&data, &queries, cfg.bracket(), &opts);
    let rejected: usize = cells.iter().filter_map(|c| c.result.as_ref().ok()).map(|r| r.witness_rejections()).sum();
    for c in &cells {
        if let Err(e) = &c.result {
            eprintln!("warning: N = {} {}: {e}", c.n, c.query.label());
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "# config {}", cfg.hash());
    let _ = writeln!(s, "# bracket [{}, {}] tol {}; witness rejections {rejected}", cfg.design.bracket[0], cfg.design.bracket[1], cfg.design.tol);
    s.push_str(&wide_table(&cells, &queries));
    emit(out, &s)
}

pub struct SimulateArgs {
    pub config: PathBuf,
    pub bundle: PathBuf,
    pub out: Option<PathBuf>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub svg: bool,
}

pub fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.config)?;
    let text = fs::read_to_string(&args.bundle)
        .map_err(|e| Failure::new(EXIT_ARTIFACT, format!("bundle {}: {e}", args.bundle.display())))?;
    let bundle = Bundle::from_toml_str(&text).map_err(|e| Failure::new(EXIT_ARTIFACT, format!("bundle {}: {e}", args.bundle.display())))?;
    if bundle.provenance.config_hash != cfg.design_hash() {
        eprintln!(
            "warning: bundle {} was synthesized from a different configuration (design hash {} vs {})",
            args.bundle.display(),
            bundle.provenance.config_hash,
            cfg.design_hash()
        );
    }
    let paths = args.paths.unwrap_or(cfg.simulation.paths);
    let seed = args.seed.unwrap_or(cfg.simulation.seed);
    if paths == 0 {
        return Err(Failure::new(EXIT_CONFIG, "--paths must be at least 1"));
    }
    let model = setup::closed_loop_model(&cfg, &bundle)?;
    let sim = setup::sim_config(&cfg);
    let pre = simulator::precompute(&model, &sim)?;
    let (stats, _) = simulator::monte_carlo(&model, &pre, &sim, paths, seed)?;

    let mut comment = String::new();
    let _ = writeln!(comment, "heatctl-sim/1");
    let _ = writeln!(comment, "config {} design {}", cfg.hash(), bundle.provenance.config_hash);
    let _ = writeln!(
        comment,
        "plant {} dt {} h {:?} horizon {} grid {:?}",
        format!("{:?}", sim.plant).to_lowercase(),
        sim.dt,
        pre.grid().spacing,
        sim.horizon,
        pre.grid().counts
    );
    let _ = writeln!(comment, "paths {paths} seed {seed}");
    let seeds: Vec<String> = stats.seeds.iter().map(|(s, k)| format!("{s}:{k}")).collect();
    let _ = write!(comment, "seeds {}", seeds.join(" "));
    let csv = stats.to_csv(&comment);
    emit(args.out.as_deref(), &csv)?;
    if args.svg {
        let path = match &args.out {
            Some(p) => p.with_extension("svg"),
            None => PathBuf::from("simulate.svg"),
        };
        let title = format!("mean energy over {paths} paths");
        write(&path, &stats.to_svg(&title))?;
        eprintln!("plot written to {}", path.display());
    }
    let e0 = stats.mean_energy[0];
    let e1 = *stats.mean_energy.last().unwrap_or(&e0);
    eprintln!("mean energy {e0:.4e} -> {e1:.4e} (ratio {:.3e})", e1 / e0);
    Ok(())
}
