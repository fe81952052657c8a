//! From a validated run configuration to design data, a synthesized bundle
//! and a closed-loop simulation model.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::bundle::{Bundle, BundleError};
use crate::config::{ConfigError, InitialKind, ModeKind, PlantKind, NoiseKind, NonlinearityKind, RunConfig};
use crate::profile::FaceProfile;
use crate::shapes::{check_rank_conditions, first_rank_failure, ActuationSensing, Actuator, GroupRank, RankFailure, ShapeError};
use crate::simulator::{ClosedLoopModel, InitialCondition, NoiseModel, Nonlinearity, PlantForm, SimConfig};
use crate::spectral::{SensorSet, SpectralBasis, SpectralError};
use crate::synthesis::design::{observer_gain, synthesize_controller, DesignData, DesignMode, SynthesisError, SynthesisResult};
use crate::synthesis::sdp::SdpOptions;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("rank condition fails for eigenvalue group {group}: {kind:?} block is rank deficient")]
    Rank { group: usize, kind: RankFailure },
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

/// Basis, actuation, rank report and design data at one observer size.
#[derive(Debug, Clone)]
pub struct DesignSetup {
    pub basis: SpectralBasis,
    pub shapes: ActuationSensing,
    pub ranks: Vec<GroupRank>,
    pub data: DesignData,
    /// Whether `L₀` came from the configuration rather than the solver.
    pub fixed_observer_gain: bool,
}

impl DesignSetup {
    pub fn modes(&self) -> Vec<Vec<u32>> {
        self.basis.modes[..self.data.n].iter().map(|m| m.index.clone()).collect()
    }

    pub fn mu(&self) -> Vec<f64> {
        self.shapes.actuators.iter().map(|a| a.mu).collect()
    }
}

pub fn actuator_shapes(cfg: &RunConfig) -> Vec<(FaceProfile, f64)> {
    cfg.actuators
        .iter()
        .map(|a| (FaceProfile::new(a.amplitude, a.windows.clone(), a.wavenumbers.clone()), a.depth))
        .collect()
}

pub fn sensor_profiles(cfg: &RunConfig) -> Vec<FaceProfile> {
    cfg.sensors
        .iter()
        .map(|s| FaceProfile::new(s.amplitude, s.windows.clone(), s.wavenumbers.clone()))
        .collect()
}

pub fn spectral_basis(cfg: &RunConfig, n: usize) -> Result<SpectralBasis, SetupError> {
    let p = &cfg.plant;
    Ok(SpectralBasis::build(cfg.domain()?, n, p.q, p.delta, p.sigma_f)?)
}

/// Build everything the inequalities need at observer size `n`, checking the
/// actuator count against `d` and the rank conditions. Without a configured
/// `L₀` one is synthesized.
pub fn design_setup(cfg: &RunConfig, n: usize, opts: &SdpOptions) -> Result<DesignSetup, SetupError> {
    let basis = spectral_basis(cfg, n)?;
    let d = basis.d();
    if cfg.actuators.len() != d {
        return Err(ConfigError {
            path: "actuators".into(),
            message: format!("the largest eigenvalue multiplicity below the threshold is {d}; got {} actuators", cfg.actuators.len()),
        }
        .into());
    }
    if n < basis.n0 {
        return Err(ConfigError {
            path: "design.n".into(),
            message: format!("N = {n} is below N0 = {}", basis.n0),
        }
        .into());
    }
    let domain = &basis.domain;
    let sensors = SensorSet::new(sensor_profiles(cfg), domain)?;
    let shapes = ActuationSensing::build(actuator_shapes(cfg), sensors, &basis, n, cfg.plant.q)?;
    let n0 = basis.n0;
    let ranks = check_rank_conditions(&shapes.b0(n0), &shapes.c0(n0), &basis.multiplicity.group_sizes);
    if let Some((group, kind)) = first_rank_failure(&ranks) {
        return Err(SetupError::Rank { group, kind });
    }
    let (l0, fixed) = match &cfg.design.observer_gain {
        Some(rows) => {
            if rows.len() != n0 {
                return Err(ConfigError {
                    path: "design.observer_gain".into(),
                    message: format!("expected N0 = {n0} rows, got {}", rows.len()),
                }
                .into());
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            (DMatrix::from_row_slice(n0, d, &flat), true)
        }
        None => {
            let q = cfg.plant.q;
            let a0 = DMatrix::from_fn(n0, n0, |i, j| if i == j { -basis.lambda(i + 1) + q } else { 0.0 });
            (observer_gain(&a0, &shapes.c0(n0), cfg.plant.delta, opts)?.l0, false)
        }
    };
    let data = DesignData::new(&basis, &shapes, cfg.plant.q, cfg.plant.delta, l0)?;
    Ok(DesignSetup {
        basis,
        shapes,
        ranks,
        data,
        fixed_observer_gain: fixed,
    })
}

pub fn design_mode(cfg: &RunConfig) -> DesignMode {
    let p = &cfg.plant;
    match cfg.design.mode {
        ModeKind::Stability => DesignMode::Stability {
            sigma_f: p.sigma_f,
            sigma_g: p.sigma_g,
        },
        ModeKind::Nss => DesignMode::Nss { sigma_f: p.sigma_f },
    }
}

/// Synthesize at `design.n` in the configured mode and package the result.
pub fn synthesize(cfg: &RunConfig, opts: &SdpOptions, created: u64) -> Result<(DesignSetup, SynthesisResult, Bundle), SetupError> {
    let setup = design_setup(cfg, cfg.design.n, opts)?;
    let result = synthesize_controller(&setup.data, design_mode(cfg), opts)?;
    let bundle = Bundle::from_synthesis(&setup.data, &result, setup.modes(), setup.mu(), cfg.design_hash(), created)?;
    Ok((setup, result, bundle))
}

pub fn sim_config(cfg: &RunConfig) -> SimConfig {
    let p = &cfg.plant;
    let s = &cfg.simulation;
    SimConfig {
        dt: s.dt,
        h: s.h.clone(),
        horizon: s.horizon,
        stride: s.stride,
        plant: match s.plant {
            PlantKind::Lifted => PlantForm::Lifted,
            PlantKind::Boundary => PlantForm::Boundary,
        },
        nonlinearity: match p.nonlinearity {
            NonlinearityKind::Sin => Nonlinearity::Sin { scale: p.sigma_f },
            NonlinearityKind::Zero => Nonlinearity::Zero,
        },
        noise: match p.noise {
            NoiseKind::Multiplicative => NoiseModel::Multiplicative { sigma_g: p.sigma_g },
            NoiseKind::Additive => NoiseModel::Additive { sigma: p.additive_sigma },
            NoiseKind::None => NoiseModel::None,
        },
        initial: match s.initial {
            InitialKind::Polynomial => InitialCondition::Polynomial,
            InitialKind::Mode => InitialCondition::Mode(s.initial_mode.clone()),
            InitialKind::Zero => InitialCondition::Zero,
        },
        control: s.control,
        record_modal: false,
    }
}

/// Shapes and sensors from the configuration; everything spectral and every
/// gain from the bundle.
pub fn closed_loop_model(cfg: &RunConfig, bundle: &Bundle) -> Result<ClosedLoopModel, SetupError> {
    let s = &bundle.spectral;
    let m = cfg.domain.edges.len();
    if cfg.actuators.len() != s.d || s.modes[0].len() != m {
        return Err(BundleError::Invalid {
            field: "spectral".into(),
            reason: format!("bundle has d = {} in {} dimensions, configuration has {} actuators in {m}", s.d, s.modes[0].len(), cfg.actuators.len()),
        }
        .into());
    }
    let actuators = actuator_shapes(cfg)
        .into_iter()
        .zip(&s.mu)
        .map(|((shape, depth), &mu)| Actuator { shape, depth, mu })
        .collect();
    Ok(ClosedLoopModel {
        domain: cfg.domain()?,
        q: s.q,
        actuators,
        sensors: sensor_profiles(cfg),
        modes: s.modes.clone(),
        lambdas: s.lambdas.clone(),
        b: bundle.gains.b.to_dmatrix(),
        l: bundle.observer_gain(),
        k: bundle.gains.k.to_dmatrix(),
        xi0: s.xi0.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_setup_has_the_expected_c0() {
        let cfg = RunConfig::default();
        let s = design_setup(&cfg, 9, &SdpOptions::default()).unwrap();
        assert_eq!((s.data.n0, s.data.d), (3, 2));
        let want = [[1.0, 0.0, 1.0], [0.0, 0.1, 0.0]];
        for (i, row) in want.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert!((s.data.c[(i, j)] - v).abs() < 1e-10);
            }
        }
        assert!(s.fixed_observer_gain);
    }

    #[test]
    fn zero_sensor_is_a_rank_failure() {
        let mut cfg = RunConfig::default();
        cfg.sensors[1].amplitude = 0.0;
        assert!(matches!(design_setup(&cfg, 9, &SdpOptions::default()), Err(SetupError::Rank { .. })));
    }

    #[test]
    fn wrong_actuator_count_is_a_config_error() {
        let mut cfg = RunConfig::default();
        cfg.actuators.pop();
        cfg.sensors.pop();
        cfg.design.observer_gain = None;
        assert!(matches!(design_setup(&cfg, 9, &SdpOptions::default()), Err(SetupError::Config(e)) if e.path == "actuators"));
    }

    #[test]
    fn synthesis_round_trips_into_a_model() {
        let cfg = RunConfig::default();
        let (setup, _, bundle) = synthesize(&cfg, &SdpOptions::default(), 0).unwrap();
        let back = Bundle::from_toml_str(&bundle.to_toml_string()).unwrap();
        assert_eq!(back, bundle);
        let model = closed_loop_model(&cfg, &back).unwrap();
        model.validate().unwrap();
        assert_eq!(model.b, setup.data.b);
        for (a, b) in model.actuators.iter().zip(&setup.shapes.actuators) {
            assert_eq!(a, b);
        }
    }
}
