//! Firm-level production networks: shock propagation under generalized
//! Leontief production functions, employment-weighted systemic risk, and
//! emission-reduction strategies that trade CO2 savings against job loss.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). The
//! unsuffixed aliases below fix `f64`; the `32` variants fix `f32`.
//!
//! ```
//! use esri_net_core::{bundle, RiskModel, ShockScenario, PropagationOptions};
//!
//! let fig1 = bundle::fig1::<f64>();
//! let pf = fig1.calibrate(None, None).unwrap();
//! let model = RiskModel::new(&fig1.network, &pf, PropagationOptions::default(), None).unwrap();
//! let s = ShockScenario::from_ids(&fig1.network, ["d"]).unwrap();
//! assert!((model.ew_esri(&s).unwrap() - 0.7).abs() < 1e-12);
//! ```

pub mod bundle;
pub mod calibration;
pub mod indices;
pub mod network;
pub mod output;
pub mod propagation;
pub mod regimes;
pub mod report;
pub mod scalar;
pub mod strategy;
pub mod synth;

pub use calibration::{
    calibrate, calibrate_network, classify_inputs, CalibrationError, CalibrationParams, EssentialityMatrix,
    FirmProductionFunction, InputPartition, ProductionFunctionSet, X0Rule,
};
pub use indices::{batch_indices, co2_shares, esri, ew_esri, IndexError, IndexRow, IndexTable, RiskModel};
pub use network::{
    load_network, load_network_dir, Firm, NetworkBuilder, NetworkError, ProductionNetwork, Sector, StrengthTable,
    ValidationReport,
};
pub use propagation::{
    production_step, propagate, ConvergenceMetadata, Engine, EquilibriumState, LevelState, PropagationError,
    PropagationOptions, ShockScenario,
};
pub use regimes::{fit_rank_regimes, RegimeFit, RegimeFitError};
pub use report::{emit_figure_data, ReportError};
pub use scalar::Scalar;
pub use strategy::{rank_firms, run_strategy, Heuristic, StrategyCurve, StrategyError, StrategySummary};
pub use synth::{generate, SynthError, SynthParams};

pub type Network = ProductionNetwork<f64>;
pub type Network32 = ProductionNetwork<f32>;
pub type FunctionSet = ProductionFunctionSet<f64>;
pub type FunctionSet32 = ProductionFunctionSet<f32>;
pub type Equilibrium = EquilibriumState<f64>;
pub type Equilibrium32 = EquilibriumState<f32>;
pub type Curve = StrategyCurve<f64>;
pub type Curve32 = StrategyCurve<f32>;
pub type Indices = IndexTable<f64>;
pub type Indices32 = IndexTable<f32>;
