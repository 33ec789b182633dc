//! A network directory: `firms.csv`, `edges.csv`, and optionally
//! `essentiality.csv` and `calibration.json`. Also hosts the embedded
//! five-firm toy fixture.

use std::path::Path;

use crate::calibration::{
    calibrate_network, CalibrationError, CalibrationFile, EssentialityMatrix, ProductionFunctionSet, X0Rule,
    DEFAULT_GAMMA,
};
use crate::network::{load_network_dir, parse_network, ProductionNetwork};
use crate::scalar::Scalar;

pub const FIG1_FIRMS_CSV: &str = include_str!("../../../fixtures/fig1/firms.csv");
pub const FIG1_EDGES_CSV: &str = include_str!("../../../fixtures/fig1/edges.csv");
pub const FIG1_ESSENTIALITY_CSV: &str = include_str!("../../../fixtures/fig1/essentiality.csv");
pub const FIG1_CALIBRATION_JSON: &str = include_str!("../../../fixtures/fig1/calibration.json");

#[derive(Debug, Clone)]
pub struct NetworkBundle<T> {
    pub network: ProductionNetwork<T>,
    pub essentiality: EssentialityMatrix,
    pub calibration: CalibrationFile,
}

impl<T: Scalar> NetworkBundle<T> {
    /// Bundled essentiality table and default calibration.
    pub fn from_network(network: ProductionNetwork<T>) -> Self {
        NetworkBundle {
            network,
            essentiality: EssentialityMatrix::bundled_default(),
            calibration: CalibrationFile::default(),
        }
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, CalibrationError> {
        let dir = dir.as_ref();
        let network = load_network_dir(dir)?;
        let ess_path = dir.join("essentiality.csv");
        let essentiality = if ess_path.exists() {
            EssentialityMatrix::from_csv(&ess_path)?
        } else {
            EssentialityMatrix::bundled_default()
        };
        let cal_path = dir.join("calibration.json");
        let calibration = if cal_path.exists() {
            CalibrationFile::load(&cal_path)?
        } else {
            CalibrationFile::default()
        };
        Ok(NetworkBundle {
            network,
            essentiality,
            calibration,
        })
    }

    /// Effective gamma: explicit override, then the directory's file, then the default.
    pub fn gamma(&self, override_gamma: Option<f64>) -> f64 {
        override_gamma.or(self.calibration.gamma).unwrap_or(DEFAULT_GAMMA)
    }

    pub fn x0_rule(&self, override_rule: Option<X0Rule>) -> X0Rule {
        override_rule.or(self.calibration.x0_rule).unwrap_or_default()
    }

    pub fn calibrate(
        &self,
        gamma: Option<f64>,
        x0_rule: Option<X0Rule>,
    ) -> Result<ProductionFunctionSet<T>, CalibrationError> {
        calibrate_network(&self.network, &self.essentiality, self.gamma(gamma), self.x0_rule(x0_rule))
    }
}

/// Five firms `a..e`: `a`, `b` and `d` supply `c` (25/25/50, non-essential,
/// calibrated with gamma 0), `d` is the only and essential supplier of `e`,
/// and `e` sells back to `d`. Employees (1,1,2,3,3), emissions (2,2,2,3,1).
pub fn fig1<T: Scalar>() -> NetworkBundle<T> {
    let network = parse_network(FIG1_FIRMS_CSV, FIG1_EDGES_CSV).expect("embedded fixture is valid");
    let essentiality =
        EssentialityMatrix::parse(FIG1_ESSENTIALITY_CSV, "fig1/essentiality.csv").expect("embedded fixture is valid");
    let calibration = serde_json::from_str(FIG1_CALIBRATION_JSON).expect("embedded fixture is valid");
    NetworkBundle {
        network,
        essentiality,
        calibration,
    }
}
