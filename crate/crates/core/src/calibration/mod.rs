//! Input classification and calibration of the generalized Leontief
//! production functions from a single network snapshot.
//!
//! A firm with essential input groups `k` and non-essential inputs `ne`
//! produces
//!
//! ```text
//! x = min( min_k (Σ_{j∈k} W_ji h_j) / α_k ,  β + (Σ_{j∈ne} W_ji h_j) / α_ne )
//! ```
//!
//! with `α_k = Σ_{j∈k} W_ji / x0`, `β = γ·x0` and `α_ne = Σ_{j∈ne} W_ji / (x0 − β)`,
//! so that all inputs at level 1 give back `x0`.

mod essentiality;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{NetworkError, ProductionNetwork, Sector};
use crate::output::write_atomic;
use crate::scalar::Scalar;

pub use essentiality::{EssentialityMatrix, ANY_SECTOR, ESSENTIALITY_HEADER};

pub const DEFAULT_GAMMA: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("no essentiality rule for supplier sector {supplier} -> buyer sector {buyer}, and no default configured")]
    UnknownSector { supplier: String, buyer: String },
    #[error("gamma must lie in [0, 1], got {0}")]
    InvalidGamma(f64),
    #[error("partition covers {got} firms but the network has {expected}")]
    PartitionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Input(#[from] NetworkError),
    #[error("invalid calibration file {path}: {message}")]
    ConfigFile { path: String, message: String },
}

/// How the baseline output `x0` is derived from node strengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum X0Rule {
    /// `s_out`, falling back to `s_in` for pure sinks.
    #[default]
    Out,
    /// `max(s_in, s_out)`; the excess over `s_out` acts as demand from outside the network.
    Max,
}

impl X0Rule {
    pub fn baseline<T: Scalar>(self, s_in: T, s_out: T) -> T {
        match self {
            X0Rule::Out if s_out > T::zero() => s_out,
            X0Rule::Out => s_in,
            X0Rule::Max => s_in.max(s_out),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub gamma: f64,
    pub x0_rule: X0Rule,
    pub essentiality_source: String,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        CalibrationParams {
            gamma: DEFAULT_GAMMA,
            x0_rule: X0Rule::Out,
            essentiality_source: "bundled-default".into(),
        }
    }
}

/// Optional per-network overrides read from `calibration.json` next to the CSVs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub gamma: Option<f64>,
    pub x0_rule: Option<X0Rule>,
}

impl CalibrationFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CalibrationError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CalibrationError::ConfigFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| CalibrationError::ConfigFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Essential in-edges grouped by supplier sector, plus the non-essential rest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InputPartition {
    pub essential: Vec<(Sector, Vec<usize>)>,
    pub nonessential: Vec<usize>,
}

impl InputPartition {
    pub fn essential_suppliers(&self) -> impl Iterator<Item = usize> + '_ {
        self.essential.iter().flat_map(|(_, s)| s.iter().copied())
    }
}

pub fn classify_inputs<T: Scalar>(
    net: &ProductionNetwork<T>,
    ess: &EssentialityMatrix,
) -> Result<Vec<InputPartition>, CalibrationError> {
    (0..net.len())
        .map(|buyer| {
            let buyer_sector = &net.firm(buyer).sector;
            let mut groups: BTreeMap<Sector, Vec<usize>> = BTreeMap::new();
            let mut nonessential = Vec::new();
            for e in net.in_edges(buyer) {
                let supplier_sector = &net.firm(e.supplier).sector;
                match ess.lookup(supplier_sector, buyer_sector) {
                    Some(true) => groups.entry(supplier_sector.clone()).or_default().push(e.supplier),
                    Some(false) => nonessential.push(e.supplier),
                    None => {
                        return Err(CalibrationError::UnknownSector {
                            supplier: supplier_sector.to_string(),
                            buyer: buyer_sector.to_string(),
                        })
                    }
                }
            }
            Ok(InputPartition {
                essential: groups.into_iter().collect(),
                nonessential,
            })
        })
        .collect()
}

/// A set of suppliers entering the production function through one coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct InputGroup<T> {
    pub sector: Option<Sector>,
    pub suppliers: Vec<usize>,
    /// `W_ji` for each supplier, aligned with `suppliers`.
    pub weights: Vec<T>,
    pub total: T,
    pub alpha: T,
}

impl<T: Scalar> InputGroup<T> {
    fn weighted_input(&self, levels: &[T]) -> T {
        self.suppliers
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&j, &w)| acc + w * levels[j])
    }

    /// Relative availability `Σ W h / Σ W`; exactly 1 when all levels are 1.
    pub fn availability(&self, levels: &[T]) -> T {
        self.weighted_input(levels) / self.total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirmProductionFunction<T> {
    pub x0: T,
    pub beta: T,
    pub essential: Vec<InputGroup<T>>,
    /// Non-essential inputs; `alpha` is meaningless when `nonessential_dropped`.
    pub nonessential: Option<InputGroup<T>>,
    /// `x0 == beta`: non-essential inputs cannot raise output.
    pub nonessential_dropped: bool,
    /// No inputs and no outputs (or degenerate): level pinned at 1.
    pub inert: bool,
}

impl<T: Scalar> FirmProductionFunction<T> {
    fn inert(x0: T) -> Self {
        FirmProductionFunction {
            x0,
            beta: x0,
            essential: Vec::new(),
            nonessential: None,
            nonessential_dropped: false,
            inert: true,
        }
    }

    /// Absolute output for given relative supplier levels (indexed by firm).
    pub fn evaluate(&self, levels: &[T]) -> T {
        if self.inert {
            return self.x0;
        }
        let essential = self
            .essential
            .iter()
            .map(|g| g.weighted_input(levels) / g.alpha)
            .fold(T::infinity(), T::min);
        let linear = match &self.nonessential {
            Some(g) if !self.nonessential_dropped => self.beta + g.weighted_input(levels) / g.alpha,
            _ => self.beta,
        };
        essential.min(linear)
    }

    /// Output relative to `x0`, clamped to [0, 1]. Algebraically
    /// `evaluate / x0`, arranged so that full inputs give exactly 1.
    pub fn relative_output(&self, levels: &[T]) -> T {
        if self.inert {
            return T::one();
        }
        let mut level = T::one();
        for g in &self.essential {
            level = level.min(g.availability(levels));
        }
        if let Some(g) = &self.nonessential {
            if !self.nonessential_dropped {
                let slack = T::one() - self.beta / self.x0;
                level = level.min(T::one() - slack * (T::one() - g.availability(levels)));
            }
        }
        level.clamp_unit()
    }

    pub fn n_nonessential(&self) -> usize {
        self.nonessential.as_ref().map_or(0, |g| g.suppliers.len())
    }
}

/// Calibrated production functions for every firm of a network.
#[derive(Debug, Clone)]
pub struct ProductionFunctionSet<T> {
    pub functions: Vec<FirmProductionFunction<T>>,
    pub params: CalibrationParams,
    /// Firms with non-zero in-strength but no usable baseline output; treated as inert.
    pub degenerate: Vec<usize>,
}

impl<T: Scalar> ProductionFunctionSet<T> {
    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn get(&self, firm: usize) -> &FirmProductionFunction<T> {
        &self.functions[firm]
    }

    /// `firm_id,x0,beta,n_essential_groups,n_nonessential`
    pub fn audit_csv(&self, net: &ProductionNetwork<T>) -> String {
        let mut out = String::from("firm_id,x0,beta,n_essential_groups,n_nonessential\n");
        for (i, f) in self.functions.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                net.firm(i).id,
                f.x0,
                f.beta,
                f.essential.len(),
                f.n_nonessential()
            ));
        }
        out
    }

    pub fn write_audit(&self, net: &ProductionNetwork<T>, path: impl AsRef<Path>) -> std::io::Result<()> {
        write_atomic(path.as_ref(), self.audit_csv(net).as_bytes())
    }
}

/// `inputs` are the buyer's `(supplier, weight)` pairs sorted by supplier.
fn group<T: Scalar>(inputs: &[(usize, T)], sector: Option<Sector>, suppliers: &[usize], scale: T) -> InputGroup<T> {
    let weights: Vec<T> = suppliers
        .iter()
        .map(|&s| {
            let k = inputs
                .binary_search_by_key(&s, |&(j, _)| j)
                .expect("partition built from this network");
            inputs[k].1
        })
        .collect();
    let total = weights.iter().fold(T::zero(), |a, &w| a + w);
    InputGroup {
        sector,
        suppliers: suppliers.to_vec(),
        weights,
        total,
        alpha: total / scale,
    }
}

pub fn calibrate<T: Scalar>(
    net: &ProductionNetwork<T>,
    partition: &[InputPartition],
    params: &CalibrationParams,
) -> Result<ProductionFunctionSet<T>, CalibrationError> {
    if !(0.0..=1.0).contains(&params.gamma) {
        return Err(CalibrationError::InvalidGamma(params.gamma));
    }
    if partition.len() != net.len() {
        return Err(CalibrationError::PartitionMismatch {
            expected: net.len(),
            got: partition.len(),
        });
    }
    let strengths = net.strengths();
    let gamma = T::of(params.gamma);
    let mut degenerate = Vec::new();
    let functions = partition
        .iter()
        .enumerate()
        .map(|(i, part)| {
            let (s_in, s_out) = (strengths.s_in[i], strengths.s_out[i]);
            if s_in == T::zero() && s_out == T::zero() {
                return FirmProductionFunction::inert(T::zero());
            }
            let x0 = params.x0_rule.baseline(s_in, s_out);
            if !(x0 > T::zero()) || !x0.is_finite() {
                log::warn!("firm {} has no usable baseline output; treated as inactive", net.firm(i).id);
                degenerate.push(i);
                return FirmProductionFunction::inert(x0);
            }
            let inputs: Vec<(usize, T)> = net.in_edges(i).map(|e| (e.supplier, e.weight)).collect();
            let essential = part
                .essential
                .iter()
                .map(|(sector, sup)| group(&inputs, Some(sector.clone()), sup, x0))
                .collect();
            let (beta, nonessential, dropped) = if part.nonessential.is_empty() {
                (x0, None, false)
            } else {
                let beta = gamma * x0;
                let dropped = !(x0 > beta);
                let g = group(&inputs, None, &part.nonessential, if dropped { x0 } else { x0 - beta });
                (beta, Some(g), dropped)
            };
            FirmProductionFunction {
                x0,
                beta,
                essential,
                nonessential,
                nonessential_dropped: dropped,
                inert: false,
            }
        })
        .collect();
    Ok(ProductionFunctionSet {
        functions,
        params: params.clone(),
        degenerate,
    })
}

/// `classify_inputs` followed by `calibrate`.
pub fn calibrate_network<T: Scalar>(
    net: &ProductionNetwork<T>,
    ess: &EssentialityMatrix,
    gamma: f64,
    x0_rule: X0Rule,
) -> Result<ProductionFunctionSet<T>, CalibrationError> {
    let partition = classify_inputs(net, ess)?;
    let params = CalibrationParams {
        gamma,
        x0_rule,
        essentiality_source: ess.source().to_string(),
    };
    calibrate(net, &partition, &params)
}
