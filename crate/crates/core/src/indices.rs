//! Output-weighted (ESRI) and employment-weighted (EW-ESRI) systemic risk
//! indices, eliminated-emission shares, and parallel batch evaluation.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::calibration::ProductionFunctionSet;
use crate::network::ProductionNetwork;
use crate::propagation::{
    ConvergenceMetadata, Engine, EquilibriumState, PropagationError, PropagationOptions, ShockScenario,
};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error("no firm has a known employee count")]
    NoEmploymentData,
    #[error("economy-wide CO2 total is not configured and no firm reports emissions")]
    MissingTotal,
}

/// Emission totals used as share denominators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionTotals<T> {
    /// Economy-wide total; `None` when neither configured nor derivable.
    pub total: Option<T>,
    /// Sum of ETS members' emissions (zero when there are none).
    pub ets: T,
}

impl<T: Scalar> EmissionTotals<T> {
    /// `configured` overrides the default, which is the sum of known firm emissions.
    pub fn from_network(net: &ProductionNetwork<T>, configured: Option<f64>) -> Self {
        let known: f64 = net.firms().iter().map(|f| f.co2_or_zero()).sum();
        let ets: f64 = net
            .firms()
            .iter()
            .filter(|f| f.ets_member)
            .map(|f| f.co2_or_zero())
            .sum();
        let total = match configured {
            Some(t) if t > 0.0 => Some(T::of(t)),
            _ if known > 0.0 => Some(T::of(known)),
            _ => None,
        };
        EmissionTotals { total, ets: T::of(ets) }
    }
}

/// Eliminated emissions of one equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Co2Savings<T> {
    pub eliminated: T,
    pub share_total: T,
    /// Eliminated emissions relative to the ETS total; `None` without ETS emissions.
    pub share_ets: Option<T>,
}

/// Σ_i co2_i·(1 − h_i) against the configured totals. Emissions of partially
/// producing firms scale linearly with their level.
pub fn co2_shares<T: Scalar>(
    net: &ProductionNetwork<T>,
    eq: &EquilibriumState<T>,
    totals: &EmissionTotals<T>,
) -> Result<Co2Savings<T>, IndexError> {
    let total = totals.total.ok_or(IndexError::MissingTotal)?;
    let eliminated = net
        .firms()
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, f)| acc + T::of(f.co2_or_zero()) * (T::one() - eq.h(i)));
    Ok(Co2Savings {
        eliminated,
        share_total: eliminated / total,
        share_ets: (totals.ets > T::zero()).then(|| eliminated / totals.ets),
    })
}

/// Everything computed for one removal scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome<T> {
    pub equilibrium: EquilibriumState<T>,
    pub esri: T,
    pub ew_esri: Result<T, IndexError>,
    pub co2: Result<Co2Savings<T>, IndexError>,
}

/// Shared evaluation context: a compiled engine plus index weights.
/// Immutable, so one instance serves any number of worker threads.
#[derive(Debug, Clone)]
pub struct RiskModel<'a, T> {
    net: &'a ProductionNetwork<T>,
    engine: Engine<T>,
    opts: PropagationOptions,
    s_out: Vec<T>,
    total_out: T,
    employees: Vec<T>,
    total_employees: Option<T>,
    emissions: EmissionTotals<T>,
}

impl<'a, T: Scalar> RiskModel<'a, T> {
    pub fn new(
        net: &'a ProductionNetwork<T>,
        pf: &ProductionFunctionSet<T>,
        opts: PropagationOptions,
        total_co2: Option<f64>,
    ) -> Result<Self, IndexError> {
        let engine = Engine::new(net, pf)?;
        let s_out = net.strengths().s_out;
        let total_out = s_out.iter().fold(T::zero(), |a, &s| a + s);
        // firms with unknown head count carry zero weight in both sums
        let employees: Vec<T> = net
            .firms()
            .iter()
            .map(|f| f.employees.map_or(T::zero(), |e| T::of(e as f64)))
            .collect();
        let any_known = net.firms().iter().any(|f| f.employees.is_some());
        let total_e = employees.iter().fold(T::zero(), |a, &e| a + e);
        Ok(RiskModel {
            net,
            engine,
            opts,
            s_out,
            total_out,
            employees,
            total_employees: (any_known && total_e > T::zero()).then_some(total_e),
            emissions: EmissionTotals::from_network(net, total_co2),
        })
    }

    pub fn network(&self) -> &'a ProductionNetwork<T> {
        self.net
    }

    pub fn engine(&self) -> &Engine<T> {
        &self.engine
    }

    pub fn options(&self) -> &PropagationOptions {
        &self.opts
    }

    pub fn emission_totals(&self) -> &EmissionTotals<T> {
        &self.emissions
    }

    pub fn propagate(&self, scenario: &ShockScenario) -> Result<EquilibriumState<T>, IndexError> {
        Ok(self.engine.propagate(scenario, &self.opts)?)
    }

    /// Output-weighted shortfall; zero on a network without edges.
    pub fn esri_of(&self, eq: &EquilibriumState<T>) -> T {
        if self.total_out <= T::zero() {
            return T::zero();
        }
        let lost = self
            .s_out
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, &s)| acc + s * (T::one() - eq.h(i)));
        lost / self.total_out
    }

    /// Employment-weighted shortfall: the expected fraction of jobs at risk.
    pub fn ew_esri_of(&self, eq: &EquilibriumState<T>) -> Result<T, IndexError> {
        let total = self.total_employees.ok_or(IndexError::NoEmploymentData)?;
        let lost = self
            .employees
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, &e)| acc + e * (T::one() - eq.h(i)));
        Ok(lost / total)
    }

    pub fn co2_of(&self, eq: &EquilibriumState<T>) -> Result<Co2Savings<T>, IndexError> {
        co2_shares(self.net, eq, &self.emissions)
    }

    pub fn evaluate(&self, scenario: &ShockScenario) -> Result<ScenarioOutcome<T>, IndexError> {
        let equilibrium = self.propagate(scenario)?;
        Ok(ScenarioOutcome {
            esri: self.esri_of(&equilibrium),
            ew_esri: self.ew_esri_of(&equilibrium),
            co2: self.co2_of(&equilibrium),
            equilibrium,
        })
    }

    pub fn esri(&self, scenario: &ShockScenario) -> Result<T, IndexError> {
        Ok(self.esri_of(&self.propagate(scenario)?))
    }

    pub fn ew_esri(&self, scenario: &ShockScenario) -> Result<T, IndexError> {
        self.ew_esri_of(&self.propagate(scenario)?)
    }

    /// Indices for the single-firm removal of `firm`.
    pub fn single_firm(&self, firm: usize) -> Result<IndexRow<T>, IndexError> {
        let outcome = self.evaluate(&ShockScenario::from_indices([firm]))?;
        let ew_esri = outcome.ew_esri?;
        let f = self.net.firm(firm);
        let co2 = T::of(f.co2_or_zero());
        let co2_share_total = self.emissions.total.map(|t| co2 / t);
        let co2_share_ets = (f.ets_member && self.emissions.ets > T::zero()).then(|| co2 / self.emissions.ets);
        let ratio = co2_share_total.map(|share| {
            if ew_esri > T::zero() {
                share / ew_esri
            } else if share > T::zero() {
                T::infinity()
            } else {
                T::zero()
            }
        });
        Ok(IndexRow {
            firm,
            firm_id: f.id.clone(),
            esri: outcome.esri,
            ew_esri,
            co2,
            co2_share_total,
            co2_share_ets,
            ratio,
            convergence: outcome.equilibrium.metadata(),
        })
    }

    fn candidate_row(&self, id: &str) -> Result<IndexRow<T>, RowError> {
        self.net
            .index_of(id)
            .ok_or_else(|| PropagationError::InvalidScenario(id.to_string()).into())
            .and_then(|f| self.single_firm(f))
            .map_err(|error| RowError {
                firm_id: id.to_string(),
                error,
            })
    }

    /// One independent single-firm scenario per candidate, evaluated in
    /// parallel and gathered in input order.
    pub fn batch_indices<S: AsRef<str> + Sync>(&self, candidates: &[S]) -> IndexTable<T> {
        let rows = candidates
            .par_iter()
            .map(|id| self.candidate_row(id.as_ref()))
            .collect();
        IndexTable { rows }
    }

    /// Sequential reference for [`batch_indices`](Self::batch_indices).
    pub fn batch_indices_sequential<S: AsRef<str>>(&self, candidates: &[S]) -> IndexTable<T> {
        let rows = candidates
            .iter()
            .map(|id| self.candidate_row(id.as_ref()))
            .collect();
        IndexTable { rows }
    }
}

/// Per-firm (single-removal) indices. CO2 columns describe the firm's own
/// direct emissions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexRow<T> {
    pub firm: usize,
    pub firm_id: String,
    pub esri: T,
    pub ew_esri: T,
    pub co2: T,
    pub co2_share_total: Option<T>,
    pub co2_share_ets: Option<T>,
    /// `co2_share_total / ew_esri`; +inf for emitters with zero EW-ESRI.
    pub ratio: Option<T>,
    pub convergence: ConvergenceMetadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub firm_id: String,
    pub error: IndexError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexTable<T> {
    pub rows: Vec<Result<IndexRow<T>, RowError>>,
}

fn opt<T: Scalar>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl<T: Scalar> IndexTable<T> {
    pub fn ok_rows(&self) -> impl Iterator<Item = &IndexRow<T>> {
        self.rows.iter().filter_map(|r| r.as_ref().ok())
    }

    pub fn errors(&self) -> impl Iterator<Item = &RowError> {
        self.rows.iter().filter_map(|r| r.as_ref().err())
    }

    pub fn row(&self, firm_id: &str) -> Option<&IndexRow<T>> {
        self.ok_rows().find(|r| r.firm_id == firm_id)
    }

    /// `firm_id,esri,ew_esri,co2_share_total,co2_share_ets,ratio`; failed rows are omitted.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("firm_id,esri,ew_esri,co2_share_total,co2_share_ets,ratio\n");
        for r in self.ok_rows() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.firm_id,
                r.esri,
                r.ew_esri,
                opt(r.co2_share_total),
                opt(r.co2_share_ets),
                opt(r.ratio)
            );
        }
        out
    }

    /// `firm_id,error` for failed rows.
    pub fn errors_csv(&self) -> String {
        let mut out = String::from("firm_id,error\n");
        for e in self.errors() {
            let _ = writeln!(out, "{},\"{}\"", e.firm_id, e.error.to_string().replace('"', "'"));
        }
        out
    }
}

/// ESRI of `scenario` with default propagation options.
pub fn esri<T: Scalar>(
    net: &ProductionNetwork<T>,
    pf: &ProductionFunctionSet<T>,
    scenario: &ShockScenario,
) -> Result<T, IndexError> {
    RiskModel::new(net, pf, PropagationOptions::default(), None)?.esri(scenario)
}

/// EW-ESRI of `scenario` with default propagation options.
pub fn ew_esri<T: Scalar>(
    net: &ProductionNetwork<T>,
    pf: &ProductionFunctionSet<T>,
    scenario: &ShockScenario,
) -> Result<T, IndexError> {
    RiskModel::new(net, pf, PropagationOptions::default(), None)?.ew_esri(scenario)
}

/// Single-firm indices for every candidate with default options.
pub fn batch_indices<T: Scalar, S: AsRef<str> + Sync>(
    net: &ProductionNetwork<T>,
    pf: &ProductionFunctionSet<T>,
    candidates: &[S],
) -> Result<IndexTable<T>, IndexError> {
    Ok(RiskModel::new(net, pf, PropagationOptions::default(), None)?.batch_indices(candidates))
}
