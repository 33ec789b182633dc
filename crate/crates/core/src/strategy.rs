//! Removal orderings for the decarbonization heuristics and cumulative
//! removal curves evaluated against an emission-reduction target.

use std::cmp::Ordering;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indices::{IndexError, IndexRow, RiskModel};
use crate::propagation::ShockScenario;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heuristic {
    /// Descending direct emissions.
    #[serde(rename = "emitters")]
    LargestEmittersFirst,
    /// Ascending single-firm EW-ESRI.
    #[serde(rename = "risk")]
    LeastRiskyFirst,
    /// Descending emission share per unit of EW-ESRI.
    #[serde(rename = "ratio")]
    OptimalRatio,
}

impl Heuristic {
    pub const ALL: [Heuristic; 3] = [
        Heuristic::LargestEmittersFirst,
        Heuristic::LeastRiskyFirst,
        Heuristic::OptimalRatio,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Heuristic::LargestEmittersFirst => "emitters",
            Heuristic::LeastRiskyFirst => "risk",
            Heuristic::OptimalRatio => "ratio",
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "emitters" => Ok(Heuristic::LargestEmittersFirst),
            "risk" => Ok(Heuristic::LeastRiskyFirst),
            "ratio" => Ok(Heuristic::OptimalRatio),
            other => Err(format!("unknown heuristic {other:?} (expected emitters, risk or ratio)")),
        }
    }
}

fn cmp_desc<T: Scalar>(a: T, b: T) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Orders candidate rows by the heuristic's key; ties fall back to higher
/// emissions, then ascending id. Returns firm indices.
pub fn rank_firms<'a, T: Scalar + 'a>(
    rows: impl IntoIterator<Item = &'a IndexRow<T>>,
    heuristic: Heuristic,
) -> Vec<usize> {
    let mut rows: Vec<&IndexRow<T>> = rows.into_iter().collect();
    rows.sort_by(|a, b| {
        let primary = match heuristic {
            Heuristic::LargestEmittersFirst => Ordering::Equal,
            Heuristic::LeastRiskyFirst => cmp_desc(b.ew_esri, a.ew_esri),
            Heuristic::OptimalRatio => cmp_desc(a.ratio.unwrap_or(T::zero()), b.ratio.unwrap_or(T::zero())),
        };
        primary
            .then_with(|| cmp_desc(a.co2, b.co2))
            .then_with(|| a.firm_id.cmp(&b.firm_id))
    });
    rows.into_iter().map(|r| r.firm).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow<T> {
    pub rank: usize,
    /// `None` on the rank-0 row (nothing removed).
    pub firm: Option<usize>,
    pub firm_id: String,
    pub cum_firms: usize,
    /// Eliminated emissions of the prefix as a share of the economy-wide total.
    pub cum_co2_saved: T,
    /// EW-ESRI of the cumulative removal.
    pub cum_job_loss: T,
    pub cum_esri: T,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyCurve<T> {
    pub target: f64,
    pub rows: Vec<CurveRow<T>>,
    /// Rank of the first prefix whose savings reach the target.
    pub benchmark: Option<usize>,
}

/// Table-1 style summary at the benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategySummary {
    pub heuristic: Option<Heuristic>,
    pub target: f64,
    pub benchmark_reached: bool,
    pub co2_reduction: f64,
    pub job_loss: f64,
    pub firms_removed: usize,
    pub final_co2_reduction: f64,
    pub final_job_loss: f64,
}

impl<T: Scalar> StrategyCurve<T> {
    pub fn benchmark_row(&self) -> Option<&CurveRow<T>> {
        self.benchmark.map(|k| &self.rows[k])
    }

    pub fn last(&self) -> &CurveRow<T> {
        self.rows.last().expect("curve always has the rank-0 row")
    }

    pub fn summary(&self, heuristic: Option<Heuristic>) -> StrategySummary {
        let at = self.benchmark_row().unwrap_or_else(|| self.last());
        StrategySummary {
            heuristic,
            target: self.target,
            benchmark_reached: self.benchmark.is_some(),
            co2_reduction: at.cum_co2_saved.to_f64_lossy(),
            job_loss: at.cum_job_loss.to_f64_lossy(),
            firms_removed: at.cum_firms,
            final_co2_reduction: self.last().cum_co2_saved.to_f64_lossy(),
            final_job_loss: self.last().cum_job_loss.to_f64_lossy(),
        }
    }

    /// Firms removed at the benchmark, in removal order.
    pub fn removed_at_benchmark(&self) -> Vec<usize> {
        match self.benchmark {
            Some(k) => self.rows[1..=k].iter().filter_map(|r| r.firm).collect(),
            None => Vec::new(),
        }
    }

    /// `rank,firm_id,cum_firms,cum_co2_saved,cum_job_loss,benchmark_flag`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,firm_id,cum_firms,cum_co2_saved,cum_job_loss,benchmark_flag\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.rank,
                r.firm_id,
                r.cum_firms,
                r.cum_co2_saved,
                r.cum_job_loss,
                u8::from(self.benchmark == Some(r.rank))
            );
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum StrategyError<T> {
    #[error("target must lie in [0, 1], got {0}")]
    InvalidTarget(f64),
    #[error("target {target} exceeds achievable savings {achievable}")]
    TargetUnreachable {
        target: f64,
        achievable: f64,
        curve: Box<StrategyCurve<T>>,
    },
    #[error(transparent)]
    Index(#[from] IndexError),
}

impl<T> StrategyError<T> {
    /// The curve, when the only failure was an unreachable target.
    pub fn into_curve(self) -> Option<StrategyCurve<T>> {
        match self {
            StrategyError::TargetUnreachable { curve, .. } => Some(*curve),
            _ => None,
        }
    }
}

/// Removes `ordering` one firm at a time. Every prefix is propagated from
/// scratch as a joint removal; prefixes run in parallel and are assembled
/// in rank order.
pub fn run_strategy<T: Scalar>(
    model: &RiskModel<'_, T>,
    ordering: &[usize],
    target: f64,
) -> Result<StrategyCurve<T>, StrategyError<T>> {
    if !(0.0..=1.0).contains(&target) {
        return Err(StrategyError::InvalidTarget(target));
    }
    let net = model.network();
    let rows = (0..=ordering.len())
        .into_par_iter()
        .map(|k| {
            let scenario = ShockScenario::from_indices(ordering[..k].iter().copied());
            let outcome = model.evaluate(&scenario)?;
            let firm = k.checked_sub(1).map(|p| ordering[p]);
            Ok(CurveRow {
                rank: k,
                firm,
                firm_id: firm.map(|f| net.firm(f).id.clone()).unwrap_or_default(),
                cum_firms: k,
                cum_co2_saved: outcome.co2?.share_total,
                cum_job_loss: outcome.ew_esri?,
                cum_esri: outcome.esri,
                converged: outcome.equilibrium.converged,
            })
        })
        .collect::<Result<Vec<_>, IndexError>>()?;
    let target_t = T::of(target);
    let benchmark = rows.iter().position(|r| r.cum_co2_saved >= target_t);
    let curve = StrategyCurve {
        target,
        rows,
        benchmark,
    };
    if benchmark.is_none() {
        let achievable = curve
            .rows
            .iter()
            .map(|r| r.cum_co2_saved.to_f64_lossy())
            .fold(0.0, f64::max);
        return Err(StrategyError::TargetUnreachable {
            target,
            achievable,
            curve: Box::new(curve),
        });
    }
    Ok(curve)
}
