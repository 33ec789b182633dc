//! Plot-ready CSV series: the emission-share versus job-loss scatter, the
//! ratio rank distribution, cumulative strategy curves, and the emission
//! rank distribution with per-strategy removal markers.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indices::IndexTable;
use crate::network::ProductionNetwork;
use crate::output::write_atomic;
use crate::scalar::Scalar;
use crate::strategy::StrategyCurve;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("missing upstream result: {0}")]
    MissingUpstream(String),
    #[error("cannot read {path}: {message}")]
    Parse { path: String, message: String },
    #[error("unknown firm id {0:?} in upstream results")]
    UnknownFirm(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One row of `indices.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub firm_id: String,
    pub esri: f64,
    pub ew_esri: f64,
    pub co2_share_total: Option<f64>,
    pub co2_share_ets: Option<f64>,
    pub ratio: Option<f64>,
}

/// One row of `curve.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub rank: usize,
    pub firm_id: String,
    pub cum_firms: usize,
    pub cum_co2_saved: f64,
    pub cum_job_loss: f64,
    pub benchmark_flag: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeries {
    pub label: String,
    pub rows: Vec<CurveRecord>,
}

impl CurveSeries {
    pub fn from_curve<T: Scalar>(label: impl Into<String>, curve: &StrategyCurve<T>) -> Self {
        let rows = curve
            .rows
            .iter()
            .map(|r| CurveRecord {
                rank: r.rank,
                firm_id: r.firm_id.clone(),
                cum_firms: r.cum_firms,
                cum_co2_saved: r.cum_co2_saved.to_f64_lossy(),
                cum_job_loss: r.cum_job_loss.to_f64_lossy(),
                benchmark_flag: u8::from(curve.benchmark == Some(r.rank)),
            })
            .collect();
        CurveSeries { label: label.into(), rows }
    }

    /// Firm ids removed up to and including the benchmark row; empty when
    /// the target was never reached.
    pub fn removed_at_benchmark(&self) -> Vec<&str> {
        match self.rows.iter().position(|r| r.benchmark_flag == 1) {
            Some(k) => self.rows[1..=k].iter().map(|r| r.firm_id.as_str()).collect(),
            None => Vec::new(),
        }
    }
}

pub fn index_records<T: Scalar>(table: &IndexTable<T>) -> Vec<IndexRecord> {
    table
        .ok_rows()
        .map(|r| IndexRecord {
            firm_id: r.firm_id.clone(),
            esri: r.esri.to_f64_lossy(),
            ew_esri: r.ew_esri.to_f64_lossy(),
            co2_share_total: r.co2_share_total.map(|v| v.to_f64_lossy()),
            co2_share_ets: r.co2_share_ets.map(|v| v.to_f64_lossy()),
            ratio: r.ratio.map(|v| v.to_f64_lossy()),
        })
        .collect()
}

fn read_records<R: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<R>, ReportError> {
    if !path.exists() {
        return Err(ReportError::MissingUpstream(path.display().to_string()));
    }
    let parse = |e: csv::Error| ReportError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(parse)?;
    rdr.deserialize().collect::<Result<Vec<R>, _>>().map_err(parse)
}

pub fn read_indices_csv(path: impl AsRef<Path>) -> Result<Vec<IndexRecord>, ReportError> {
    read_records(path.as_ref())
}

pub fn read_curve_csv(path: impl AsRef<Path>, label: impl Into<String>) -> Result<CurveSeries, ReportError> {
    Ok(CurveSeries {
        label: label.into(),
        rows: read_records(path.as_ref())?,
    })
}

#[derive(Debug, Clone, Default)]
pub struct FigureInputs {
    pub indices: Option<Vec<IndexRecord>>,
    pub curves: Vec<CurveSeries>,
}

/// Paths of the files written by [`emit_figure_data`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureFiles {
    pub scatter: PathBuf,
    pub ratio_rank: PathBuf,
    pub curves: Option<PathBuf>,
    pub co2_rank: PathBuf,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// `firm_id,sector,co2_share_total,ew_esri,ratio`, one row per indexed firm.
pub fn scatter_csv<T: Scalar>(net: &ProductionNetwork<T>, indices: &[IndexRecord]) -> Result<String, ReportError> {
    let mut out = String::from("firm_id,sector,co2_share_total,ew_esri,ratio\n");
    for r in indices {
        let i = net.index_of(&r.firm_id).ok_or_else(|| ReportError::UnknownFirm(r.firm_id.clone()))?;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.firm_id,
            net.firm(i).sector.as_str(),
            fmt_opt(r.co2_share_total),
            r.ew_esri,
            fmt_opt(r.ratio)
        );
    }
    Ok(out)
}

/// `rank,firm_id,ratio` sorted by descending ratio (1-based rank); firms
/// without a ratio are skipped.
pub fn ratio_rank_csv(indices: &[IndexRecord]) -> String {
    let mut rows: Vec<(&str, f64)> = indices
        .iter()
        .filter_map(|r| r.ratio.map(|v| (r.firm_id.as_str(), v)))
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut out = String::from("rank,firm_id,ratio\n");
    for (k, (id, v)) in rows.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", k + 1, id, v);
    }
    out
}

/// `heuristic,rank,firm_id,cum_firms,cum_co2_saved,cum_job_loss,benchmark_flag`
pub fn curves_csv(curves: &[CurveSeries]) -> String {
    let mut out = String::from("heuristic,rank,firm_id,cum_firms,cum_co2_saved,cum_job_loss,benchmark_flag\n");
    for c in curves {
        for r in &c.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.label, r.rank, r.firm_id, r.cum_firms, r.cum_co2_saved, r.cum_job_loss, r.benchmark_flag
            );
        }
    }
    out
}

/// `rank,firm_id,co2,removed_<label>...` over ETS members by descending
/// emissions; a marker is 1 when the strategy removed the firm by its
/// benchmark.
pub fn co2_rank_csv<T: Scalar>(net: &ProductionNetwork<T>, curves: &[CurveSeries]) -> String {
    let mut ets: Vec<(usize, f64)> = net
        .firms()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.ets_member)
        .map(|(i, f)| (i, f.co2_or_zero()))
        .collect();
    ets.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| net.firm(a.0).id.cmp(&net.firm(b.0).id)));
    let removed: Vec<HashSet<&str>> = curves
        .iter()
        .map(|c| c.removed_at_benchmark().into_iter().collect())
        .collect();
    let mut out = String::from("rank,firm_id,co2");
    for c in curves {
        let _ = write!(out, ",removed_{}", c.label);
    }
    out.push('\n');
    for (k, &(i, co2)) in ets.iter().enumerate() {
        let id = net.firm(i).id.as_str();
        let _ = write!(out, "{},{},{}", k + 1, id, co2);
        for set in &removed {
            let _ = write!(out, ",{}", u8::from(set.contains(id)));
        }
        out.push('\n');
    }
    out
}

/// Writes `scatter.csv`, `ratio_rank.csv`, `co2_rank.csv` and, when curves
/// are present, `curves.csv` into `dir`.
pub fn emit_figure_data<T: Scalar>(
    net: &ProductionNetwork<T>,
    inputs: &FigureInputs,
    dir: impl AsRef<Path>,
) -> Result<FigureFiles, ReportError> {
    let dir = dir.as_ref();
    let indices = inputs
        .indices
        .as_deref()
        .ok_or_else(|| ReportError::MissingUpstream("indices".into()))?;
    let files = FigureFiles {
        scatter: dir.join("scatter.csv"),
        ratio_rank: dir.join("ratio_rank.csv"),
        curves: (!inputs.curves.is_empty()).then(|| dir.join("curves.csv")),
        co2_rank: dir.join("co2_rank.csv"),
    };
    write_atomic(&files.scatter, scatter_csv(net, indices)?.as_bytes())?;
    write_atomic(&files.ratio_rank, ratio_rank_csv(indices).as_bytes())?;
    if let Some(p) = &files.curves {
        write_atomic(p, curves_csv(&inputs.curves).as_bytes())?;
    }
    write_atomic(&files.co2_rank, co2_rank_csv(net, &inputs.curves).as_bytes())?;
    Ok(files)
}
