//! Seeded synthetic production networks with heavy-tailed degrees and
//! strengths, sector labels, head counts and an ETS-like emitter subset.
//!
//! Each generation stage draws from its own ChaCha stream derived from the
//! seed, so adding or changing a stage never perturbs the earlier ones.

use std::collections::HashSet;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::EssentialityMatrix;
use crate::network::{load_network_dir, write_network, Firm, NetworkBuilder, NetworkError, ProductionNetwork};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible parameters: {0}")]
    InfeasibleParams(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Stream ids, one per stage.
mod stage {
    pub const DEGREES: u64 = 1;
    pub const WIRING: u64 = 2;
    pub const WEIGHTS: u64 = 3;
    pub const SECTORS: u64 = 4;
    pub const EMPLOYMENT: u64 = 5;
    pub const EMITTERS: u64 = 6;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n_firms: usize,
    pub n_edges: usize,
    /// Density exponent of the degree propensity tail, `p(k) ~ k^-exponent`.
    pub degree_exponent: f64,
    pub sector_weights: Vec<(String, f64)>,
    /// `(mu, sigma)` of log head count.
    pub employment_lognormal: (f64, f64),
    /// `(mu, sigma)` of log tonnes CO2 for the emitter subset.
    pub emission_lognormal: (f64, f64),
    /// Log-scale spread of individual edge weights.
    pub weight_sigma: f64,
    pub n_ets: usize,
    pub seed: u64,
}

impl SynthParams {
    pub fn new(n_firms: usize, n_edges: usize, n_ets: usize, seed: u64) -> Self {
        SynthParams {
            n_firms,
            n_edges,
            n_ets,
            seed,
            ..Default::default()
        }
    }
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_firms: 1000,
            n_edges: 5000,
            degree_exponent: 2.5,
            sector_weights: default_sector_weights(),
            employment_lognormal: (1.5, 1.3),
            emission_lognormal: (10.0, 2.0),
            weight_sigma: 1.0,
            n_ets: 20,
            seed: 42,
        }
    }
}

/// Rough NACE mix of a small open economy.
pub fn default_sector_weights() -> Vec<(String, f64)> {
    [
        ("A01", 0.04),
        ("B08", 0.01),
        ("C10", 0.04),
        ("C20", 0.02),
        ("C23", 0.02),
        ("C24", 0.02),
        ("C25", 0.04),
        ("C29", 0.02),
        ("D35", 0.01),
        ("E38", 0.02),
        ("F41", 0.10),
        ("G46", 0.18),
        ("G47", 0.14),
        ("H49", 0.07),
        ("I56", 0.05),
        ("J62", 0.05),
        ("M70", 0.10),
        ("N82", 0.07),
    ]
    .into_iter()
    .map(|(s, w)| (s.to_string(), w))
    .collect()
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn check(params: &SynthParams) -> Result<(), SynthError> {
    let bad = |m: String| Err(SynthError::InfeasibleParams(m));
    let n = params.n_firms;
    if n == 0 {
        return bad("n_firms must be at least 1".into());
    }
    let capacity = n.saturating_mul(n - 1);
    if params.n_edges > capacity {
        return bad(format!(
            "{} edges exceed the simple-digraph capacity {capacity} of {n} firms",
            params.n_edges
        ));
    }
    if params.n_edges + 1 < n {
        return bad(format!("need at least n_firms - 1 = {} edges", n - 1));
    }
    if params.n_ets > n {
        return bad(format!("n_ets {} exceeds n_firms {n}", params.n_ets));
    }
    if !(params.degree_exponent > 1.0) {
        return bad("degree_exponent must exceed 1".into());
    }
    let sigmas = [
        params.employment_lognormal.1,
        params.emission_lognormal.1,
        params.weight_sigma,
    ];
    if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return bad("lognormal sigmas must be finite and non-negative".into());
    }
    if params.sector_weights.is_empty() || params.sector_weights.iter().any(|(_, w)| !(*w > 0.0)) {
        return bad("sector weights must be non-empty and positive".into());
    }
    Ok(())
}

/// Pareto(x_min = 1) propensities with density exponent `exponent`, drawn
/// by stratified quantiles (one uniform per stratum, then shuffled) so the
/// tail of a finite network follows the target shape closely.
fn propensities(r: &mut ChaCha8Rng, n: usize, exponent: f64) -> Vec<f64> {
    let shape = exponent - 1.0;
    let mut p: Vec<f64> = (0..n)
        .map(|k| {
            let u = (k as f64 + r.random::<f64>()) / n as f64;
            (1.0 - u).max(f64::MIN_POSITIVE).powf(-1.0 / shape)
        })
        .collect();
    p.shuffle(r);
    p
}

/// Configuration-style wiring: sample supplier and buyer stubs in proportion
/// to the propensities, pair them after a shuffle, and re-pair stubs that
/// would form self-loops or duplicates.
fn wire(
    r: &mut ChaCha8Rng,
    out_p: &[f64],
    in_p: &[f64],
    n_edges: usize,
) -> Result<Vec<(usize, usize)>, SynthError> {
    let n = out_p.len();
    if n_edges == 0 {
        return Ok(Vec::new());
    }
    let out_dist = WeightedIndex::new(out_p).map_err(|e| SynthError::InfeasibleParams(e.to_string()))?;
    let in_dist = WeightedIndex::new(in_p).map_err(|e| SynthError::InfeasibleParams(e.to_string()))?;
    let mut out_stubs: Vec<usize> = (0..n_edges).map(|_| out_dist.sample(r)).collect();
    let mut in_stubs: Vec<usize> = (0..n_edges).map(|_| in_dist.sample(r)).collect();
    in_stubs.shuffle(r);

    let mut present: HashSet<(usize, usize)> = HashSet::with_capacity(n_edges);
    let mut edges = Vec::with_capacity(n_edges);
    for _round in 0..20 {
        let mut rej_out = Vec::new();
        let mut rej_in = Vec::new();
        for (&s, &b) in out_stubs.iter().zip(&in_stubs) {
            if s != b && present.insert((s, b)) {
                edges.push((s, b));
            } else {
                rej_out.push(s);
                rej_in.push(b);
            }
        }
        if rej_out.is_empty() {
            return Ok(edges);
        }
        rej_in.shuffle(r);
        out_stubs = rej_out;
        in_stubs = rej_in;
    }
    // leftover supplier stubs keep their supplier and look for a new buyer
    for &s in &out_stubs {
        for attempt in 0..128 {
            let b = if attempt < 64 { in_dist.sample(r) } else { r.random_range(0..n) };
            if s != b && present.insert((s, b)) {
                edges.push((s, b));
                break;
            }
        }
    }
    // then fresh propensity-weighted pairs, then an exhaustive fill near capacity
    let mut missing = n_edges - edges.len();
    let mut tries = 0usize;
    while missing > 0 && tries < 1000 * missing + 10_000 {
        tries += 1;
        let (s, b) = (out_dist.sample(r), in_dist.sample(r));
        if s != b && present.insert((s, b)) {
            edges.push((s, b));
            missing -= 1;
        }
    }
    if missing > 0 {
        let mut free: Vec<(usize, usize)> = (0..n)
            .flat_map(|s| (0..n).map(move |b| (s, b)))
            .filter(|&(s, b)| s != b && !present.contains(&(s, b)))
            .collect();
        free.shuffle(r);
        edges.extend(free.into_iter().take(missing));
    }
    Ok(edges)
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

pub fn generate<T: Scalar>(params: &SynthParams) -> Result<ProductionNetwork<T>, SynthError> {
    check(params)?;
    let n = params.n_firms;

    let mut r_deg = rng(params.seed, stage::DEGREES);
    let out_p = propensities(&mut r_deg, n, params.degree_exponent);
    let in_p = propensities(&mut r_deg, n, params.degree_exponent);

    let mut r_wire = rng(params.seed, stage::WIRING);
    let mut pairs = wire(&mut r_wire, &out_p, &in_p, params.n_edges)?;
    pairs.sort_unstable();

    let mut r_w = rng(params.seed, stage::WEIGHTS);
    let weight_dist = LogNormal::new(0.0, params.weight_sigma).expect("checked sigma");
    let weights: Vec<f64> = pairs
        .iter()
        .map(|_| round_to(1000.0 * weight_dist.sample(&mut r_w), 2).max(0.01))
        .collect();

    let mut r_sec = rng(params.seed, stage::SECTORS);
    let sector_dist =
        WeightedIndex::new(params.sector_weights.iter().map(|(_, w)| *w)).expect("checked sector weights");
    let sectors: Vec<&str> = (0..n)
        .map(|_| params.sector_weights[sector_dist.sample(&mut r_sec)].0.as_str())
        .collect();

    let mut r_emp = rng(params.seed, stage::EMPLOYMENT);
    let (mu_e, sigma_e) = params.employment_lognormal;
    let emp_dist = LogNormal::new(mu_e, sigma_e).expect("checked sigma");
    let employees: Vec<u64> = (0..n)
        .map(|_| (emp_dist.sample(&mut r_emp).round() as u64).max(1))
        .collect();

    // emitters: weighted sampling without replacement (exponential keys),
    // industrial divisions five times as likely
    let mut r_ets = rng(params.seed, stage::EMITTERS);
    let mut keys: Vec<(f64, usize)> = sectors
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let w = if matches!(&s[..1], "B" | "C" | "D" | "E" | "H") { 5.0 } else { 1.0 };
            let u: f64 = 1.0 - r_ets.random::<f64>();
            (-u.ln() / w, i)
        })
        .collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (mu_c, sigma_c) = params.emission_lognormal;
    let co2_dist = LogNormal::new(mu_c, sigma_c).expect("checked sigma");
    let mut co2 = vec![None; n];
    for &(_, i) in keys.iter().take(params.n_ets) {
        co2[i] = Some(round_to(co2_dist.sample(&mut r_ets), 1).max(0.1));
    }

    let width = (n.max(2) - 1).to_string().len();
    let id = |i: usize| format!("f{i:0width$}");
    let mut builder = NetworkBuilder::<T>::new();
    for i in 0..n {
        let mut firm = Firm::new(id(i), sectors[i]).with_employees(employees[i]);
        if let Some(c) = co2[i] {
            firm = firm.with_co2(c, true);
        }
        builder.add_firm(firm)?;
    }
    for (&(s, b), &w) in pairs.iter().zip(&weights) {
        builder.add_edge(&id(s), &id(b), T::of(w))?;
    }
    Ok(builder.build())
}

/// Like [`generate`], but when `override_dir` is given the network stored
/// there is returned instead (its firm count must equal `n_firms`).
pub fn generate_or_load<T: Scalar>(
    params: &SynthParams,
    override_dir: Option<&Path>,
) -> Result<ProductionNetwork<T>, SynthError> {
    match override_dir {
        None => generate(params),
        Some(dir) => {
            let net = load_network_dir(dir)?;
            if net.len() != params.n_firms {
                return Err(SynthError::InfeasibleParams(format!(
                    "fixture {} has {} firms, {} requested",
                    dir.display(),
                    net.len(),
                    params.n_firms
                )));
            }
            Ok(net)
        }
    }
}

/// Writes `firms.csv`, `edges.csv` and the bundled `essentiality.csv`.
pub fn write_synthetic<T: Scalar>(net: &ProductionNetwork<T>, dir: impl AsRef<Path>) -> Result<(), SynthError> {
    let dir = dir.as_ref();
    write_network(net, dir)?;
    EssentialityMatrix::bundled_default().write_csv(dir.join("essentiality.csv"))?;
    Ok(())
}

/// Density tail exponent of the largest `top_fraction` of `values` (at
/// least ten points) by a log-rank regression: with `p(x) ~ x^-exponent`,
/// `ln(rank - 1/2)` falls linearly in `ln x` with slope `1 - exponent`. The
/// half-rank shift removes most of the small-sample bias of the plain rank.
pub fn tail_exponent_rank_regression(values: &[f64], top_fraction: f64) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| *x > 0.0 && x.is_finite()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    let m = ((v.len() as f64 * top_fraction).round() as usize).max(10).min(v.len());
    if m < 3 {
        return None;
    }
    let pts: Vec<(f64, f64)> = v[..m]
        .iter()
        .enumerate()
        .map(|(i, &x)| (x.ln(), (i as f64 + 0.5).ln()))
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    (slope < 0.0).then(|| 1.0 - slope)
}

/// Share of the total held by the largest `fraction` of values (at least one).
pub fn top_share(values: &[f64], fraction: f64) -> f64 {
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let k = ((v.len() as f64 * fraction).ceil() as usize).max(1);
    v[..k.min(v.len())].iter().sum::<f64>() / total
}
