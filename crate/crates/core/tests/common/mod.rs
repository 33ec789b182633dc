#![allow(dead_code)]

use std::collections::HashMap;

use esri_net_core::propagation::LevelState;
use esri_net_core::{
    calibrate_network, rank_firms, run_strategy, Engine, EssentialityMatrix, Firm, FunctionSet, Heuristic,
    Network, NetworkBuilder, PropagationOptions, RiskModel, ShockScenario, X0Rule,
};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const SECTORS: [&str; 4] = ["A01", "C10", "C20", "G46"];
pub const GAMMAS: [f64; 3] = [0.0, 0.5, 1.0];

/// A small random economy plus calibration choices and one removal set.
#[derive(Debug, Clone)]
pub struct Case {
    pub net: Network,
    /// `essential[s][b]` for supplier sector `s` and buyer sector `b`.
    pub essential: [[bool; 4]; 4],
    pub gamma: f64,
    pub x0_rule: X0Rule,
    pub removed: Vec<usize>,
    /// A superset of `removed`.
    pub removed_more: Vec<usize>,
}

impl Case {
    pub fn essentiality(&self) -> EssentialityMatrix {
        let mut m = EssentialityMatrix::new(None);
        for (s, row) in self.essential.iter().enumerate() {
            for (b, &e) in row.iter().enumerate() {
                m.insert(SECTORS[s], SECTORS[b], e);
            }
        }
        m
    }

    pub fn calibrate(&self) -> FunctionSet {
        calibrate_network(&self.net, &self.essentiality(), self.gamma, self.x0_rule).unwrap()
    }

    pub fn scenario(&self) -> ShockScenario {
        ShockScenario::from_indices(self.removed.iter().copied())
    }

    pub fn larger_scenario(&self) -> ShockScenario {
        ShockScenario::from_indices(self.removed_more.iter().copied())
    }

    pub fn oracle(&self) -> Oracle {
        Oracle::new(self)
    }
}

#[derive(Debug, Clone)]
struct RawCase {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    sectors: Vec<usize>,
    employees: Vec<Option<u64>>,
    co2: Vec<Option<f64>>,
    essential: [[bool; 4]; 4],
    gamma: f64,
    max_rule: bool,
    removed: Vec<bool>,
    extra: Vec<bool>,
}

fn build(mut raw: RawCase) -> Case {
    if raw.employees.iter().all(Option::is_none) {
        raw.employees[0] = Some(1);
    }
    if raw.co2.iter().all(|c| c.unwrap_or(0.0) == 0.0) {
        raw.co2[0] = Some(1.0);
    }
    let mut b = NetworkBuilder::<f64>::new();
    for i in 0..raw.n {
        let mut f = Firm::new(format!("n{i:02}"), SECTORS[raw.sectors[i]]);
        if let Some(e) = raw.employees[i] {
            f = f.with_employees(e);
        }
        if let Some(c) = raw.co2[i] {
            f = f.with_co2(c, true);
        }
        b.add_firm(f).unwrap();
    }
    for &(s, t, w) in &raw.edges {
        if s != t {
            b.add_edge(&format!("n{s:02}"), &format!("n{t:02}"), w).unwrap();
        }
    }
    let removed: Vec<usize> = (0..raw.n).filter(|&i| raw.removed[i]).collect();
    let removed_more: Vec<usize> = (0..raw.n).filter(|&i| raw.removed[i] || raw.extra[i]).collect();
    Case {
        net: b.build(),
        essential: raw.essential,
        gamma: raw.gamma,
        x0_rule: if raw.max_rule { X0Rule::Max } else { X0Rule::Out },
        removed,
        removed_more,
    }
}

/// Random networks of 1..=`max_n` firms. Parallel edges are merged by the
/// builder; self-loops are dropped.
pub fn arb_case(max_n: usize) -> impl Strategy<Value = Case> {
    (1..=max_n)
        .prop_flat_map(|n| {
            let edge = (0..n, 0..n, 0.1f64..10.0);
            (
                Just(n),
                prop::collection::vec(edge, 0..=(3 * n)),
                prop::collection::vec(0..4usize, n),
                prop::collection::vec(prop::option::weighted(0.8, 1u64..50), n),
                prop::collection::vec(prop::option::weighted(0.5, 0.0f64..100.0), n),
                prop::array::uniform4(prop::array::uniform4(any::<bool>())),
                prop::sample::select(GAMMAS.to_vec()),
                any::<bool>(),
                prop::collection::vec(prop::bool::weighted(0.25), n),
                prop::collection::vec(prop::bool::weighted(0.25), n),
            )
        })
        .prop_map(
            |(n, edges, sectors, employees, co2, essential, gamma, max_rule, removed, extra)| {
                build(RawCase {
                    n,
                    edges,
                    sectors,
                    employees,
                    co2,
                    essential,
                    gamma,
                    max_rule,
                    removed,
                    extra,
                })
            },
        )
}

/// Tight options for comparisons against the oracle.
pub fn tight() -> PropagationOptions {
    PropagationOptions {
        tol: 1e-13,
        max_iter: 1_000_000,
    }
}

/// Dense brute-force reference: absolute Leontief outputs on a full weight
/// matrix, iterated until the state stops changing.
pub struct Oracle {
    n: usize,
    /// `w[j][i]`: sales of `j` to `i`.
    w: Vec<Vec<f64>>,
    x0: Vec<f64>,
    beta: Vec<f64>,
    inert: Vec<bool>,
    /// Per firm: (supplier set, alpha) for each essential sector.
    essential: Vec<Vec<(Vec<usize>, f64)>>,
    /// Per firm: non-essential suppliers and alpha, if they enter.
    linear: Vec<Option<(Vec<usize>, f64)>>,
    s_out: Vec<f64>,
    employees: Vec<Option<f64>>,
    co2: Vec<f64>,
}

impl Oracle {
    pub fn new(case: &Case) -> Oracle {
        let net = &case.net;
        let n = net.len();
        let mut w = vec![vec![0.0; n]; n];
        for e in net.edges() {
            w[e.supplier][e.buyer] += e.weight;
        }
        let s_out: Vec<f64> = (0..n).map(|j| w[j].iter().sum()).collect();
        let s_in: Vec<f64> = (0..n).map(|i| (0..n).map(|j| w[j][i]).sum()).collect();
        let sector = |i: usize| SECTORS.iter().position(|s| *s == net.firm(i).sector.as_str()).unwrap();

        let mut x0 = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut inert = vec![false; n];
        let mut essential = vec![Vec::new(); n];
        let mut linear = vec![None; n];
        for i in 0..n {
            if s_in[i] == 0.0 && s_out[i] == 0.0 {
                inert[i] = true;
                continue;
            }
            x0[i] = match case.x0_rule {
                X0Rule::Out => {
                    if s_out[i] > 0.0 {
                        s_out[i]
                    } else {
                        s_in[i]
                    }
                }
                X0Rule::Max => s_in[i].max(s_out[i]),
            };
            let mut by_sector: HashMap<usize, Vec<usize>> = HashMap::new();
            let mut ne = Vec::new();
            for j in 0..n {
                if w[j][i] > 0.0 {
                    if case.essential[sector(j)][sector(i)] {
                        by_sector.entry(sector(j)).or_default().push(j);
                    } else {
                        ne.push(j);
                    }
                }
            }
            for (_, sup) in by_sector {
                let total: f64 = sup.iter().map(|&j| w[j][i]).sum();
                essential[i].push((sup, total / x0[i]));
            }
            if ne.is_empty() {
                beta[i] = x0[i];
            } else {
                beta[i] = case.gamma * x0[i];
                if beta[i] < x0[i] {
                    let total: f64 = ne.iter().map(|&j| w[j][i]).sum();
                    linear[i] = Some((ne, total / (x0[i] - beta[i])));
                }
            }
        }
        let employees = net.firms().iter().map(|f| f.employees.map(|e| e as f64)).collect();
        let co2 = net.firms().iter().map(|f| f.co2.unwrap_or(0.0)).collect();
        Oracle {
            n,
            w,
            x0,
            beta,
            inert,
            essential,
            linear,
            s_out,
            employees,
            co2,
        }
    }

    fn output(&self, i: usize, h_d: &[f64]) -> f64 {
        let input = |sup: &[usize]| sup.iter().map(|&j| self.w[j][i] * h_d[j]).sum::<f64>();
        let mut x = f64::INFINITY;
        for (sup, alpha) in &self.essential[i] {
            x = x.min(input(sup) / alpha);
        }
        let lin = match &self.linear[i] {
            Some((sup, alpha)) => self.beta[i] + input(sup) / alpha,
            None => self.beta[i],
        };
        x.min(lin)
    }

    fn demand(&self, i: usize, h_u: &[f64]) -> f64 {
        let lost: f64 = (0..self.n).map(|j| self.w[i][j] * (1.0 - h_u[j])).sum();
        (self.x0[i] - lost) / self.x0[i]
    }

    /// `(h_d, h_u)` at the fixed point reached from all ones.
    pub fn solve(&self, removed: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let gone: Vec<bool> = (0..self.n).map(|i| removed.contains(&i)).collect();
        let mut h_d = vec![1.0; self.n];
        let mut h_u = vec![1.0; self.n];
        for i in 0..self.n {
            if gone[i] {
                h_d[i] = 0.0;
                h_u[i] = 0.0;
            }
        }
        for _ in 0..2_000_000 {
            let mut nd = vec![0.0; self.n];
            let mut nu = vec![0.0; self.n];
            for i in 0..self.n {
                if gone[i] {
                    continue;
                }
                if self.inert[i] {
                    nd[i] = 1.0;
                    nu[i] = 1.0;
                    continue;
                }
                nd[i] = (self.output(i, &h_d) / self.x0[i]).clamp(0.0, 1.0);
                nu[i] = self.demand(i, &h_u).clamp(0.0, 1.0);
            }
            let delta = (0..self.n)
                .map(|i| (nd[i] - h_d[i]).abs().max((nu[i] - h_u[i]).abs()))
                .fold(0.0, f64::max);
            h_d = nd;
            h_u = nu;
            if delta < 1e-15 {
                break;
            }
        }
        (h_d, h_u)
    }

    pub fn levels(&self, removed: &[usize]) -> Vec<f64> {
        let (d, u) = self.solve(removed);
        d.iter().zip(&u).map(|(a, b)| a.min(*b)).collect()
    }

    pub fn esri(&self, h: &[f64]) -> f64 {
        let total: f64 = self.s_out.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        self.s_out.iter().zip(h).map(|(s, h)| s * (1.0 - h)).sum::<f64>() / total
    }

    pub fn ew_esri(&self, h: &[f64]) -> Option<f64> {
        let total: f64 = self.employees.iter().flatten().sum();
        if total == 0.0 {
            return None;
        }
        Some(
            self.employees
                .iter()
                .zip(h)
                .map(|(e, h)| e.unwrap_or(0.0) * (1.0 - h))
                .sum::<f64>()
                / total,
        )
    }

    pub fn co2_eliminated(&self, h: &[f64]) -> f64 {
        self.co2.iter().zip(h).map(|(c, h)| c * (1.0 - h)).sum()
    }
}

pub fn sup_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Engine against oracle on one case: sup-norm gap of `h` and index gaps.
pub fn oracle_gaps(case: &Case) -> (f64, f64, f64) {
    let pf = case.calibrate();
    let model = RiskModel::new(&case.net, &pf, tight(), None).unwrap();
    let eq = model.propagate(&case.scenario()).unwrap();
    assert!(eq.converged, "engine did not converge");
    let oracle = case.oracle();
    let h_ref = oracle.levels(&case.removed);
    let h_gap = sup_norm(&eq.levels(), &h_ref);
    let esri_gap = (model.esri_of(&eq) - oracle.esri(&h_ref)).abs();
    let ew_gap = match (model.ew_esri_of(&eq).ok(), oracle.ew_esri(&h_ref)) {
        (Some(a), Some(b)) => (a - b).abs(),
        (None, None) => 0.0,
        _ => f64::INFINITY,
    };
    (h_gap, esri_gap, ew_gap)
}

/// Each synchronous step from the initial state lowers no level, and all
/// levels stay in [0, 1].
pub fn check_monotone_descent(case: &Case) -> Result<(), TestCaseError> {
    let pf = case.calibrate();
    let engine = Engine::new(&case.net, &pf).unwrap();
    let scenario = case.scenario();
    let mut prev = LevelState::ones(case.net.len());
    for &f in scenario.removed() {
        prev.h_d[f] = 0.0;
        prev.h_u[f] = 0.0;
    }
    for _ in 0..200 {
        let next = engine.step(&prev, &scenario).unwrap();
        for i in 0..case.net.len() {
            prop_assert!(next.h_d[i] <= prev.h_d[i], "h_d rose at firm {}", i);
            prop_assert!(next.h_u[i] <= prev.h_u[i], "h_u rose at firm {}", i);
            prop_assert!((0.0..=1.0).contains(&next.h_d[i]) && (0.0..=1.0).contains(&next.h_u[i]));
        }
        if next == prev {
            break;
        }
        prev = next;
    }
    Ok(())
}

/// Slack for comparisons between separately converged equilibria.
pub const SCENARIO_SLACK: f64 = 1e-9;

pub fn check_scenario_monotonicity(case: &Case) -> Result<(), TestCaseError> {
    let pf = case.calibrate();
    let model = RiskModel::new(&case.net, &pf, tight(), None).unwrap();
    let small = model.propagate(&case.scenario()).unwrap().levels();
    let large = model.propagate(&case.larger_scenario()).unwrap().levels();
    for (i, (a, b)) in large.iter().zip(&small).enumerate() {
        prop_assert!(*a <= *b + SCENARIO_SLACK, "firm {}: {} > {}", i, a, b);
    }
    Ok(())
}

pub fn check_scale_invariance(case: &Case, factor: f64) -> Result<(), TestCaseError> {
    let scaled_net = case.net.map_weights(|w| w * factor);
    let scaled = Case {
        net: scaled_net,
        ..case.clone()
    };
    let indices = |c: &Case| {
        let pf = c.calibrate();
        let model = RiskModel::new(&c.net, &pf, tight(), None).unwrap();
        let eq = model.propagate(&c.scenario()).unwrap();
        (model.esri_of(&eq), model.ew_esri_of(&eq).unwrap())
    };
    let (e0, w0) = indices(case);
    let (e1, w1) = indices(&scaled);
    prop_assert!((e0 - e1).abs() <= 1e-9, "esri {} vs {}", e0, e1);
    prop_assert!((w0 - w1).abs() <= 1e-9, "ew_esri {} vs {}", w0, w1);
    Ok(())
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

/// Batch indices and a strategy curve are bit-identical on 1 and 4 workers.
pub fn check_thread_independence(case: &Case) -> Result<(), TestCaseError> {
    let pf = case.calibrate();
    let model = RiskModel::new(&case.net, &pf, PropagationOptions::default(), None).unwrap();
    let ids: Vec<String> = case.net.firms().iter().map(|f| f.id.clone()).collect();
    let run = |threads: usize| {
        pool(threads).install(|| {
            let table = model.batch_indices(&ids);
            let rows: Vec<_> = table.ok_rows().cloned().collect();
            let order = rank_firms(&rows, Heuristic::OptimalRatio);
            let curve = run_strategy(&model, &order, 0.0).ok();
            (table, curve)
        })
    };
    prop_assert_eq!(run(1), run(4));
    Ok(())
}

/// All heuristics end on the same point once every candidate is removed.
pub fn check_terminal_equality(case: &Case) -> Result<(), TestCaseError> {
    let pf = case.calibrate();
    let model = RiskModel::new(&case.net, &pf, PropagationOptions::default(), None).unwrap();
    let candidates: Vec<String> = case
        .removed_more
        .iter()
        .map(|&i| case.net.firm(i).id.clone())
        .collect();
    let table = model.batch_indices(&candidates);
    let rows: Vec<_> = table.ok_rows().cloned().collect();
    prop_assert_eq!(rows.len(), candidates.len());
    let ends: Vec<(f64, f64)> = Heuristic::ALL
        .iter()
        .map(|&h| {
            let curve = run_strategy(&model, &rank_firms(&rows, h), 0.0).unwrap();
            let last = curve.last();
            (last.cum_co2_saved, last.cum_job_loss)
        })
        .collect();
    for e in &ends[1..] {
        prop_assert!((e.0 - ends[0].0).abs() <= 1e-9 && (e.1 - ends[0].1).abs() <= 1e-9, "{:?}", ends);
    }
    Ok(())
}
