//! Fixed-point propagation of supply (downstream) and demand (upstream)
//! shocks from a set of removed firms.
//!
//! Each firm carries two relative levels. The downstream-constrained level
//! `h_d` is the firm's production function evaluated on its suppliers'
//! `h_d`; the upstream-constrained level `h_u` is
//! `1 − Σ_j (W_ij / x0_i)·(1 − h_u(j))` over its customers `j`, i.e. the
//! share of baseline sales still demanded. Firms without customers keep
//! `h_u = 1`. The realized level is `h = min(h_d, h_u)`. Removed firms sit at
//! zero on both channels.
//!
//! Updates are synchronous: every firm at step `t + 1` reads only the state
//! at step `t`. When few values move, only firms adjacent to a change are
//! recomputed; this gives bit-identical results to a full sweep.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::calibration::ProductionFunctionSet;
use crate::network::ProductionNetwork;
use crate::scalar::Scalar;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Dirty sets larger than this are evaluated on the rayon pool.
const PARALLEL_THRESHOLD: usize = 2048;

/// Switch to a dense sweep once more than `1 / DENSE_FRACTION` of all
/// channel values changed in the previous step.
const DENSE_FRACTION: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error("scenario references unknown firm {0:?}")]
    InvalidScenario(String),
    #[error("scenario firm index {index} out of range for {len} firms")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("production functions cover {pf} firms but the network has {net}")]
    Mismatch { net: usize, pf: usize },
    #[error("tolerance must be positive and max_iter at least 1")]
    InvalidOptions,
}

/// Set of firms forced to zero production from the first step on.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ShockScenario {
    removed: Vec<usize>,
}

impl ShockScenario {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut removed: Vec<usize> = indices.into_iter().collect();
        removed.sort_unstable();
        removed.dedup();
        ShockScenario { removed }
    }

    pub fn from_ids<T: Scalar, S: AsRef<str>>(
        net: &ProductionNetwork<T>,
        ids: impl IntoIterator<Item = S>,
    ) -> Result<Self, PropagationError> {
        let indices = ids
            .into_iter()
            .map(|id| {
                let id = id.as_ref();
                net.index_of(id)
                    .ok_or_else(|| PropagationError::InvalidScenario(id.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_indices(indices))
    }

    pub fn removed(&self) -> &[usize] {
        &self.removed
    }

    pub fn len(&self) -> usize {
        self.removed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.removed.is_empty()
    }

    pub fn contains(&self, firm: usize) -> bool {
        self.removed.binary_search(&firm).is_ok()
    }

    pub fn is_subset_of(&self, other: &ShockScenario) -> bool {
        self.removed.iter().all(|&f| other.contains(f))
    }

    fn mask(&self, n: usize) -> Result<Vec<bool>, PropagationError> {
        let mut mask = vec![false; n];
        for &f in &self.removed {
            if f >= n {
                return Err(PropagationError::IndexOutOfRange { index: f, len: n });
            }
            mask[f] = true;
        }
        Ok(mask)
    }
}

/// Relative production levels per firm.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelState<T> {
    pub h_d: Vec<T>,
    pub h_u: Vec<T>,
}

impl<T: Scalar> LevelState<T> {
    pub fn ones(n: usize) -> Self {
        LevelState {
            h_d: vec![T::one(); n],
            h_u: vec![T::one(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.h_d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_d.is_empty()
    }

    /// Realized level `min(h_d, h_u)`.
    pub fn h(&self, firm: usize) -> T {
        self.h_d[firm].min(self.h_u[firm])
    }

    pub fn levels(&self) -> Vec<T> {
        (0..self.len()).map(|i| self.h(i)).collect()
    }

    /// Largest absolute change on either channel.
    pub fn sup_distance(&self, other: &LevelState<T>) -> T {
        let d = self.h_d.iter().zip(&other.h_d).map(|(a, b)| (*a - *b).abs());
        let u = self.h_u.iter().zip(&other.h_u).map(|(a, b)| (*a - *b).abs());
        d.chain(u).fold(T::zero(), T::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumState<T> {
    pub state: LevelState<T>,
    pub iterations: usize,
    pub max_delta: T,
    pub converged: bool,
}

impl<T: Scalar> EquilibriumState<T> {
    pub fn h(&self, firm: usize) -> T {
        self.state.h(firm)
    }

    pub fn levels(&self) -> Vec<T> {
        self.state.levels()
    }

    pub fn metadata(&self) -> ConvergenceMetadata {
        ConvergenceMetadata {
            iterations: self.iterations,
            max_delta: self.max_delta.to_f64_lossy(),
            converged: self.converged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceMetadata {
    pub iterations: usize,
    pub max_delta: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropagationOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            tol: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Group<T> {
    start: u32,
    end: u32,
    /// `None` for an essential group, `Some(1 − β/x0)` for the linear term.
    slack: Option<T>,
}

/// Network and production functions compiled into flat arrays for repeated
/// propagation. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct Engine<T> {
    n: usize,
    pinned: Vec<bool>,
    group_offsets: Vec<u32>,
    groups: Vec<Group<T>>,
    member_supplier: Vec<u32>,
    /// Member weight divided by its group total.
    member_share: Vec<T>,
    demand_offsets: Vec<usize>,
    demand_customer: Vec<u32>,
    demand_coef: Vec<T>,
    customer_offsets: Vec<usize>,
    customer_list: Vec<u32>,
    supplier_offsets: Vec<usize>,
    supplier_list: Vec<u32>,
    parallel: bool,
}

fn idx(i: usize) -> u32 {
    u32::try_from(i).expect("network too large for 32-bit indices")
}

impl<T: Scalar> Engine<T> {
    pub fn new(net: &ProductionNetwork<T>, pf: &ProductionFunctionSet<T>) -> Result<Self, PropagationError> {
        let n = net.len();
        if pf.len() != n {
            return Err(PropagationError::Mismatch { net: n, pf: pf.len() });
        }
        let mut pinned = vec![false; n];
        let mut group_offsets = Vec::with_capacity(n + 1);
        let mut groups = Vec::new();
        let mut member_supplier = Vec::new();
        let mut member_share = Vec::new();
        let mut demand_offsets = Vec::with_capacity(n + 1);
        let mut demand_customer = Vec::with_capacity(net.edge_count());
        let mut demand_coef = Vec::with_capacity(net.edge_count());
        group_offsets.push(0);
        demand_offsets.push(0);
        for i in 0..n {
            let f = pf.get(i);
            pinned[i] = f.inert;
            if !f.inert {
                let essential = f.essential.iter().map(|g| (g, None));
                let linear = f
                    .nonessential
                    .as_ref()
                    .filter(|_| !f.nonessential_dropped)
                    .map(|g| (g, Some(T::one() - f.beta / f.x0)));
                for (g, slack) in essential.chain(linear) {
                    let start = idx(member_supplier.len());
                    member_supplier.extend(g.suppliers.iter().map(|&s| idx(s)));
                    member_share.extend(g.weights.iter().map(|&w| w / g.total));
                    groups.push(Group {
                        start,
                        end: idx(member_supplier.len()),
                        slack,
                    });
                }
                for e in net.out_edges(i) {
                    demand_customer.push(idx(e.buyer));
                    demand_coef.push(e.weight / f.x0);
                }
            }
            group_offsets.push(idx(groups.len()));
            demand_offsets.push(demand_customer.len());
        }
        let mut customer_offsets = Vec::with_capacity(n + 1);
        let mut customer_list = Vec::with_capacity(net.edge_count());
        let mut supplier_offsets = Vec::with_capacity(n + 1);
        let mut supplier_list = Vec::with_capacity(net.edge_count());
        customer_offsets.push(0);
        supplier_offsets.push(0);
        for i in 0..n {
            customer_list.extend(net.out_edges(i).iter().map(|e| idx(e.buyer)));
            customer_offsets.push(customer_list.len());
            supplier_list.extend(net.in_edges(i).map(|e| idx(e.supplier)));
            supplier_offsets.push(supplier_list.len());
        }
        Ok(Engine {
            n,
            pinned,
            group_offsets,
            groups,
            member_supplier,
            member_share,
            demand_offsets,
            demand_customer,
            demand_coef,
            customer_offsets,
            customer_list,
            supplier_offsets,
            supplier_list,
            parallel: true,
        })
    }

    /// Disable intra-scenario parallelism (results are identical either way).
    pub fn sequential(mut self) -> Self {
        self.parallel = false;
        self
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn supply_level(&self, i: usize, removed: &[bool], h_d: &[T]) -> T {
        if removed[i] {
            return T::zero();
        }
        if self.pinned[i] {
            return T::one();
        }
        let mut level = T::one();
        let (g0, g1) = (self.group_offsets[i] as usize, self.group_offsets[i + 1] as usize);
        for g in &self.groups[g0..g1] {
            let (a, b) = (g.start as usize, g.end as usize);
            let mut avail = T::zero();
            for (&s, &w) in self.member_supplier[a..b].iter().zip(&self.member_share[a..b]) {
                avail = avail + w * h_d[s as usize];
            }
            level = match g.slack {
                None => level.min(avail),
                Some(slack) => level.min(T::one() - slack * (T::one() - avail)),
            };
        }
        level.clamp_unit()
    }

    #[inline]
    fn demand_level(&self, i: usize, removed: &[bool], h_u: &[T]) -> T {
        if removed[i] {
            return T::zero();
        }
        if self.pinned[i] {
            return T::one();
        }
        let (a, b) = (self.demand_offsets[i], self.demand_offsets[i + 1]);
        let mut lost = T::zero();
        for (&c, &w) in self.demand_customer[a..b].iter().zip(&self.demand_coef[a..b]) {
            lost = lost + w * (T::one() - h_u[c as usize]);
        }
        (T::one() - lost).clamp_unit()
    }

    fn initial_state(&self, removed: &[bool]) -> LevelState<T> {
        let mut s = LevelState::ones(self.n);
        for (i, _) in removed.iter().enumerate().filter(|(_, &r)| r) {
            s.h_d[i] = T::zero();
            s.h_u[i] = T::zero();
        }
        s
    }

    /// One full synchronous update. Removed firms are zeroed in the input
    /// state before it is read.
    pub fn step(&self, state: &LevelState<T>, scenario: &ShockScenario) -> Result<LevelState<T>, PropagationError> {
        if state.h_d.len() != self.n || state.h_u.len() != self.n {
            return Err(PropagationError::Mismatch {
                net: self.n,
                pf: state.h_d.len(),
            });
        }
        let removed = scenario.mask(self.n)?;
        let mut prev = state.clone();
        for &f in scenario.removed() {
            prev.h_d[f] = T::zero();
            prev.h_u[f] = T::zero();
        }
        let mut next = LevelState::ones(self.n);
        self.sweep(&prev, &mut next, &removed);
        Ok(next)
    }

    /// Dense synchronous update of every firm from `prev` into `next`.
    fn sweep(&self, prev: &LevelState<T>, next: &mut LevelState<T>, removed: &[bool]) {
        let d = |(i, v): (usize, &mut T)| *v = self.supply_level(i, removed, &prev.h_d);
        let u = |(i, v): (usize, &mut T)| *v = self.demand_level(i, removed, &prev.h_u);
        if self.parallel && self.n > PARALLEL_THRESHOLD {
            next.h_d.par_iter_mut().enumerate().with_min_len(1024).for_each(d);
            next.h_u.par_iter_mut().enumerate().with_min_len(1024).for_each(u);
        } else {
            next.h_d.iter_mut().enumerate().for_each(d);
            next.h_u.iter_mut().enumerate().for_each(u);
        }
    }

    pub fn propagate(
        &self,
        scenario: &ShockScenario,
        opts: &PropagationOptions,
    ) -> Result<EquilibriumState<T>, PropagationError> {
        if !(opts.tol > 0.0) || opts.max_iter == 0 {
            return Err(PropagationError::InvalidOptions);
        }
        let tol = T::of(opts.tol);
        let removed = scenario.mask(self.n)?;
        let mut state = self.initial_state(&removed);
        let mut next = state.clone();

        let mut changed_d: Vec<usize> = Vec::new();
        let mut changed_u: Vec<usize> = Vec::new();
        let mut stamp_d = vec![0usize; self.n];
        let mut stamp_u = vec![0usize; self.n];
        let mut dirty_d = Vec::new();
        let mut dirty_u = Vec::new();
        let mut new_d = Vec::new();
        let mut new_u = Vec::new();
        let mut iterations = 0;
        let mut dense = true;
        let mut converged = false;
        let mut max_delta = T::zero();
        while !converged && iterations < opts.max_iter {
            iterations += 1;
            max_delta = T::zero();
            if dense {
                self.sweep(&state, &mut next, &removed);
                std::mem::swap(&mut state, &mut next);
                changed_d.clear();
                changed_u.clear();
                for i in 0..self.n {
                    let dd = (state.h_d[i] - next.h_d[i]).abs();
                    let du = (state.h_u[i] - next.h_u[i]).abs();
                    if dd > T::zero() {
                        changed_d.push(i);
                    }
                    if du > T::zero() {
                        changed_u.push(i);
                    }
                    max_delta = max_delta.max(dd).max(du);
                }
            } else {
                dirty_d.clear();
                dirty_u.clear();
                for &j in &changed_d {
                    for &c in &self.customer_list[self.customer_offsets[j]..self.customer_offsets[j + 1]] {
                        let c = c as usize;
                        if stamp_d[c] != iterations {
                            stamp_d[c] = iterations;
                            dirty_d.push(c);
                        }
                    }
                }
                for &j in &changed_u {
                    for &s in &self.supplier_list[self.supplier_offsets[j]..self.supplier_offsets[j + 1]] {
                        let s = s as usize;
                        if stamp_u[s] != iterations {
                            stamp_u[s] = iterations;
                            dirty_u.push(s);
                        }
                    }
                }
                self.eval_many(&dirty_d, &mut new_d, |i| self.supply_level(i, &removed, &state.h_d));
                self.eval_many(&dirty_u, &mut new_u, |i| self.demand_level(i, &removed, &state.h_u));

                changed_d.clear();
                changed_u.clear();
                for (&i, &v) in dirty_d.iter().zip(&new_d) {
                    let d = (v - state.h_d[i]).abs();
                    if d > T::zero() {
                        changed_d.push(i);
                        max_delta = max_delta.max(d);
                        state.h_d[i] = v;
                    }
                }
                for (&i, &v) in dirty_u.iter().zip(&new_u) {
                    let d = (v - state.h_u[i]).abs();
                    if d > T::zero() {
                        changed_u.push(i);
                        max_delta = max_delta.max(d);
                        state.h_u[i] = v;
                    }
                }
            }
            converged = max_delta <= tol;
            // a sparse step is cheaper only while few firms move
            dense = (changed_d.len() + changed_u.len()) * DENSE_FRACTION > 2 * self.n;
        }
        Ok(EquilibriumState {
            state,
            iterations,
            max_delta,
            converged,
        })
    }

    fn eval_many(&self, firms: &[usize], out: &mut Vec<T>, f: impl Fn(usize) -> T + Sync) {
        out.clear();
        if self.parallel && firms.len() > PARALLEL_THRESHOLD {
            firms.par_iter().map(|&i| f(i)).collect_into_vec(out);
        } else {
            out.extend(firms.iter().map(|&i| f(i)));
        }
    }
}

/// Propagates `scenario` to a fixed point.
pub fn propagate<T: Scalar>(
    net: &ProductionNetwork<T>,
    pf: &ProductionFunctionSet<T>,
    scenario: &ShockScenario,
    tol: f64,
    max_iter: usize,
) -> Result<EquilibriumState<T>, PropagationError> {
    Engine::new(net, pf)?.propagate(scenario, &PropagationOptions { tol, max_iter })
}

/// One synchronous update of `state` under `scenario`.
pub fn production_step<T: Scalar>(
    state: &LevelState<T>,
    net: &ProductionNetwork<T>,
    pf: &ProductionFunctionSet<T>,
    scenario: &ShockScenario,
) -> Result<LevelState<T>, PropagationError> {
    Engine::new(net, pf)?.step(state, scenario)
}
