//! Production-network data model: firms, weighted supply edges, adjacency
//! indices and node strengths.

mod io;

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::scalar::Scalar;

pub(crate) use io::{open_csv, read_csv};
pub use io::{
    load_network, load_network_dir, parse_network, write_edges_csv, write_firms_csv, write_network, EDGES_HEADER,
    FIRMS_HEADER,
};

/// Optional 1-based line number attached to ingestion errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Line(pub Option<usize>);

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(line) => write!(f, " at line {line}"),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error in {file}{line}: {message}")]
    Schema {
        file: String,
        line: Line,
        message: String,
    },
    #[error("edge references unknown firm id {id:?}{line}")]
    DanglingEdge { id: String, line: Line },
    #[error("duplicate firm id {id:?}{line}")]
    DuplicateFirmId { id: String, line: Line },
    #[error("non-positive weight {weight} on edge {supplier:?} -> {buyer:?}{line}")]
    NonPositiveWeight {
        supplier: String,
        buyer: String,
        weight: f64,
        line: Line,
    },
    #[error("self-loop on firm {id:?}{line}")]
    SelfLoop { id: String, line: Line },
}

/// Sector code: a NACE division letter with an optional numeric subcode,
/// e.g. `C` or `C24`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Sector(String);

impl Sector {
    pub fn new(code: impl Into<String>) -> Self {
        Sector(code.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Top level of the hierarchy (leading letters), `C24` -> `C`.
    pub fn division(&self) -> &str {
        let end = self
            .0
            .char_indices()
            .find(|(_, c)| !c.is_ascii_alphabetic())
            .map(|(i, _)| i)
            .unwrap_or(self.0.len());
        &self.0[..end]
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Firm {
    pub id: String,
    pub sector: Sector,
    /// Head count; `None` when unknown (distinct from zero).
    pub employees: Option<u64>,
    /// Direct emissions in tonnes CO2e per year; `None` when unknown.
    pub co2: Option<f64>,
    pub ets_member: bool,
}

impl Firm {
    pub fn new(id: impl Into<String>, sector: impl Into<String>) -> Self {
        Firm {
            id: id.into(),
            sector: Sector::new(sector),
            employees: None,
            co2: None,
            ets_member: false,
        }
    }

    pub fn with_employees(mut self, employees: u64) -> Self {
        self.employees = Some(employees);
        self
    }

    pub fn with_co2(mut self, co2: f64, ets_member: bool) -> Self {
        self.co2 = Some(co2);
        self.ets_member = ets_member;
        self
    }

    /// Known emissions, missing counted as zero.
    pub fn co2_or_zero(&self) -> f64 {
        self.co2.unwrap_or(0.0)
    }
}

/// Directed supply relation `supplier -> buyer` carrying an annual monetary flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupplyEdge<T> {
    pub supplier: usize,
    pub buyer: usize,
    pub weight: T,
}

/// Incrementally assembles a [`ProductionNetwork`], enforcing the firm and
/// edge invariants as items arrive.
#[derive(Debug, Clone)]
pub struct NetworkBuilder<T> {
    firms: Vec<Firm>,
    index: HashMap<String, usize>,
    edges: HashMap<(usize, usize), T>,
    edge_order: Vec<(usize, usize)>,
    merged_parallel: usize,
}

impl<T: Scalar> Default for NetworkBuilder<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> NetworkBuilder<T> {
    pub fn new() -> Self {
        NetworkBuilder {
            firms: Vec::new(),
            index: HashMap::new(),
            edges: HashMap::new(),
            edge_order: Vec::new(),
            merged_parallel: 0,
        }
    }

    pub fn add_firm(&mut self, firm: Firm) -> Result<usize, NetworkError> {
        self.add_firm_at(firm, Line::default())
    }

    pub fn add_firm_at(&mut self, firm: Firm, line: Line) -> Result<usize, NetworkError> {
        if self.index.contains_key(&firm.id) {
            return Err(NetworkError::DuplicateFirmId { id: firm.id, line });
        }
        let idx = self.firms.len();
        self.index.insert(firm.id.clone(), idx);
        self.firms.push(firm);
        Ok(idx)
    }

    pub fn add_edge(&mut self, supplier: &str, buyer: &str, weight: T) -> Result<(), NetworkError> {
        self.add_edge_at(supplier, buyer, weight, Line::default())
    }

    /// Parallel edges for the same ordered pair are summed.
    pub fn add_edge_at(
        &mut self,
        supplier: &str,
        buyer: &str,
        weight: T,
        line: Line,
    ) -> Result<(), NetworkError> {
        let s = *self.index.get(supplier).ok_or_else(|| NetworkError::DanglingEdge {
            id: supplier.to_string(),
            line,
        })?;
        let b = *self.index.get(buyer).ok_or_else(|| NetworkError::DanglingEdge {
            id: buyer.to_string(),
            line,
        })?;
        if s == b {
            return Err(NetworkError::SelfLoop {
                id: supplier.to_string(),
                line,
            });
        }
        if !(weight > T::zero()) || !weight.is_finite() {
            return Err(NetworkError::NonPositiveWeight {
                supplier: supplier.to_string(),
                buyer: buyer.to_string(),
                weight: weight.to_f64_lossy(),
                line,
            });
        }
        match self.edges.get_mut(&(s, b)) {
            Some(existing) => {
                *existing = *existing + weight;
                self.merged_parallel += 1;
                log::warn!("parallel edge {supplier} -> {buyer}{line} summed into existing flow");
            }
            None => {
                self.edges.insert((s, b), weight);
                self.edge_order.push((s, b));
            }
        }
        Ok(())
    }

    /// Number of input rows folded into an already present edge.
    pub fn merged_parallel(&self) -> usize {
        self.merged_parallel
    }

    pub fn build(self) -> ProductionNetwork<T> {
        let mut edges: Vec<SupplyEdge<T>> = self
            .edge_order
            .iter()
            .map(|&(s, b)| SupplyEdge {
                supplier: s,
                buyer: b,
                weight: self.edges[&(s, b)],
            })
            .collect();
        edges.sort_by_key(|e| (e.supplier, e.buyer));
        ProductionNetwork::from_sorted(self.firms, self.index, edges)
    }
}

/// Immutable firm-level production network with CSR out- and in-adjacency.
///
/// Edges are stored sorted by `(supplier, buyer)`, so the out-neighbours of
/// firm `i` are the contiguous slice `edges[out_offsets[i]..out_offsets[i+1]]`.
/// In-neighbours go through a permutation sorted by `(buyer, supplier)`.
#[derive(Debug, Clone)]
pub struct ProductionNetwork<T> {
    firms: Vec<Firm>,
    index: HashMap<String, usize>,
    edges: Vec<SupplyEdge<T>>,
    out_offsets: Vec<usize>,
    in_offsets: Vec<usize>,
    in_perm: Vec<usize>,
}

impl<T: Scalar> ProductionNetwork<T> {
    /// Builds a network from firms and `(supplier_id, buyer_id, weight)` triples.
    pub fn new<'a, I>(firms: Vec<Firm>, edges: I) -> Result<Self, NetworkError>
    where
        I: IntoIterator<Item = (&'a str, &'a str, T)>,
    {
        let mut builder = NetworkBuilder::new();
        for firm in firms {
            builder.add_firm(firm)?;
        }
        for (s, b, w) in edges {
            builder.add_edge(s, b, w)?;
        }
        Ok(builder.build())
    }

    fn from_sorted(firms: Vec<Firm>, index: HashMap<String, usize>, edges: Vec<SupplyEdge<T>>) -> Self {
        let n = firms.len();
        let mut out_offsets = vec![0usize; n + 1];
        let mut in_offsets = vec![0usize; n + 1];
        for e in &edges {
            out_offsets[e.supplier + 1] += 1;
            in_offsets[e.buyer + 1] += 1;
        }
        for i in 0..n {
            out_offsets[i + 1] += out_offsets[i];
            in_offsets[i + 1] += in_offsets[i];
        }
        let mut in_perm: Vec<usize> = (0..edges.len()).collect();
        in_perm.sort_by_key(|&k| (edges[k].buyer, edges[k].supplier));
        ProductionNetwork {
            firms,
            index,
            edges,
            out_offsets,
            in_offsets,
            in_perm,
        }
    }

    pub fn len(&self) -> usize {
        self.firms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.firms.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn firms(&self) -> &[Firm] {
        &self.firms
    }

    pub fn firm(&self, idx: usize) -> &Firm {
        &self.firms[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// All edges, sorted by `(supplier, buyer)`.
    pub fn edges(&self) -> &[SupplyEdge<T>] {
        &self.edges
    }

    pub fn out_edges(&self, firm: usize) -> &[SupplyEdge<T>] {
        &self.edges[self.out_offsets[firm]..self.out_offsets[firm + 1]]
    }

    pub fn in_edges(&self, firm: usize) -> impl ExactSizeIterator<Item = &SupplyEdge<T>> + '_ {
        self.in_perm[self.in_offsets[firm]..self.in_offsets[firm + 1]]
            .iter()
            .map(move |&k| &self.edges[k])
    }

    pub fn out_degree(&self, firm: usize) -> usize {
        self.out_offsets[firm + 1] - self.out_offsets[firm]
    }

    pub fn in_degree(&self, firm: usize) -> usize {
        self.in_offsets[firm + 1] - self.in_offsets[firm]
    }

    pub fn strengths(&self) -> StrengthTable<T> {
        compute_strengths(self)
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }

    /// Same topology and attributes with every weight mapped through `f`.
    pub fn map_weights<U: Scalar>(&self, f: impl Fn(T) -> U) -> ProductionNetwork<U> {
        let edges = self
            .edges
            .iter()
            .map(|e| SupplyEdge {
                supplier: e.supplier,
                buyer: e.buyer,
                weight: f(e.weight),
            })
            .collect();
        ProductionNetwork {
            firms: self.firms.clone(),
            index: self.index.clone(),
            edges,
            out_offsets: self.out_offsets.clone(),
            in_offsets: self.in_offsets.clone(),
            in_perm: self.in_perm.clone(),
        }
    }

    /// Same network with firm attributes rewritten by `f`; ids must not change.
    pub fn map_firms(&self, f: impl Fn(&Firm) -> Firm) -> Self {
        let firms: Vec<Firm> = self.firms.iter().map(&f).collect();
        assert!(
            firms.iter().zip(&self.firms).all(|(a, b)| a.id == b.id),
            "map_firms must preserve firm ids"
        );
        ProductionNetwork {
            firms,
            ..self.clone()
        }
    }
}

/// In-, out- and total strength per firm.
#[derive(Debug, Clone, PartialEq)]
pub struct StrengthTable<T> {
    pub s_in: Vec<T>,
    pub s_out: Vec<T>,
}

impl<T: Scalar> StrengthTable<T> {
    pub fn s_total(&self, firm: usize) -> T {
        self.s_in[firm] + self.s_out[firm]
    }

    pub fn total_out(&self) -> T {
        self.s_out.iter().copied().sum()
    }

    pub fn total_in(&self) -> T {
        self.s_in.iter().copied().sum()
    }
}

pub fn compute_strengths<T: Scalar>(net: &ProductionNetwork<T>) -> StrengthTable<T> {
    let n = net.len();
    let mut s_in = vec![T::zero(); n];
    let mut s_out = vec![T::zero(); n];
    for e in net.edges() {
        s_out[e.supplier] = s_out[e.supplier] + e.weight;
        s_in[e.buyer] = s_in[e.buyer] + e.weight;
    }
    StrengthTable { s_in, s_out }
}

/// Diagnostic summary of a loaded network.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n_firms: usize,
    pub n_edges: usize,
    pub n_isolated: usize,
    pub n_zero_out_strength: usize,
    pub n_zero_in_strength: usize,
    pub n_ets_members: usize,
    pub total_weight: f64,
    pub n_with_employees: usize,
    pub employees_known: u64,
    /// Share of firms with a known employee count.
    pub firm_coverage: f64,
    /// Share of total strength held by firms with a known employee count.
    pub strength_coverage: f64,
    pub co2_known: f64,
    pub co2_ets: f64,
}

pub fn validate<T: Scalar>(net: &ProductionNetwork<T>) -> ValidationReport {
    let st = net.strengths();
    let mut r = ValidationReport {
        n_firms: net.len(),
        n_edges: net.edge_count(),
        ..Default::default()
    };
    let mut strength_all = 0.0;
    let mut strength_known = 0.0;
    for (i, firm) in net.firms().iter().enumerate() {
        let s_in = st.s_in[i].to_f64_lossy();
        let s_out = st.s_out[i].to_f64_lossy();
        if net.in_degree(i) == 0 && net.out_degree(i) == 0 {
            r.n_isolated += 1;
        }
        if s_out == 0.0 {
            r.n_zero_out_strength += 1;
        }
        if s_in == 0.0 {
            r.n_zero_in_strength += 1;
        }
        if firm.ets_member {
            r.n_ets_members += 1;
            r.co2_ets += firm.co2_or_zero();
        }
        r.co2_known += firm.co2_or_zero();
        strength_all += s_in + s_out;
        if let Some(e) = firm.employees {
            r.n_with_employees += 1;
            r.employees_known += e;
            strength_known += s_in + s_out;
        }
        r.total_weight += s_out;
    }
    if r.n_firms > 0 {
        r.firm_coverage = r.n_with_employees as f64 / r.n_firms as f64;
    }
    if strength_all > 0.0 {
        r.strength_coverage = strength_known / strength_all;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> ProductionNetwork<f64> {
        ProductionNetwork::new(
            vec![Firm::new("A", "C"), Firm::new("B", "C"), Firm::new("C", "G")],
            [("A", "B", 10.0), ("B", "C", 4.0)],
        )
        .unwrap()
    }

    #[test]
    fn sector_division() {
        assert_eq!(Sector::new("C24").division(), "C");
        assert_eq!(Sector::new("D").division(), "D");
        assert_eq!(Sector::new("").division(), "");
    }

    #[test]
    fn single_edge_strengths() {
        let net = ProductionNetwork::new(vec![Firm::new("A", "C"), Firm::new("B", "C")], [("A", "B", 10.0)])
            .unwrap();
        let st = net.strengths();
        assert_eq!(st.s_out[0], 10.0);
        assert_eq!(st.s_in[1], 10.0);
        assert_eq!(st.s_total(0), 10.0);
        assert_eq!(st.s_total(1), 10.0);
    }

    #[test]
    fn adjacency_is_consistent() {
        let net = chain();
        assert_eq!(net.out_degree(0), 1);
        assert_eq!(net.in_degree(0), 0);
        assert_eq!(net.in_degree(2), 1);
        let total_in: usize = (0..net.len()).map(|i| net.in_degree(i)).sum();
        let total_out: usize = (0..net.len()).map(|i| net.out_degree(i)).sum();
        assert_eq!(total_in, net.edge_count());
        assert_eq!(total_out, net.edge_count());
        let b_in: Vec<_> = net.in_edges(1).map(|e| e.supplier).collect();
        assert_eq!(b_in, vec![0]);
    }

    #[test]
    fn parallel_edges_are_summed() {
        let net =
            ProductionNetwork::new(vec![Firm::new("A", "C"), Firm::new("B", "C")], [("A", "B", 1.5), ("A", "B", 2.5)])
                .unwrap();
        assert_eq!(net.edge_count(), 1);
        assert_eq!(net.edges()[0].weight, 4.0);
    }

    #[test]
    fn rejects_bad_edges() {
        let firms = || vec![Firm::new("A", "C"), Firm::new("B", "C")];
        assert!(matches!(
            ProductionNetwork::new(firms(), [("A", "X", 1.0)]),
            Err(NetworkError::DanglingEdge { ref id, .. }) if id == "X"
        ));
        assert!(matches!(
            ProductionNetwork::new(firms(), [("A", "A", 1.0)]),
            Err(NetworkError::SelfLoop { .. })
        ));
        assert!(matches!(
            ProductionNetwork::new(firms(), [("A", "B", 0.0)]),
            Err(NetworkError::NonPositiveWeight { .. })
        ));
        assert!(matches!(
            ProductionNetwork::<f64>::new(vec![Firm::new("A", "C"), Firm::new("A", "D")], []),
            Err(NetworkError::DuplicateFirmId { .. })
        ));
    }

    #[test]
    fn validation_counts() {
        let empty = ProductionNetwork::<f64>::new(vec![], []).unwrap();
        assert_eq!(empty.validate(), ValidationReport::default());

        let net = ProductionNetwork::new(
            vec![
                Firm::new("A", "C").with_employees(3),
                Firm::new("B", "C"),
                Firm::new("Z", "G").with_co2(5.0, true),
            ],
            [("A", "B", 2.0)],
        )
        .unwrap();
        let r = net.validate();
        assert_eq!(r.n_isolated, 1);
        assert_eq!(r.n_zero_out_strength, 2);
        assert_eq!(r.n_ets_members, 1);
        assert_eq!(r.employees_known, 3);
        assert!((r.firm_coverage - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.strength_coverage - 0.5).abs() < 1e-15);
    }
}
