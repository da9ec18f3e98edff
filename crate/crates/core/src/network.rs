//! Sector-level spillover networks.
//!
//! `kernel[l][lp]` is the number of spillover links sector `l` receives from
//! sector `lp`; a nonzero entry is an edge `lp -> l`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkDoc", into = "NetworkDoc")]
pub struct SpilloverNetwork {
    weights: Vec<f64>,
    kernel: Vec<Vec<f64>>,
    label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    sectors: usize,
    weights: Vec<f64>,
    kernel: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl TryFrom<NetworkDoc> for SpilloverNetwork {
    type Error = Error;

    fn try_from(doc: NetworkDoc) -> Result<Self> {
        if doc.weights.len() != doc.sectors {
            return Err(Error::validation(
                "weights",
                format!("expected {} entries, found {}", doc.sectors, doc.weights.len()),
            ));
        }
        SpilloverNetwork::new(doc.weights, doc.kernel, doc.label)
    }
}

impl From<SpilloverNetwork> for NetworkDoc {
    fn from(net: SpilloverNetwork) -> Self {
        NetworkDoc { sectors: net.weights.len(), weights: net.weights, kernel: net.kernel, label: net.label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathClass {
    NoSpillover,
    DirectOnly,
    HasIndirect,
}

impl PathClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PathClass::NoSpillover => "no_spillover",
            PathClass::DirectOnly => "direct_only",
            PathClass::HasIndirect => "has_indirect",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectorWeights {
    Equal,
    RandomSimplex,
}

impl SpilloverNetwork {
    pub fn new(weights: Vec<f64>, kernel: Vec<Vec<f64>>, label: Option<String>) -> Result<Self> {
        let l = weights.len();
        if l == 0 {
            return Err(Error::validation("sectors", "need at least one sector"));
        }
        for (i, &a) in weights.iter().enumerate() {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::validation(format!("weights[{i}]"), format!("must lie in (0, 1], got {a}")));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::validation("weights", format!("must sum to 1, sum is {sum}")));
        }
        if kernel.len() != l {
            return Err(Error::validation("kernel", format!("expected {l} rows, found {}", kernel.len())));
        }
        for (i, row) in kernel.iter().enumerate() {
            if row.len() != l {
                return Err(Error::validation(
                    format!("kernel[{i}]"),
                    format!("expected {l} columns, found {}", row.len()),
                ));
            }
            for (j, &p) in row.iter().enumerate() {
                if !(p >= 0.0 && p.is_finite()) {
                    return Err(Error::validation(
                        format!("kernel[{i}][{j}]"),
                        format!("must be finite and >= 0, got {p}"),
                    ));
                }
            }
        }
        Ok(SpilloverNetwork { weights, kernel, label })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<NetworkDoc>(text)
            .map_err(|e| Error::Parse(e.to_string()))
            .and_then(SpilloverNetwork::try_from)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serialises")
    }

    pub fn n_sectors(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kernel(&self) -> &[Vec<f64>] {
        &self.kernel
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Same topology and weights with every kernel entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let kernel = self.kernel.iter().map(|r| r.iter().map(|p| p * factor).collect()).collect();
        SpilloverNetwork::new(self.weights.clone(), kernel, self.label.clone())
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.kernel[to][from] > 0.0
    }

    /// Edges as `(from, to)` pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let l = self.n_sectors();
        let mut out = Vec::new();
        for to in 0..l {
            for from in 0..l {
                if self.has_edge(from, to) {
                    out.push((from, to));
                }
            }
        }
        out
    }
}

pub fn load_network(text: &str) -> Result<SpilloverNetwork> {
    SpilloverNetwork::from_json(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpilloverMatrix {
    /// `entries[l][lp] = A_lp * p(l, lp)`.
    pub entries: Vec<Vec<f64>>,
    /// `P_l = sum_lp p(lp, l)`, the total links sector `l` sends out.
    pub column_sums: Vec<f64>,
    pub zeta: f64,
}

impl SpilloverMatrix {
    pub fn n_sectors(&self) -> usize {
        self.entries.len()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|r| r.iter().zip(x).map(|(s, v)| s * v).sum()).collect()
    }

    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<f64> {
        let l = self.n_sectors();
        nalgebra::DMatrix::from_fn(l, l, |i, j| self.entries[i][j])
    }

    /// CSV with header `sector,1,..,L` and 1-based sector labels.
    pub fn to_csv(&self) -> String {
        let l = self.n_sectors();
        let mut out = String::from("sector");
        for j in 1..=l {
            let _ = write!(out, ",{j}");
        }
        out.push('\n');
        for (i, row) in self.entries.iter().enumerate() {
            let _ = write!(out, "{}", i + 1);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn spillover_matrix(net: &SpilloverNetwork, z_max: f64) -> SpilloverMatrix {
    let l = net.n_sectors();
    let a = net.weights();
    let p = net.kernel();
    let entries: Vec<Vec<f64>> = (0..l).map(|i| (0..l).map(|j| a[j] * p[i][j]).collect()).collect();
    let column_sums = (0..l).map(|j| (0..l).map(|i| p[i][j]).sum()).collect();
    let total: f64 = entries.iter().flatten().sum();
    SpilloverMatrix { entries, column_sums, zeta: z_max * total }
}

pub fn path_classification(net: &SpilloverNetwork, sector: usize) -> Result<PathClass> {
    let l = net.n_sectors();
    if sector >= l {
        return Err(Error::invalid("sector", format!("index {sector} out of range for {l} sectors")));
    }
    let p = net.kernel();
    let has_in = |s: usize| p[s].iter().any(|&v| v > 0.0);
    if !has_in(sector) {
        return Ok(PathClass::NoSpillover);
    }
    let indirect = (0..l).any(|pred| p[sector][pred] > 0.0 && has_in(pred));
    Ok(if indirect { PathClass::HasIndirect } else { PathClass::DirectOnly })
}

pub fn classify_all(net: &SpilloverNetwork) -> Vec<PathClass> {
    (0..net.n_sectors())
        .map(|s| path_classification(net, s).expect("index in range"))
        .collect()
}

pub fn random_network(
    n_sectors: usize,
    connection_prob: f64,
    weight_max: f64,
    sector_weights: SectorWeights,
    seed: u64,
) -> Result<SpilloverNetwork> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_network_with(&mut rng, n_sectors, connection_prob, weight_max, sector_weights)
}

/// Draw order: edge indicators and weights row by row, then sector weights.
pub fn random_network_with<R: Rng + ?Sized>(
    rng: &mut R,
    n_sectors: usize,
    connection_prob: f64,
    weight_max: f64,
    sector_weights: SectorWeights,
) -> Result<SpilloverNetwork> {
    if n_sectors == 0 {
        return Err(Error::invalid("n_sectors", "need at least one sector"));
    }
    if !(0.0..=1.0).contains(&connection_prob) {
        return Err(Error::invalid("connection_prob", format!("must lie in [0, 1], got {connection_prob}")));
    }
    if !(weight_max > 0.0 && weight_max.is_finite()) {
        return Err(Error::invalid("weight_max", format!("must be positive, got {weight_max}")));
    }
    let mut kernel = vec![vec![0.0; n_sectors]; n_sectors];
    for row in kernel.iter_mut() {
        for entry in row.iter_mut() {
            if rng.gen::<f64>() < connection_prob {
                // 1 - u lies in (0, 1]
                *entry = weight_max * (1.0 - rng.gen::<f64>());
            }
        }
    }
    let weights = match sector_weights {
        SectorWeights::Equal => vec![1.0 / n_sectors as f64; n_sectors],
        SectorWeights::RandomSimplex => {
            let draws: Vec<f64> = (0..n_sectors)
                .map(|_| loop {
                    let e: f64 = rng.sample(Exp1);
                    if e > 0.0 {
                        break e;
                    }
                })
                .collect();
            let total: f64 = draws.iter().sum();
            draws.iter().map(|e| e / total).collect()
        }
    };
    SpilloverNetwork::new(weights, kernel, None)
}

pub const SECTOR_NAMES: [&str; 4] = ["A", "B", "C", "D"];

/// The six reference topologies, with unit edge weights and equal sector
/// weights. `(from, to)` index pairs, A = 0.
pub fn canonical_edges(id: usize) -> Result<(usize, &'static [(usize, usize)])> {
    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    const D: usize = 3;
    Ok(match id {
        1 => (3, &[(B, C)]),
        2 => (3, &[(A, B), (B, C)]),
        3 => (3, &[(A, C), (B, C)]),
        4 => (4, &[(B, C), (C, D)]),
        5 => (4, &[(A, B), (B, C), (C, D)]),
        6 => (4, &[(A, B), (B, C), (C, D), (D, A)]),
        other => return Err(Error::UnknownNetwork(other)),
    })
}

pub fn canonical_network(id: usize) -> Result<SpilloverNetwork> {
    let (l, edges) = canonical_edges(id)?;
    let mut kernel = vec![vec![0.0; l]; l];
    for &(from, to) in edges {
        kernel[to][from] = 1.0;
    }
    SpilloverNetwork::new(vec![1.0 / l as f64; l], kernel, Some(format!("network {id}")))
}

pub fn canonical_networks() -> Vec<SpilloverNetwork> {
    (1..=6).map(|id| canonical_network(id).expect("ids 1..=6 exist")).collect()
}

/// Single sector with `A = 1` and self-spillover strength `p`.
pub fn single_sector(p: f64) -> Result<SpilloverNetwork> {
    SpilloverNetwork::new(vec![1.0], vec![vec![p]], Some("single sector".into()))
}
