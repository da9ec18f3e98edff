//! Parameter sweeps, reference-network comparisons, random-network ensembles
//! and the regressions relating network structure to productivity.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::equilibrium::{solve_mfg, solve_sector};
use crate::error::{Error, Result};
use crate::model::{Grid, ModelParams, ParamName, PriceMode, SolverOptions};
use crate::network::{
    canonical_network, classify_all, random_network_with, spillover_matrix, PathClass, SectorWeights,
    SpilloverMatrix, SpilloverNetwork,
};
use crate::nls::{levenberg_marquardt, NlsOptions};

/// Columns `z,m`.
pub fn density_csv(density: &Density) -> String {
    let mut out = String::from("z,m\n");
    for (z, m) in density.grid.nodes().iter().zip(&density.values) {
        let _ = writeln!(out, "{z},{m}");
    }
    out
}

// ---------------------------------------------------------------- sweeps

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub param: ParamName,
    pub values: Vec<f64>,
    pub params: ModelParams,
    pub network: SpilloverNetwork,
    pub grid: Grid,
    pub opts: SolverOptions,
}

#[derive(Debug, Clone)]
pub struct SweepSolve {
    pub mean_productivity: Vec<f64>,
    pub densities: Vec<Density>,
    pub k_star: Vec<f64>,
    pub price: f64,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    /// Solver failures are kept as messages so the rest of the sweep survives.
    pub outcome: std::result::Result<SweepSolve, String>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub param: ParamName,
    pub n_sectors: usize,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// `(value, mean)` for one sector, skipping failed points.
    pub fn series(&self, sector: usize) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| p.outcome.as_ref().ok().map(|s| (p.value, s.mean_productivity[sector])))
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.outcome.is_err()).count()
    }

    /// Columns `param_value,sector,mean_productivity`; failed points carry `NaN`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param_value,sector,mean_productivity\n");
        for p in &self.points {
            for sector in 0..self.n_sectors {
                let mean = p.outcome.as_ref().map_or(f64::NAN, |s| s.mean_productivity[sector]);
                let _ = writeln!(out, "{},{},{}", p.value, sector + 1, mean);
            }
        }
        out
    }
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    let variants = spec
        .values
        .iter()
        .map(|&v| spec.params.with_param(spec.param, v))
        .collect::<Result<Vec<_>>>()?;
    let points = spec
        .values
        .par_iter()
        .zip(variants.par_iter())
        .map(|(&value, params)| {
            let outcome = solve_mfg(params, &spec.network, &spec.grid, &spec.opts, None, None)
                .map(|sol| SweepSolve {
                    mean_productivity: sol.mean_productivity,
                    densities: sol.densities,
                    k_star: sol.k_star,
                    price: sol.price,
                })
                .map_err(|e| {
                    log::warn!("sweep point {}={value} failed: {e}", spec.param.as_str());
                    e.to_string()
                });
            SweepPoint { value, outcome }
        })
        .collect();
    Ok(SweepResult { param: spec.param, n_sectors: spec.network.n_sectors(), points })
}

// ---------------------------------------------------- network comparison

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkComparison {
    pub network_a: usize,
    pub network_b: usize,
    pub sector: usize,
    pub z: Vec<f64>,
    /// Nodewise `m_a - m_b`.
    pub difference: Vec<f64>,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_difference: f64,
    pub price_a: f64,
    pub price_b: f64,
}

impl NetworkComparison {
    /// Columns `z,m_diff`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("z,m_diff\n");
        for (z, d) in self.z.iter().zip(&self.difference) {
            let _ = writeln!(out, "{z},{d}");
        }
        out
    }
}

/// Compares sector `sector` (0-based) of two reference networks. `fixed_price`
/// overrides the price mode of `params`.
pub fn compare_networks(
    ids: (usize, usize),
    sector: usize,
    params: &ModelParams,
    grid: &Grid,
    opts: &SolverOptions,
    fixed_price: Option<f64>,
) -> Result<NetworkComparison> {
    let params = match fixed_price {
        Some(b) => (*params).with_price_mode(PriceMode::Fixed(b))?,
        None => *params,
    };
    let net_a = canonical_network(ids.0)?;
    let net_b = canonical_network(ids.1)?;
    if sector >= net_a.n_sectors() || sector >= net_b.n_sectors() {
        return Err(Error::invalid("sector", format!("index {sector} missing from network {} or {}", ids.0, ids.1)));
    }
    let a = solve_mfg(&params, &net_a, grid, opts, None, None)?;
    let b = if ids.0 == ids.1 { a.clone() } else { solve_mfg(&params, &net_b, grid, opts, None, None)? };
    let (ma, mb) = (&a.densities[sector], &b.densities[sector]);
    Ok(NetworkComparison {
        network_a: ids.0,
        network_b: ids.1,
        sector,
        z: grid.nodes().to_vec(),
        difference: ma.values.iter().zip(&mb.values).map(|(x, y)| x - y).collect(),
        mean_a: a.mean_productivity[sector],
        mean_b: b.mean_productivity[sector],
        mean_difference: a.mean_productivity[sector] - b.mean_productivity[sector],
        price_a: a.price,
        price_b: b.price,
    })
}

// ---------------------------------------------------------- k-mean curve

/// Price used by the auxiliary `k -> mean` curve: the fixed price when there
/// is one, otherwise 1.
pub fn curve_price(params: &ModelParams) -> f64 {
    match params.price_mode() {
        PriceMode::Fixed(b) => b,
        PriceMode::Endogenous => 1.0,
    }
}

pub fn k_mean_curve(ks: &[f64], params: &ModelParams, grid: &Grid, opts: &SolverOptions) -> Result<Vec<(f64, f64)>> {
    let price = curve_price(params);
    ks.par_iter()
        .map(|&k| {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::invalid("k", format!("must be finite and >= 0, got {k}")));
            }
            Ok((k, solve_sector(k, price, params, grid, opts, None)?.mean))
        })
        .collect()
}

// -------------------------------------------------------------- ensembles

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbLaw {
    Fixed(f64),
    Uniform { low: f64, high: f64 },
}

#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub n_runs: usize,
    pub n_sectors: usize,
    pub connection_prob: ProbLaw,
    pub weight_max: f64,
    pub sector_weights: SectorWeights,
    pub seed: u64,
    pub params: ModelParams,
    pub grid: Grid,
    pub opts: SolverOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub run: usize,
    pub sector: usize,
    pub path_class: PathClass,
    pub row_sum_s: f64,
    pub k_star: f64,
    pub mean_prod: f64,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRun {
    pub run: usize,
    pub connection_prob: f64,
    pub network: SpilloverNetwork,
}

#[derive(Debug, Clone, Default)]
pub struct EnsembleResult {
    pub records: Vec<EnsembleRecord>,
    pub runs: Vec<EnsembleRun>,
    pub failures: Vec<(usize, String)>,
}

impl EnsembleResult {
    /// Columns `run,sector,path_class,row_sum_S,k_star,mean_prod,B`, sectors 1-based.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("run,sector,path_class,row_sum_S,k_star,mean_prod,B\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.run,
                r.sector + 1,
                r.path_class.as_str(),
                r.row_sum_s,
                r.k_star,
                r.mean_prod,
                r.price
            );
        }
        out
    }

    pub fn runs_json(&self) -> String {
        serde_json::to_string_pretty(&self.runs).expect("runs serialise")
    }

    pub fn regression_data(&self, z_max: f64) -> RegressionData {
        let spillovers = self.runs.iter().map(|r| (r.run, spillover_matrix(&r.network, z_max))).collect();
        RegressionData { records: self.records.clone(), spillovers, z_max }
    }
}

fn run_rng(seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

fn ensemble_run(spec: &EnsembleSpec, run: usize) -> Result<(EnsembleRun, Vec<EnsembleRecord>)> {
    let mut rng = run_rng(spec.seed, run);
    let prob = match spec.connection_prob {
        ProbLaw::Fixed(p) => p,
        ProbLaw::Uniform { low, high } => low + (high - low) * rng.gen::<f64>(),
    };
    let network = random_network_with(&mut rng, spec.n_sectors, prob, spec.weight_max, spec.sector_weights)?
        .with_label(format!("ensemble run {run}"));
    let sol = solve_mfg(&spec.params, &network, &spec.grid, &spec.opts, None, None)?;
    let classes = classify_all(&network);
    let row_sums = sol.spillover.row_sums();
    let records = (0..spec.n_sectors)
        .map(|sector| EnsembleRecord {
            run,
            sector,
            path_class: classes[sector],
            row_sum_s: row_sums[sector],
            k_star: sol.k_star[sector],
            mean_prod: sol.mean_productivity[sector],
            price: sol.price,
        })
        .collect();
    Ok((EnsembleRun { run, connection_prob: prob, network }, records))
}

/// Runs are independent and seeded per run id, so results do not depend on
/// scheduling. Failed runs are logged and reported, not fatal.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleResult> {
    if spec.n_sectors == 0 {
        return Err(Error::invalid("n_sectors", "need at least one sector"));
    }
    match spec.connection_prob {
        ProbLaw::Fixed(p) if !(0.0..=1.0).contains(&p) => {
            return Err(Error::invalid("connection_prob", format!("must lie in [0, 1], got {p}")))
        }
        ProbLaw::Uniform { low, high } if !(0.0 <= low && low <= high && high <= 1.0) => {
            return Err(Error::invalid("connection_prob", format!("need 0 <= low <= high <= 1, got [{low}, {high}]")))
        }
        _ => {}
    }
    let outcomes: Vec<_> = (0..spec.n_runs).into_par_iter().map(|run| (run, ensemble_run(spec, run))).collect();
    let mut result = EnsembleResult::default();
    for (run, outcome) in outcomes {
        match outcome {
            Ok((info, records)) => {
                result.runs.push(info);
                result.records.extend(records);
            }
            Err(e) => {
                log::warn!("ensemble run {run} failed: {e}");
                result.failures.push((run, e.to_string()));
            }
        }
    }
    Ok(result)
}

// ------------------------------------------------------ spillover series

/// Spectral radius of a nonnegative matrix: power iteration on `S + I`
/// bracketed by Collatz-Wielandt bounds. Returns the upper bound, so the
/// series test errs on the side of reporting divergence.
pub fn spectral_radius(s: &SpilloverMatrix) -> f64 {
    let l = s.n_sectors();
    let m = s.to_dmatrix();
    // nilpotent (acyclic) networks have radius exactly 0
    let mut p = m.clone();
    for _ in 1..l {
        p = &p * &m;
    }
    if p.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let a = m + DMatrix::identity(l, l);
    let mut x = DVector::from_element(l, 1.0);
    let mut best_upper = f64::INFINITY;
    for _ in 0..20_000 {
        let y = &a * &x;
        let ratios = y.iter().zip(x.iter()).map(|(yi, xi)| yi / xi);
        let (lo, hi) = ratios.fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
        best_upper = best_upper.min(hi);
        if hi - lo <= 1e-13 * hi {
            break;
        }
        let norm = y.max();
        x = y / norm;
        // keep every component positive so the bounds stay valid
        x.iter_mut().for_each(|v| *v = v.max(1e-300));
    }
    (best_upper - 1.0).max(0.0)
}

/// `f0 (I - f1 S)^{-1} S 1`, the closed form of `f0 sum_n f1^n S^{n+1} 1`.
pub fn series_k_estimate(s: &SpilloverMatrix, f0: f64, f1: f64) -> Result<Vec<f64>> {
    let radius = spectral_radius(s);
    let product = f1.abs() * radius;
    if product >= 1.0 {
        return Err(Error::SeriesDivergent { product });
    }
    let l = s.n_sectors();
    let m = s.to_dmatrix();
    let rhs = &m * DVector::from_element(l, 1.0);
    let system = DMatrix::identity(l, l) - &m * f1;
    let x = system.lu().solve(&rhs).ok_or(Error::SingularJacobian { row: 0 })?;
    Ok(x.iter().map(|v| f0 * v).collect())
}

/// Partial sum `f0 sum_{n=0}^{terms-1} f1^n S^{n+1} 1`.
pub fn series_k_truncated(s: &SpilloverMatrix, f0: f64, f1: f64, terms: usize) -> Vec<f64> {
    let l = s.n_sectors();
    let m = s.to_dmatrix();
    let mut term = &m * DVector::from_element(l, 1.0);
    let mut total = DVector::zeros(l);
    for _ in 0..terms {
        total += &term;
        term = (&m * term) * f1;
    }
    total.iter().map(|v| f0 * v).collect()
}

// ------------------------------------------------------------ regression

#[derive(Debug, Clone)]
pub struct RegressionData {
    pub records: Vec<EnsembleRecord>,
    pub spillovers: BTreeMap<usize, SpilloverMatrix>,
    pub z_max: f64,
}

impl RegressionData {
    pub fn new(records: Vec<EnsembleRecord>, runs: &[EnsembleRun], z_max: f64) -> Result<Self> {
        let spillovers: BTreeMap<_, _> = runs.iter().map(|r| (r.run, spillover_matrix(&r.network, z_max))).collect();
        if let Some(r) = records.iter().find(|r| !spillovers.contains_key(&r.run)) {
            return Err(Error::validation("records", format!("run {} has no network", r.run)));
        }
        Ok(RegressionData { records, spillovers, z_max })
    }

    fn subset(&self, keep: impl Fn(&EnsembleRecord) -> bool) -> RegressionData {
        RegressionData {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            spillovers: self.spillovers.clone(),
            z_max: self.z_max,
        }
    }

    /// Series estimate of `k*` for every record.
    pub fn series_k(&self, f0: f64, f1: f64) -> Result<Vec<f64>> {
        let mut per_run = BTreeMap::new();
        for r in &self.records {
            if let std::collections::btree_map::Entry::Vacant(e) = per_run.entry(r.run) {
                e.insert(series_k_estimate(&self.spillovers[&r.run], f0, f1)?);
            }
        }
        Ok(self.records.iter().map(|r| per_run[&r.run][r.sector]).collect())
    }

    pub fn max_spectral_radius(&self) -> f64 {
        self.spillovers.values().map(spectral_radius).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `mean = z_max - b0 / (k^b1 + b2)`.
    KMeanCurve,
    /// `k* = f0 (I - f1 S)^{-1} S 1`.
    IndirectSeries,
    /// The mean curve evaluated at the series estimate of `k*`.
    FullIndirect,
    /// The mean curve evaluated at `f0 * row_sum(S)`.
    DirectOnly,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::KMeanCurve => "k_mean_curve",
            ModelKind::IndirectSeries => "indirect_series",
            ModelKind::FullIndirect => "full_indirect",
            ModelKind::DirectOnly => "direct_only",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::KMeanCurve => &["b0", "b1", "b2"],
            ModelKind::IndirectSeries => &["f0", "f1"],
            ModelKind::FullIndirect => &["f0", "f1", "b0", "b1", "b2"],
            ModelKind::DirectOnly => &["f0", "b0", "b1", "b2"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub kind: ModelKind,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Of the final stage (mean productivity for the two-stage models).
    pub r_squared: f64,
    pub rss: f64,
    pub n_obs: usize,
    pub converged: bool,
}

impl RegressionFit {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.kind.param_names().iter().position(|n| *n == name).map(|i| self.estimates[i])
    }
}

/// Columns `model,param,estimate,std_err,r_squared`.
pub fn regression_csv(fits: &[RegressionFit]) -> String {
    let mut out = String::from("model,param,estimate,std_err,r_squared\n");
    for f in fits {
        for (i, name) in f.kind.param_names().iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{},{}", f.kind.as_str(), name, f.estimates[i], f.std_errors[i], f.r_squared);
        }
    }
    out
}

pub fn mean_curve(k: f64, z_max: f64, b: &[f64]) -> f64 {
    z_max - b[0] / (k.powf(b[1]) + b[2])
}

fn curve_guess(z_max: f64, means: &[f64]) -> [f64; 3] {
    let min = means.iter().cloned().fold(f64::INFINITY, f64::min);
    [(z_max - min).max(1e-3), 2.0, 1.0]
}

fn fit_curve_on(ks: &[f64], means: &[f64], z_max: f64, init: [f64; 3]) -> Result<crate::nls::NlsResult> {
    let model = |b: &[f64]| Ok(ks.iter().map(|&k| mean_curve(k, z_max, b)).collect());
    levenberg_marquardt(model, &init, means, &NlsOptions::default())
}

pub fn fit_k_mean_curve(samples: &[(f64, f64)], z_max: f64, init: Option<[f64; 3]>) -> Result<RegressionFit> {
    let ks: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let means: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let init = init.unwrap_or_else(|| curve_guess(z_max, &means));
    let r = fit_curve_on(&ks, &means, z_max, init)?;
    Ok(RegressionFit {
        kind: ModelKind::KMeanCurve,
        estimates: r.estimates,
        std_errors: r.std_errors,
        r_squared: r.r_squared,
        rss: r.rss,
        n_obs: samples.len(),
        converged: r.converged,
    })
}

/// Least-squares slope of `k* = f0 * row_sum(S)`, over direct-only sectors
/// when `direct_only_sectors` is set and over all sectors with spillovers
/// otherwise.
pub fn fit_direct_slope(data: &RegressionData, direct_only_sectors: bool) -> Result<crate::nls::NlsResult> {
    let subset = data.subset(|r| {
        if direct_only_sectors {
            r.path_class == PathClass::DirectOnly
        } else {
            r.path_class != PathClass::NoSpillover
        }
    });
    if subset.records.is_empty() {
        return Err(Error::invalid("data", "no records with spillovers to fit"));
    }
    let x: Vec<f64> = subset.records.iter().map(|r| r.row_sum_s).collect();
    let y: Vec<f64> = subset.records.iter().map(|r| r.k_star).collect();
    let init = y.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / x.iter().map(|b| b * b).sum::<f64>();
    let model = |f: &[f64]| Ok(x.iter().map(|xi| f[0] * xi).collect());
    levenberg_marquardt(model, &[init], &y, &NlsOptions::default())
}

fn default_f_guess(data: &RegressionData) -> [f64; 2] {
    let f0 = fit_direct_slope(data, true)
        .or_else(|_| fit_direct_slope(data, false))
        .map(|r| r.estimates[0])
        .unwrap_or(0.5 * data.z_max);
    let radius = data.max_spectral_radius();
    let f1 = if radius > 0.0 { 0.5f64.min(0.9 / radius) } else { 0.5 };
    [f0, f1]
}

/// Fits the series model to `k*` on sectors with indirect spillovers.
pub fn fit_indirect_series(data: &RegressionData, init: Option<[f64; 2]>) -> Result<RegressionFit> {
    let subset = data.subset(|r| r.path_class == PathClass::HasIndirect);
    if subset.records.is_empty() {
        return Err(Error::invalid("data", "no sectors with indirect spillovers"));
    }
    let init = init.unwrap_or_else(|| default_f_guess(data));
    let y: Vec<f64> = subset.records.iter().map(|r| r.k_star).collect();
    let model = |f: &[f64]| subset.series_k(f[0], f[1]);
    let r = levenberg_marquardt(model, &init, &y, &NlsOptions::default())?;
    Ok(RegressionFit {
        kind: ModelKind::IndirectSeries,
        estimates: r.estimates,
        std_errors: r.std_errors,
        r_squared: r.r_squared,
        rss: r.rss,
        n_obs: y.len(),
        converged: r.converged,
    })
}

/// Two stages: `(f0, f1)` from the series fit on `k*`, then `(b0, b1, b2)`
/// from the mean curve at the fitted `k` over all records. A joint fit is not
/// identifiable: `f0^b1` folds into `b0` and `b2`.
pub fn fit_full_indirect(data: &RegressionData, init: Option<[f64; 5]>) -> Result<RegressionFit> {
    let stage1 = fit_indirect_series(data, init.map(|i| [i[0], i[1]]))?;
    let (f0, f1) = (stage1.estimates[0], stage1.estimates[1]);
    let k_hat = data.series_k(f0, f1)?;
    let means: Vec<f64> = data.records.iter().map(|r| r.mean_prod).collect();
    let b_init = init.map(|i| [i[2], i[3], i[4]]).unwrap_or_else(|| curve_guess(data.z_max, &means));
    let stage2 = fit_curve_on(&k_hat, &means, data.z_max, b_init)?;
    Ok(RegressionFit {
        kind: ModelKind::FullIndirect,
        estimates: [stage1.estimates, stage2.estimates].concat(),
        std_errors: [stage1.std_errors, stage2.std_errors].concat(),
        r_squared: stage2.r_squared,
        rss: stage2.rss,
        n_obs: means.len(),
        converged: stage1.converged && stage2.converged,
    })
}

/// Two stages: `f0` from `k* = f0 row_sum(S)` on all sectors with spillovers,
/// then the mean curve at `f0 row_sum(S)` over all records.
pub fn fit_direct_only(data: &RegressionData, init: Option<[f64; 4]>) -> Result<RegressionFit> {
    let stage1 = fit_direct_slope(data, false)?;
    let f0 = stage1.estimates[0];
    let k_hat: Vec<f64> = data.records.iter().map(|r| f0 * r.row_sum_s).collect();
    let means: Vec<f64> = data.records.iter().map(|r| r.mean_prod).collect();
    let b_init = init.map(|i| [i[1], i[2], i[3]]).unwrap_or_else(|| curve_guess(data.z_max, &means));
    let stage2 = fit_curve_on(&k_hat, &means, data.z_max, b_init)?;
    Ok(RegressionFit {
        kind: ModelKind::DirectOnly,
        estimates: [stage1.estimates, stage2.estimates].concat(),
        std_errors: [stage1.std_errors, stage2.std_errors].concat(),
        r_squared: stage2.r_squared,
        rss: stage2.rss,
        n_obs: means.len(),
        converged: stage1.converged && stage2.converged,
    })
}

/// Predicted mean productivity for every record under a two-stage fit.
pub fn predict_means(fit: &RegressionFit, data: &RegressionData) -> Result<Vec<f64>> {
    let e = &fit.estimates;
    let (k_hat, b) = match fit.kind {
        ModelKind::FullIndirect => (data.series_k(e[0], e[1])?, &e[2..5]),
        ModelKind::DirectOnly => (data.records.iter().map(|r| e[0] * r.row_sum_s).collect(), &e[1..4]),
        other => {
            return Err(Error::invalid("fit", format!("{} does not predict mean productivity", other.as_str())))
        }
    };
    Ok(k_hat.iter().map(|&k| mean_curve(k, data.z_max, b)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rss_indirect: f64,
    pub rss_direct: f64,
    pub r_squared_indirect: f64,
    pub r_squared_direct: f64,
    /// `(rss_direct - rss_indirect) / rss_direct`.
    pub relative_error_reduction: f64,
    pub n_obs: usize,
}

pub fn model_comparison(
    data: &RegressionData,
    fit_indirect: &RegressionFit,
    fit_direct: &RegressionFit,
) -> Result<ComparisonReport> {
    let y: Vec<f64> = data.records.iter().map(|r| r.mean_prod).collect();
    if y.is_empty() {
        return Err(Error::invalid("data", "no records"));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let rss = |fit: &RegressionFit| -> Result<f64> {
        Ok(predict_means(fit, data)?.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum())
    };
    let rss_indirect = rss(fit_indirect)?;
    let rss_direct = rss(fit_direct)?;
    let r2 = |r: f64| if tss > 0.0 { 1.0 - r / tss } else { f64::NAN };
    let relative_error_reduction = if rss_direct > 0.0 { (rss_direct - rss_indirect) / rss_direct } else { 0.0 };
    Ok(ComparisonReport {
        rss_indirect,
        rss_direct,
        r_squared_indirect: r2(rss_indirect),
        r_squared_direct: r2(rss_direct),
        relative_error_reduction,
        n_obs: y.len(),
    })
}
