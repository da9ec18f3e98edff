//! The spillover fixed point: `Phi_l(k) = sum_lp S[l][lp] * mean(m^{k_lp})`,
//! coupled with the aggregate price `B` when it is endogenous.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{density_from_value, mean_productivity, moment_alpha, Density};
use crate::error::{Error, Result};
use crate::hjb::{solve_auxiliary_hjb_from, ValueFunction};
use crate::model::{Grid, ModelParams, PriceMode, SolverOptions};
use crate::network::{spillover_matrix, SpilloverMatrix, SpilloverNetwork};

/// Everything computed for one sector at a given `(k, B)`.
#[derive(Debug, Clone)]
pub struct SectorSolve {
    pub value: ValueFunction,
    pub density: Density,
    pub mean: f64,
    pub moment: f64,
}

pub fn solve_sector(
    k: f64,
    price: f64,
    params: &ModelParams,
    grid: &Grid,
    opts: &SolverOptions,
    warm_start: Option<&[f64]>,
) -> Result<SectorSolve> {
    let value = solve_auxiliary_hjb_from(k, params, price, grid, opts, warm_start)?;
    let density = density_from_value(&value, params)?;
    let mean = mean_productivity(&density);
    let moment = moment_alpha(&density, params.alpha())?;
    Ok(SectorSolve { value, density, mean, moment })
}

/// `B = [sum_l A_l int z^alpha m_l / Y]^(1/(alpha-1))`.
pub fn update_price(moments: &[f64], net: &SpilloverNetwork, params: &ModelParams) -> Result<f64> {
    if moments.len() != net.n_sectors() {
        return Err(Error::DimensionMismatch { expected: net.n_sectors(), found: moments.len() });
    }
    let bracket: f64 = net.weights().iter().zip(moments).map(|(a, m)| a * m).sum::<f64>() / params.income();
    if !(bracket > 0.0 && bracket.is_finite()) {
        return Err(Error::DegenerateAggregate(bracket));
    }
    Ok(bracket.powf(1.0 / (params.alpha() - 1.0)))
}

pub fn update_price_from_densities(densities: &[Density], net: &SpilloverNetwork, params: &ModelParams) -> Result<f64> {
    let moments = densities
        .iter()
        .map(|m| moment_alpha(m, params.alpha()))
        .collect::<Result<Vec<_>>>()?;
    update_price(&moments, net, params)
}

type CacheKey = (u64, u64);

fn round12(x: f64) -> u64 {
    // 12 significant digits; the textual form is canonical and hashable
    format!("{x:.11e}").parse::<f64>().map(f64::to_bits).unwrap_or(x.to_bits())
}

/// Memoised per-sector solves shared across `Phi` evaluations.
#[derive(Debug, Default)]
pub struct SolveCache {
    entries: Mutex<HashMap<CacheKey, Arc<SectorSolve>>>,
    hits: Mutex<usize>,
}

impl SolveCache {
    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> usize {
        *self.hits.lock().expect("cache lock")
    }

    fn get(&self, key: CacheKey) -> Option<Arc<SectorSolve>> {
        let hit = self.entries.lock().expect("cache lock").get(&key).cloned();
        if hit.is_some() {
            *self.hits.lock().expect("cache lock") += 1;
        }
        hit
    }

    fn insert(&self, key: CacheKey, solve: Arc<SectorSolve>) {
        self.entries.lock().expect("cache lock").insert(key, solve);
    }
}

/// Solves every sector at couplings `k` and price `price`. Sectors with the
/// same rounded coupling share one solve; `warm` holds the last value
/// function seen per sector.
fn solve_all_sectors(
    k: &[f64],
    price: f64,
    params: &ModelParams,
    grid: &Grid,
    opts: &SolverOptions,
    cache: &SolveCache,
    warm: &[Option<Vec<f64>>],
) -> Result<Vec<Arc<SectorSolve>>> {
    let pkey = round12(price);
    let mut distinct: Vec<(CacheKey, usize)> = Vec::new();
    for (l, &kl) in k.iter().enumerate() {
        let key = (round12(kl), pkey);
        if !distinct.iter().any(|(d, _)| *d == key) {
            distinct.push((key, l));
        }
    }
    let solved: Vec<(CacheKey, Arc<SectorSolve>)> = distinct
        .par_iter()
        .map(|&(key, l)| {
            if let Some(hit) = cache.get(key) {
                return Ok((key, hit));
            }
            let s = solve_sector(k[l], price, params, grid, opts, warm[l].as_deref()).map_err(|e| e.in_sector(l))?;
            let s = Arc::new(s);
            cache.insert(key, s.clone());
            Ok((key, s))
        })
        .collect::<Result<_>>()?;
    Ok(k.iter()
        .map(|&kl| {
            let key = (round12(kl), pkey);
            solved.iter().find(|(d, _)| *d == key).expect("every key solved").1.clone()
        })
        .collect())
}

fn validate_k(k: &[f64], net: &SpilloverNetwork) -> Result<()> {
    if k.len() != net.n_sectors() {
        return Err(Error::DimensionMismatch { expected: net.n_sectors(), found: k.len() });
    }
    if let Some((l, v)) = k.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid("k", format!("entry {l} must be finite and >= 0, got {v}")));
    }
    Ok(())
}

/// `Phi(k)` at a resolved price, without clamping.
pub fn phi(
    k: &[f64],
    price: f64,
    params: &ModelParams,
    net: &SpilloverNetwork,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    validate_k(k, net)?;
    let s = spillover_matrix(net, params.z_max());
    let cache = SolveCache::default();
    let warm = vec![None; k.len()];
    let solves = solve_all_sectors(k, price, params, grid, opts, &cache, &warm)?;
    let means: Vec<f64> = solves.iter().map(|s| s.mean).collect();
    Ok(s.apply(&means))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub zeta: f64,
    /// `A_l * P_l` per sector.
    pub weighted_out_strength: Vec<f64>,
    /// `sup_i |k^{i+1} - k^i|_1 / |k^i - k^{i-1}|_1`; absent with fewer than
    /// two informative steps.
    pub contraction_ratio: Option<f64>,
    pub non_contraction: bool,
}

/// Steps whose previous increment is below this are too small to form a ratio.
const RATIO_FLOOR: f64 = 1e-10;

pub fn uniqueness_margin(net: &SpilloverNetwork, s: &SpilloverMatrix, k_history: &[Vec<f64>]) -> UniquenessReport {
    let weighted_out_strength = net.weights().iter().zip(&s.column_sums).map(|(a, p)| a * p).collect();
    let steps: Vec<f64> = k_history
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| (a - b).abs()).sum())
        .collect();
    let contraction_ratio = steps
        .windows(2)
        .filter(|w| w[0] > RATIO_FLOOR)
        .map(|w| w[1] / w[0])
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
    let non_contraction = contraction_ratio.is_some_and(|r| r >= 1.0);
    if non_contraction {
        log::warn!("fixed-point iteration is not contracting (ratio {:?})", contraction_ratio);
    }
    UniquenessReport { zeta: s.zeta, weighted_out_strength, contraction_ratio, non_contraction }
}

#[derive(Debug, Clone)]
pub struct MfgSolution {
    pub value_functions: Vec<ValueFunction>,
    pub densities: Vec<Density>,
    pub mean_productivity: Vec<f64>,
    pub k_star: Vec<f64>,
    pub price: f64,
    pub price_mode: PriceMode,
    pub iterations: usize,
    pub gap: f64,
    pub gap_trace: Vec<f64>,
    pub k_history: Vec<Vec<f64>>,
    pub price_history: Vec<f64>,
    /// Whether any `Phi` output had to be clamped into `[0, zeta]`.
    pub clamp_activated: bool,
    pub uniqueness: UniquenessReport,
    pub spillover: SpilloverMatrix,
    pub cache_hits: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub k_star: Vec<f64>,
    pub price: f64,
    pub endogenous_price: bool,
    pub mean_productivity: Vec<f64>,
    pub iterations: usize,
    pub gap: f64,
    pub gap_trace: Vec<f64>,
    pub clamp_activated: bool,
    pub hjb_residuals: Vec<f64>,
    pub uniqueness: UniquenessReport,
}

impl MfgSolution {
    pub fn n_sectors(&self) -> usize {
        self.k_star.len()
    }

    pub fn summary(&self) -> SolutionSummary {
        SolutionSummary {
            k_star: self.k_star.clone(),
            price: self.price,
            endogenous_price: self.price_mode == PriceMode::Endogenous,
            mean_productivity: self.mean_productivity.clone(),
            iterations: self.iterations,
            gap: self.gap,
            gap_trace: self.gap_trace.clone(),
            clamp_activated: self.clamp_activated,
            hjb_residuals: self.value_functions.iter().map(|v| v.residual_norm).collect(),
            uniqueness: self.uniqueness.clone(),
        }
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serialises")
    }

    /// Columns `z,V,dV,m` for one sector.
    pub fn sector_csv(&self, sector: usize) -> String {
        let v = &self.value_functions[sector];
        let m = &self.densities[sector];
        let mut out = String::from("z,V,dV,m\n");
        for i in 0..v.grid.len() {
            let _ = writeln!(out, "{},{},{},{}", v.grid.nodes()[i], v.values[i], v.derivative[i], m.values[i]);
        }
        out
    }
}

/// Outer joint Picard iteration on `(k, B)`.
pub fn solve_mfg(
    params: &ModelParams,
    net: &SpilloverNetwork,
    grid: &Grid,
    opts: &SolverOptions,
    k0: Option<&[f64]>,
    b0: Option<f64>,
) -> Result<MfgSolution> {
    opts.validate()?;
    let l = net.n_sectors();
    let s = spillover_matrix(net, params.z_max());
    let mut k = match k0 {
        Some(k0) => k0.to_vec(),
        None => vec![0.0; l],
    };
    validate_k(&k, net)?;
    if k.iter().any(|&v| v > s.zeta * (1.0 + 1e-12)) {
        return Err(Error::invalid("k0", format!("entries must lie in [0, zeta = {}]", s.zeta)));
    }
    let mode = params.price_mode();
    let mut price = match mode {
        PriceMode::Fixed(b) => b,
        PriceMode::Endogenous => b0.unwrap_or(1.0),
    };
    if !(price > 0.0 && price.is_finite()) {
        return Err(Error::invalid("b0", format!("initial price must be positive, got {price}")));
    }

    let cache = SolveCache::default();
    let mut warm: Vec<Option<Vec<f64>>> = vec![None; l];
    let mut gap_trace = Vec::new();
    let mut k_history = vec![k.clone()];
    let mut price_history = vec![price];
    let mut clamp_activated = false;

    for iter in 1..=opts.max_fixed_point_iters {
        let solves = solve_all_sectors(&k, price, params, grid, opts, &cache, &warm)?;
        for (w, sol) in warm.iter_mut().zip(&solves) {
            *w = Some(sol.value.values.clone());
        }
        let means: Vec<f64> = solves.iter().map(|s| s.mean).collect();
        let mut next_k = s.apply(&means);
        for v in next_k.iter_mut() {
            let clamped = v.clamp(0.0, s.zeta);
            if clamped != *v {
                clamp_activated = true;
                *v = clamped;
            }
        }
        let next_price = match mode {
            PriceMode::Fixed(b) => b,
            PriceMode::Endogenous => {
                let moments: Vec<f64> = solves.iter().map(|s| s.moment).collect();
                update_price(&moments, net, params)?
            }
        };
        let gap = next_k.iter().zip(&k).map(|(a, b)| (a - b).abs()).sum::<f64>() + (next_price - price).abs();
        gap_trace.push(gap);
        log::debug!("outer iteration {iter}: gap {gap:e}, B {price}");

        if gap <= opts.fixed_point_tol {
            let uniqueness = uniqueness_margin(net, &s, &k_history);
            return Ok(MfgSolution {
                value_functions: solves.iter().map(|s| s.value.clone()).collect(),
                densities: solves.iter().map(|s| s.density.clone()).collect(),
                mean_productivity: means,
                k_star: k,
                price,
                price_mode: mode,
                iterations: iter,
                gap,
                gap_trace,
                k_history,
                price_history,
                clamp_activated,
                uniqueness,
                spillover: s,
                cache_hits: cache.hits(),
            });
        }

        let d = opts.damping;
        for (kv, nv) in k.iter_mut().zip(&next_k) {
            *kv += d * (nv - *kv);
        }
        price += d * (next_price - price);
        k_history.push(k.clone());
        price_history.push(price);
    }
    let residual = gap_trace.last().copied().unwrap_or(f64::NAN);
    Err(Error::NonConvergence {
        stage: "outer fixed point",
        iterations: opts.max_fixed_point_iters,
        residual,
        trace: gap_trace,
    })
}

/// Largest observed `|Phi(k) - Phi(k')|_1 / |k - k'|_1` over random pairs in
/// `[0, zeta]^L` at a fixed price.
pub fn estimate_phi_lipschitz(
    params: &ModelParams,
    net: &SpilloverNetwork,
    grid: &Grid,
    opts: &SolverOptions,
    price: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    let s = spillover_matrix(net, params.z_max());
    let l = net.n_sectors();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..n_pairs {
        let a: Vec<f64> = (0..l).map(|_| rng.gen::<f64>() * s.zeta).collect();
        let b: Vec<f64> = (0..l).map(|_| rng.gen::<f64>() * s.zeta).collect();
        let dist: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        if dist < 1e-12 {
            continue;
        }
        let pa = phi(&a, price, params, net, grid, opts)?;
        let pb = phi(&b, price, params, net, grid, opts)?;
        let num: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum();
        best = best.max(num / dist);
    }
    Ok(best)
}
