//! Finite-N particle system with reflected Euler-Maruyama dynamics.
//!
//! Firm `i` in sector `l` moves with drift
//! `h(Z_i)^gamma + sum_lp (N_lp / N) sum_j s_ij Z_j`, where links `s_ij` are
//! drawn once at the start. With Bernoulli links of probability
//! `p(l, lp) / N_lp` the spillover term has mean `A_lp p(l, lp) E[Z]`, the
//! mean-field coupling.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{mean_productivity, Density};
use crate::equilibrium::MfgSolution;
use crate::error::{Error, Result};
use crate::model::{labour_drift, optimal_labour, Grid, ModelParams};
use crate::network::SpilloverNetwork;

#[derive(Debug, Clone)]
pub enum InitialLaw {
    Uniform,
    /// One density per sector, sampled by inverse CDF.
    FromDensity(Vec<Density>),
}

/// A link from firm `to_firm` in `to_sector` to firm `from_firm` in
/// `from_sector`, with multiplicity `count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub to_sector: usize,
    pub to_firm: usize,
    pub from_sector: usize,
    pub from_firm: usize,
    pub count: f64,
}

#[derive(Debug, Clone)]
pub enum LinkLaw {
    /// Each ordered firm pair gets one link with probability `p(l, lp) / N_lp`.
    Bernoulli,
    Explicit(Vec<Link>),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub firms_per_sector: Vec<usize>,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub initial_law: InitialLaw,
    pub link_law: LinkLaw,
    /// Replaces `sigma` from the model parameters when set.
    pub noise: Option<f64>,
    /// Trajectory rows are written every this many steps.
    pub record_every: usize,
    /// Snapshots taken after this time are pooled into the late-time sample.
    pub burn_in: f64,
    pub sample_every: usize,
}

impl SimConfig {
    pub fn new(firms_per_sector: Vec<usize>, horizon: f64, dt: f64, seed: u64) -> Self {
        SimConfig {
            firms_per_sector,
            horizon,
            dt,
            seed,
            initial_law: InitialLaw::Uniform,
            link_law: LinkLaw::Bernoulli,
            noise: None,
            record_every: 100,
            burn_in: 0.5 * horizon,
            sample_every: 100,
        }
    }

    pub fn validate(&self, n_sectors: usize) -> Result<()> {
        if self.firms_per_sector.len() != n_sectors {
            return Err(Error::DimensionMismatch { expected: n_sectors, found: self.firms_per_sector.len() });
        }
        if self.firms_per_sector.contains(&0) {
            return Err(Error::Config("every sector needs at least one firm".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt) {
            return Err(Error::Config(format!("horizon {} shorter than dt {}", self.horizon, self.dt)));
        }
        if self.record_every == 0 || self.sample_every == 0 {
            return Err(Error::Config("record_every and sample_every must be >= 1".into()));
        }
        if let Some(s) = self.noise {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("noise must be >= 0, got {s}")));
            }
        }
        if let InitialLaw::FromDensity(d) = &self.initial_law {
            if d.len() != n_sectors {
                return Err(Error::DimensionMismatch { expected: n_sectors, found: d.len() });
            }
        }
        Ok(())
    }
}

/// Feedback control `z -> h(z)` from a sampled costate `lambda = V'`.
#[derive(Debug, Clone)]
pub struct Policy {
    grid: Grid,
    lambda: Vec<f64>,
    params: ModelParams,
}

impl Policy {
    pub fn new(grid: Grid, lambda: Vec<f64>, params: ModelParams) -> Result<Self> {
        if lambda.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), found: lambda.len() });
        }
        Ok(Policy { grid, lambda, params })
    }

    pub fn zero(grid: Grid, params: ModelParams) -> Self {
        let n = grid.len();
        Policy { grid, lambda: vec![0.0; n], params }
    }

    pub fn labour(&self, z: f64) -> f64 {
        optimal_labour(self.grid.interpolate(&self.lambda, z), &self.params)
    }

    /// `h(z)^gamma`, the productivity gain from labour.
    pub fn control_drift(&self, z: f64) -> f64 {
        labour_drift(self.grid.interpolate(&self.lambda, z), &self.params)
    }

    fn sup_control_drift(&self) -> f64 {
        self.lambda.iter().map(|&l| labour_drift(l, &self.params)).fold(0.0, f64::max)
    }
}

pub fn equilibrium_policy(solution: &MfgSolution, sector: usize, params: &ModelParams) -> Result<Policy> {
    let vf = solution
        .value_functions
        .get(sector)
        .ok_or_else(|| Error::invalid("sector", format!("index {sector} out of range")))?;
    Policy::new(vf.grid.clone(), vf.derivative.clone(), *params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalState {
    pub time: f64,
    pub particles: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub sector: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    pub final_state: EmpiricalState,
    /// Per sector, every particle position from each snapshot after burn-in.
    pub late_samples: Vec<Vec<f64>>,
    pub noise: f64,
    pub steps: usize,
    /// Realised link counts per receiving sector.
    pub links_per_sector: Vec<usize>,
}

impl Trajectory {
    /// Columns `t,sector,mean,std`, sectors 1-based.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,sector,mean,std\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.t, r.sector + 1, r.mean, r.std);
        }
        out
    }
}

/// Fold `z` back into `[0, z_max]` by repeated reflection.
pub fn reflect(z: f64, z_max: f64) -> f64 {
    let once = if z < 0.0 { -z } else if z > z_max { 2.0 * z_max - z } else { z };
    if (0.0..=z_max).contains(&once) {
        return once;
    }
    let period = 2.0 * z_max;
    let y = z.rem_euclid(period);
    let out = if y > z_max { period - y } else { y };
    out.clamp(0.0, z_max)
}

/// Links stored per receiving firm as `(sector, firm, weight)` where the
/// weight already includes the `count * N_lp / N` scaling.
type Adjacency = Vec<Vec<Vec<(usize, usize, f64)>>>;

fn sample_links<R: Rng>(rng: &mut R, cfg: &SimConfig, net: &SpilloverNetwork) -> Result<Adjacency> {
    let l = net.n_sectors();
    let n_total: usize = cfg.firms_per_sector.iter().sum();
    let mut adj: Adjacency = cfg.firms_per_sector.iter().map(|&n| vec![Vec::new(); n]).collect();
    match &cfg.link_law {
        LinkLaw::Bernoulli => {
            for to in 0..l {
                for from in 0..l {
                    let p = net.kernel()[to][from];
                    if p == 0.0 {
                        continue;
                    }
                    let n_from = cfg.firms_per_sector[from];
                    let q = p / n_from as f64;
                    if q > 1.0 {
                        return Err(Error::Config(format!(
                            "link probability p({to},{from})/N = {q} exceeds 1; use more firms"
                        )));
                    }
                    let scale = n_from as f64 / n_total as f64;
                    let binom = Binomial::new(n_from as u64, q).map_err(|e| Error::Config(e.to_string()))?;
                    for firm in adj[to].iter_mut() {
                        let count = binom.sample(rng) as usize;
                        if count > 0 {
                            for j in sample(rng, n_from, count).into_iter() {
                                firm.push((from, j, scale));
                            }
                        }
                    }
                }
            }
        }
        LinkLaw::Explicit(links) => {
            for link in links {
                let ok = link.to_sector < l
                    && link.from_sector < l
                    && link.to_firm < cfg.firms_per_sector[link.to_sector]
                    && link.from_firm < cfg.firms_per_sector[link.from_sector];
                if !ok || !(link.count >= 0.0 && link.count.is_finite()) {
                    return Err(Error::Config(format!("invalid explicit link {link:?}")));
                }
                let scale = cfg.firms_per_sector[link.from_sector] as f64 / n_total as f64;
                adj[link.to_sector][link.to_firm].push((link.from_sector, link.from_firm, link.count * scale));
            }
        }
    }
    Ok(adj)
}

fn inverse_cdf_sample(density: &Density, u: f64) -> f64 {
    let cdf = density.cdf();
    let total = *cdf.last().expect("non-empty grid");
    let target = u * total;
    let idx = cdf.partition_point(|&c| c < target).clamp(1, cdf.len() - 1);
    let (c0, c1) = (cdf[idx - 1], cdf[idx]);
    let nodes = density.grid.nodes();
    let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
    nodes[idx - 1] + frac * (nodes[idx] - nodes[idx - 1])
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs the particle system. Draw order: links, initial positions, then
/// one standard normal per particle per step.
pub fn simulate(
    cfg: &SimConfig,
    net: &SpilloverNetwork,
    params: &ModelParams,
    policies: &[Policy],
) -> Result<Trajectory> {
    let l = net.n_sectors();
    cfg.validate(l)?;
    if policies.len() != l {
        return Err(Error::DimensionMismatch { expected: l, found: policies.len() });
    }
    let z_max = params.z_max();
    let sigma = cfg.noise.unwrap_or(params.sigma());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let adj = sample_links(&mut rng, cfg, net)?;
    let links_per_sector = adj.iter().map(|s| s.iter().map(Vec::len).sum()).collect();

    // dt guard: the deterministic displacement per step must stay below z_max / 2
    let mut sup_drift: f64 = 0.0;
    for (sector, firms) in adj.iter().enumerate() {
        let spill = firms
            .iter()
            .map(|f| f.iter().map(|(_, _, w)| w).sum::<f64>() * z_max)
            .fold(0.0, f64::max);
        sup_drift = sup_drift.max(policies[sector].sup_control_drift() + spill);
    }
    if cfg.dt * sup_drift > 0.5 * z_max {
        return Err(Error::Config(format!(
            "dt = {} too large: dt * sup drift = {} exceeds z_max / 2",
            cfg.dt,
            cfg.dt * sup_drift
        )));
    }

    let mut z: Vec<Vec<f64>> = cfg
        .firms_per_sector
        .iter()
        .enumerate()
        .map(|(s, &n)| {
            (0..n)
                .map(|_| {
                    let u: f64 = rng.gen();
                    match &cfg.initial_law {
                        InitialLaw::Uniform => u * z_max,
                        InitialLaw::FromDensity(d) => inverse_cdf_sample(&d[s], u),
                    }
                })
                .collect()
        })
        .collect();

    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let sqrt_dt = cfg.dt.sqrt();
    let mut rows = Vec::new();
    let mut late_samples = vec![Vec::new(); l];
    let record = |rows: &mut Vec<TrajectoryRow>, z: &[Vec<f64>], t: f64| {
        for (sector, xs) in z.iter().enumerate() {
            let (mean, std) = moments(xs);
            rows.push(TrajectoryRow { t, sector, mean, std });
        }
    };
    record(&mut rows, &z, 0.0);

    let mut noise: Vec<Vec<f64>> = cfg.firms_per_sector.iter().map(|&n| vec![0.0; n]).collect();
    for step in 1..=steps {
        for buf in noise.iter_mut() {
            for x in buf.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
        }
        let prev = &z;
        let next: Vec<Vec<f64>> = (0..l)
            .map(|sector| {
                prev[sector]
                    .par_iter()
                    .zip(adj[sector].par_iter())
                    .zip(noise[sector].par_iter())
                    .map(|((&zi, links), &xi)| {
                        let spill: f64 = links.iter().map(|&(s, j, w)| w * prev[s][j]).sum();
                        let drift = policies[sector].control_drift(zi) + spill;
                        let out = reflect(zi + drift * cfg.dt + sigma * sqrt_dt * xi, z_max);
                        debug_assert!((0.0..=z_max).contains(&out));
                        out
                    })
                    .collect()
            })
            .collect();
        z = next;
        let t = step as f64 * cfg.dt;
        if step % cfg.record_every == 0 || step == steps {
            record(&mut rows, &z, t);
        }
        if t > cfg.burn_in && step % cfg.sample_every == 0 {
            for (dst, xs) in late_samples.iter_mut().zip(&z) {
                dst.extend_from_slice(xs);
            }
        }
    }
    assert!(z.iter().flatten().all(|x| (0.0..=z_max).contains(x)), "reflection left the domain");
    if late_samples.iter().all(Vec::is_empty) {
        late_samples = z.clone();
    }
    Ok(Trajectory {
        rows,
        final_state: EmpiricalState { time: steps as f64 * cfg.dt, particles: z },
        late_samples,
        noise: sigma,
        steps,
        links_per_sector,
    })
}

/// `int_0^1 |F_n^{-1}(u) - F^{-1}(u)| du`, evaluated at the sample midpoint quantiles.
pub fn wasserstein1(samples: &[f64], density: &Density) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| (x - inverse_cdf_sample(density, (i as f64 + 0.5) / n)).abs())
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorComparison {
    pub sector: usize,
    pub empirical_mean: f64,
    pub mfg_mean: f64,
    pub mean_gap: f64,
    pub wasserstein: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    /// False for degenerate (noise-free) runs, where no stationary law exists
    /// to compare with.
    pub applicable: bool,
    pub sectors: Vec<SectorComparison>,
}

pub fn empirical_vs_mfg(trajectory: &Trajectory, solution: &MfgSolution) -> LimitReport {
    let applicable = trajectory.noise > 0.0;
    let sectors = trajectory
        .late_samples
        .iter()
        .zip(&solution.densities)
        .enumerate()
        .map(|(sector, (xs, m))| {
            let empirical_mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let mfg_mean = mean_productivity(m);
            SectorComparison {
                sector,
                empirical_mean,
                mfg_mean,
                mean_gap: (empirical_mean - mfg_mean).abs(),
                wasserstein: wasserstein1(xs, m),
            }
        })
        .collect();
    LimitReport { applicable, sectors }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub sector: usize,
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
}

pub fn histogram(state: &EmpiricalState, z_max: f64, bins: usize) -> Vec<HistogramBin> {
    let bins = bins.max(1);
    let width = z_max / bins as f64;
    let mut out = Vec::new();
    for (sector, xs) in state.particles.iter().enumerate() {
        let mut counts = vec![0usize; bins];
        for &x in xs {
            let b = ((x / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        for (b, count) in counts.into_iter().enumerate() {
            out.push(HistogramBin { sector, bin_left: b as f64 * width, bin_right: (b + 1) as f64 * width, count });
        }
    }
    out
}

/// Columns `sector,bin_left,bin_right,count`, sectors 1-based.
pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("sector,bin_left,bin_right,count\n");
    for b in bins {
        let _ = writeln!(out, "{},{},{},{}", b.sector + 1, b.bin_left, b.bin_right, b.count);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PriceMode;
    use crate::network::single_sector;
    use proptest::prelude::*;
    use rand::Rng;

    fn params() -> ModelParams {
        ModelParams::baseline().with_price_mode(PriceMode::Fixed(1.0)).unwrap()
    }

    fn zero_policies(l: usize) -> Vec<Policy> {
        (0..l).map(|_| Policy::zero(Grid::new(11, 2.0).unwrap(), params())).collect()
    }

    fn isolated(l: usize) -> SpilloverNetwork {
        SpilloverNetwork::new(vec![1.0 / l as f64; l], vec![vec![0.0; l]; l], None).unwrap()
    }

    #[test]
    fn reflection_folds_into_domain() {
        assert_eq!(reflect(-0.3, 2.0), 0.3);
        assert_eq!(reflect(2.5, 2.0), 1.5);
        assert!((reflect(4.7, 2.0) - 0.7).abs() < 1e-12);
        assert!((reflect(-5.1, 2.0) - 1.1).abs() < 1e-12);
        assert_eq!(reflect(1.0, 2.0), 1.0);
    }

    proptest! {
        #[test]
        fn reflection_is_idempotent_inside(z in -50.0f64..50.0) {
            let r = reflect(z, 2.0);
            prop_assert!((0.0..=2.0).contains(&r));
            prop_assert_eq!(reflect(r, 2.0), r);
        }
    }

    #[test]
    fn zero_dynamics_are_stationary() {
        let mut cfg = SimConfig::new(vec![50], 1.0, 0.01, 4);
        cfg.noise = Some(0.0);
        let traj = simulate(&cfg, &isolated(1), &params(), &zero_policies(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let start: Vec<f64> = (0..50).map(|_| rng.gen::<f64>() * 2.0).collect();
        assert_eq!(traj.final_state.particles[0], start);
    }

    #[test]
    fn two_body_linear_ode() {
        let z_i0 = 0.2;
        let z_j = 1.5;
        let s = 0.8;
        let t_end = 1.0;
        let exact = z_i0 + s * z_j * t_end / 2.0;
        let mut errs = Vec::new();
        for dt in [0.01, 0.005] {
            let mut cfg = SimConfig::new(vec![1, 1], t_end, dt, 0);
            cfg.noise = Some(0.0);
            cfg.initial_law = InitialLaw::FromDensity(vec![point_mass(z_i0), point_mass(z_j)]);
            cfg.link_law = LinkLaw::Explicit(vec![Link { to_sector: 0, to_firm: 0, from_sector: 1, from_firm: 0, count: s }]);
            let traj = simulate(&cfg, &isolated(2), &params(), &zero_policies(2)).unwrap();
            errs.push((traj.final_state.particles[0][0] - exact).abs());
            assert!((traj.final_state.particles[1][0] - z_j).abs() < 1e-3);
        }
        assert!(errs.iter().all(|&e| e < 1e-2), "{errs:?}");
    }

    /// Very narrow density centred at `c` so inverse-CDF sampling returns about `c`.
    fn point_mass(c: f64) -> Density {
        let g = Grid::new(20001, 2.0).unwrap();
        let w = g.nodes().iter().map(|z| (-((z - c) / 1e-3).powi(2)).exp() + 1e-300).collect();
        Density::from_unnormalized(g, w, 0.0).unwrap()
    }

    #[test]
    fn reflected_brownian_motion_is_uniform() {
        let mut cfg = SimConfig::new(vec![10_000], 50.0, 0.01, 21);
        cfg.burn_in = 50.0;
        let traj = simulate(&cfg, &isolated(1), &params(), &zero_policies(1)).unwrap();
        let mut xs = traj.final_state.particles[0].clone();
        xs.sort_by(|a, b| a.total_cmp(b));
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, x)| ((i as f64 + 1.0) / n - x / 2.0).abs().max((i as f64 / n - x / 2.0).abs()))
            .fold(0.0, f64::max);
        assert!(ks <= 0.05, "{ks}");
    }

    #[test]
    fn reproducible_with_seed() {
        let net = single_sector(0.5).unwrap();
        let cfg = SimConfig::new(vec![200], 2.0, 0.01, 77);
        let a = simulate(&cfg, &net, &params(), &zero_policies(1)).unwrap();
        let b = simulate(&cfg, &net, &params(), &zero_policies(1)).unwrap();
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn bernoulli_links_follow_law_of_large_numbers() {
        // aggregate spillover (1/N) sum_i sum_j w_ij Z_j against A p mean Z
        let net = SpilloverNetwork::new(vec![0.5, 0.5], vec![vec![0.0, 1.5], vec![0.0, 0.0]], None).unwrap();
        let n = 20_000;
        let cfg = SimConfig::new(vec![n, n], 1.0, 0.5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let adj = sample_links(&mut rng, &cfg, &net).unwrap();
        let zs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0).collect();
        let per_firm: Vec<f64> =
            adj[0].iter().map(|links| links.iter().map(|&(_, j, w)| w * zs[j]).sum()).collect();
        let (mean, std) = moments(&per_firm);
        let target = 0.5 * 1.5 * zs.iter().sum::<f64>() / n as f64;
        let se = std / (n as f64).sqrt();
        assert!((mean - target).abs() < 3.0 * se, "{mean} vs {target} (se {se})");
    }

    #[test]
    fn dt_guard_and_config_errors() {
        let mut cfg = SimConfig::new(vec![1, 1], 1.0, 0.5, 0);
        cfg.link_law = LinkLaw::Explicit(vec![Link { to_sector: 0, to_firm: 0, from_sector: 1, from_firm: 0, count: 10.0 }]);
        assert!(matches!(simulate(&cfg, &isolated(2), &params(), &zero_policies(2)), Err(Error::Config(_))));
        let bad = SimConfig::new(vec![0], 1.0, 0.1, 0);
        assert!(simulate(&bad, &isolated(1), &params(), &zero_policies(1)).is_err());
        let bad = SimConfig::new(vec![5], 0.01, 0.1, 0);
        assert!(simulate(&bad, &isolated(1), &params(), &zero_policies(1)).is_err());
        let dense = single_sector(3.0).unwrap();
        let cfg = SimConfig::new(vec![2], 1.0, 0.01, 0);
        assert!(matches!(simulate(&cfg, &dense, &params(), &zero_policies(1)), Err(Error::Config(_))));
    }

    #[test]
    fn wasserstein_of_exact_quantiles_is_small() {
        let g = Grid::new(401, 2.0).unwrap();
        let m = Density::uniform(g);
        let xs: Vec<f64> = (0..1000).map(|i| 2.0 * (i as f64 + 0.5) / 1000.0).collect();
        assert!(wasserstein1(&xs, &m) < 1e-12);
        let shifted: Vec<f64> = xs.iter().map(|x| (x + 0.1).min(2.0)).collect();
        assert!((wasserstein1(&shifted, &m) - 0.1).abs() < 0.01);
    }

    #[test]
    fn histogram_counts_everything() {
        let state = EmpiricalState { time: 0.0, particles: vec![vec![0.0, 0.5, 1.99, 2.0], vec![1.0]] };
        let bins = histogram(&state, 2.0, 4);
        assert_eq!(bins.len(), 8);
        assert_eq!(bins.iter().filter(|b| b.sector == 0).map(|b| b.count).sum::<usize>(), 4);
        assert_eq!(bins[3].count, 2);
        assert!(histogram_csv(&bins).starts_with("sector,bin_left,bin_right,count\n1,0,0.5,1\n"));
    }
}
