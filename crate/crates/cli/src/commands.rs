use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Value};
use spillover_core::equilibrium::{solve_mfg, MfgSolution};
use spillover_core::experiments::{
    density_csv, fit_direct_only, fit_full_indirect, fit_indirect_series, fit_k_mean_curve, k_mean_curve,
    model_comparison, regression_csv, run_ensemble, run_sweep, EnsembleRecord, EnsembleRun, EnsembleSpec, ProbLaw,
    RegressionData, SweepSpec,
};
use spillover_core::microsim::{empirical_vs_mfg, equilibrium_policy, histogram, histogram_csv, simulate, SimConfig};
use spillover_core::model::{ModelParams, ParamName, SolverOptions};
use spillover_core::network::{canonical_network, random_network, PathClass, SectorWeights};

use crate::args::{EnsembleArgs, ModelArgs, NetworksArgs, RegressArgs, SimulateArgs, SolveArgs, SweepArgs, WeightsArg};
use crate::config::{grid, load_network, load_params, read_text};
use crate::error::{CliError, CliResult};
use crate::output::RunDir;

fn model_config(m: &ModelArgs, params: &ModelParams, opts: &SolverOptions) -> Value {
    json!({
        "params_file": m.params,
        "params": params,
        "grid": m.grid,
        "fixed_b": m.fixed_b,
        "solver": opts,
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Some(b), Value::Object(e)) = (base.as_object_mut(), extra) {
        b.extend(e);
    }
    base
}

fn sector_weights(w: WeightsArg) -> SectorWeights {
    match w {
        WeightsArg::Equal => SectorWeights::Equal,
        WeightsArg::Random => SectorWeights::RandomSimplex,
    }
}

fn write_solution(dir: &mut RunDir, sol: &MfgSolution, prefix: &str) -> CliResult<()> {
    for s in 0..sol.n_sectors() {
        dir.write(&format!("{prefix}sector_{}.csv", s + 1), &sol.sector_csv(s))?;
    }
    dir.write(&format!("{prefix}spillover.csv"), &sol.spillover.to_csv())?;
    dir.write(&format!("{prefix}summary.json"), &sol.summary_json())
}

pub fn solve(a: SolveArgs) -> CliResult<()> {
    let params = load_params(&a.model.params, a.model.fixed_b)?;
    let (net, source) = load_network(&a.network)?;
    let grid = grid(a.model.grid, &params)?;
    let opts = a.model.solver.options();
    opts.validate()?;
    let mut dir = RunDir::create(&a.common.out)?;
    let sol = solve_mfg(&params, &net, &grid, &opts, None, None)?;
    write_solution(&mut dir, &sol, "")?;
    let config = merge(model_config(&a.model, &params, &opts), json!({ "network_source": source, "network": net }));
    dir.finish("solve", config, a.common.seed)
}

pub fn sweep(a: SweepArgs) -> CliResult<()> {
    let param: ParamName = a.vary.parse().map_err(|e| CliError::Usage(format!("--vary: {e}")))?;
    let params = load_params(&a.model.params, a.model.fixed_b)?;
    let (net, source) = load_network(&a.network)?;
    let grid = grid(a.model.grid, &params)?;
    let opts = a.model.solver.options();
    opts.validate()?;
    let mut dir = RunDir::create(&a.common.out)?;
    let spec = SweepSpec { param, values: a.values.clone(), params, network: net.clone(), grid, opts };
    let result = run_sweep(&spec)?;
    dir.write("sweep.csv", &result.to_csv())?;
    for (i, point) in result.points.iter().enumerate() {
        if let Ok(solve) = &point.outcome {
            for (s, d) in solve.densities.iter().enumerate() {
                dir.write(&format!("density_{}_{}_sector_{}.csv", param.as_str(), i + 1, s + 1), &density_csv(d))?;
            }
        }
    }
    let failures: Vec<Value> = result
        .points
        .iter()
        .filter_map(|p| p.outcome.as_ref().err().map(|e| json!({ "value": p.value, "error": e })))
        .collect();
    let config = merge(
        model_config(&a.model, &params, &opts),
        json!({ "vary": param.as_str(), "values": a.values, "network_source": source, "network": net, "failures": failures }),
    );
    dir.finish("sweep", config, a.common.seed)?;
    match result.failures() {
        0 => Ok(()),
        failed => Err(CliError::PartialFailure { failed, total: result.points.len() }),
    }
}

pub fn networks(a: NetworksArgs) -> CliResult<()> {
    if let Some(l) = a.random_sectors {
        let net = random_network(l, a.prob, a.weight_max, sector_weights(a.sector_weights), a.common.seed)?;
        let mut dir = RunDir::create(&a.common.out)?;
        dir.write("network.json", &net.to_json())?;
        let config = json!({
            "random_sectors": l,
            "prob": a.prob,
            "weight_max": a.weight_max,
            "sector_weights": format!("{:?}", a.sector_weights).to_lowercase(),
        });
        return dir.finish("networks", config, a.common.seed);
    }
    let path = a.params.as_ref().ok_or_else(|| CliError::Usage("--params is required unless --random-sectors is given".into()))?;
    let params = load_params(path, a.fixed_b)?;
    let grid = grid(a.grid, &params)?;
    let opts = a.solver.options();
    opts.validate()?;
    if a.ids.is_empty() {
        return Err(CliError::Usage("--ids must name at least one network".into()));
    }
    let nets = a.ids.iter().map(|&id| canonical_network(id)).collect::<Result<Vec<_>, _>>()?;
    if a.sector == 0 || nets.iter().any(|n| a.sector > n.n_sectors()) {
        return Err(CliError::Usage(format!("--sector {} is not present in every selected network", a.sector)));
    }
    let sector = a.sector - 1;
    let mut dir = RunDir::create(&a.common.out)?;
    let mut means = Vec::new();
    let mut solutions: Vec<MfgSolution> = Vec::new();
    for (&id, net) in a.ids.iter().zip(&nets) {
        let sol = solve_mfg(&params, net, &grid, &opts, None, None)?;
        dir.write(&format!("network_{id}.json"), &net.to_json())?;
        write_solution(&mut dir, &sol, &format!("network_{id}_"))?;
        means.push(json!({ "network": id, "mean_productivity": sol.mean_productivity, "k_star": sol.k_star, "price": sol.price }));
        solutions.push(sol);
    }
    for w in 0..solutions.len().saturating_sub(1) {
        let (a_id, b_id) = (a.ids[w + 1], a.ids[w]);
        let (hi, lo) = (&solutions[w + 1].densities[sector], &solutions[w].densities[sector]);
        let mut csv = String::from("z,m_diff\n");
        for ((z, x), y) in grid.nodes().iter().zip(&hi.values).zip(&lo.values) {
            csv.push_str(&format!("{z},{}\n", x - y));
        }
        dir.write(&format!("density_diff_{a_id}_minus_{b_id}_sector_{}.csv", a.sector), &csv)?;
    }
    let summary = serde_json::to_string_pretty(&json!({ "sector": a.sector, "networks": means })).expect("summary serialises");
    dir.write("networks.json", &summary)?;
    let config = json!({
        "params_file": path,
        "params": params,
        "grid": a.grid,
        "fixed_b": a.fixed_b,
        "solver": opts,
        "ids": a.ids,
        "sector": a.sector,
    });
    dir.finish("networks", config, a.common.seed)
}

pub fn ensemble(a: EnsembleArgs) -> CliResult<()> {
    let params = load_params(&a.model.params, a.model.fixed_b)?;
    let grid = grid(a.model.grid, &params)?;
    let opts = a.model.solver.options();
    opts.validate()?;
    let law = match a.prob {
        Some(p) => ProbLaw::Fixed(p),
        None => ProbLaw::Uniform { low: a.prob_low, high: a.prob_high },
    };
    let mut dir = RunDir::create(&a.common.out)?;
    let spec = EnsembleSpec {
        n_runs: a.runs,
        n_sectors: a.sectors,
        connection_prob: law,
        weight_max: a.weight_max,
        sector_weights: sector_weights(a.sector_weights),
        seed: a.common.seed,
        params,
        grid,
        opts,
    };
    let result = run_ensemble(&spec)?;
    dir.write("ensemble.csv", &result.to_csv())?;
    dir.write("runs.json", &result.runs_json())?;
    let failures: Vec<Value> = result.failures.iter().map(|(run, e)| json!({ "run": run, "error": e })).collect();
    let config = merge(
        model_config(&a.model, &params, &opts),
        json!({
            "runs": a.runs,
            "sectors": a.sectors,
            "prob": a.prob,
            "prob_low": a.prob_low,
            "prob_high": a.prob_high,
            "weight_max": a.weight_max,
            "sector_weights": format!("{:?}", a.sector_weights).to_lowercase(),
            "failures": failures,
        }),
    );
    dir.finish("ensemble", config, a.common.seed)?;
    match result.failures.len() {
        0 => Ok(()),
        failed => Err(CliError::PartialFailure { failed, total: a.runs }),
    }
}

#[derive(Debug, Deserialize)]
struct EnsembleRow {
    run: usize,
    sector: usize,
    path_class: PathClass,
    #[serde(rename = "row_sum_S")]
    row_sum_s: f64,
    k_star: f64,
    mean_prod: f64,
    #[serde(rename = "B")]
    price: f64,
}

fn read_ensemble(dir: &Path) -> CliResult<(Vec<EnsembleRecord>, Vec<EnsembleRun>)> {
    let table = dir.join("ensemble.csv");
    let text = read_text(&table)?;
    let parse = |path: &Path, message: String| CliError::Parse { path: path.to_path_buf(), message };
    let mut records = Vec::new();
    for row in csv::Reader::from_reader(text.as_bytes()).deserialize::<EnsembleRow>() {
        let r = row.map_err(|e| parse(&table, e.to_string()))?;
        if r.sector == 0 {
            return Err(parse(&table, format!("run {}: sectors are numbered from 1", r.run)));
        }
        records.push(EnsembleRecord {
            run: r.run,
            sector: r.sector - 1,
            path_class: r.path_class,
            row_sum_s: r.row_sum_s,
            k_star: r.k_star,
            mean_prod: r.mean_prod,
            price: r.price,
        });
    }
    let runs_path = dir.join("runs.json");
    let runs: Vec<EnsembleRun> =
        serde_json::from_str(&read_text(&runs_path)?).map_err(|e| parse(&runs_path, e.to_string()))?;
    Ok((records, runs))
}

pub fn regress(a: RegressArgs) -> CliResult<()> {
    let params = load_params(&a.params, a.fixed_b)?;
    let (records, runs) = read_ensemble(&a.ensemble)?;
    let data = RegressionData::new(records, &runs, params.z_max())?;
    let mut dir = RunDir::create(&a.common.out)?;
    let series = fit_indirect_series(&data, None)?;
    let full = fit_full_indirect(&data, None)?;
    let direct = fit_direct_only(&data, None)?;
    let comparison = model_comparison(&data, &full, &direct)?;
    let mut fits = vec![series, full, direct];
    let opts = a.solver.options();
    opts.validate()?;
    if !a.curve.is_empty() {
        let grid = grid(a.grid, &params)?;
        let samples = k_mean_curve(&a.curve, &params, &grid, &opts)?;
        let mut csv = String::from("k,mean_prod\n");
        for (k, m) in &samples {
            csv.push_str(&format!("{k},{m}\n"));
        }
        dir.write("curve.csv", &csv)?;
        fits.insert(0, fit_k_mean_curve(&samples, params.z_max(), None)?);
    }
    dir.write("regression.csv", &regression_csv(&fits))?;
    let report = json!({
        "fits": fits,
        "comparison": comparison,
        "max_spectral_radius": data.max_spectral_radius(),
    });
    dir.write("regression.json", &serde_json::to_string_pretty(&report).expect("report serialises"))?;
    let config = json!({
        "ensemble": a.ensemble,
        "params_file": a.params,
        "params": params,
        "grid": a.grid,
        "fixed_b": a.fixed_b,
        "solver": opts,
        "curve": a.curve,
    });
    dir.finish("regress", config, a.common.seed)
}

pub fn simulate_cmd(a: SimulateArgs) -> CliResult<()> {
    let params = load_params(&a.model.params, a.model.fixed_b)?;
    let (net, source) = load_network(&a.network)?;
    let grid = grid(a.model.grid, &params)?;
    let opts = a.model.solver.options();
    opts.validate()?;
    let cfg = SimConfig::new(vec![a.firms; net.n_sectors()], a.horizon, a.dt, a.common.seed);
    cfg.validate(net.n_sectors())?;
    if a.bins == 0 {
        return Err(CliError::Usage("--bins must be at least 1".into()));
    }
    let mut dir = RunDir::create(&a.common.out)?;
    let sol = solve_mfg(&params, &net, &grid, &opts, None, None)?;
    let policies = (0..net.n_sectors())
        .map(|s| equilibrium_policy(&sol, s, &params))
        .collect::<Result<Vec<_>, _>>()?;
    let traj = simulate(&cfg, &net, &params, &policies)?;
    write_solution(&mut dir, &sol, "mfg_")?;
    dir.write("trajectory.csv", &traj.to_csv())?;
    dir.write("histogram.csv", &histogram_csv(&histogram(&traj.final_state, params.z_max(), a.bins)))?;
    let report = empirical_vs_mfg(&traj, &sol);
    dir.write("limit.json", &serde_json::to_string_pretty(&report).expect("report serialises"))?;
    let config = merge(
        model_config(&a.model, &params, &opts),
        json!({
            "network_source": source,
            "network": net,
            "firms_per_sector": a.firms,
            "horizon": a.horizon,
            "dt": a.dt,
            "bins": a.bins,
            "burn_in": cfg.burn_in,
            "record_every": cfg.record_every,
            "sample_every": cfg.sample_every,
        }),
    );
    dir.finish("simulate", config, a.common.seed)
}
