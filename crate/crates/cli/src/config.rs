use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use spillover_core::model::{Grid, ModelParams, PriceMode};
use spillover_core::network::{canonical_network, single_sector, SpilloverNetwork};

use crate::error::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })
}

/// Reads the TOML parameter document; `fixed_b` replaces its price mode.
pub fn load_params(path: &Path, fixed_b: Option<f64>) -> CliResult<ModelParams> {
    let text = read_text(path)?;
    let params: ModelParams =
        toml::from_str(&text).map_err(|e| CliError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    match fixed_b {
        Some(b) => Ok(params.with_price_mode(PriceMode::Fixed(b))?),
        None => Ok(params),
    }
}

/// A network given on the command line: a JSON document path, or one of the
/// built-in generators `canonical:<id>` and `single:<p>`.
pub fn load_network(spec: &str) -> CliResult<(SpilloverNetwork, Value)> {
    let usage = |msg: String| CliError::Usage(format!("--network {spec}: {msg}"));
    if let Some(id) = spec.strip_prefix("canonical:") {
        let id: usize = id.parse().map_err(|_| usage("expected an integer id".into()))?;
        return Ok((canonical_network(id)?, json!({ "generator": "canonical", "id": id })));
    }
    if let Some(p) = spec.strip_prefix("single:") {
        let p: f64 = p.parse().map_err(|_| usage("expected a probability".into()))?;
        return Ok((single_sector(p)?, json!({ "generator": "single", "p": p })));
    }
    let path = PathBuf::from(spec);
    let text = read_text(&path)?;
    let net = SpilloverNetwork::from_json(&text)
        .map_err(|e| CliError::Parse { path: path.clone(), message: e.to_string() })?;
    Ok((net, json!({ "file": spec })))
}

pub fn grid(n: usize, params: &ModelParams) -> CliResult<Grid> {
    Ok(Grid::for_params(n, params)?)
}
