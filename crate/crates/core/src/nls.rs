//! Levenberg-Marquardt least squares with a central-difference Jacobian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlsOptions {
    pub max_iters: usize,
    /// Stop once a step changes every parameter by less than this (relative).
    pub step_tol: f64,
    /// Stop once the residual sum of squares falls below this.
    pub rss_floor: f64,
    pub initial_damping: f64,
}

impl Default for NlsOptions {
    fn default() -> Self {
        NlsOptions { max_iters: 500, step_tol: 1e-13, rss_floor: 1e-28, initial_damping: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlsResult {
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub rss: f64,
    pub r_squared: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit; `estimates` is then the best iterate.
    pub converged: bool,
}

fn rss_of(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum()
}

fn evaluate<F>(model: &F, x: &[f64], y: &[f64]) -> Option<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let pred = model(x).ok()?;
    if pred.len() != y.len() || pred.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let rss = rss_of(&pred, y);
    Some((pred, rss))
}

fn jacobian<F>(model: &F, x: &[f64], n_obs: usize) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut j = DMatrix::zeros(n_obs, x.len());
    for c in 0..x.len() {
        let h = 1e-6 * x[c].abs().max(1e-3);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[c] += h;
        xm[c] -= h;
        let fp = model(&xp)?;
        let fm = model(&xm)?;
        for r in 0..n_obs {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    if j.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient);
    }
    Ok(j)
}

fn normal_inverse(jtj: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = jtj.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-14 * smax {
        return Err(Error::RankDeficient);
    }
    svd.pseudo_inverse(0.0).map_err(|_| Error::RankDeficient)
}

/// Minimises `sum (model(x) - y)^2` from `x0`. The model may fail or return
/// non-finite values; such trial points are rejected like uphill steps.
pub fn levenberg_marquardt<F>(model: F, x0: &[f64], y: &[f64], opts: &NlsOptions) -> Result<NlsResult>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if y.is_empty() {
        return Err(Error::invalid("data", "need at least one observation"));
    }
    if x0.is_empty() {
        return Err(Error::invalid("initial_guess", "need at least one parameter"));
    }
    let n = y.len();
    let mut x = x0.to_vec();
    let (_, mut rss) = evaluate(&model, &x, y)
        .ok_or_else(|| Error::invalid("initial_guess", "model is not finite at the initial guess"))?;
    let mut lambda = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        iterations += 1;
        if rss <= opts.rss_floor {
            converged = true;
            break;
        }
        let pred = model(&x)?;
        let r = DVector::from_iterator(n, pred.iter().zip(y).map(|(p, t)| p - t));
        let j = jacobian(&model, &x, n)?;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * r;

        let mut accepted = false;
        let mut small_step = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for d in 0..x.len() {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, si)| xi + si).collect();
            small_step = step.iter().zip(&x).all(|(s, xi)| s.abs() <= opts.step_tol * xi.abs().max(1e-8));
            match evaluate(&model, &trial, y) {
                Some((_, trial_rss)) if trial_rss <= rss => {
                    x = trial;
                    rss = trial_rss;
                    lambda = (lambda / 10.0).max(1e-15);
                    accepted = true;
                    break;
                }
                _ => lambda *= 10.0,
            }
            if small_step {
                break;
            }
        }
        if small_step || !accepted {
            converged = true;
            break;
        }
    }

    let j = jacobian(&model, &x, n)?;
    let jtj = j.transpose() * &j;
    let inv = normal_inverse(&jtj)?;
    let dof = n.saturating_sub(x.len());
    let s2 = if dof > 0 { rss / dof as f64 } else { 0.0 };
    let std_errors = (0..x.len()).map(|d| (s2 * inv[(d, d)]).max(0.0).sqrt()).collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN };
    if !converged {
        log::warn!("Levenberg-Marquardt stopped at the iteration cap (rss {rss:e})");
    }
    Ok(NlsResult { estimates: x, std_errors, rss, r_squared, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exponential_decay() {
        let t: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let model = |p: &[f64]| Ok(t.iter().map(|ti| p[0] * (-p[1] * ti).exp() + p[2]).collect());
        let y = model(&[2.5, 0.7, 0.3]).unwrap();
        let fit = levenberg_marquardt(model, &[1.0, 0.2, 0.0], &y, &NlsOptions::default()).unwrap();
        for (e, t) in fit.estimates.iter().zip([2.5, 0.7, 0.3]) {
            assert!((e - t).abs() < 1e-9, "{:?}", fit.estimates);
        }
        assert!(fit.converged);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_fit_matches_normal_equations() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [1.1, 2.9, 5.2, 7.1, 8.8];
        let model = |p: &[f64]| Ok(x.iter().map(|xi| p[0] + p[1] * xi).collect());
        let fit = levenberg_marquardt(model, &[0.0, 0.0], &y, &NlsOptions::default()).unwrap();
        // closed-form OLS
        let n = 5.0;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let icpt = (sy - slope * sx) / n;
        assert!((fit.estimates[1] - slope).abs() < 1e-9);
        assert!((fit.estimates[0] - icpt).abs() < 1e-9);
        let s2 = fit.rss / 3.0;
        let se_slope = (s2 / (sxx - sx * sx / n)).sqrt();
        assert!((fit.std_errors[1] - se_slope).abs() < 1e-6 * se_slope.max(1.0));
    }

    #[test]
    fn redundant_parameters_are_rank_deficient() {
        let x = [0.0, 1.0, 2.0];
        let model = |p: &[f64]| Ok(x.iter().map(|xi| (p[0] + p[1]) * xi).collect());
        let err = levenberg_marquardt(model, &[1.0, 1.0], &[0.0, 1.0, 2.0], &NlsOptions::default()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient));
    }

    #[test]
    fn iteration_cap_returns_flagged_best_iterate() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let model = |p: &[f64]| Ok(t.iter().map(|ti| p[0] * (-p[1] * ti).exp()).collect());
        let y = model(&[3.0, 0.4]).unwrap();
        let opts = NlsOptions { max_iters: 1, ..NlsOptions::default() };
        let fit = levenberg_marquardt(model, &[1.0, 1.0], &y, &opts).unwrap();
        assert!(!fit.converged);
        let start = model(&[1.0, 1.0]).unwrap();
        assert!(fit.rss < rss_of(&start, &y));
    }

    #[test]
    fn rejects_empty_data_and_bad_start() {
        let model = |p: &[f64]| Ok(vec![p[0]]);
        assert!(levenberg_marquardt(model, &[1.0], &[], &NlsOptions::default()).is_err());
        let model = |_: &[f64]| Ok(vec![f64::NAN]);
        assert!(levenberg_marquardt(model, &[1.0], &[1.0], &NlsOptions::default()).is_err());
    }
}
