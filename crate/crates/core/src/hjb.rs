//! Auxiliary HJB boundary-value problem for a fixed coupling `k`:
//!
//! ```text
//! -(sigma^2/2) V'' + rho V - H^k(z, V') = 0  on (0, z_max),   V'(0) = V'(z_max) = 0
//! ```
//!
//! Discretised with second-order central differences on a uniform grid. The
//! Neumann rows use a mirrored ghost node (`v[-1] = v[1]`), which keeps the
//! Jacobian tridiagonal. The nonlinear system is solved by Newton-Raphson with
//! step halving on the node-averaged residual 1-norm.
//!
//! The profit source `z^alpha B^(1-alpha)` is not smooth at `z = 0`, so it
//! enters each row as its exact average against the node's hat function
//! rather than as a point value. The three-point second difference of any
//! `C^2` function equals the hat average of its second derivative, so this
//! keeps the scheme second order for every `alpha`; point sampling drops it
//! to order `1 + alpha`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{labour_drift, Grid, ModelParams, SolverOptions};
use crate::tridiag::Tridiagonal;

const MAX_HALVINGS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
    /// Discrete `V'`: central differences inside, zero at the Neumann ends.
    pub derivative: Vec<f64>,
    pub k: f64,
    pub price: f64,
    pub residual_norm: f64,
    pub newton_iterations: usize,
}

fn check_len(grid: &Grid, v: &[f64]) -> Result<()> {
    if v.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), found: v.len() });
    }
    Ok(())
}

/// Central-difference derivative with the Neumann condition at both ends.
pub fn discrete_derivative(grid: &Grid, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let h2 = 2.0 * grid.spacing();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (v[i + 1] - v[i - 1]) / h2;
    }
    d
}

/// Node-averaged 1-norm, `sum |r_i| / M`.
pub fn residual_norm(r: &[f64]) -> f64 {
    r.iter().map(|x| x.abs()).sum::<f64>() / r.len() as f64
}

/// Hat-function averages of the profit `z^alpha B^(1-alpha)` at every node.
///
/// With `G'' = z^alpha`, the interior average is the second difference
/// `(G(z+h) - 2G(z) + G(z-h)) / h^2`; the end rows average the profit
/// mirrored across the boundary, matching the ghost-node Neumann rows.
pub fn profit_source(params: &ModelParams, price: f64, grid: &Grid) -> Vec<f64> {
    let a = params.alpha();
    let scale = price.powf(1.0 - a);
    let anti2 = |z: f64| z.powf(a + 2.0) / ((a + 1.0) * (a + 2.0));
    let anti1 = |z: f64| z.powf(a + 1.0) / (a + 1.0);
    let h = grid.spacing();
    let z = grid.nodes();
    let n = z.len();
    let mut out = vec![0.0; n];
    out[0] = 2.0 * anti2(h) / (h * h);
    for i in 1..n - 1 {
        out[i] = (anti2(z[i + 1]) - 2.0 * anti2(z[i]) + anti2(z[i - 1])) / (h * h);
    }
    let c = z[n - 1];
    out[n - 1] = 2.0 * (anti2(z[n - 2]) - anti2(c) + h * anti1(c)) / (h * h);
    out.iter().map(|x| x * scale).collect()
}

/// Nodewise HJB residual `F(v)`.
pub fn hjb_residual(v: &[f64], k: f64, params: &ModelParams, price: f64, grid: &Grid) -> Result<Vec<f64>> {
    check_len(grid, v)?;
    let source = profit_source(params, price, grid);
    residual_with_source(v, k, params, grid, &source)
}

fn residual_with_source(
    v: &[f64],
    k: f64,
    params: &ModelParams,
    grid: &Grid,
    source: &[f64],
) -> Result<Vec<f64>> {
    check_len(grid, v)?;
    let n = v.len();
    let h = grid.spacing();
    let diff = 0.5 * params.sigma().powi(2) / (h * h);
    let rho = params.discount();
    let g = params.gamma();
    let control_scale = (1.0 - g) * (g / params.wage()).powf(g / (1.0 - g));
    let power = 1.0 / (1.0 - g);

    let mut f = vec![0.0; n];
    f[0] = 2.0 * diff * (v[0] - v[1]) + rho * v[0] - source[0];
    for i in 1..n - 1 {
        let dv = (v[i + 1] - v[i - 1]) / (2.0 * h);
        let control = if dv > 0.0 { control_scale * dv.powf(power) } else { 0.0 };
        f[i] = diff * (2.0 * v[i] - v[i + 1] - v[i - 1]) + rho * v[i]
            - k * dv
            - control
            - source[i];
    }
    f[n - 1] = 2.0 * diff * (v[n - 1] - v[n - 2]) + rho * v[n - 1] - source[n - 1];
    Ok(f)
}

/// Tridiagonal Frechet derivative `dF(v)` of [`hjb_residual`]. At the kink
/// `v' = 0` the one-sided slope from `v' > 0` is used (zero control term).
pub fn hjb_jacobian(v: &[f64], k: f64, params: &ModelParams, grid: &Grid) -> Result<Tridiagonal> {
    check_len(grid, v)?;
    let n = v.len();
    let h = grid.spacing();
    let diff = 0.5 * params.sigma().powi(2) / (h * h);
    let rho = params.discount();
    let mut t = Tridiagonal::zeros(n);

    t.diag[0] = 2.0 * diff + rho;
    t.upper[0] = -2.0 * diff;
    for i in 1..n - 1 {
        let dv = (v[i + 1] - v[i - 1]) / (2.0 * h);
        let b = k + labour_drift(dv, params);
        t.lower[i - 1] = -diff + b / (2.0 * h);
        t.diag[i] = 2.0 * diff + rho;
        t.upper[i] = -diff - b / (2.0 * h);
    }
    t.lower[n - 2] = -2.0 * diff;
    t.diag[n - 1] = 2.0 * diff + rho;
    Ok(t)
}

/// `dF(v)(u) = -(sigma^2/2) u'' + rho u - k u' - (gamma v'/w)^(gamma/(1-gamma)) u'`.
pub fn frechet_apply(
    v: &[f64],
    u: &[f64],
    k: f64,
    params: &ModelParams,
    grid: &Grid,
) -> Result<Vec<f64>> {
    check_len(grid, u)?;
    hjb_jacobian(v, k, params, grid)?.apply(u)
}

/// Rejects grids on which the central-difference operator loses its
/// M-matrix structure: requires `dz * (k + sup labour drift) <= sigma^2`.
pub fn check_peclet(k: f64, params: &ModelParams, price: f64, grid: &Grid) -> Result<()> {
    let max_drift = k + params.labour_drift_bound(price);
    let limit = params.sigma().powi(2) / max_drift;
    if grid.spacing() > limit {
        return Err(Error::Config(format!(
            "grid spacing {} exceeds cell-Peclet limit {} (k = {k}, sigma = {}); use more nodes",
            grid.spacing(),
            limit,
            params.sigma()
        )));
    }
    Ok(())
}

/// `V_0(z) = z^alpha / (rho B^(alpha-1))`.
pub fn initial_guess(params: &ModelParams, price: f64, grid: &Grid) -> Vec<f64> {
    grid.nodes().iter().map(|&z| params.profit(z, price) / params.discount()).collect()
}

pub fn solve_auxiliary_hjb(
    k: f64,
    params: &ModelParams,
    price: f64,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<ValueFunction> {
    solve_auxiliary_hjb_from(k, params, price, grid, opts, None)
}

/// Newton solve, optionally warm-started from a previous solution on the same grid.
pub fn solve_auxiliary_hjb_from(
    k: f64,
    params: &ModelParams,
    price: f64,
    grid: &Grid,
    opts: &SolverOptions,
    warm_start: Option<&[f64]>,
) -> Result<ValueFunction> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::invalid("k", format!("coupling must be finite and >= 0, got {k}")));
    }
    if !(price > 0.0 && price.is_finite()) {
        return Err(Error::invalid("price", format!("must be finite and > 0, got {price}")));
    }
    opts.validate()?;
    check_peclet(k, params, price, grid)?;

    let mut v = match warm_start {
        Some(w) => {
            check_len(grid, w)?;
            w.to_vec()
        }
        None => initial_guess(params, price, grid),
    };
    let source = profit_source(params, price, grid);
    let mut f = residual_with_source(&v, k, params, grid, &source)?;
    let mut norm = residual_norm(&f);
    let mut trace = vec![norm];

    for iter in 0..=opts.max_newton_iters {
        if norm <= opts.newton_tol {
            let derivative = discrete_derivative(grid, &v);
            return Ok(ValueFunction {
                grid: grid.clone(),
                values: v,
                derivative,
                k,
                price,
                residual_norm: norm,
                newton_iterations: iter,
            });
        }
        if iter == opts.max_newton_iters {
            break;
        }
        let jac = hjb_jacobian(&v, k, params, grid)?;
        let neg_f: Vec<f64> = f.iter().map(|x| -x).collect();
        let step = jac.solve(&neg_f)?;

        let mut t = opts.damping;
        let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = v.iter().zip(&step).map(|(a, d)| a + t * d).collect();
            let ft = residual_with_source(&trial, k, params, grid, &source)?;
            let nt = residual_norm(&ft);
            let improved = nt < norm;
            if best.as_ref().is_none_or(|b| nt < b.2) {
                best = Some((trial, ft, nt));
            }
            if improved {
                break;
            }
            t *= 0.5;
        }
        let (nv, nf, nn) = best.expect("at least one trial step");
        v = nv;
        f = nf;
        norm = nn;
        trace.push(norm);
    }

    Err(Error::NonConvergence {
        stage: "newton (auxiliary HJB)",
        iterations: opts.max_newton_iters,
        residual: norm,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PriceMode;

    fn params() -> ModelParams {
        ModelParams::baseline().with_price_mode(PriceMode::Fixed(1.0)).unwrap()
    }

    #[test]
    fn residual_of_zero_is_minus_profit() {
        let p = params();
        let g = Grid::new(21, 2.0).unwrap();
        let f = hjb_residual(&[0.0; 21], 0.0, &p, 1.0, &g).unwrap();
        let src = profit_source(&p, 1.0, &g);
        let h = g.spacing();
        for i in 1..20 {
            let z = g.nodes()[i];
            assert_eq!(f[i], -src[i]);
            // hat average of z^a differs from the point value by (h^2/12) (z^a)''
            let curvature = 0.5 * (0.5 - 1.0) * z.powf(0.5 - 2.0);
            assert!((f[i] + z.sqrt()).abs() <= h * h * curvature.abs() / 12.0 * 1.5 + 1e-12);
        }
    }

    #[test]
    fn residual_of_constant() {
        let p = params();
        let g = Grid::new(21, 2.0).unwrap();
        let c = 0.7;
        let f = hjb_residual(&[c; 21], 2.0, &p, 1.0, &g).unwrap();
        let src = profit_source(&p, 1.0, &g);
        for i in 1..20 {
            assert!((f[i] - (c - src[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn profit_source_is_exact_on_polynomial_extension() {
        // alpha -> profit is z^a; check against dense quadrature of the hat average
        let p = params().with_param(crate::model::ParamName::Alpha, 0.3).unwrap();
        let g = Grid::new(11, 2.0).unwrap();
        let src = profit_source(&p, 1.7, &g);
        let h = g.spacing();
        let scale = 1.7f64.powf(0.7);
        let quad = |c: f64, lo: f64, hi: f64| {
            let n = 200_000;
            let dz = (hi - lo) / n as f64;
            (0..n)
                .map(|j| {
                    let z = lo + (j as f64 + 0.5) * dz;
                    let w = 1.0 - (z - c).abs() / h;
                    z.abs().powf(0.3) * w * dz
                })
                .sum::<f64>()
                / h
        };
        assert!((src[0] - scale * quad(0.0, -h, h)).abs() < 1e-6);
        assert!((src[4] - scale * quad(g.nodes()[4], g.nodes()[3], g.nodes()[5])).abs() < 1e-8);
        let last = 2.0 * scale * quad(2.0, 2.0 - h, 2.0);
        assert!((src[10] - last).abs() < 1e-8);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = params();
        let g = Grid::new(21, 2.0).unwrap();
        assert!(matches!(
            hjb_residual(&[0.0; 5], 0.0, &p, 1.0, &g),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(frechet_apply(&[0.0; 21], &[0.0; 4], 0.0, &p, &g).is_err());
    }

    #[test]
    fn frechet_of_zero_direction() {
        let p = params();
        let g = Grid::new(31, 2.0).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|z| z.sin()).collect();
        let out = frechet_apply(&v, &[0.0; 31], 0.4, &p, &g).unwrap();
        assert!(out.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn frechet_with_flat_v_is_linear_operator() {
        let p = params();
        let g = Grid::new(31, 2.0).unwrap();
        let h = g.spacing();
        let k = 0.3;
        let u: Vec<f64> = g.nodes().iter().map(|z| (1.3 * z).cos() + z * z).collect();
        let out = frechet_apply(&vec![1.0; 31], &u, k, &p, &g).unwrap();
        for i in 1..30 {
            let upp = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h);
            let up = (u[i + 1] - u[i - 1]) / (2.0 * h);
            let expect = -0.5 * upp + u[i] - k * up;
            assert!((out[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn frechet_matches_finite_differences() {
        let p = params();
        let g = Grid::new(41, 2.0).unwrap();
        let k = 0.25;
        // smooth v with v' > 0 everywhere on the interior
        let v: Vec<f64> = g.nodes().iter().map(|z| 0.5 * z + 0.1 * z * z).collect();
        let u: Vec<f64> = g.nodes().iter().map(|z| (2.0 * z).sin()).collect();
        let f0 = hjb_residual(&v, k, &p, 1.0, &g).unwrap();
        let df = frechet_apply(&v, &u, k, &p, &g).unwrap();
        let mut errs = Vec::new();
        for eps in [1e-3, 1e-4, 1e-5] {
            let vp: Vec<f64> = v.iter().zip(&u).map(|(a, b)| a + eps * b).collect();
            let f1 = hjb_residual(&vp, k, &p, 1.0, &g).unwrap();
            let err = f1
                .iter()
                .zip(&f0)
                .zip(&df)
                .map(|((a, b), d)| (a - b - eps * d).abs())
                .fold(0.0, f64::max);
            errs.push(err / eps);
        }
        // o(eps): normalized error drops with eps (quadratic remainder => ~10x per step)
        assert!(errs[1] < errs[0] * 0.2, "{errs:?}");
        assert!(errs[2] < errs[1] * 0.2, "{errs:?}");
        assert!(errs[2] < 1e-4, "{errs:?}");
    }

    #[test]
    fn baseline_solution_within_envelope() {
        let p = params();
        let g = Grid::new(401, 2.0).unwrap();
        let opts = SolverOptions::default();
        let vf = solve_auxiliary_hjb(0.0, &p, 1.0, &g, &opts).unwrap();
        assert!(vf.residual_norm <= opts.newton_tol);
        let upper = 2f64.sqrt();
        assert!((p.value_bound(1.0) - upper).abs() < 1e-15);
        let eps = opts.bound_slack();
        for &x in &vf.values {
            assert!(x >= -eps && x <= upper + eps);
        }
        let dmax = p.derivative_bound(1.0);
        for &d in &vf.derivative {
            assert!(d >= -eps && d <= dmax + eps);
        }
        assert_eq!(vf.derivative[0], 0.0);
        assert_eq!(vf.derivative[400], 0.0);
        // interior V' > 0
        assert!(vf.derivative[1..400].iter().all(|&d| d > 0.0));
        // curvature signs at the boundaries
        let h = g.spacing();
        let v = &vf.values;
        assert!((v[1] - v[0]) * 2.0 / (h * h) > 0.0);
        assert!((v[399] - v[400]) * 2.0 / (h * h) < 0.0);
    }

    #[test]
    fn value_increases_with_coupling() {
        let p = params();
        let g = Grid::new(401, 2.0).unwrap();
        let opts = SolverOptions::default();
        let a = solve_auxiliary_hjb(0.2, &p, 1.0, &g, &opts).unwrap();
        let b = solve_auxiliary_hjb(0.4, &p, 1.0, &g, &opts).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| y >= x));
    }

    #[test]
    fn warm_start_converges_to_same_solution() {
        let p = params();
        let g = Grid::new(201, 2.0).unwrap();
        let opts = SolverOptions::default();
        let a = solve_auxiliary_hjb(0.3, &p, 1.0, &g, &opts).unwrap();
        let near = solve_auxiliary_hjb(0.31, &p, 1.0, &g, &opts).unwrap();
        let warm = solve_auxiliary_hjb_from(0.31, &p, 1.0, &g, &opts, Some(&a.values)).unwrap();
        assert!(warm.newton_iterations <= near.newton_iterations);
        let gap = warm.values.iter().zip(&near.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-9);
    }

    #[test]
    fn coarse_grid_violating_peclet_is_config_error() {
        let p = params().with_param(crate::model::ParamName::Sigma, 0.2).unwrap();
        let g = Grid::new(5, 2.0).unwrap();
        let r = solve_auxiliary_hjb(5.0, &p, 1.0, &g, &SolverOptions::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let p = params();
        let g = Grid::new(101, 2.0).unwrap();
        let opts = SolverOptions { max_newton_iters: 1, ..Default::default() };
        match solve_auxiliary_hjb(0.1, &p, 1.0, &g, &opts) {
            Err(Error::NonConvergence { residual, trace, .. }) => {
                assert!(residual > opts.newton_tol);
                assert_eq!(trace.len(), 2);
            }
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }

    #[test]
    fn negative_coupling_rejected() {
        let g = Grid::new(11, 2.0).unwrap();
        assert!(solve_auxiliary_hjb(-0.1, &params(), 1.0, &g, &SolverOptions::default()).is_err());
    }
}
