//! Shared domain types and the pointwise economics of a single firm:
//! the Hamiltonian, the optimal labour choice and the resulting drift.
//!
//! The price constant `B` enters every formula only through the profit
//! scale `B^{1-alpha}`; callers resolve it once per solve and pass it in
//! as a plain scalar.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the CES price constant `B` is determined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceMode {
    /// `B` held at the given positive value.
    Fixed(f64),
    /// `B` solved jointly with the coupling vector from the z^alpha moments.
    Endogenous,
}

/// Economic scalars of the model. Construct through [`ModelParams::new`] or
/// deserialization; both reject values outside the admissible domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsDoc", into = "ParamsDoc")]
pub struct ModelParams {
    sigma: f64,
    wage: f64,
    discount: f64,
    gamma: f64,
    alpha: f64,
    z_max: f64,
    income: f64,
    price_mode: PriceMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    sigma: f64,
    wage: f64,
    discount: f64,
    gamma: f64,
    alpha: f64,
    z_max: f64,
    price_mode: PriceMode,
    #[serde(default = "unit_income")]
    income: f64,
}

fn unit_income() -> f64 {
    1.0
}

impl TryFrom<ParamsDoc> for ModelParams {
    type Error = Error;

    fn try_from(d: ParamsDoc) -> Result<Self> {
        ModelParams::new(d.sigma, d.wage, d.discount, d.gamma, d.alpha, d.z_max, d.price_mode)?
            .with_income(d.income)
    }
}

impl From<ModelParams> for ParamsDoc {
    fn from(p: ModelParams) -> Self {
        ParamsDoc {
            sigma: p.sigma,
            wage: p.wage,
            discount: p.discount,
            gamma: p.gamma,
            alpha: p.alpha,
            z_max: p.z_max,
            price_mode: p.price_mode,
            income: p.income,
        }
    }
}

/// Names of the parameters that can be swept one at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamName {
    Sigma,
    Wage,
    Discount,
    Gamma,
    Alpha,
}

impl ParamName {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Sigma => "sigma",
            ParamName::Wage => "wage",
            ParamName::Discount => "discount",
            ParamName::Gamma => "gamma",
            ParamName::Alpha => "alpha",
        }
    }
}

impl std::str::FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma" => Ok(ParamName::Sigma),
            "wage" | "w" => Ok(ParamName::Wage),
            "discount" | "rho" => Ok(ParamName::Discount),
            "gamma" => Ok(ParamName::Gamma),
            "alpha" => Ok(ParamName::Alpha),
            other => Err(Error::Parse(format!("unknown parameter name `{other}`"))),
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

fn open_unit(name: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(Error::invalid(name, format!("must lie in (0, 1), got {v}")))
    }
}

impl ModelParams {
    pub fn new(
        sigma: f64,
        wage: f64,
        discount: f64,
        gamma: f64,
        alpha: f64,
        z_max: f64,
        price_mode: PriceMode,
    ) -> Result<Self> {
        if let PriceMode::Fixed(b) = price_mode {
            positive("price_mode", b)?;
        }
        Ok(ModelParams {
            sigma: positive("sigma", sigma)?,
            wage: positive("wage", wage)?,
            discount: positive("discount", discount)?,
            gamma: open_unit("gamma", gamma)?,
            alpha: open_unit("alpha", alpha)?,
            z_max: positive("z_max", z_max)?,
            income: 1.0,
            price_mode,
        })
    }

    /// sigma = w = rho = 1, gamma = alpha = 0.5, z_max = 2, endogenous price.
    pub fn baseline() -> Self {
        ModelParams::new(1.0, 1.0, 1.0, 0.5, 0.5, 2.0, PriceMode::Endogenous)
            .expect("baseline parameters are valid")
    }

    pub fn with_income(mut self, income: f64) -> Result<Self> {
        self.income = positive("income", income)?;
        Ok(self)
    }

    pub fn with_price_mode(mut self, mode: PriceMode) -> Result<Self> {
        if let PriceMode::Fixed(b) = mode {
            positive("price_mode", b)?;
        }
        self.price_mode = mode;
        Ok(self)
    }

    /// Copy with one named parameter replaced, re-validated.
    pub fn with_param(self, name: ParamName, value: f64) -> Result<Self> {
        let p = self;
        let mut out = match name {
            ParamName::Sigma => {
                ModelParams::new(value, p.wage, p.discount, p.gamma, p.alpha, p.z_max, p.price_mode)
            }
            ParamName::Wage => {
                ModelParams::new(p.sigma, value, p.discount, p.gamma, p.alpha, p.z_max, p.price_mode)
            }
            ParamName::Discount => {
                ModelParams::new(p.sigma, p.wage, value, p.gamma, p.alpha, p.z_max, p.price_mode)
            }
            ParamName::Gamma => {
                ModelParams::new(p.sigma, p.wage, p.discount, value, p.alpha, p.z_max, p.price_mode)
            }
            ParamName::Alpha => {
                ModelParams::new(p.sigma, p.wage, p.discount, p.gamma, value, p.z_max, p.price_mode)
            }
        }?;
        out.income = p.income;
        Ok(out)
    }

    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::Sigma => self.sigma,
            ParamName::Wage => self.wage,
            ParamName::Discount => self.discount,
            ParamName::Gamma => self.gamma,
            ParamName::Alpha => self.alpha,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn wage(&self) -> f64 {
        self.wage
    }
    pub fn discount(&self) -> f64 {
        self.discount
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn z_max(&self) -> f64 {
        self.z_max
    }
    pub fn income(&self) -> f64 {
        self.income
    }
    pub fn price_mode(&self) -> PriceMode {
        self.price_mode
    }

    /// Running profit `z^alpha / B^(alpha-1)`.
    pub fn profit(&self, z: f64, price: f64) -> f64 {
        z.max(0.0).powf(self.alpha) * price.powf(1.0 - self.alpha)
    }

    /// Upper envelope of the value function: `z_max^alpha / (rho B^(alpha-1))`.
    pub fn value_bound(&self, price: f64) -> f64 {
        self.profit(self.z_max, price) / self.discount
    }

    /// A-priori bound on `sup |V'|`:
    /// `[z_max^alpha / ((1-gamma) B^(alpha-1))]^(1-gamma) (w/gamma)^gamma`.
    pub fn derivative_bound(&self, price: f64) -> f64 {
        let g = self.gamma;
        (self.profit(self.z_max, price) / (1.0 - g)).powf(1.0 - g) * (self.wage / g).powf(g)
    }

    /// Bound on the labour part of the drift over all admissible `V'`.
    pub fn labour_drift_bound(&self, price: f64) -> f64 {
        labour_drift(self.derivative_bound(price), self)
    }
}

/// Uniform grid on `[0, z_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    nodes: Vec<f64>,
    spacing: f64,
}

impl Grid {
    pub fn new(n_points: usize, z_max: f64) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::invalid("n_points", format!("need at least 3 nodes, got {n_points}")));
        }
        positive("z_max", z_max)?;
        let spacing = z_max / (n_points - 1) as f64;
        let mut nodes: Vec<f64> = (0..n_points).map(|i| i as f64 * spacing).collect();
        nodes[n_points - 1] = z_max;
        Ok(Grid { nodes, spacing })
    }

    pub fn for_params(n_points: usize, params: &ModelParams) -> Result<Self> {
        Grid::new(n_points, params.z_max())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn z_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Trapezoid rule over the grid.
    pub fn trapezoid(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        let n = f.len();
        let inner: f64 = f[1..n - 1].iter().sum();
        self.spacing * (inner + 0.5 * (f[0] + f[n - 1]))
    }

    /// Running trapezoid integral `int_0^{z_i} f`.
    pub fn cumulative_trapezoid(&self, f: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(f.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in f.windows(2) {
            acc += 0.5 * self.spacing * (w[0] + w[1]);
            out.push(acc);
        }
        out
    }

    /// Linear interpolation of nodal samples at `z` (clamped to the domain).
    pub fn interpolate(&self, f: &[f64], z: f64) -> f64 {
        let n = self.len();
        let x = (z / self.spacing).clamp(0.0, (n - 1) as f64);
        let i = (x.floor() as usize).min(n - 2);
        let t = x - i as f64;
        f[i] * (1.0 - t) + f[i + 1] * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Newton tolerance on the node-averaged 1-norm of the HJB residual.
    pub newton_tol: f64,
    /// Outer tolerance on `||k' - k||_1 + |B' - B|`.
    pub fixed_point_tol: f64,
    pub max_newton_iters: usize,
    pub max_fixed_point_iters: usize,
    /// Initial Newton step multiplier in (0, 1].
    pub damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            newton_tol: 1e-10,
            fixed_point_tol: 1e-8,
            max_newton_iters: 100,
            max_fixed_point_iters: 500,
            damping: 1.0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        positive("newton_tol", self.newton_tol)?;
        positive("fixed_point_tol", self.fixed_point_tol)?;
        if self.max_newton_iters == 0 {
            return Err(Error::invalid("max_newton_iters", "must be >= 1"));
        }
        if self.max_fixed_point_iters == 0 {
            return Err(Error::invalid("max_fixed_point_iters", "must be >= 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid("damping", format!("must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }

    /// Slack used when checking analytic bounds on a converged solution.
    pub fn bound_slack(&self) -> f64 {
        10.0 * self.newton_tol
    }
}

/// `H^k(z, lambda) = (1-g)(g/w)^(g/(1-g)) max(0,lambda)^(1/(1-g)) + k lambda + z^a / B^(a-1)`.
pub fn hamiltonian(z: f64, lambda: f64, k: f64, params: &ModelParams, price: f64) -> f64 {
    let g = params.gamma;
    let control = if lambda > 0.0 {
        (1.0 - g) * (g / params.wage).powf(g / (1.0 - g)) * lambda.powf(1.0 / (1.0 - g))
    } else {
        0.0
    };
    control + k * lambda + params.profit(z, price)
}

/// Maximiser of `h^g lambda - w h` over `h >= 0`.
pub fn optimal_labour(lambda: f64, params: &ModelParams) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    (params.gamma * lambda / params.wage).powf(1.0 / (1.0 - params.gamma))
}

/// Productivity growth bought with the optimal labour: `(h*)^gamma`.
pub fn labour_drift(lambda: f64, params: &ModelParams) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    let g = params.gamma;
    (g * lambda / params.wage).powf(g / (1.0 - g))
}

/// Total drift `(h*)^gamma + k`; equals `dH/dlambda` away from `lambda = 0`.
pub fn drift(lambda: f64, k: f64, params: &ModelParams) -> f64 {
    labour_drift(lambda, params) + k
}
