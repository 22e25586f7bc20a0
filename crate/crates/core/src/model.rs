//! Boundary-controlled 1D reaction-diffusion plants and their finite
//! difference state-space models.
//!
//! The plant is
//!
//! ```text
//! x_t = (c(ξ) x_ξ)_ξ + r(ξ) x + Σ d_j(ξ) w_j(t)            on (a, b)
//! c ∂x/∂n = b_a u + Σ g_j w_j   at ξ = a,   likewise at ξ = b
//! y = c_a x(a) + c_b x(b)
//! ```
//!
//! with ∂/∂n the outward normal derivative. Nodes are uniform and include
//! both end points; the Neumann data enter through ghost-node elimination,
//! and the trapezoid weights `W` make `W A` symmetric when `r` is zero.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{all_finite, to_complex, ComplexMatrix, LuSolver, RealMatrix, RealVector};

pub const MIN_GRID: usize = 10;
/// Conductivity must stay above this everywhere on the grid.
pub const C_MIN: f64 = 1e-8;

/// A real function on the spatial interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Constant(f64),
    /// Coefficients of `c0 + c1 ξ + c2 ξ^2 + ...` in the physical coordinate.
    Polynomial(Vec<f64>),
    /// Values at equally spaced points spanning the domain, linearly
    /// interpolated.
    Samples(Vec<f64>),
    /// `value` on `[start, end]`, zero elsewhere.
    Indicator { start: f64, end: f64, value: f64 },
}

impl Default for Profile {
    fn default() -> Self {
        Profile::Constant(0.0)
    }
}

impl Profile {
    pub fn eval(&self, xi: f64, (a, b): (f64, f64)) -> f64 {
        match self {
            Profile::Constant(v) => *v,
            Profile::Polynomial(coeffs) => coeffs.iter().rev().fold(0.0, |acc, c| acc * xi + c),
            Profile::Samples(values) => {
                let n = values.len();
                if n == 1 {
                    return values[0];
                }
                let s = ((xi - a) / (b - a)).clamp(0.0, 1.0) * (n - 1) as f64;
                let i = (s.floor() as usize).min(n - 2);
                let frac = s - i as f64;
                values[i] * (1.0 - frac) + values[i + 1] * frac
            }
            Profile::Indicator { start, end, value } => {
                if xi >= *start && xi <= *end {
                    *value
                } else {
                    0.0
                }
            }
        }
    }

    /// The same profile multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Profile {
        match self {
            Profile::Constant(v) => Profile::Constant(v * factor),
            Profile::Polynomial(c) => Profile::Polynomial(c.iter().map(|x| x * factor).collect()),
            Profile::Samples(v) => Profile::Samples(v.iter().map(|x| x * factor).collect()),
            Profile::Indicator { start, end, value } => Profile::Indicator {
                start: *start,
                end: *end,
                value: value * factor,
            },
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = match self {
            Profile::Constant(v) => v.is_finite(),
            Profile::Polynomial(c) => !c.is_empty() && c.iter().all(|x| x.is_finite()),
            Profile::Samples(v) => !v.is_empty() && v.iter().all(|x| x.is_finite()),
            Profile::Indicator { start, end, value } => {
                start.is_finite() && end.is_finite() && value.is_finite() && start <= end
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("{what}: malformed profile {self:?}")))
        }
    }
}

fn default_reaction() -> Profile {
    Profile::Constant(0.0)
}

/// Continuous description of the plant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    /// Interval `[a, b]`.
    pub domain: [f64; 2],
    pub conductivity: Profile,
    #[serde(default = "default_reaction")]
    pub reaction: Profile,
    /// Neumann flux weights of the control input at `a` and `b`.
    pub input_weight: [f64; 2],
    /// Output weights on the boundary values at `a` and `b`.
    pub output_weight: [f64; 2],
    /// One profile per distributed disturbance channel.
    #[serde(default)]
    pub dist_profile_distributed: Vec<Profile>,
    /// One pair of boundary flux weights per boundary disturbance channel.
    #[serde(default)]
    pub dist_profile_boundary: Vec<[f64; 2]>,
    /// Number of grid nodes, end points included.
    pub n_grid: usize,
}

impl PlantConfig {
    /// Unit interval heat equation with input and output at both ends.
    pub fn heat_default(n_grid: usize) -> Self {
        PlantConfig {
            domain: [0.0, 1.0],
            conductivity: Profile::Constant(1.0),
            reaction: Profile::Constant(0.0),
            input_weight: [1.0, 1.0],
            output_weight: [1.0, 1.0],
            dist_profile_distributed: Vec::new(),
            dist_profile_boundary: Vec::new(),
            n_grid,
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.domain[0], self.domain[1])
    }

    pub fn step(&self) -> f64 {
        (self.domain[1] - self.domain[0]) / (self.n_grid - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let (a, h) = (self.domain[0], self.step());
        (0..self.n_grid).map(|j| a + h * j as f64).collect()
    }

    /// Trapezoid quadrature weights.
    pub fn weights(&self) -> RealVector {
        let h = self.step();
        let mut w = RealVector::from_element(self.n_grid, h);
        w[0] = 0.5 * h;
        w[self.n_grid - 1] = 0.5 * h;
        w
    }

    pub fn n_dist(&self) -> usize {
        self.dist_profile_distributed.len() + self.dist_profile_boundary.len()
    }

    /// Same plant with the conductivity multiplied by `factor`.
    pub fn with_conductivity_scaled(&self, factor: f64) -> Self {
        PlantConfig {
            conductivity: self.conductivity.scaled(factor),
            ..self.clone()
        }
    }

    /// Stable SHA-256 digest of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plant config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b] = self.domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidConfig(format!("domain [{a}, {b}] is not an interval")));
        }
        if self.n_grid < MIN_GRID {
            return Err(Error::InvalidConfig(format!(
                "n_grid = {} is below the minimum {MIN_GRID}",
                self.n_grid
            )));
        }
        self.conductivity.validate("conductivity")?;
        self.reaction.validate("reaction")?;
        for (j, d) in self.dist_profile_distributed.iter().enumerate() {
            d.validate(&format!("distributed disturbance {j}"))?;
        }
        let pairs = [("input_weight", &self.input_weight), ("output_weight", &self.output_weight)];
        for (name, pair) in pairs {
            if !pair.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} has non-finite entries")));
            }
            if pair.iter().all(|v| *v == 0.0) {
                return Err(Error::InvalidConfig(format!("{name} is identically zero")));
            }
        }
        if !self.dist_profile_boundary.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("boundary disturbance weights must be finite".into()));
        }
        let h = self.step();
        let domain = self.interval();
        for xi in self.nodes().iter().flat_map(|x| [*x, x + 0.5 * h]) {
            let c = self.conductivity.eval(xi.min(b), domain);
            if !(c >= C_MIN) {
                return Err(Error::InvalidConfig(format!(
                    "conductivity {c} at xi = {xi} is not positive"
                )));
            }
        }
        Ok(())
    }
}

/// Finite-dimensional linear system
/// `x' = A x + B u + B_d w`, `y = C x + D u + D_d w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel {
    #[serde(with = "crate::dense::real")]
    pub a: RealMatrix,
    #[serde(with = "crate::dense::real")]
    pub b: RealMatrix,
    #[serde(with = "crate::dense::real")]
    pub bd: RealMatrix,
    #[serde(with = "crate::dense::real")]
    pub c: RealMatrix,
    #[serde(with = "crate::dense::real")]
    pub d: RealMatrix,
    #[serde(with = "crate::dense::real")]
    pub dd: RealMatrix,
    /// Quadrature weights of the discrete inner product `<x, y> = x^T W y`.
    #[serde(with = "crate::dense::vector")]
    pub weights: RealVector,
}

impl StateSpaceModel {
    pub fn new(
        a: RealMatrix,
        b: RealMatrix,
        bd: RealMatrix,
        c: RealMatrix,
        d: RealMatrix,
        dd: RealMatrix,
        weights: RealVector,
    ) -> Result<Self> {
        let n = a.nrows();
        let (m, p, nd) = (b.ncols(), c.nrows(), bd.ncols());
        let shapes_ok = n > 0
            && a.is_square()
            && b.nrows() == n
            && bd.nrows() == n
            && c.ncols() == n
            && d.shape() == (p, m)
            && dd.shape() == (p, nd)
            && weights.len() == n;
        if !shapes_ok {
            return Err(Error::DimensionMismatch(format!(
                "state space: A {:?}, B {:?}, B_d {:?}, C {:?}, D {:?}, D_d {:?}, weights {}",
                a.shape(),
                b.shape(),
                bd.shape(),
                c.shape(),
                d.shape(),
                dd.shape(),
                weights.len()
            )));
        }
        if p == 0 || p > m {
            return Err(Error::DimensionMismatch(format!(
                "need 1 <= p <= m, got p = {p}, m = {m}"
            )));
        }
        if !weights.iter().all(|w| *w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidConfig("quadrature weights must be positive".into()));
        }
        if ![&a, &b, &bd, &c, &d, &dd].iter().all(|m| all_finite(m)) {
            return Err(Error::InvalidConfig("system matrices contain non-finite entries".into()));
        }
        Ok(Self { a, b, bd, c, d, dd, weights })
    }

    /// System without disturbance channels and with unit weights.
    pub fn simple(a: RealMatrix, b: RealMatrix, c: RealMatrix, d: RealMatrix) -> Result<Self> {
        let n = a.nrows();
        let p = c.nrows();
        Self::new(
            a,
            b,
            RealMatrix::zeros(n, 0),
            c,
            d,
            RealMatrix::zeros(p, 0),
            RealVector::from_element(n, 1.0),
        )
    }

    pub fn n_state(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_input(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_output(&self) -> usize {
        self.c.nrows()
    }

    pub fn n_dist(&self) -> usize {
        self.bd.ncols()
    }

    pub fn weight_matrix(&self) -> RealMatrix {
        RealMatrix::from_diagonal(&self.weights)
    }

    /// Weighted inner product `x^T W y`.
    pub fn inner(&self, x: &RealVector, y: &RealVector) -> f64 {
        x.component_mul(&self.weights).dot(y)
    }
}

/// Finite difference model of the plant.
pub fn discretize(cfg: &PlantConfig) -> Result<StateSpaceModel> {
    cfg.validate()?;
    let n = cfg.n_grid;
    let h = cfg.step();
    let domain = cfg.interval();
    let nodes = cfg.nodes();
    let cond = |xi: f64| cfg.conductivity.eval(xi, domain);
    let half: Vec<f64> = nodes.windows(2).map(|w| cond(0.5 * (w[0] + w[1]))).collect();
    let h2 = h * h;

    let mut a = RealMatrix::zeros(n, n);
    for j in 0..n {
        let left = if j == 0 { half[0] } else { half[j - 1] };
        let right = if j == n - 1 { half[n - 2] } else { half[j] };
        if j == 0 {
            a[(0, 1)] = 2.0 * right / h2;
        } else if j == n - 1 {
            a[(j, j - 1)] = 2.0 * left / h2;
        } else {
            a[(j, j - 1)] = left / h2;
            a[(j, j + 1)] = right / h2;
        }
        let diag = if j == 0 {
            2.0 * right
        } else if j == n - 1 {
            2.0 * left
        } else {
            left + right
        };
        a[(j, j)] = -diag / h2 + cfg.reaction.eval(nodes[j], domain);
    }

    let flux_column = |pair: &[f64; 2]| {
        let mut col = RealVector::zeros(n);
        col[0] = 2.0 * cond(nodes[0]) * pair[0] / h;
        col[n - 1] = 2.0 * cond(nodes[n - 1]) * pair[1] / h;
        col
    };
    let b = RealMatrix::from_columns(&[flux_column(&cfg.input_weight)]);

    let mut dist_cols: Vec<RealVector> = cfg
        .dist_profile_distributed
        .iter()
        .map(|profile| RealVector::from_iterator(n, nodes.iter().map(|xi| profile.eval(*xi, domain))))
        .collect();
    dist_cols.extend(cfg.dist_profile_boundary.iter().map(flux_column));
    let bd = if dist_cols.is_empty() {
        RealMatrix::zeros(n, 0)
    } else {
        RealMatrix::from_columns(&dist_cols)
    };

    let mut c = RealMatrix::zeros(1, n);
    c[(0, 0)] = cfg.output_weight[0];
    c[(0, n - 1)] = cfg.output_weight[1];
    let nd = bd.ncols();

    StateSpaceModel::new(
        a,
        b,
        bd,
        c,
        RealMatrix::zeros(1, 1),
        RealMatrix::zeros(1, nd),
        cfg.weights(),
    )
}

/// First `count` Neumann cosine modes `1, √2 cos(kπ(ξ-a)/(b-a))`, sampled on
/// the grid and orthonormalized in the weighted inner product. Columns of
/// the returned `n_grid × count` matrix are the basis vectors.
pub fn neumann_eigenbasis(cfg: &PlantConfig, count: usize) -> Result<RealMatrix> {
    if count > cfg.n_grid {
        return Err(Error::InvalidConfig(format!(
            "asked for {count} basis vectors on a grid of {}",
            cfg.n_grid
        )));
    }
    let (a, b) = cfg.interval();
    let nodes = cfg.nodes();
    let w = cfg.weights();
    let inner = |x: &RealVector, y: &RealVector| x.component_mul(&w).dot(y);
    let mut basis: Vec<RealVector> = Vec::with_capacity(count);
    for k in 0..count {
        let amp = if k == 0 { 1.0 } else { 2f64.sqrt() };
        let mut v = RealVector::from_iterator(
            nodes.len(),
            nodes
                .iter()
                .map(|xi| amp * (k as f64 * std::f64::consts::PI * (xi - a) / (b - a)).cos()),
        );
        // Two passes of modified Gram-Schmidt.
        for _ in 0..2 {
            for q in &basis {
                let proj = inner(&v, q);
                v.axpy(-proj, q, 1.0);
            }
        }
        let norm = inner(&v, &v).sqrt();
        basis.push(v / norm);
    }
    Ok(if basis.is_empty() {
        RealMatrix::zeros(cfg.n_grid, 0)
    } else {
        RealMatrix::from_columns(&basis)
    })
}

/// Returns `P(λ) = C (λ - A)^{-1} B + D` and `C (λ - A)^{-1}`.
pub fn transfer_value(sys: &StateSpaceModel, lambda: Complex64) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let n = sys.n_state();
    // (λ - A)^T Z = C^T gives Z^T = C (λ - A)^{-1}.
    let shifted_t = (ComplexMatrix::identity(n, n) * lambda - to_complex(&sys.a)).transpose();
    let solver = LuSolver::new(shifted_t).map_err(|e| match e {
        Error::SingularMatrix { .. } => Error::pole(lambda),
        other => other,
    })?;
    let c_resolvent = solver.solve(&to_complex(&sys.c.transpose()))?.transpose();
    let p = &c_resolvent * to_complex(&sys.b) + to_complex(&sys.d);
    Ok((p, c_resolvent))
}

pub fn grid_vector(values: &[f64]) -> RealVector {
    DVector::from_column_slice(values)
}
