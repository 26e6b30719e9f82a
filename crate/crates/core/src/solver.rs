//! ADMM solver for the dual-graph regularized separation model.
//!
//! With auxiliary variables `U = L` and `V = D - L - S`, each outer iteration
//! runs `max_inner` gradient steps on `L`, then closed-form updates of `S`
//! (soft threshold), `U` (weighted singular value thresholding), the
//! singular value weights, `V` (soft threshold) and the two scaled duals.
//! `lambda2` decays by `beta` every `decay_period` outer iterations down to a
//! floor.
//!
//! The `V` dual is updated as `V~ += D - L - S + V` by default, which does
//! not match the `D - L - S = V` constraint. [`DualSign::Corrected`] uses
//! `V~ += D - L - S - V` instead.

use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::SparseLaplacian;
use crate::proxops::{erf_weights, shrink, singular_values, weighted_svt, ErfScale, WeightVector};
use crate::videoio::DataMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualSign {
    /// `V~ += D - L - S + V`.
    #[default]
    Printed,
    /// `V~ += D - L - S - V`.
    Corrected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Weighted nuclear norm weight.
    pub lambda1: f64,
    /// Foreground sparsity weight (initial value when decaying).
    pub lambda2: f64,
    /// Spatial graph weight.
    pub gamma1: f64,
    /// Temporal graph weight.
    pub gamma2: f64,
    /// Penalty on `U = L`.
    pub rho1: f64,
    /// Penalty on `D - L - S = V`.
    pub rho2: f64,
    /// Gradient step for the `L` subproblem.
    pub dt: f64,
    /// `lambda2 <- max(lambda2 / beta, lambda2_floor)` every `decay_period` iterations.
    pub beta: f64,
    pub lambda2_floor: f64,
    pub decay_period: usize,
    pub erf_scale: ErfScale,
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub v_sign: DualSign,
    /// Keep every weight at 1, reducing the weighted norm to the plain
    /// nuclear norm.
    pub freeze_weights: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda1: 100.0,
            lambda2: 0.1,
            gamma1: 0.1,
            gamma2: 0.1,
            rho1: 0.1,
            rho2: 0.1,
            dt: 0.1,
            beta: 1.0,
            lambda2_floor: 1e-6,
            decay_period: 5,
            erf_scale: ErfScale::Adaptive,
            tol: 1e-4,
            max_outer: 100,
            max_inner: 20,
            v_sign: DualSign::Printed,
            freeze_weights: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("dt", self.dt),
            ("lambda2_floor", self.lambda2_floor),
            ("tol", self.tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        let nonnegative = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
        ];
        for (name, v) in nonnegative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be nonnegative, got {v}")));
            }
        }
        if !(self.beta >= 1.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", format!("must be at least 1, got {}", self.beta)));
        }
        if let ErfScale::Fixed(s) = self.erf_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::param("erf_sigma", format!("must be positive, got {s}")));
            }
        }
        if self.max_inner == 0 {
            return Err(Error::param("max_inner", "must be at least 1"));
        }
        if self.max_outer == 0 {
            return Err(Error::param("max_outer", "must be at least 1"));
        }
        if self.decay_period == 0 {
            return Err(Error::param("decay_period", "must be at least 1"));
        }
        Ok(())
    }
}

/// Per-iteration diagnostics, one entry per outer iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub rel_change_l: Vec<f64>,
    pub rel_change_s: Vec<f64>,
    /// `||U - L||_F`.
    pub residual_u: Vec<f64>,
    /// Norm of the `V~` update argument.
    pub residual_v: Vec<f64>,
    pub objective: Vec<f64>,
    pub lambda2: Vec<f64>,
}

/// Iterates of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub l: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub u_dual: DMatrix<f64>,
    pub v_dual: DMatrix<f64>,
    pub weights: WeightVector,
    /// Current (possibly decayed) `lambda2`.
    pub lambda2: f64,
    pub outer_iteration: usize,
    pub history: History,
}

impl SolverState {
    /// `L = D`, `U = L`, everything else zero, unit weights.
    pub fn new(d: &DMatrix<f64>, config: &SolverConfig) -> Self {
        let zeros = DMatrix::zeros(d.nrows(), d.ncols());
        Self {
            l: d.clone(),
            s: zeros.clone(),
            u: d.clone(),
            v: zeros.clone(),
            u_dual: zeros.clone(),
            v_dual: zeros,
            weights: WeightVector::ones(d.nrows().min(d.ncols())),
            lambda2: config.lambda2,
            outer_iteration: 0,
            history: History::default(),
        }
    }
}

fn same_shape(d: &DMatrix<f64>, other: &DMatrix<f64>, what: &str) -> Result<()> {
    if d.shape() != other.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{what} is {:?}, data is {:?}",
            other.shape(),
            d.shape()
        )));
    }
    Ok(())
}

fn check_laplacians(d: &DMatrix<f64>, phi_s: &SparseLaplacian, phi_t: &SparseLaplacian) -> Result<()> {
    if phi_s.dim() != d.nrows() || phi_t.dim() != d.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "Laplacians are {}x{} and {}x{}, data is {}x{}",
            phi_s.dim(),
            phi_s.dim(),
            phi_t.dim(),
            phi_t.dim(),
            d.nrows(),
            d.ncols()
        )));
    }
    Ok(())
}

fn l1(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

/// `tr(L' Phi_s L)` and `tr(L Phi_t L')`.
fn graph_quadratics(l: &DMatrix<f64>, phi_s: &SparseLaplacian, phi_t: &SparseLaplacian) -> (f64, f64) {
    let spatial = l.dot(&phi_s.matrix().mul_dense(l));
    let temporal = l.dot(&phi_t.matrix().dense_mul_symmetric(l));
    (spatial, temporal)
}

/// `||D-L-S||_1 + lambda1 ||L||_{W,*} + lambda2 ||S||_1
///  + gamma1/2 tr(L' Phi_s L) + gamma2/2 tr(L Phi_t L')`, using `config.lambda2`.
pub fn objective(
    d: &DMatrix<f64>,
    l: &DMatrix<f64>,
    s: &DMatrix<f64>,
    weights: &WeightVector,
    config: &SolverConfig,
    phi_s: &SparseLaplacian,
    phi_t: &SparseLaplacian,
) -> Result<f64> {
    objective_with(d, l, s, weights, config, config.lambda2, phi_s, phi_t)
}

#[allow(clippy::too_many_arguments)]
fn objective_with(
    d: &DMatrix<f64>,
    l: &DMatrix<f64>,
    s: &DMatrix<f64>,
    weights: &WeightVector,
    config: &SolverConfig,
    lambda2: f64,
    phi_s: &SparseLaplacian,
    phi_t: &SparseLaplacian,
) -> Result<f64> {
    same_shape(d, l, "L")?;
    same_shape(d, s, "S")?;
    check_laplacians(d, phi_s, phi_t)?;
    let sv = singular_values(l)?;
    if weights.len() != sv.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} singular values",
            weights.len(),
            sv.len()
        )));
    }
    let wnn: f64 = sv.iter().zip(weights.as_slice()).map(|(s, w)| s * w).sum();
    let (qs, qt) = graph_quadratics(l, phi_s, phi_t);
    Ok(l1(&(d - l - s))
        + config.lambda1 * wnn
        + lambda2 * l1(s)
        + 0.5 * config.gamma1 * qs
        + 0.5 * config.gamma2 * qt)
}

/// `gamma1 Phi_s L + gamma2 L Phi_t + rho1 (L - U - U~) + rho2 (L + S - D + V - V~)`.
pub fn gradient_l(
    state: &SolverState,
    d: &DMatrix<f64>,
    config: &SolverConfig,
    phi_s: &SparseLaplacian,
    phi_t: &SparseLaplacian,
) -> Result<DMatrix<f64>> {
    same_shape(d, &state.l, "L")?;
    check_laplacians(d, phi_s, phi_t)?;
    Ok(gradient_unchecked(state, d, config, phi_s, phi_t))
}

fn gradient_unchecked(
    state: &SolverState,
    d: &DMatrix<f64>,
    config: &SolverConfig,
    phi_s: &SparseLaplacian,
    phi_t: &SparseLaplacian,
) -> DMatrix<f64> {
    let l = &state.l;
    let mut g = (l - &state.u - &state.u_dual) * config.rho1;
    g += (l + &state.s - d + &state.v - &state.v_dual) * config.rho2;
    if config.gamma1 != 0.0 {
        g += phi_s.matrix().mul_dense(l) * config.gamma1;
    }
    if config.gamma2 != 0.0 {
        g += phi_t.matrix().dense_mul_symmetric(l) * config.gamma2;
    }
    g
}

impl SolverState {
    /// `max_inner` fixed-step gradient descent steps on `L`.
    pub fn step_l(
        &mut self,
        d: &DMatrix<f64>,
        config: &SolverConfig,
        phi_s: &SparseLaplacian,
        phi_t: &SparseLaplacian,
    ) -> Result<()> {
        same_shape(d, &self.l, "L")?;
        check_laplacians(d, phi_s, phi_t)?;
        for _ in 0..config.max_inner {
            let g = gradient_unchecked(self, d, config, phi_s, phi_t);
            self.l -= g * config.dt;
        }
        if self.l.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "L diverged during gradient descent; reduce dt (currently {})",
                config.dt
            )));
        }
        Ok(())
    }

    /// `S = shrink(D - L - V + V~, lambda2 / rho2)`.
    pub fn step_s(&mut self, d: &DMatrix<f64>, config: &SolverConfig) -> Result<()> {
        same_shape(d, &self.s, "S")?;
        let target = d - &self.l - &self.v + &self.v_dual;
        self.s = shrink(&target, self.lambda2 / config.rho2)?;
        Ok(())
    }

    /// `U = weighted_svt(L - U~, w, lambda1 / rho1)`, then refresh the weights
    /// from the singular values of `L - U~`.
    pub fn step_u(&mut self, config: &SolverConfig) -> Result<()> {
        let l_hat = &self.l - &self.u_dual;
        let out = if config.lambda1 > 0.0 {
            weighted_svt(&l_hat, &self.weights, config.lambda1 / config.rho1)?
        } else {
            crate::proxops::SvtOutput {
                input_singular_values: singular_values(&l_hat)?,
                matrix: l_hat,
            }
        };
        self.u = out.matrix;
        if !config.freeze_weights {
            self.weights = erf_weights(&out.input_singular_values, config.erf_scale)?;
        }
        Ok(())
    }

    /// `V = shrink(D - L - S + V~, 1 / rho2)`.
    pub fn step_v(&mut self, d: &DMatrix<f64>, config: &SolverConfig) -> Result<()> {
        same_shape(d, &self.v, "V")?;
        let target = d - &self.l - &self.s + &self.v_dual;
        self.v = shrink(&target, 1.0 / config.rho2)?;
        Ok(())
    }

    /// `U~ += U - L`; `V~ += D - L - S +/- V` per [`DualSign`]. Returns the
    /// Frobenius norms of the two increments.
    pub fn step_duals(&mut self, d: &DMatrix<f64>, sign: DualSign) -> Result<(f64, f64)> {
        same_shape(d, &self.v_dual, "V~")?;
        let du = &self.u - &self.l;
        let mut dv = d - &self.l - &self.s;
        match sign {
            DualSign::Printed => dv += &self.v,
            DualSign::Corrected => dv -= &self.v,
        }
        self.u_dual += &du;
        self.v_dual += &dv;
        Ok((du.norm(), dv.norm()))
    }
}

/// `lambda2` after outer iteration `iteration` (1-based): divided by `beta`
/// whenever `iteration` is a multiple of `decay_period`, never below the floor.
pub fn decay_lambda2(config: &SolverConfig, lambda2: f64, iteration: usize) -> Result<f64> {
    if !(config.beta >= 1.0) {
        return Err(Error::param("beta", format!("must be at least 1, got {}", config.beta)));
    }
    if iteration == 0 || iteration % config.decay_period != 0 || lambda2 <= config.lambda2_floor {
        return Ok(lambda2);
    }
    Ok((lambda2 / config.beta).max(config.lambda2_floor))
}

fn relative_change(new: &DMatrix<f64>, old: &DMatrix<f64>) -> f64 {
    let diff = (new - old).norm();
    let base = old.norm();
    // absolute change when the previous iterate is zero
    if base == 0.0 {
        diff
    } else {
        diff / base
    }
}

/// One line of the progress log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub rel_change_l: f64,
    pub rel_change_s: f64,
    pub lambda2: f64,
    pub residual_u: f64,
    pub residual_v: f64,
}

impl fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iter={} objective={:e} rel_change_l={:e} rel_change_s={:e} lambda2={:e} residual_u={:e} residual_v={:e}",
            self.iteration,
            self.objective,
            self.rel_change_l,
            self.rel_change_s,
            self.lambda2,
            self.residual_u,
            self.residual_v
        )
    }
}

#[derive(Debug, Clone)]
pub struct SeparationResult {
    pub background: DataMatrix,
    pub foreground: DataMatrix,
    pub iterations: usize,
    /// Both relative changes fell below `tol`.
    pub converged: bool,
    pub final_rel_change_l: f64,
    pub final_rel_change_s: f64,
    pub wall_time: Duration,
    pub state: SolverState,
}

pub fn solve(
    d: &DataMatrix,
    phi_s: &SparseLaplacian,
    phi_t: &SparseLaplacian,
    config: &SolverConfig,
) -> Result<SeparationResult> {
    solve_with_progress(d, phi_s, phi_t, config, |_| {})
}

/// [`solve`], calling `progress` after every outer iteration.
pub fn solve_with_progress(
    data: &DataMatrix,
    phi_s: &SparseLaplacian,
    phi_t: &SparseLaplacian,
    config: &SolverConfig,
    mut progress: impl FnMut(&IterationRecord),
) -> Result<SeparationResult> {
    let start = Instant::now();
    config.validate()?;
    let d = data.values();
    check_laplacians(d, phi_s, phi_t)?;
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input data contains NaN or infinity".into()));
    }

    let mut state = SolverState::new(d, config);
    let mut converged = false;
    for iteration in 1..=config.max_outer {
        let l_prev = state.l.clone();
        let s_prev = state.s.clone();

        state.step_l(d, config, phi_s, phi_t)?;
        state.step_s(d, config)?;
        state.step_u(config)?;
        state.step_v(d, config)?;
        let (residual_u, residual_v) = state.step_duals(d, config.v_sign)?;
        state.outer_iteration = iteration;

        if !(residual_u.is_finite() && residual_v.is_finite()) {
            return Err(Error::NonFinite(format!("iterates diverged at outer iteration {iteration}")));
        }

        let rel_l = relative_change(&state.l, &l_prev);
        let rel_s = relative_change(&state.s, &s_prev);
        let objective = objective_with(d, &state.l, &state.s, &state.weights, config, state.lambda2, phi_s, phi_t)?;
        let h = &mut state.history;
        h.rel_change_l.push(rel_l);
        h.rel_change_s.push(rel_s);
        h.residual_u.push(residual_u);
        h.residual_v.push(residual_v);
        h.objective.push(objective);
        h.lambda2.push(state.lambda2);
        progress(&IterationRecord {
            iteration,
            objective,
            rel_change_l: rel_l,
            rel_change_s: rel_s,
            lambda2: state.lambda2,
            residual_u,
            residual_v,
        });

        if iteration >= 2 && rel_l < config.tol && rel_s < config.tol {
            converged = true;
            break;
        }
        state.lambda2 = decay_lambda2(config, state.lambda2, iteration)?;
    }

    let iterations = state.outer_iteration;
    Ok(SeparationResult {
        background: data.with_values(state.l.clone())?,
        foreground: data.with_values(state.s.clone())?,
        iterations,
        converged,
        final_rel_change_l: *state.history.rel_change_l.last().unwrap(),
        final_rel_change_s: *state.history.rel_change_s.last().unwrap(),
        wall_time: start.elapsed(),
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SparseMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn quiet() -> SolverConfig {
        SolverConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            gamma1: 0.0,
            gamma2: 0.0,
            rho1: 1.0,
            rho2: 1.0,
            ..SolverConfig::default()
        }
    }

    fn dense_laplacian(m: DMatrix<f64>) -> SparseLaplacian {
        let n = m.nrows();
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if m[(i, j)] != 0.0 {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        SparseLaplacian::from_matrix(SparseMatrix::from_triplets(n, &t).unwrap()).unwrap()
    }

    #[test]
    fn objective_at_zero_is_data_l1() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random(4, 3, &mut rng);
        let z = DMatrix::zeros(4, 3);
        let cfg = SolverConfig::default();
        let v = objective(&d, &z, &z, &WeightVector::ones(3), &cfg, &SparseLaplacian::identity(4), &SparseLaplacian::identity(3))
            .unwrap();
        assert!((v - l1(&d)).abs() < 1e-12);
    }

    #[test]
    fn objective_reduces_to_rpca() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (d, l, s) = (random(5, 3, &mut rng), random(5, 3, &mut rng), random(5, 3, &mut rng));
        let cfg = SolverConfig {
            gamma1: 0.0,
            gamma2: 0.0,
            lambda1: 0.7,
            lambda2: 0.3,
            ..SolverConfig::default()
        };
        let nuclear: f64 = l.clone().svd(false, false).singular_values.iter().sum();
        let want = l1(&(&d - &l - &s)) + 0.7 * nuclear + 0.3 * l1(&s);
        let got = objective(&d, &l, &s, &WeightVector::ones(3), &cfg, &SparseLaplacian::identity(5), &SparseLaplacian::identity(3))
            .unwrap();
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn objective_matches_dense_trace_oracle() {
        let d = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.4, 0.6]);
        let l = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.3, 0.7]);
        let s = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, -0.2]);
        let ps = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let pt = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
        let w = WeightVector::new(vec![0.2, 0.9]).unwrap();
        let cfg = SolverConfig {
            lambda1: 0.3,
            lambda2: 0.4,
            gamma1: 1.5,
            gamma2: 2.5,
            ..SolverConfig::default()
        };
        let sv = l.clone().svd(false, false).singular_values;
        let (s1, s2) = (sv.max(), sv.min());
        let trace_s = (l.transpose() * &ps * &l).trace();
        let trace_t = (&l * &pt * l.transpose()).trace();
        let want = l1(&(&d - &l - &s)) + 0.3 * (0.2 * s1 + 0.9 * s2) + 0.4 * l1(&s) + 0.75 * trace_s + 1.25 * trace_t;
        let got = objective(&d, &l, &s, &w, &cfg, &dense_laplacian(ps), &dense_laplacian(pt)).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn objective_rejects_shape_mismatch() {
        let d = DMatrix::zeros(3, 2);
        let cfg = SolverConfig::default();
        let id3 = SparseLaplacian::identity(3);
        let id2 = SparseLaplacian::identity(2);
        assert!(objective(&d, &DMatrix::zeros(2, 3), &d, &WeightVector::ones(2), &cfg, &id3, &id2).is_err());
        assert!(objective(&d, &d, &d, &WeightVector::ones(2), &cfg, &id2, &id2).is_err());
    }

    #[test]
    fn stationary_point_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random(4, 3, &mut rng);
        let mut st = SolverState::new(&d, &quiet());
        st.l = random(4, 3, &mut rng);
        st.u_dual = random(4, 3, &mut rng);
        st.u = &st.l - &st.u_dual;
        st.s = random(4, 3, &mut rng);
        st.v = random(4, 3, &mut rng);
        st.v_dual = &st.l + &st.s + &st.v - &d;
        let g = gradient_l(&st, &d, &quiet(), &SparseLaplacian::identity(4), &SparseLaplacian::identity(3)).unwrap();
        assert!(g.abs().max() < 1e-14);
    }

    #[test]
    fn identity_laplacian_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = random(4, 3, &mut rng);
        let mut st = SolverState::new(&d, &quiet());
        st.l = random(4, 3, &mut rng);
        st.u = st.l.clone();
        st.v_dual = &st.l - &d;
        let cfg = SolverConfig { gamma1: 1.0, ..quiet() };
        let g = gradient_l(&st, &d, &cfg, &SparseLaplacian::identity(4), &SparseLaplacian::identity(3)).unwrap();
        assert!((g - &st.l).abs().max() < 1e-14);
    }

    #[test]
    fn one_step_from_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random(4, 3, &mut rng);
        let cfg = SolverConfig {
            gamma1: 0.3,
            gamma2: 0.2,
            max_inner: 1,
            dt: 0.05,
            ..SolverConfig::default()
        };
        let mut st = SolverState::new(&d, &cfg);
        st.l = DMatrix::zeros(4, 3);
        st.u = random(4, 3, &mut rng);
        let (ps, pt) = (SparseLaplacian::identity(4), SparseLaplacian::identity(3));
        let g0 = gradient_l(&st, &d, &cfg, &ps, &pt).unwrap();
        st.step_l(&d, &cfg, &ps, &pt).unwrap();
        assert!((&st.l + g0 * 0.05).abs().max() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_l_unchanged() {
        let d = DMatrix::from_element(3, 2, 0.5);
        let cfg = quiet();
        let mut st = SolverState::new(&d, &cfg);
        let before = st.l.clone();
        st.step_l(&d, &cfg, &SparseLaplacian::identity(3), &SparseLaplacian::identity(2)).unwrap();
        assert_eq!(st.l, before);
    }

    #[test]
    fn diverging_step_reported() {
        let d = DMatrix::from_element(3, 2, 0.5);
        let cfg = SolverConfig {
            dt: 1e6,
            max_inner: 200,
            ..SolverConfig::default()
        };
        let mut st = SolverState::new(&d, &cfg);
        st.u = DMatrix::zeros(3, 2);
        let err = st
            .step_l(&d, &cfg, &SparseLaplacian::identity(3), &SparseLaplacian::identity(2))
            .unwrap_err();
        assert!(err.to_string().contains("reduce dt"));
    }

    #[test]
    fn s_step_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = random(3, 3, &mut rng);
        let mut st = SolverState::new(&d, &quiet());
        st.l = random(3, 3, &mut rng);
        st.v = random(3, 3, &mut rng);
        st.v_dual = random(3, 3, &mut rng);
        let target = &d - &st.l - &st.v + &st.v_dual;

        st.lambda2 = 0.0;
        st.step_s(&d, &quiet()).unwrap();
        assert_eq!(st.s, target);

        st.lambda2 = 1e9;
        st.step_s(&d, &quiet()).unwrap();
        assert_eq!(st.s, DMatrix::zeros(3, 3));
    }

    #[test]
    fn s_step_matches_scalar_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = random(3, 3, &mut rng);
        let cfg = SolverConfig {
            lambda2: 0.3,
            rho2: 2.0,
            ..SolverConfig::default()
        };
        let mut st = SolverState::new(&d, &cfg);
        st.l = random(3, 3, &mut rng);
        st.v = random(3, 3, &mut rng);
        st.v_dual = random(3, 3, &mut rng);
        st.step_s(&d, &cfg).unwrap();
        let target = &d - &st.l - &st.v + &st.v_dual;
        for (k, &t) in target.iter().enumerate() {
            // minimize lambda2 |x| + rho2/2 (t - x)^2 over a grid
            let best = (-40000..=40000)
                .map(|i| i as f64 * 1e-4)
                .min_by(|a, b| {
                    let f = |x: f64| 0.3 * x.abs() + 1.0 * (t - x).powi(2);
                    f(*a).total_cmp(&f(*b))
                })
                .unwrap();
            assert!((st.s.as_slice()[k] - best).abs() < 1e-4);
        }
    }

    #[test]
    fn v_step_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = random(3, 3, &mut rng);
        let cfg = SolverConfig {
            rho2: 1e-6,
            ..SolverConfig::default()
        };
        let mut st = SolverState::new(&d, &cfg);
        st.s = random(3, 3, &mut rng);
        st.step_v(&d, &cfg).unwrap();
        assert_eq!(st.v, DMatrix::zeros(3, 3));

        let cfg = SolverConfig {
            rho2: 0.8,
            ..SolverConfig::default()
        };
        st.v_dual = &st.l + &st.s - &d;
        st.step_v(&d, &cfg).unwrap();
        assert_eq!(st.v, DMatrix::zeros(3, 3));

        st.v_dual = random(3, 3, &mut rng) * 3.0;
        st.step_v(&d, &cfg).unwrap();
        let target = &d - &st.l - &st.s + &st.v_dual;
        for (k, &t) in target.iter().enumerate() {
            let best = (-60000..=60000)
                .map(|i| i as f64 * 1e-4)
                .min_by(|a, b| {
                    let f = |x: f64| x.abs() + 0.4 * (t - x).powi(2);
                    f(*a).total_cmp(&f(*b))
                })
                .unwrap();
            assert!((st.v.as_slice()[k] - best).abs() < 1e-4);
        }
    }

    #[test]
    fn u_step_cases() {
        let d = DMatrix::zeros(3, 2);
        let cfg = SolverConfig::default();
        let mut st = SolverState::new(&d, &cfg);
        st.step_u(&cfg).unwrap();
        assert_eq!(st.u, DMatrix::zeros(3, 2));
        assert_eq!(st.weights, WeightVector::ones(2));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        st.l = random(3, 2, &mut rng);
        st.u_dual = random(3, 2, &mut rng);
        st.weights = WeightVector::new(vec![0.0, 0.0]).unwrap();
        st.step_u(&cfg).unwrap();
        assert!((&st.u - (&st.l - &st.u_dual)).abs().max() < 1e-12);

        let cfg = SolverConfig {
            lambda1: 0.5,
            rho1: 1.0,
            erf_scale: ErfScale::Fixed(2.0),
            ..SolverConfig::default()
        };
        let mut st = SolverState::new(&DMatrix::zeros(2, 2), &cfg);
        st.l = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        st.step_u(&cfg).unwrap();
        assert!((&st.u - DMatrix::from_row_slice(2, 2, &[2.5, 0.0, 0.0, 0.5])).abs().max() < 1e-12);
        let w = st.weights.as_slice();
        assert!((w[0] - (-9.0f64 / 4.0).exp()).abs() < 1e-15);
        assert!((w[1] - (-1.0f64 / 4.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn dual_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let d = random(3, 2, &mut rng);
        let cfg = SolverConfig::default();
        let mut st = SolverState::new(&d, &cfg);
        st.l = random(3, 2, &mut rng);
        st.u = st.l.clone();
        st.s = random(3, 2, &mut rng);
        st.v = random(3, 2, &mut rng);
        st.step_duals(&d, DualSign::Printed).unwrap();
        assert_eq!(st.u_dual, DMatrix::zeros(3, 2));
        assert_eq!(st.v_dual, &d - &st.l - &st.s + &st.v);

        let mut st2 = SolverState::new(&d, &cfg);
        st2.l = st.l.clone();
        st2.s = st.s.clone();
        st2.v = st.v.clone();
        st2.step_duals(&d, DualSign::Corrected).unwrap();
        assert_eq!(st2.v_dual, &d - &st.l - &st.s - &st.v);

        let mut st = SolverState::new(&d, &cfg);
        let (u1, l1_) = (random(3, 2, &mut rng), random(3, 2, &mut rng));
        let (u2, l2_) = (random(3, 2, &mut rng), random(3, 2, &mut rng));
        st.u = u1.clone();
        st.l = l1_.clone();
        st.step_duals(&d, DualSign::Printed).unwrap();
        st.u = u2.clone();
        st.l = l2_.clone();
        st.step_duals(&d, DualSign::Printed).unwrap();
        assert!((&st.u_dual - ((u1 - l1_) + (u2 - l2_))).abs().max() < 1e-15);
    }

    #[test]
    fn lambda2_schedule() {
        let cfg = SolverConfig {
            beta: 1.0,
            ..SolverConfig::default()
        };
        let mut l2 = 0.1;
        for it in 1..=50 {
            l2 = decay_lambda2(&cfg, l2, it).unwrap();
        }
        assert_eq!(l2, 0.1);

        let cfg = SolverConfig {
            beta: 1.05,
            ..SolverConfig::default()
        };
        let mut l2 = 0.1;
        for it in 1..=4 {
            l2 = decay_lambda2(&cfg, l2, it).unwrap();
            assert_eq!(l2, 0.1);
        }
        l2 = decay_lambda2(&cfg, l2, 5).unwrap();
        assert!((l2 - 0.095238).abs() < 1e-6);

        let cfg = SolverConfig {
            beta: 10.0,
            lambda2_floor: 0.05,
            ..SolverConfig::default()
        };
        let l2 = decay_lambda2(&cfg, 0.1, 5).unwrap();
        assert_eq!(l2, 0.05);
        assert_eq!(decay_lambda2(&cfg, l2, 10).unwrap(), 0.05);

        let bad = SolverConfig {
            beta: 0.5,
            ..SolverConfig::default()
        };
        assert!(decay_lambda2(&bad, 0.1, 5).is_err());
    }

    #[test]
    fn zero_data_is_a_fixed_point() {
        let d = DataMatrix::zeros(3, 4, 5);
        let r = solve(&d, &SparseLaplacian::identity(12), &SparseLaplacian::identity(5), &SolverConfig::default())
            .unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 2);
        assert_eq!(r.background.values(), &DMatrix::zeros(12, 5));
        assert_eq!(r.foreground.values(), &DMatrix::zeros(12, 5));
    }

    #[test]
    fn solve_rejects_bad_input() {
        let d = DataMatrix::zeros(3, 4, 5);
        let cfg = SolverConfig::default();
        assert!(matches!(
            solve(&d, &SparseLaplacian::identity(11), &SparseLaplacian::identity(5), &cfg),
            Err(Error::ShapeMismatch(_))
        ));
        let mut nan = d.clone();
        nan.values_mut()[(0, 0)] = f64::NAN;
        assert!(matches!(
            solve(&nan, &SparseLaplacian::identity(12), &SparseLaplacian::identity(5), &cfg),
            Err(Error::NonFinite(_))
        ));
        let bad = SolverConfig { beta: 0.5, ..cfg };
        assert!(solve(&d, &SparseLaplacian::identity(12), &SparseLaplacian::identity(5), &bad).is_err());
    }

    #[test]
    fn histories_grow_once_per_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = DataMatrix::new(random(12, 5, &mut rng), 3, 4).unwrap();
        let cfg = SolverConfig {
            max_outer: 7,
            tol: 1e-300,
            ..SolverConfig::default()
        };
        let mut lines = Vec::new();
        let r = solve_with_progress(&d, &SparseLaplacian::identity(12), &SparseLaplacian::identity(5), &cfg, |rec| {
            lines.push(rec.to_string())
        })
        .unwrap();
        assert_eq!(r.iterations, 7);
        assert!(!r.converged);
        assert_eq!(r.state.history.rel_change_l.len(), 7);
        assert_eq!(r.state.history.residual_v.len(), 7);
        assert_eq!(lines.len(), 7);
        assert!(lines[0].starts_with("iter=1 objective="));
        for m in [&r.state.l, &r.state.s, &r.state.u, &r.state.v, &r.state.u_dual, &r.state.v_dual] {
            assert_eq!(m.shape(), (12, 5));
        }
    }

    #[test]
    fn quadratic_descent_with_safe_step() {
        // quadratic part only: gamma terms and the two penalties, no prox steps
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = DataMatrix::new(DMatrix::from_fn(12, 5, |_, _| rng.random::<f64>()), 3, 4).unwrap();
        let g = crate::graph::build_graphs(
            &d,
            crate::graph::SimilarityKernel::Exponential { h: 1.0 },
            crate::graph::SimilarityKernel::Exponential { h: 1.0 },
            &Default::default(),
        )
        .unwrap();
        let cfg = SolverConfig {
            gamma1: 2.0,
            gamma2: 3.0,
            rho1: 0.5,
            rho2: 1.5,
            max_inner: 20,
            ..SolverConfig::default()
        };
        let lip = 2.0 * cfg.gamma1 + 2.0 * cfg.gamma2 + cfg.rho1 + cfg.rho2;
        let cfg = SolverConfig { dt: 1.9 / lip, ..cfg };
        let mut st = SolverState::new(d.values(), &cfg);
        st.u = random(12, 5, &mut rng);
        st.s = random(12, 5, &mut rng);
        let f = |st: &SolverState| {
            let (qs, qt) = graph_quadratics(&st.l, &g.spatial, &g.temporal);
            0.5 * cfg.gamma1 * qs
                + 0.5 * cfg.gamma2 * qt
                + 0.5 * cfg.rho1 * (&st.u - &st.l + &st.u_dual).norm_squared()
                + 0.5 * cfg.rho2 * (d.values() - &st.l - &st.s - &st.v + &st.v_dual).norm_squared()
        };
        let before = f(&st);
        st.step_l(d.values(), &cfg, &g.spatial, &g.temporal).unwrap();
        assert!(f(&st) <= before);
    }
}
