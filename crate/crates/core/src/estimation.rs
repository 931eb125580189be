//! Maximum-likelihood estimation by Fisher scoring.
//!
//! The model ties a beta-distributed response to covariates through two
//! submodels, `g(mu_t) = f1(x_t; beta)` and `h(phi_t) = f2(z_t; gamma)`,
//! with possibly nonlinear `f1`, `f2`. Writing `J1 = d eta1 / d beta`,
//! `J2 = d eta2 / d gamma`, `y*_t = log(y_t/(1-y_t))` and
//! `mu*_t = psi(mu_t phi_t) - psi((1-mu_t) phi_t)`, the score is
//!
//! ```text
//! U_beta  = J1' Phi T (y* - mu*)        T = diag{1/g'(mu_t)}
//! U_gamma = J2' H a                     H = diag{1/h'(phi_t)}
//! ```
//!
//! and the expected information has blocks
//!
//! ```text
//! K_bb = J1' Phi W J1    w_t  = phi_t v_t / g'(mu_t)^2
//! K_bg = J1' C T H J2    c_t  = phi_t (psi1(mu phi) mu - psi1((1-mu)phi)(1-mu))
//! K_gg = J2' D J2        d_t  = xi_t / h'(phi_t)^2
//! ```
//!
//! with `v_t = psi1(mu phi) + psi1((1-mu)phi)` and
//! `xi_t = psi1(mu phi) mu^2 + psi1((1-mu)phi)(1-mu)^2 - psi1(phi)`.
//!
//! Scoring alternates damped Newton steps between the two blocks,
//! halving the step whenever the log-likelihood would decrease or the
//! parameters would leave the admissible region (`mu` in (0,1), `phi`
//! positive). At convergence the estimate satisfies the iteratively
//! reweighted least-squares identity
//!
//! ```text
//! beta_hat = (J1' Phi W J1)^{-1} J1' Phi W u1,
//! u1 = J1 beta_hat + W^{-1} T (y* - mu*)
//! ```
//!
//! which diagnostics exploit for leave-one-out shortcuts.

use crate::data::Dataset;
use crate::formula::{BoundPredictor, ParamPrefix, PredictorSpec};
use crate::links::LinkKind;
use crate::special::{digamma_pos, log_gamma_pos, trigamma_pos};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// A complete two-part model: mean and precision predictors plus links.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    mean: PredictorSpec,
    mean_link: LinkKind,
    precision: PredictorSpec,
    precision_link: LinkKind,
}

impl ModelSpec {
    pub fn new(
        mean: PredictorSpec,
        mean_link: LinkKind,
        precision: PredictorSpec,
        precision_link: LinkKind,
    ) -> Result<Self> {
        if mean.prefix() != ParamPrefix::Mean {
            return Err(Error::Model(
                "mean formula must use `b` parameters".into(),
            ));
        }
        if precision.prefix() != ParamPrefix::Precision {
            return Err(Error::Model(
                "precision formula must use `g` parameters".into(),
            ));
        }
        if !mean_link.valid_for_mean() {
            return Err(Error::Model(format!(
                "link `{mean_link}` is not valid for the mean submodel"
            )));
        }
        if !precision_link.valid_for_precision() {
            return Err(Error::Model(format!(
                "link `{precision_link}` is not valid for the precision submodel"
            )));
        }
        if mean.param_count() == 0 || precision.param_count() == 0 {
            return Err(Error::Model(
                "each submodel needs at least one parameter".into(),
            ));
        }
        Ok(ModelSpec {
            mean,
            mean_link,
            precision,
            precision_link,
        })
    }

    pub fn mean(&self) -> &PredictorSpec {
        &self.mean
    }

    pub fn precision(&self) -> &PredictorSpec {
        &self.precision
    }

    pub fn mean_link(&self) -> LinkKind {
        self.mean_link
    }

    pub fn precision_link(&self) -> LinkKind {
        self.precision_link
    }

    /// Mean-submodel parameter count `k`.
    pub fn k(&self) -> usize {
        self.mean.param_count()
    }

    /// Precision-submodel parameter count `q`.
    pub fn q(&self) -> usize {
        self.precision.param_count()
    }

    /// Distinct covariates in the mean formula.
    pub fn k1(&self) -> usize {
        self.mean.covariate_count()
    }

    /// Distinct covariates in the precision formula.
    pub fn q1(&self) -> usize {
        self.precision.covariate_count()
    }

    /// Check the model is estimable on `data`: all covariates present and
    /// `k + q < n` for identifiability.
    pub fn validate_for(&self, data: &Dataset) -> Result<()> {
        self.mean.bind(data)?;
        self.precision.bind(data)?;
        if self.k() + self.q() >= data.n() {
            return Err(Error::Model(format!(
                "{} parameters cannot be identified from {} observations",
                self.k() + self.q(),
                data.n()
            )));
        }
        Ok(())
    }

    /// Intercept-only model with the same links, the reference point for
    /// likelihood-ratio pseudo R2 statistics.
    pub fn null_spec(&self) -> ModelSpec {
        let schema: [&str; 0] = [];
        let mean = PredictorSpec::parse("b1", &schema, ParamPrefix::Mean)
            .expect("intercept formula parses");
        let precision = PredictorSpec::parse("g1", &schema, ParamPrefix::Precision)
            .expect("intercept formula parses");
        ModelSpec {
            mean,
            mean_link: self.mean_link,
            precision,
            precision_link: self.precision_link,
        }
    }

    /// Serializable description of the model.
    pub fn describe(&self) -> ModelDescription {
        ModelDescription {
            mean: self.mean.to_string(),
            mean_link: self.mean_link.name().into(),
            precision: self.precision.to_string(),
            precision_link: self.precision_link.name().into(),
        }
    }
}

/// Textual model summary used in serialized reports.
#[derive(Debug, Clone, Serialize)]
pub struct ModelDescription {
    pub mean: String,
    pub mean_link: String,
    pub precision: String,
    pub precision_link: String,
}

/// Scoring controls and optional starting anchors.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence tolerance on the log-likelihood change per iteration.
    pub tol_loglik: f64,
    /// Convergence tolerance on the max-norm of the score.
    pub tol_score: f64,
    pub max_step_halvings: usize,
    /// Starting values for the mean parameters; refined, not used as-is.
    pub mean_start: Option<Vec<f64>>,
    /// Starting values for the precision parameters; used as-is.
    pub precision_start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 500,
            tol_loglik: 1e-10,
            tol_score: 1e-8,
            max_step_halvings: 30,
            mean_start: None,
            precision_start: None,
        }
    }
}

/// Per-observation quantities at a parameter point: means, precisions,
/// transformed response and its expectation, and the scoring weights.
#[derive(Debug, Clone)]
pub struct WorkingState {
    pub eta1: DVector<f64>,
    pub eta2: DVector<f64>,
    pub mu: DVector<f64>,
    pub phi: DVector<f64>,
    /// `y*_t = log(y_t / (1 - y_t))`.
    pub ystar: DVector<f64>,
    /// `mu*_t = psi(mu_t phi_t) - psi((1 - mu_t) phi_t)`.
    pub mustar: DVector<f64>,
    /// `v_t = psi'(mu_t phi_t) + psi'((1 - mu_t) phi_t)`, the variance of
    /// `y*_t`.
    pub v: DVector<f64>,
    /// Mean-block weight `w_t = phi_t v_t / g'(mu_t)^2`.
    pub w: DVector<f64>,
    /// Cross-block weight `c_t`.
    pub c: DVector<f64>,
    /// `xi_t`, the variance factor for the precision score.
    pub xi: DVector<f64>,
    /// Precision-block weight `d_t = xi_t / h'(phi_t)^2`.
    pub d: DVector<f64>,
    /// Precision-score residual `a_t`.
    pub a: DVector<f64>,
    /// `1 / g'(mu_t)`.
    pub t_scale: DVector<f64>,
    /// `1 / h'(phi_t)`.
    pub h_scale: DVector<f64>,
    pub log_lik: f64,
}

impl WorkingState {
    /// Evaluate all per-observation quantities at `(beta, gamma)`.
    ///
    /// Fails with [`Error::Inadmissible`] naming the first offending
    /// observation when any `mu_t` leaves (0, 1) or any `phi_t` leaves
    /// (0, inf).
    pub fn compute(
        model: &ModelSpec,
        data: &Dataset,
        beta: &[f64],
        gamma: &[f64],
    ) -> Result<WorkingState> {
        let bound1 = model.mean.bind(data)?;
        let bound2 = model.precision.bind(data)?;
        Self::compute_bound(model, &bound1, &bound2, data.response(), beta, gamma)
    }

    fn compute_bound(
        model: &ModelSpec,
        bound1: &BoundPredictor<'_>,
        bound2: &BoundPredictor<'_>,
        y: &[f64],
        beta: &[f64],
        gamma: &[f64],
    ) -> Result<WorkingState> {
        let n = y.len();
        let eta1 = bound1.eta(beta)?;
        let eta2 = bound2.eta(gamma)?;
        let g = model.mean_link;
        let h = model.precision_link;

        let mut state = WorkingState {
            mu: DVector::zeros(n),
            phi: DVector::zeros(n),
            ystar: DVector::zeros(n),
            mustar: DVector::zeros(n),
            v: DVector::zeros(n),
            w: DVector::zeros(n),
            c: DVector::zeros(n),
            xi: DVector::zeros(n),
            d: DVector::zeros(n),
            a: DVector::zeros(n),
            t_scale: DVector::zeros(n),
            h_scale: DVector::zeros(n),
            log_lik: 0.0,
            eta1,
            eta2,
        };

        let inadmissible = |row: usize, message: String| Error::Inadmissible { row, message };

        for t in 0..n {
            let mu = g
                .inverse(state.eta1[t])
                .map_err(|_| inadmissible(t, format!("mean predictor {} saturates", state.eta1[t])))?;
            if !(mu > 0.0 && mu < 1.0) {
                return Err(inadmissible(t, format!("mu = {mu} outside (0, 1)")));
            }
            let phi = h
                .inverse(state.eta2[t])
                .map_err(|_| inadmissible(t, format!("precision predictor {} inadmissible", state.eta2[t])))?;
            if !(phi > 0.0 && phi.is_finite()) {
                return Err(inadmissible(t, format!("phi = {phi} outside (0, inf)")));
            }
            let p = mu * phi;
            let q = (1.0 - mu) * phi;
            if p <= 0.0 || q <= 0.0 || !p.is_finite() || !q.is_finite() {
                return Err(inadmissible(t, format!("shape parameters ({p}, {q})")));
            }

            let yt = y[t];
            let psi_p = digamma_pos(p);
            let psi_q = digamma_pos(q);
            let psi_phi = digamma_pos(phi);
            let tri_p = trigamma_pos(p);
            let tri_q = trigamma_pos(q);
            let tri_phi = trigamma_pos(phi);
            let g_prime = g.deriv(mu).expect("mu validated");
            let h_prime = h.deriv(phi).expect("phi validated");

            let ystar = (yt / (1.0 - yt)).ln();
            let mustar = psi_p - psi_q;
            let v = tri_p + tri_q;

            state.mu[t] = mu;
            state.phi[t] = phi;
            state.ystar[t] = ystar;
            state.mustar[t] = mustar;
            state.v[t] = v;
            state.t_scale[t] = 1.0 / g_prime;
            state.h_scale[t] = 1.0 / h_prime;
            state.w[t] = phi * v / (g_prime * g_prime);
            state.c[t] = phi * (tri_p * mu - tri_q * (1.0 - mu));
            let xi = tri_p * mu * mu + tri_q * (1.0 - mu) * (1.0 - mu) - tri_phi;
            state.xi[t] = xi;
            state.d[t] = xi / (h_prime * h_prime);
            state.a[t] = mu * (ystar - mustar) + (1.0 - yt).ln() - psi_q + psi_phi;

            state.log_lik += log_gamma_pos(phi) - log_gamma_pos(p) - log_gamma_pos(q)
                + (p - 1.0) * yt.ln()
                + (q - 1.0) * (1.0 - yt).ln();
        }
        Ok(state)
    }
}

/// Log-likelihood at `(beta, gamma)`.
pub fn log_likelihood(
    model: &ModelSpec,
    data: &Dataset,
    beta: &[f64],
    gamma: &[f64],
) -> Result<f64> {
    Ok(WorkingState::compute(model, data, beta, gamma)?.log_lik)
}

/// Score vector `(U_beta, U_gamma)` at `(beta, gamma)`.
pub fn score(
    model: &ModelSpec,
    data: &Dataset,
    beta: &[f64],
    gamma: &[f64],
) -> Result<(DVector<f64>, DVector<f64>)> {
    let state = WorkingState::compute(model, data, beta, gamma)?;
    let j1 = model.mean.bind(data)?.jacobian(beta)?;
    let j2 = model.precision.bind(data)?.jacobian(gamma)?;
    Ok((score_beta(&state, &j1), score_gamma(&state, &j2)))
}

/// `U_beta = J1' Phi T (y* - mu*)` from a precomputed state.
pub fn score_beta(state: &WorkingState, j1: &DMatrix<f64>) -> DVector<f64> {
    let n = state.mu.len();
    let mut weighted = DVector::zeros(n);
    for t in 0..n {
        weighted[t] = state.phi[t] * state.t_scale[t] * (state.ystar[t] - state.mustar[t]);
    }
    j1.tr_mul(&weighted)
}

/// `U_gamma = J2' H a` from a precomputed state.
pub fn score_gamma(state: &WorkingState, j2: &DMatrix<f64>) -> DVector<f64> {
    let n = state.mu.len();
    let mut weighted = DVector::zeros(n);
    for t in 0..n {
        weighted[t] = state.h_scale[t] * state.a[t];
    }
    j2.tr_mul(&weighted)
}

/// Blocks of the expected (Fisher) information matrix.
#[derive(Debug, Clone)]
pub struct FisherBlocks {
    pub beta_beta: DMatrix<f64>,
    pub beta_gamma: DMatrix<f64>,
    pub gamma_gamma: DMatrix<f64>,
}

impl FisherBlocks {
    /// Assemble the full symmetric `(k+q) x (k+q)` information matrix.
    pub fn full(&self) -> DMatrix<f64> {
        let k = self.beta_beta.nrows();
        let q = self.gamma_gamma.nrows();
        let mut out = DMatrix::zeros(k + q, k + q);
        out.view_mut((0, 0), (k, k)).copy_from(&self.beta_beta);
        out.view_mut((0, k), (k, q)).copy_from(&self.beta_gamma);
        out.view_mut((k, 0), (q, k))
            .copy_from(&self.beta_gamma.transpose());
        out.view_mut((k, k), (q, q)).copy_from(&self.gamma_gamma);
        out
    }
}

/// Expected information blocks at `(beta, gamma)`.
pub fn fisher_information(
    model: &ModelSpec,
    data: &Dataset,
    beta: &[f64],
    gamma: &[f64],
) -> Result<FisherBlocks> {
    let state = WorkingState::compute(model, data, beta, gamma)?;
    let j1 = model.mean.bind(data)?.jacobian(beta)?;
    let j2 = model.precision.bind(data)?.jacobian(gamma)?;
    Ok(information_from_state(&state, &j1, &j2))
}

/// Information blocks from a precomputed state and jacobians.
pub fn information_from_state(
    state: &WorkingState,
    j1: &DMatrix<f64>,
    j2: &DMatrix<f64>,
) -> FisherBlocks {
    FisherBlocks {
        beta_beta: weighted_cross(j1, j1, |t| state.phi[t] * state.w[t]),
        beta_gamma: weighted_cross(j1, j2, |t| {
            state.c[t] * state.t_scale[t] * state.h_scale[t]
        }),
        gamma_gamma: weighted_cross(j2, j2, |t| state.d[t]),
    }
}

/// `A' diag(weight) B` without materializing the diagonal.
fn weighted_cross<F: Fn(usize) -> f64>(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    weight: F,
) -> DMatrix<f64> {
    let mut scaled = b.clone();
    for t in 0..b.nrows() {
        let w = weight(t);
        for j in 0..b.ncols() {
            scaled[(t, j)] *= w;
        }
    }
    a.tr_mul(&scaled)
}

/// Solve `matrix x = rhs` for a symmetric positive-definite block via
/// Cholesky. On failure, retries once with a ridge of
/// `1e-10 * trace / dim` added to the diagonal before giving up.
fn solve_spd(matrix: &DMatrix<f64>, rhs: &DVector<f64>, block: &'static str) -> Result<DVector<f64>> {
    if let Some(chol) = matrix.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    let dim = matrix.nrows() as f64;
    let ridge = 1e-10 * matrix.trace() / dim;
    let mut bumped = matrix.clone();
    for i in 0..matrix.nrows() {
        bumped[(i, i)] += ridge;
    }
    bumped
        .cholesky()
        .map(|chol| chol.solve(rhs))
        .ok_or(Error::SingularInformation { block })
}

/// One scoring-iteration record for the fit trace.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub log_lik: f64,
    pub score_norm: f64,
    pub step_halvings: usize,
}

/// A fitted model: estimates, convergence report, and the working-state
/// snapshot diagnostics build on.
#[derive(Debug, Clone)]
pub struct FitResult {
    model: ModelSpec,
    y: Vec<f64>,
    beta_hat: DVector<f64>,
    gamma_hat: DVector<f64>,
    state: WorkingState,
    j1: DMatrix<f64>,
    j2: DMatrix<f64>,
    /// Working response `u1 = J1 beta_hat + W^{-1} T (y* - mu*)`.
    u1: DVector<f64>,
    log_lik: f64,
    iterations: usize,
    converged: bool,
    score_norm: f64,
    trace: Vec<IterationRecord>,
}

impl FitResult {
    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn response(&self) -> &[f64] {
        &self.y
    }

    pub fn beta_hat(&self) -> &DVector<f64> {
        &self.beta_hat
    }

    pub fn gamma_hat(&self) -> &DVector<f64> {
        &self.gamma_hat
    }

    pub fn mu_hat(&self) -> &DVector<f64> {
        &self.state.mu
    }

    pub fn phi_hat(&self) -> &DVector<f64> {
        &self.state.phi
    }

    pub fn state(&self) -> &WorkingState {
        &self.state
    }

    pub fn jacobian_mean(&self) -> &DMatrix<f64> {
        &self.j1
    }

    pub fn jacobian_precision(&self) -> &DMatrix<f64> {
        &self.j2
    }

    pub fn working_response(&self) -> &DVector<f64> {
        &self.u1
    }

    pub fn log_lik(&self) -> f64 {
        self.log_lik
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn score_norm(&self) -> f64 {
        self.score_norm
    }

    pub fn trace(&self) -> &[IterationRecord] {
        &self.trace
    }

    /// Information blocks at the estimate.
    pub fn information(&self) -> FisherBlocks {
        information_from_state(&self.state, &self.j1, &self.j2)
    }

    /// Serializable summary of the fit.
    pub fn report(&self) -> FitReport {
        FitReport {
            model: self.model.describe(),
            n: self.n(),
            converged: self.converged(),
            iterations: self.iterations(),
            score_norm: self.score_norm(),
            log_lik: self.log_lik(),
            beta_hat: self.beta_hat().iter().cloned().collect(),
            gamma_hat: self.gamma_hat().iter().cloned().collect(),
            mu_hat: self.mu_hat().iter().cloned().collect(),
            phi_hat: self.phi_hat().iter().cloned().collect(),
            working_response: self.working_response().iter().cloned().collect(),
            weights: self.state.w.iter().cloned().collect(),
        }
    }
}

/// Machine-readable fit summary: estimates, convergence information,
/// and the working-response/weight snapshot used by the leave-one-out
/// diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub model: ModelDescription,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
    pub log_lik: f64,
    pub beta_hat: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub phi_hat: Vec<f64>,
    pub working_response: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Fit the model to `data` by alternating Fisher scoring.
///
/// Starting values come from `options` anchors when supplied, otherwise
/// from [`starting_values`]. Convergence requires both the log-likelihood
/// change and the score max-norm to drop below their tolerances; hitting
/// `max_iterations` first returns a result with `converged() == false`
/// rather than an error.
pub fn fit(model: &ModelSpec, data: &Dataset, options: &FitOptions) -> Result<FitResult> {
    model.validate_for(data)?;
    let bound1 = model.mean.bind(data)?;
    let bound2 = model.precision.bind(data)?;
    let y = data.response();

    let (beta0, gamma0) = starting_values(
        model,
        data,
        options.mean_start.as_deref(),
        options.precision_start.as_deref(),
    )?;
    let mut beta = beta0;
    let mut gamma = gamma0;
    let mut state = WorkingState::compute_bound(model, &bound1, &bound2, y, beta.as_slice(), gamma.as_slice())
        .map_err(|e| Error::NoAdmissibleStart(format!("starting point rejected: {e}")))?;

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut score_norm = f64::INFINITY;

    for iteration in 1..=options.max_iterations {
        iterations = iteration;
        let ll_before = state.log_lik;
        let mut halvings = 0;
        let mut stalled = true;

        // Mean-block step.
        let j1 = bound1.jacobian(beta.as_slice())?;
        let u_beta = score_beta(&state, &j1);
        let k_bb = weighted_cross(&j1, &j1, |t| state.phi[t] * state.w[t]);
        let step = solve_spd(&k_bb, &u_beta, "beta")?;
        if let Some((new_beta, new_state, used)) = try_step(
            model, &bound1, &bound2, y, &beta, &gamma, &step, true,
            state.log_lik, options.max_step_halvings,
        ) {
            if new_beta != beta {
                stalled = false;
            }
            beta = new_beta;
            state = new_state;
            halvings += used;
        }

        // Precision-block step at the refreshed state.
        let j2 = bound2.jacobian(gamma.as_slice())?;
        let u_gamma = score_gamma(&state, &j2);
        let k_gg = weighted_cross(&j2, &j2, |t| state.d[t]);
        let step = solve_spd(&k_gg, &u_gamma, "gamma")?;
        if let Some((new_gamma, new_state, used)) = try_step(
            model, &bound1, &bound2, y, &beta, &gamma, &step, false,
            state.log_lik, options.max_step_halvings,
        ) {
            if new_gamma != gamma {
                stalled = false;
            }
            gamma = new_gamma;
            state = new_state;
            halvings += used;
        }

        // Convergence check on the full score at the new point.
        let j1 = bound1.jacobian(beta.as_slice())?;
        let j2 = bound2.jacobian(gamma.as_slice())?;
        let u_beta = score_beta(&state, &j1);
        let u_gamma = score_gamma(&state, &j2);
        score_norm = u_beta
            .iter()
            .chain(u_gamma.iter())
            .fold(0.0f64, |acc, &v| acc.max(v.abs()));
        let delta_ll = (state.log_lik - ll_before).abs();

        trace.push(IterationRecord {
            iteration,
            log_lik: state.log_lik,
            score_norm,
            step_halvings: halvings,
        });

        if delta_ll < options.tol_loglik && score_norm < options.tol_score {
            converged = true;
            break;
        }
        if stalled {
            // No admissible ascent step exists in either block; further
            // iterations cannot move.
            break;
        }
    }

    let j1 = bound1.jacobian(beta.as_slice())?;
    let j2 = bound2.jacobian(gamma.as_slice())?;
    let n = y.len();
    let mut u1 = DVector::zeros(n);
    let eta_lin = &j1 * &beta;
    for t in 0..n {
        u1[t] = eta_lin[t]
            + state.t_scale[t] * (state.ystar[t] - state.mustar[t]) / state.w[t];
    }

    Ok(FitResult {
        model: model.clone(),
        y: y.to_vec(),
        log_lik: state.log_lik,
        beta_hat: beta,
        gamma_hat: gamma,
        state,
        j1,
        j2,
        u1,
        iterations,
        converged,
        score_norm,
        trace,
    })
}

/// Damped update of one parameter block: walk `t = 1, 1/2, 1/4, ...`
/// until the state is admissible and the log-likelihood does not drop.
/// Returns `None` when no admissible non-decreasing step was found.
#[allow(clippy::too_many_arguments)]
fn try_step(
    model: &ModelSpec,
    bound1: &BoundPredictor<'_>,
    bound2: &BoundPredictor<'_>,
    y: &[f64],
    beta: &DVector<f64>,
    gamma: &DVector<f64>,
    step: &DVector<f64>,
    mean_block: bool,
    ll_current: f64,
    max_halvings: usize,
) -> Option<(DVector<f64>, WorkingState, usize)> {
    // Accumulating n log-density terms leaves rounding noise of a few
    // ulps; without this slack the search halves microscopic steps
    // forever once the exact optimum is within rounding distance.
    let slack = 1e-11 * (1.0 + ll_current.abs());
    let mut scale = 1.0;
    for halvings in 0..=max_halvings {
        let candidate = if mean_block {
            beta + step * scale
        } else {
            gamma + step * scale
        };
        let (b, g) = if mean_block {
            (&candidate, gamma)
        } else {
            (beta, &candidate)
        };
        if let Ok(state) =
            WorkingState::compute_bound(model, bound1, bound2, y, b.as_slice(), g.as_slice())
        {
            if state.log_lik >= ll_current - slack {
                return Some((candidate, state, halvings));
            }
        }
        scale *= 0.5;
    }
    None
}

/// Starting values for `(beta, gamma)`.
///
/// The ladder, in order of preference:
///
/// 1. User anchors. Mean anchors are refined by nonlinear least squares
///    of `g(y)` on the mean predictor (which is a no-op for anchors that
///    already minimize it); precision anchors are taken as-is.
/// 2. For predictors linear in the parameters, least squares of `g(y)`
///    on the constant jacobian.
/// 3. For nonlinear mean predictors without anchors, least squares
///    refinement started from all-ones, then all-halves, then all-zeros,
///    first admissible wins.
/// 4. Without precision anchors, a moment estimate: the residual variance
///    of `g(y)` is mapped through the delta method to a common precision
///    `phi~`, and the starting point is `(h(phi~), 0, ..., 0)` (falling
///    back to `h(2)`, all-zeros, and all-ones candidates if that point is
///    inadmissible for the full state).
pub fn starting_values(
    model: &ModelSpec,
    data: &Dataset,
    mean_anchor: Option<&[f64]>,
    precision_anchor: Option<&[f64]>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let bound1 = model.mean.bind(data)?;
    let bound2 = model.precision.bind(data)?;
    let n = data.n();
    let k = model.k();
    let q = model.q();
    let g = model.mean_link;

    let mut z = DVector::zeros(n);
    for (t, &yt) in data.response().iter().enumerate() {
        z[t] = g.value(yt).expect("response validated on (0, 1)");
    }

    // Mean block.
    let beta = if let Some(anchor) = mean_anchor {
        if anchor.len() != k {
            return Err(Error::Model(format!(
                "mean_start has {} values, expected {}",
                anchor.len(),
                k
            )));
        }
        match least_squares_refine(&bound1, &z, anchor) {
            Ok(refined) => refined,
            // Keep the anchor itself when refinement cannot improve on it.
            Err(_) if bound1.eta(anchor).is_ok() => DVector::from_column_slice(anchor),
            Err(e) => {
                return Err(Error::NoAdmissibleStart(format!(
                    "mean anchor rejected: {e}"
                )))
            }
        }
    } else if model.mean.is_linear_in_params() {
        let j = bound1.jacobian(&vec![0.0; k])?;
        solve_least_squares(&j, &z)?
    } else {
        let candidates = [vec![1.0; k], vec![0.5; k], vec![0.0; k]];
        let mut found = None;
        for candidate in &candidates {
            if let Ok(refined) = least_squares_refine(&bound1, &z, candidate) {
                found = Some(refined);
                break;
            }
        }
        found.ok_or_else(|| {
            Error::NoAdmissibleStart(
                "nonlinear mean predictor needs mean_start anchors".into(),
            )
        })?
    };

    // Precision block.
    let gamma = if let Some(anchor) = precision_anchor {
        if anchor.len() != q {
            return Err(Error::Model(format!(
                "precision_start has {} values, expected {}",
                anchor.len(),
                q
            )));
        }
        DVector::from_column_slice(anchor)
    } else {
        let phi_tilde = moment_precision(model, &bound1, &z, &beta, n, k);
        let h = model.precision_link;
        let mut candidates: Vec<DVector<f64>> = Vec::new();
        if let Ok(eta0) = h.value(phi_tilde) {
            let mut c = DVector::zeros(q);
            c[0] = eta0;
            candidates.push(c);
        }
        let mut c = DVector::zeros(q);
        c[0] = h.value(2.0).expect("2 is in every precision-link domain");
        candidates.push(c);
        candidates.push(DVector::zeros(q));
        candidates.push(DVector::from_element(q, 1.0));

        let mut found = None;
        for candidate in candidates {
            let ok = WorkingState::compute_bound(
                model,
                &bound1,
                &bound2,
                data.response(),
                beta.as_slice(),
                candidate.as_slice(),
            )
            .is_ok();
            if ok {
                found = Some(candidate);
                break;
            }
        }
        found.ok_or_else(|| {
            Error::NoAdmissibleStart(
                "no admissible precision starting point; supply precision_start".into(),
            )
        })?
    };

    // The pair must be jointly admissible.
    WorkingState::compute_bound(
        model,
        &bound1,
        &bound2,
        data.response(),
        beta.as_slice(),
        gamma.as_slice(),
    )
    .map_err(|e| Error::NoAdmissibleStart(format!("{e}")))?;

    Ok((beta, gamma))
}

/// Moment estimate of a common precision from transformed-scale residuals:
/// `Var(g(y)) ~ sigma^2 = Var(y) g'(mu)^2` and `Var(y) = mu(1-mu)/(1+phi)`.
fn moment_precision(
    model: &ModelSpec,
    bound1: &BoundPredictor<'_>,
    z: &DVector<f64>,
    beta: &DVector<f64>,
    n: usize,
    k: usize,
) -> f64 {
    let fallback = 2.0;
    let Ok(eta) = bound1.eta(beta.as_slice()) else {
        return fallback;
    };
    let dof = (n.saturating_sub(k)).max(1) as f64;
    let sigma2 = (z - &eta).norm_squared() / dof;
    if sigma2 <= 0.0 {
        return fallback;
    }
    let g = model.mean_link;
    let mut total = 0.0;
    let mut count = 0usize;
    for t in 0..n {
        let Ok(mu) = g.inverse(eta[t]) else { continue };
        if !(mu > 0.0 && mu < 1.0) {
            continue;
        }
        let g_prime = g.deriv(mu).expect("mu in (0, 1)");
        let var_y = sigma2 / (g_prime * g_prime);
        let phi_t = mu * (1.0 - mu) / var_y - 1.0;
        if phi_t.is_finite() {
            total += phi_t;
            count += 1;
        }
    }
    if count == 0 {
        return fallback;
    }
    let phi = total / count as f64;
    if phi > 0.5 {
        phi
    } else {
        fallback
    }
}

/// Ordinary least squares via QR with a rank check.
fn solve_least_squares(j: &DMatrix<f64>, z: &DVector<f64>) -> Result<DVector<f64>> {
    let jtj = j.tr_mul(j);
    let jtz = j.tr_mul(z);
    solve_spd(&jtj, &jtz, "least-squares")
}

/// Damped Gauss-Newton minimization of `|| z - f(params) ||^2`.
fn least_squares_refine(
    bound: &BoundPredictor<'_>,
    z: &DVector<f64>,
    start: &[f64],
) -> Result<DVector<f64>> {
    let mut params = DVector::from_column_slice(start);
    let mut sse = residual_sse(bound, z, params.as_slice())?;
    for _ in 0..50 {
        let j = bound.jacobian(params.as_slice())?;
        let eta = bound.eta(params.as_slice())?;
        let r = z - eta;
        let step = solve_least_squares(&j, &r)?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = &params + &step * scale;
            if let Ok(candidate_sse) = residual_sse(bound, z, candidate.as_slice()) {
                if candidate_sse <= sse {
                    let improved = sse - candidate_sse > 1e-12 * (1.0 + sse);
                    params = candidate;
                    sse = candidate_sse;
                    accepted = true;
                    if !improved {
                        return Ok(params);
                    }
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(params)
}

fn residual_sse(bound: &BoundPredictor<'_>, z: &DVector<f64>, params: &[f64]) -> Result<f64> {
    let eta = bound.eta(params)?;
    Ok((z - eta).norm_squared())
}
