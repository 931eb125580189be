//! Residuals, leverage, PRESS, and model-selection statistics.
//!
//! Everything here is a pure function of a [`FitResult`]. The central
//! object is the leave-one-out prediction error: at a converged fit the
//! estimator has the weighted least-squares representation
//!
//! ```text
//! beta_hat = (J1' Phi W J1)^{-1} J1' Phi W u1
//! ```
//!
//! so deleting observation t and predicting it back can be done with the
//! standard regression shortcut instead of n refits. The ordinary
//! residual of that regression, `sqrt(phi_t w_t) (u1_t - j1_t' beta)`,
//! collapses algebraically to the weighted residual
//! `r1_t = (y*_t - mu*_t) / sqrt(v_t)`, giving
//!
//! ```text
//! PRESS = sum_t ( r1_t / (1 - h_tt) )^2
//! ```
//!
//! with `h_tt` the diagonal of the projection matrix
//! `H = S J1 (J1' Phi W J1)^{-1} J1' S`, `S = diag{sqrt(phi_t w_t)}`.
//! The same shortcut applied to the combined residual (which also picks
//! up the precision-submodel contribution through `a_t`) yields
//! `PRESS_bg`. Normalizing by a deletion-adjusted total sum of squares
//! (computed from the working response on the predictor scale,
//! `eta_t + (y*_t - mu*_t) / (g'(mu_t) w_t)`, weighted like the
//! regression above) turns these into the prediction coefficients `P2`
//! and `P2_bg`;
//! likelihood and correlation based goodness-of-fit measures (`R2_LR`,
//! `R2_FC`) and their degree-of-freedom penalized variants round out the
//! report.

use std::io::Write;

use crate::estimation::FitResult;
use crate::special::trigamma_pos;
use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

/// Penalty exponent weights for `R2_LR_c`: the mean-submodel covariate
/// count enters with weight `1 + ALPHA`, the precision count with
/// `1 - ALPHA`.
const ALPHA: f64 = 0.4;
/// Exponent on the degrees-of-freedom ratio in `R2_LR_c`.
const DELTA: f64 = 1.0;

/// Leverages this close to 1 make the deletion shortcut meaningless.
const UNIT_LEVERAGE_TOL: f64 = 1e-12;

/// Weighted residual `r1_t = (y*_t - mu*_t) / sqrt(v_t)` for one
/// observation (0-based index).
pub fn weighted_residual_1(fit: &FitResult, t: usize) -> f64 {
    let state = fit.state();
    (state.ystar[t] - state.mustar[t]) / state.v[t].sqrt()
}

/// All weighted residuals.
pub fn weighted_residuals(fit: &FitResult) -> DVector<f64> {
    DVector::from_fn(fit.n(), |t, _| weighted_residual_1(fit, t))
}

/// Variance of the combined-residual numerator,
/// `zeta = (1+mu)^2 psi'(mu phi) + mu^2 psi'((1-mu) phi) - psi'(phi)`.
fn zeta(mu: f64, phi: f64) -> f64 {
    let tri_p = trigamma_pos(mu * phi);
    let tri_q = trigamma_pos((1.0 - mu) * phi);
    (1.0 + mu) * (1.0 + mu) * tri_p + mu * mu * tri_q - trigamma_pos(phi)
}

/// Combined residual `r2_t = ((y*_t - mu*_t) + a_t) / sqrt(zeta_t)`,
/// which is sensitive to misspecification in either submodel.
pub fn combined_residual(fit: &FitResult, t: usize) -> Result<f64> {
    let state = fit.state();
    let z = zeta(state.mu[t], state.phi[t]);
    if !(z > 0.0) {
        return Err(Error::NonpositiveZeta { row: t });
    }
    Ok(((state.ystar[t] - state.mustar[t]) + state.a[t]) / z.sqrt())
}

/// All combined residuals.
pub fn combined_residuals(fit: &FitResult) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(fit.n());
    for t in 0..fit.n() {
        out[t] = combined_residual(fit, t)?;
    }
    Ok(out)
}

/// Scaled mean jacobian `S J1` with `S = diag{sqrt(phi_t w_t)}`, the
/// design matrix of the converged weighted least-squares problem.
fn scaled_design(fit: &FitResult) -> DMatrix<f64> {
    let state = fit.state();
    let mut design = fit.jacobian_mean().clone();
    for t in 0..design.nrows() {
        let s = (state.phi[t] * state.w[t]).sqrt();
        for j in 0..design.ncols() {
            design[(t, j)] *= s;
        }
    }
    design
}

fn mean_block_cholesky(design: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    design
        .tr_mul(design)
        .cholesky()
        .ok_or(Error::SingularInformation { block: "beta" })
}

/// Diagonal of the projection matrix
/// `H = S J1 (J1' Phi W J1)^{-1} J1' S`; each value lies in [0, 1] and
/// they sum to the mean-parameter count.
pub fn leverage(fit: &FitResult) -> Result<DVector<f64>> {
    let design = scaled_design(fit);
    let chol = mean_block_cholesky(&design)?;
    let mut h = DVector::zeros(fit.n());
    for t in 0..fit.n() {
        let row = design.row(t).transpose();
        h[t] = row.dot(&chol.solve(&row));
    }
    Ok(h)
}

/// One-step approximation to the mean-parameter estimate with
/// observation `t` deleted:
/// `beta_(t) = beta - (J1' Phi W J1)^{-1} j1_t sqrt(phi_t w_t) r1_t / (1 - h_tt)`.
pub fn one_step_deleted_beta(fit: &FitResult, t: usize) -> Result<DVector<f64>> {
    let design = scaled_design(fit);
    let chol = mean_block_cholesky(&design)?;
    let row = design.row(t).transpose();
    let h_tt = row.dot(&chol.solve(&row));
    if 1.0 - h_tt <= UNIT_LEVERAGE_TOL {
        return Err(Error::UnitLeverage { row: t });
    }
    let r = weighted_residual_1(fit, t);
    let correction = chol.solve(&row) * (r / (1.0 - h_tt));
    Ok(fit.beta_hat() - correction)
}

fn press_from_residuals(
    residuals: &DVector<f64>,
    leverages: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    let n = residuals.len();
    let mut components = DVector::zeros(n);
    for t in 0..n {
        let denom = 1.0 - leverages[t];
        if denom <= UNIT_LEVERAGE_TOL {
            return Err(Error::UnitLeverage { row: t });
        }
        let e = residuals[t] / denom;
        components[t] = e * e;
    }
    Ok((components.sum(), components))
}

/// PRESS and its per-observation components `(r1_t / (1 - h_tt))^2`.
pub fn press(fit: &FitResult) -> Result<(f64, DVector<f64>)> {
    press_from_residuals(&weighted_residuals(fit), &leverage(fit)?)
}

/// PRESS built on the combined residual, plus components.
pub fn press_combined(fit: &FitResult) -> Result<(f64, DVector<f64>)> {
    press_from_residuals(&combined_residuals(fit)?, &leverage(fit)?)
}

/// Deletion-adjusted total sum of squares of the scaled working
/// response `y_chk_t = sqrt(phi_t w_t) u1_t`:
/// `SST_del = (n / (n - p))^2 sum (y_chk_t - mean)^2`, `p = k + q`.
pub fn sst_deleted(fit: &FitResult) -> f64 {
    let state = fit.state();
    let n = fit.n();
    // Working response on the predictor scale. For a linear predictor
    // this equals the least-squares working response J1 beta_hat +
    // W^{-1} T (y* - mu*); for a nonlinear one, eta_hat keeps the
    // response-scale spread that J1 beta_hat would distort.
    let mut ycheck = DVector::zeros(n);
    for t in 0..n {
        let u1 = state.eta1[t]
            + state.t_scale[t] * (state.ystar[t] - state.mustar[t]) / state.w[t];
        ycheck[t] = (state.phi[t] * state.w[t]).sqrt() * u1;
    }
    let mean = ycheck.mean();
    let sst: f64 = ycheck.iter().map(|&v| (v - mean) * (v - mean)).sum();
    let p = (fit.model().k() + fit.model().q()) as f64;
    let scale = n as f64 / (n as f64 - p);
    scale * scale * sst
}

/// Shrink a coefficient toward 0 by the covariate-count degrees of
/// freedom: `1 - (1 - value) (n-1) / (n - covariates)`.
fn penalize(value: f64, n: usize, covariates: usize) -> f64 {
    1.0 - (1.0 - value) * (n as f64 - 1.0) / (n as f64 - covariates as f64)
}

/// Prediction coefficients built on PRESS.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct P2Family {
    /// `P2 = 1 - PRESS / SST_del`.
    pub p2: f64,
    /// `P2` penalized by the covariate counts of both submodels.
    pub p2_c: f64,
    /// `P2` built on the combined residual.
    pub p2_bg: f64,
    pub p2_bg_c: f64,
}

/// Compute all four prediction coefficients.
pub fn p2_family(fit: &FitResult) -> Result<P2Family> {
    let sst = sst_deleted(fit);
    if sst <= 0.0 {
        return Err(Error::ZeroSst);
    }
    let (press_total, _) = press(fit)?;
    let (press_bg_total, _) = press_combined(fit)?;
    let n = fit.n();
    let covariates = fit.model().k1() + fit.model().q1();
    let p2 = 1.0 - press_total / sst;
    let p2_bg = 1.0 - press_bg_total / sst;
    Ok(P2Family {
        p2,
        p2_c: penalize(p2, n, covariates),
        p2_bg,
        p2_bg_c: penalize(p2_bg, n, covariates),
    })
}

/// Goodness-of-fit coefficients.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct R2Family {
    /// Squared sample correlation between `g(y)` and the fitted mean
    /// predictor.
    pub r2_fc: f64,
    pub r2_fc_c: f64,
    /// Likelihood-ratio coefficient
    /// `1 - (L_null / L_fit)^{2/n}` against the intercept-only model.
    pub r2_lr: f64,
    pub r2_lr_c: f64,
}

/// Compute all four goodness-of-fit coefficients. `null_fit` must be the
/// intercept-only model fitted to the same data.
pub fn r2_family(fit: &FitResult, null_fit: &FitResult) -> Result<R2Family> {
    if null_fit.n() != fit.n() || null_fit.response() != fit.response() {
        return Err(Error::Model(
            "null fit was not computed on the same data".into(),
        ));
    }
    let n = fit.n() as f64;
    let g = fit.model().mean_link();
    let eta = &fit.state().eta1;
    let mut z = DVector::zeros(fit.n());
    for (t, &yt) in fit.response().iter().enumerate() {
        z[t] = g.value(yt).expect("response validated on (0, 1)");
    }
    let r2_fc = squared_correlation(&z, eta);
    let r2_lr = 1.0 - ((2.0 / n) * (null_fit.log_lik() - fit.log_lik())).exp();

    let k1 = fit.model().k1() as f64;
    let q1 = fit.model().q1() as f64;
    let ratio = (n - 1.0) / (n - (1.0 + ALPHA) * k1 - (1.0 - ALPHA) * q1);
    let r2_lr_c = 1.0 - (1.0 - r2_lr) * ratio.powf(DELTA);

    Ok(R2Family {
        r2_fc,
        r2_fc_c: penalize(r2_fc, fit.n(), fit.model().k1() + fit.model().q1()),
        r2_lr,
        r2_lr_c,
    })
}

fn squared_correlation(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let am = a.mean();
    let bm = b.mean();
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for t in 0..a.len() {
        let da = a[t] - am;
        let db = b[t] - bm;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab * sab) / (saa * sbb)
}

/// Intensity of nonconstant dispersion, `lambda = max phi_t / min phi_t`.
pub fn lambda_intensity(fit: &FitResult) -> f64 {
    let phi = fit.phi_hat();
    phi.max() / phi.min()
}

/// One observation of the PRESS plot: its combined-PRESS component
/// against the common threshold `3 sum(components) / n`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PressPlotRow {
    /// 1-based observation number.
    pub t: usize,
    pub component: f64,
    pub threshold: f64,
    pub flagged: bool,
}

fn flag_components(components: &[f64]) -> (f64, Vec<bool>) {
    let n = components.len() as f64;
    let threshold = 3.0 * components.iter().sum::<f64>() / n;
    let flagged = components.iter().map(|&c| c > threshold).collect();
    (threshold, flagged)
}

/// Combined-PRESS components with the `3 x mean` influence threshold.
pub fn press_plot_data(fit: &FitResult) -> Result<Vec<PressPlotRow>> {
    let (_, components) = press_combined(fit)?;
    let (threshold, flagged) = flag_components(components.as_slice());
    Ok(components
        .iter()
        .enumerate()
        .map(|(i, &component)| PressPlotRow {
            t: i + 1,
            component,
            threshold,
            flagged: flagged[i],
        })
        .collect())
}

/// Every diagnostic for one fit, ready to serialize as a flat JSON
/// object or a per-observation CSV.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub n: usize,
    /// Covariates in the mean submodel (intercept excluded).
    pub k1: usize,
    /// Covariates in the precision submodel.
    pub q1: usize,
    /// Total parameter count `k + q`.
    pub p: usize,
    pub y: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub phi_hat: Vec<f64>,
    pub r_beta: Vec<f64>,
    pub r_beta_gamma: Vec<f64>,
    pub leverage: Vec<f64>,
    pub press_components: Vec<f64>,
    pub press_bg_components: Vec<f64>,
    pub press: f64,
    pub press_bg: f64,
    pub sst_deleted: f64,
    pub p2: f64,
    pub p2_c: f64,
    pub p2_bg: f64,
    pub p2_bg_c: f64,
    pub r2_fc: f64,
    pub r2_fc_c: f64,
    pub r2_lr: f64,
    pub r2_lr_c: f64,
    pub lambda: f64,
    pub press_plot_threshold: f64,
    pub flagged: Vec<bool>,
}

impl DiagnosticsReport {
    /// Assemble the full report. `null_fit` must be the intercept-only
    /// model fitted to the same data.
    pub fn compute(fit: &FitResult, null_fit: &FitResult) -> Result<DiagnosticsReport> {
        let r_beta = weighted_residuals(fit);
        let r_beta_gamma = combined_residuals(fit)?;
        let lev = leverage(fit)?;
        let (press_total, press_components) = press_from_residuals(&r_beta, &lev)?;
        let (press_bg_total, press_bg_components) = press_from_residuals(&r_beta_gamma, &lev)?;
        let p2 = p2_family(fit)?;
        let r2 = r2_family(fit, null_fit)?;
        let (threshold, flagged) = flag_components(press_bg_components.as_slice());
        Ok(DiagnosticsReport {
            n: fit.n(),
            k1: fit.model().k1(),
            q1: fit.model().q1(),
            p: fit.model().k() + fit.model().q(),
            y: fit.response().to_vec(),
            mu_hat: fit.mu_hat().iter().copied().collect(),
            phi_hat: fit.phi_hat().iter().copied().collect(),
            r_beta: r_beta.iter().copied().collect(),
            r_beta_gamma: r_beta_gamma.iter().copied().collect(),
            leverage: lev.iter().copied().collect(),
            press_components: press_components.iter().copied().collect(),
            press_bg_components: press_bg_components.iter().copied().collect(),
            press: press_total,
            press_bg: press_bg_total,
            sst_deleted: sst_deleted(fit),
            p2: p2.p2,
            p2_c: p2.p2_c,
            p2_bg: p2.p2_bg,
            p2_bg_c: p2.p2_bg_c,
            r2_fc: r2.r2_fc,
            r2_fc_c: r2.r2_fc_c,
            r2_lr: r2.r2_lr,
            r2_lr_c: r2.r2_lr_c,
            lambda: lambda_intensity(fit),
            press_plot_threshold: threshold,
            flagged,
        })
    }

    /// Write the per-observation table. Observation numbers are 1-based.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record([
            "t",
            "y",
            "mu_hat",
            "phi_hat",
            "r_beta",
            "r_beta_gamma",
            "leverage",
            "press_component",
            "press_bg_component",
            "flagged",
        ])?;
        for t in 0..self.n {
            out.write_record([
                (t + 1).to_string(),
                format_full(self.y[t]),
                format_full(self.mu_hat[t]),
                format_full(self.phi_hat[t]),
                format_full(self.r_beta[t]),
                format_full(self.r_beta_gamma[t]),
                format_full(self.leverage[t]),
                format_full(self.press_components[t]),
                format_full(self.press_bg_components[t]),
                self.flagged[t].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn format_full(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::estimation::{fit, FitOptions, WorkingState};
    use crate::special::digamma;
    use crate::test_support::{model_from, simulate};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn fitted(n: usize, seed: u64) -> crate::estimation::FitResult {
        let data = simulate(n, &[-0.8, 1.5], &[3.5, 1.2], seed);
        let model = model_from("b1 + b2*x1", "g1 + g2*z1", &["x1", "z1"]);
        fit(&model, &data, &FitOptions::default()).unwrap()
    }

    #[test]
    fn zeta_closed_form_at_half_and_two() {
        // (1.5)^2 psi'(1) + 0.25 psi'(1) - psi'(2)
        //   = 2.5 (pi^2/6) - (pi^2/6 - 1) = pi^2/4 + 1.
        let expected = PI * PI / 4.0 + 1.0;
        assert_relative_eq!(zeta(0.5, 2.0), expected, epsilon = 1e-12);
    }

    #[test]
    fn residuals_vanish_when_ystar_matches_mustar() {
        // Build data whose logit response equals mu* exactly at known
        // parameters, then evaluate the state there directly.
        let mu = 0.37f64;
        let phi = 11.0f64;
        let mustar = digamma(mu * phi).unwrap() - digamma((1.0 - mu) * phi).unwrap();
        let y = 1.0 / (1.0 + (-mustar).exp());
        let data = Dataset::new("y", vec![y, 0.5, 0.4], vec![]).unwrap();
        let model = model_from("b1", "g1", &[]);
        let state =
            WorkingState::compute(&model, &data, &[mu.ln() - (1.0 - mu).ln()], &[phi.ln()])
                .unwrap();
        assert_relative_eq!(state.ystar[0], state.mustar[0], epsilon = 1e-12);
        // The combined-residual numerator loses its first term.
        let reduced = (1.0 - y).ln() - digamma((1.0 - mu) * phi).unwrap() + digamma(phi).unwrap();
        assert_relative_eq!(state.a[0], reduced, epsilon = 1e-12);
    }

    #[test]
    fn residuals_match_direct_recomputation() {
        let fit = fitted(35, 101);
        let state = fit.state();
        for t in 0..fit.n() {
            let mu = state.mu[t];
            let phi = state.phi[t];
            let y = fit.response()[t];
            let ystar = (y / (1.0 - y)).ln();
            let mustar =
                digamma(mu * phi).unwrap() - digamma((1.0 - mu) * phi).unwrap();
            let v = crate::special::trigamma(mu * phi).unwrap()
                + crate::special::trigamma((1.0 - mu) * phi).unwrap();
            assert_relative_eq!(
                weighted_residual_1(&fit, t),
                (ystar - mustar) / v.sqrt(),
                epsilon = 1e-10
            );
            let a = mu * (ystar - mustar) + (1.0 - y).ln()
                - digamma((1.0 - mu) * phi).unwrap()
                + digamma(phi).unwrap();
            let z = (1.0 + mu) * (1.0 + mu) * crate::special::trigamma(mu * phi).unwrap()
                + mu * mu * crate::special::trigamma((1.0 - mu) * phi).unwrap()
                - crate::special::trigamma(phi).unwrap();
            assert_relative_eq!(
                combined_residual(&fit, t).unwrap(),
                ((ystar - mustar) + a) / z.sqrt(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn weighted_residuals_have_unit_variance_when_well_specified() {
        let data = simulate(400, &[-0.8, 1.5], &[150.0f64.ln(), 0.0], 103);
        let model = model_from("b1 + b2*x1", "g1", &["x1", "z1"]);
        let fit = fit(&model, &data, &FitOptions::default()).unwrap();
        let r = weighted_residuals(&fit);
        let var = r.iter().map(|&v| v * v).sum::<f64>() / r.len() as f64;
        assert!((var - 1.0).abs() < 0.1, "residual variance {var}");
    }

    #[test]
    fn leverage_sums_to_parameter_count_and_projects() {
        let fit = fitted(40, 107);
        let h = leverage(&fit).unwrap();
        assert_relative_eq!(h.sum(), 2.0, epsilon = 1e-10);
        for t in 0..fit.n() {
            assert!(h[t] >= 0.0 && h[t] <= 1.0);
        }
        // Idempotence of the full projection matrix.
        let design = scaled_design(&fit);
        let chol = mean_block_cholesky(&design).unwrap();
        let inv = chol.inverse();
        let full = &design * inv * design.transpose();
        let diff = (&full * &full) - &full;
        assert!(diff.abs().max() <= 1e-8);
        for t in 0..fit.n() {
            assert_relative_eq!(full[(t, t)], h[t], epsilon = 1e-10);
        }
    }

    #[test]
    fn intercept_only_leverage_is_weight_share() {
        let data = simulate(25, &[0.4, 0.0], &[3.0, 0.8], 109);
        let model = model_from("b1", "g1 + g2*z1", &["x1", "z1"]);
        let fit = fit(&model, &data, &FitOptions::default()).unwrap();
        let h = leverage(&fit).unwrap();
        let state = fit.state();
        let total: f64 = (0..fit.n()).map(|t| state.phi[t] * state.w[t]).sum();
        for t in 0..fit.n() {
            assert_relative_eq!(h[t], state.phi[t] * state.w[t] / total, epsilon = 1e-10);
        }
    }

    #[test]
    fn one_step_deletion_matches_press_identity() {
        // The shortcut is exact: the weighted prediction error of the
        // deleted observation equals r1_t / (1 - h_tt).
        let fit = fitted(30, 113);
        let h = leverage(&fit).unwrap();
        let state = fit.state();
        for t in 0..fit.n() {
            let beta_del = one_step_deleted_beta(&fit, t).unwrap();
            let j1t = fit.jacobian_mean().row(t).transpose();
            let scale = (state.phi[t] * state.w[t]).sqrt();
            let pred_error = scale * (fit.working_response()[t] - j1t.dot(&beta_del));
            let expected = weighted_residual_1(&fit, t) / (1.0 - h[t]);
            assert_relative_eq!(pred_error, expected, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn press_components_are_squared_scaled_residuals() {
        let fit = fitted(30, 127);
        let (total, components) = press(&fit).unwrap();
        let h = leverage(&fit).unwrap();
        let mut direct_total = 0.0;
        for t in 0..fit.n() {
            let e = weighted_residual_1(&fit, t) / (1.0 - h[t]);
            assert_relative_eq!(components[t], e * e, epsilon = 1e-12);
            direct_total += e * e;
        }
        assert_relative_eq!(total, direct_total, epsilon = 1e-12);
        assert!(total >= 0.0);
        let (total_bg, components_bg) = press_combined(&fit).unwrap();
        for t in 0..fit.n() {
            let e = combined_residual(&fit, t).unwrap() / (1.0 - h[t]);
            assert_relative_eq!(components_bg[t], e * e, epsilon = 1e-12);
        }
        assert!(total_bg >= 0.0);
    }

    #[test]
    fn sst_deleted_matches_direct_computation() {
        let fit = fitted(42, 131);
        let state = fit.state();
        let scale = (42.0f64 / 38.0).powi(2);
        assert_relative_eq!(scale, 1.2216066481994459, epsilon = 1e-12);
        let ycheck: Vec<f64> = (0..fit.n())
            .map(|t| {
                let u1 = state.eta1[t]
                    + state.t_scale[t] * (state.ystar[t] - state.mustar[t]) / state.w[t];
                (state.phi[t] * state.w[t]).sqrt() * u1
            })
            .collect();
        let mean = ycheck.iter().sum::<f64>() / 42.0;
        let sst: f64 = ycheck.iter().map(|v| (v - mean) * (v - mean)).sum();
        assert_relative_eq!(sst_deleted(&fit), scale * sst, epsilon = 1e-12);
        // For a linear predictor the same value comes from the
        // least-squares working response.
        let ls: Vec<f64> = (0..fit.n())
            .map(|t| (state.phi[t] * state.w[t]).sqrt() * fit.working_response()[t])
            .collect();
        let ls_mean = ls.iter().sum::<f64>() / 42.0;
        let ls_sst: f64 = ls.iter().map(|v| (v - ls_mean) * (v - ls_mean)).sum();
        assert_relative_eq!(sst_deleted(&fit), scale * ls_sst, epsilon = 1e-8);
    }

    #[test]
    fn penalization_arithmetic() {
        // P2 = 0.75 at n = 41 with 5 covariates total.
        assert_relative_eq!(
            penalize(0.75, 41, 5),
            1.0 - 0.25 * 40.0 / 36.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(penalize(0.75, 41, 5), 0.7222222222222222, epsilon = 1e-12);
    }

    #[test]
    fn p2_family_is_consistent_with_parts() {
        let fit = fitted(60, 137);
        let family = p2_family(&fit).unwrap();
        let sst = sst_deleted(&fit);
        let (press_total, _) = press(&fit).unwrap();
        assert_relative_eq!(family.p2, 1.0 - press_total / sst, epsilon = 1e-12);
        assert!(family.p2 <= 1.0);
        assert!(family.p2_bg <= 1.0);
        // Penalization shrinks whenever the coefficient is below 1.
        assert!(family.p2_c < family.p2);
        assert!(family.p2_bg_c < family.p2_bg);
        assert_relative_eq!(
            family.p2_c,
            penalize(family.p2, fit.n(), 2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn r2_family_values_and_null_reference() {
        let data = simulate(80, &[-0.8, 1.5], &[3.5, 1.2], 139);
        let model = model_from("b1 + b2*x1", "g1 + g2*z1", &["x1", "z1"]);
        let full = fit(&model, &data, &FitOptions::default()).unwrap();
        let null = fit(&model.null_spec(), &data, &FitOptions::default()).unwrap();
        let r2 = r2_family(&full, &null).unwrap();
        assert!(r2.r2_fc >= 0.0 && r2.r2_fc <= 1.0);
        assert!(r2.r2_lr > 0.0 && r2.r2_lr < 1.0);
        // The null model against itself gives exactly zero.
        let self_r2 = r2_family(&null, &null).unwrap();
        assert_relative_eq!(self_r2.r2_lr, 0.0, epsilon = 1e-12);
        // Direct recomputation of the likelihood-ratio form.
        let direct =
            1.0 - ((2.0 / 80.0) * (null.log_lik() - full.log_lik())).exp();
        assert_relative_eq!(r2.r2_lr, direct, epsilon = 1e-12);
        // Penalized variant uses the alpha-weighted covariate counts.
        let ratio = 79.0 / (80.0 - 1.4 * 1.0 - 0.6 * 1.0);
        assert_relative_eq!(
            r2.r2_lr_c,
            1.0 - (1.0 - r2.r2_lr) * ratio,
            epsilon = 1e-12
        );
        // Correlation form of R2_FC.
        let g = full.model().mean_link();
        let z = DVector::from_iterator(
            80,
            data.response().iter().map(|&y| g.value(y).unwrap()),
        );
        assert_relative_eq!(
            r2.r2_fc,
            squared_correlation(&z, &full.state().eta1),
            epsilon = 1e-12
        );
    }

    #[test]
    fn adding_an_irrelevant_covariate_never_decreases_r2_lr() {
        let data = simulate(120, &[-0.8, 1.5], &[3.5], 149);
        let small = model_from("b1 + b2*x1", "g1", &["x1", "z1"]);
        let big = model_from("b1 + b2*x1 + b3*z1", "g1", &["x1", "z1"]);
        let null = fit(&small.null_spec(), &data, &FitOptions::default()).unwrap();
        let f_small = fit(&small, &data, &FitOptions::default()).unwrap();
        let f_big = fit(&big, &data, &FitOptions::default()).unwrap();
        let r_small = r2_family(&f_small, &null).unwrap();
        let r_big = r2_family(&f_big, &null).unwrap();
        assert!(r_big.r2_lr >= r_small.r2_lr - 1e-10);
    }

    #[test]
    fn lambda_is_max_over_min() {
        let fit = fitted(50, 151);
        let phi = fit.phi_hat();
        assert_relative_eq!(
            lambda_intensity(&fit),
            phi.max() / phi.min(),
            epsilon = 1e-12
        );
        assert!(lambda_intensity(&fit) >= 1.0);

        let data = simulate(50, &[-0.8, 1.5], &[3.5], 151);
        let model = model_from("b1 + b2*x1", "g1", &["x1", "z1"]);
        let constant = crate::estimation::fit(&model, &data, &FitOptions::default()).unwrap();
        assert_relative_eq!(lambda_intensity(&constant), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn press_plot_flags_only_large_components() {
        let (threshold, flags) = flag_components(&[1.0; 20]);
        assert_relative_eq!(threshold, 3.0, epsilon = 1e-15);
        assert!(flags.iter().all(|&f| !f));

        let mut components = vec![1.0; 19];
        components.push(10.0 * 29.0 / 20.0);
        let (threshold, flags) = flag_components(&components);
        assert!(flags[19]);
        assert_eq!(flags.iter().filter(|&&f| f).count(), 1);
        assert!(components[19] > threshold);

        let fit = fitted(40, 157);
        let rows = press_plot_data(&fit).unwrap();
        assert_eq!(rows.len(), 40);
        assert_eq!(rows[0].t, 1);
        for row in &rows {
            assert_eq!(row.flagged, row.component > row.threshold);
        }
    }

    #[test]
    fn nonlinear_sst_departs_from_least_squares_snapshot() {
        // With a nonlinear mean predictor the predictor-scale working
        // response eta + T(y* - mu*)/w and the least-squares snapshot
        // J1 beta_hat + W^{-1} T (y* - mu*) genuinely differ, and SST
        // follows the former.
        let data = simulate(60, &[-0.3, 0.9], &[2.5], 77);
        let model = model_from("b1 + x1^b2", "g1", &["x1"]);
        let fit = crate::estimation::fit(&model, &data, &Default::default()).unwrap();
        assert!(fit.converged());
        let state = fit.state();
        let weighted = |u1: &dyn Fn(usize) -> f64| -> f64 {
            let ycheck: Vec<f64> = (0..fit.n())
                .map(|t| (state.phi[t] * state.w[t]).sqrt() * u1(t))
                .collect();
            let mean = ycheck.iter().sum::<f64>() / fit.n() as f64;
            let raw: f64 = ycheck.iter().map(|v| (v - mean) * (v - mean)).sum();
            (fit.n() as f64 / (fit.n() as f64 - 3.0)).powi(2) * raw
        };
        let from_eta = weighted(&|t| {
            state.eta1[t] + state.t_scale[t] * (state.ystar[t] - state.mustar[t]) / state.w[t]
        });
        let from_snapshot = weighted(&|t| fit.working_response()[t]);
        assert_relative_eq!(sst_deleted(&fit), from_eta, epsilon = 1e-10);
        assert!((from_eta - from_snapshot).abs() > 1e-6 * from_eta.abs());
    }

    #[test]
    fn report_serializes_to_flat_json_and_csv() {
        let data = simulate(25, &[-0.8, 1.5], &[3.5, 1.2], 163);
        let model = model_from("b1 + b2*x1", "g1 + g2*z1", &["x1", "z1"]);
        let full = fit(&model, &data, &FitOptions::default()).unwrap();
        let null = fit(&model.null_spec(), &data, &FitOptions::default()).unwrap();
        let report = DiagnosticsReport::compute(&full, &null).unwrap();

        let json: serde_json::Value = serde_json::to_value(&report).unwrap();
        let object = json.as_object().unwrap();
        for key in [
            "press", "press_bg", "sst_deleted", "p2", "p2_c", "p2_bg", "p2_bg_c",
            "r2_fc", "r2_fc_c", "r2_lr", "r2_lr_c", "lambda", "k1", "q1", "p",
            "r_beta", "r_beta_gamma", "leverage",
        ] {
            assert!(object.contains_key(key), "missing {key}");
        }
        assert_eq!(object["p"], 4);
        assert_eq!(object["k1"], 1);
        assert_eq!(object["q1"], 1);

        let mut csv_bytes = Vec::new();
        report.write_csv(&mut csv_bytes).unwrap();
        let text = String::from_utf8(csv_bytes).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,y,mu_hat,phi_hat,r_beta,r_beta_gamma,leverage,press_component,press_bg_component,flagged"
        );
        assert_eq!(lines.count(), 25);
        assert!(text.contains("\ntrue") || text.contains(",false"));
    }
}
