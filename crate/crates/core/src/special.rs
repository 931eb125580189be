//! Gamma-family special functions and the beta density.
//!
//! Everything here works on the mean/precision parameterization of the
//! beta distribution:
//!
//! ```text
//! f(y; mu, phi) = Gamma(phi) / (Gamma(mu*phi) * Gamma((1-mu)*phi))
//!                 * y^(mu*phi - 1) * (1 - y)^((1-mu)*phi - 1)
//! ```
//!
//! with `E(y) = mu` and `Var(y) = mu*(1-mu)/(1+phi)`, so `phi` acts as a
//! precision: larger `phi` means a tighter distribution around `mu`.
//!
//! `log_gamma`, `digamma`, and `trigamma` use upward recurrence to push
//! the argument past 10 and then a Bernoulli-series asymptotic expansion.
//! Absolute accuracy is a few ulps of the result; callers that need the
//! score and information of a beta likelihood get full double precision
//! for the argument ranges that occur there.

use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// ln(2*pi)/2, the constant term of Stirling's series.
const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_74;

/// Arguments at or above this are handled by the asymptotic series directly.
const ASYMPTOTIC_CUTOFF: f64 = 10.0;

/// B_{2k} / (2k * (2k - 1)) for k = 1..=8: coefficients of x^{1-2k} in
/// Stirling's series for ln Gamma.
const LN_GAMMA_SERIES: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// B_{2k} / (2k) for k = 1..=7: coefficients of x^{-2k} in the asymptotic
/// expansion of digamma.
const DIGAMMA_SERIES: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32_760.0,
    1.0 / 12.0,
];

/// B_{2k} for k = 1..=8: coefficients of x^{-2k-1} in the asymptotic
/// expansion of trigamma.
const TRIGAMMA_SERIES: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

fn check_positive(function: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            function,
            value: x,
            domain: "(0, inf)",
        })
    }
}

/// Natural log of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    check_positive("log_gamma", x)?;
    Ok(log_gamma_pos(x))
}

/// Digamma function `psi(x) = d/dx ln Gamma(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive("digamma", x)?;
    Ok(digamma_pos(x))
}

/// Trigamma function `psi'(x)` for `x > 0`.
pub fn trigamma(x: f64) -> Result<f64> {
    check_positive("trigamma", x)?;
    Ok(trigamma_pos(x))
}

/// `log_gamma` without the domain check, for callers that have already
/// established `x > 0`.
pub(crate) fn log_gamma_pos(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut shift = 0.0;
    let mut z = x;
    while z < ASYMPTOTIC_CUTOFF {
        shift += z.ln();
        z += 1.0;
    }
    let inv2 = (1.0 / z) * (1.0 / z);
    let mut series = 0.0;
    let mut power = 1.0 / z;
    for c in LN_GAMMA_SERIES {
        series += c * power;
        power *= inv2;
    }
    (z - 0.5) * z.ln() - z + HALF_LN_TWO_PI + series - shift
}

/// `digamma` without the domain check.
pub(crate) fn digamma_pos(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut shift = 0.0;
    let mut z = x;
    while z < ASYMPTOTIC_CUTOFF {
        shift += 1.0 / z;
        z += 1.0;
    }
    let inv2 = (1.0 / z) * (1.0 / z);
    let mut series = 0.0;
    let mut power = inv2;
    for c in DIGAMMA_SERIES {
        series += c * power;
        power *= inv2;
    }
    z.ln() - 0.5 / z - series - shift
}

/// `trigamma` without the domain check.
pub(crate) fn trigamma_pos(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut shift = 0.0;
    let mut z = x;
    while z < ASYMPTOTIC_CUTOFF {
        shift += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut series = 0.0;
    let mut power = inv2 * inv;
    for c in TRIGAMMA_SERIES {
        series += c * power;
        power *= inv2;
    }
    inv + 0.5 * inv2 + series + shift
}

/// Mean/precision parameters of a beta distribution, validated on
/// construction: `mu` strictly inside (0, 1) and `phi` strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    mu: f64,
    phi: f64,
}

impl BetaParams {
    pub fn new(mu: f64, phi: f64) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0) || !mu.is_finite() {
            return Err(Error::Domain {
                function: "BetaParams",
                value: mu,
                domain: "mu in (0, 1)",
            });
        }
        if !(phi > 0.0) || !phi.is_finite() {
            return Err(Error::Domain {
                function: "BetaParams",
                value: phi,
                domain: "phi in (0, inf)",
            });
        }
        Ok(BetaParams { mu, phi })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// First shape parameter `mu * phi` of the classical parameterization.
    pub fn shape_p(&self) -> f64 {
        self.mu * self.phi
    }

    /// Second shape parameter `(1 - mu) * phi`.
    pub fn shape_q(&self) -> f64 {
        (1.0 - self.mu) * self.phi
    }

    pub fn mean(&self) -> f64 {
        self.mu
    }

    pub fn variance(&self) -> f64 {
        self.mu * (1.0 - self.mu) / (1.0 + self.phi)
    }
}

/// Log of the beta density at `y` for the given mean/precision parameters.
///
/// Errors if `y` lies outside the open interval (0, 1).
pub fn beta_log_density(y: f64, params: &BetaParams) -> Result<f64> {
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::Domain {
            function: "beta_log_density",
            value: y,
            domain: "(0, 1)",
        });
    }
    let p = params.shape_p();
    let q = params.shape_q();
    Ok(log_gamma_pos(params.phi()) - log_gamma_pos(p) - log_gamma_pos(q)
        + (p - 1.0) * y.ln()
        + (q - 1.0) * (1.0 - y).ln())
}

/// Draw one beta variate as `G1 / (G1 + G2)` with independent gammas
/// `G1 ~ Gamma(mu*phi, 1)` and `G2 ~ Gamma((1-mu)*phi, 1)`.
///
/// Redraws in the (vanishingly rare) event that floating-point underflow
/// produces a value on the boundary, so the result is always strictly
/// inside (0, 1).
pub fn beta_sample<R: Rng + ?Sized>(params: &BetaParams, rng: &mut R) -> f64 {
    let g1 = Gamma::new(params.shape_p(), 1.0).expect("validated shape");
    let g2 = Gamma::new(params.shape_q(), 1.0).expect("validated shape");
    loop {
        let a = g1.sample(rng);
        let b = g2.sample(rng);
        let y = a / (a + b);
        if y > 0.0 && y < 1.0 {
            return y;
        }
    }
}
