//! Link functions for the mean and precision submodels.
//!
//! A link maps a constrained parameter to the unconstrained predictor
//! scale: `eta = g(mu)` or `eta = h(phi)`. Fisher scoring needs the link,
//! its inverse, and its first derivative; all three are exposed per
//! [`LinkKind`].
//!
//! Mean links must map (0, 1) onto the real line and stay strictly
//! increasing there; `logit` and `loglog` qualify. Precision links act on
//! (0, inf); `log`, `sqrt`, and `identity` qualify. [`LinkKind::valid_for_mean`]
//! and [`LinkKind::valid_for_precision`] encode those restrictions, which
//! model construction enforces.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Supported link functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    /// `g(x) = log(x / (1 - x))` on (0, 1).
    Logit,
    /// `g(x) = -log(-log(x))` on (0, 1). Useful when the mean sits close
    /// to 1, where it spreads values out more than the logit does.
    LogLog,
    /// `h(x) = log(x)` on (0, inf).
    Log,
    /// `h(x) = sqrt(x)` on (0, inf).
    Sqrt,
    /// `h(x) = x` on (0, inf).
    Identity,
}

impl LinkKind {
    /// All links, in declaration order.
    pub const ALL: [LinkKind; 5] = [
        LinkKind::Logit,
        LinkKind::LogLog,
        LinkKind::Log,
        LinkKind::Sqrt,
        LinkKind::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LinkKind::Logit => "logit",
            LinkKind::LogLog => "loglog",
            LinkKind::Log => "log",
            LinkKind::Sqrt => "sqrt",
            LinkKind::Identity => "identity",
        }
    }

    /// Whether this link is admissible for the mean submodel.
    pub fn valid_for_mean(self) -> bool {
        matches!(self, LinkKind::Logit | LinkKind::LogLog)
    }

    /// Whether this link is admissible for the precision submodel.
    pub fn valid_for_precision(self) -> bool {
        matches!(self, LinkKind::Log | LinkKind::Sqrt | LinkKind::Identity)
    }

    fn domain(self) -> &'static str {
        match self {
            LinkKind::Logit | LinkKind::LogLog => "(0, 1)",
            LinkKind::Log | LinkKind::Sqrt | LinkKind::Identity => "(0, inf)",
        }
    }

    fn in_domain(self, x: f64) -> bool {
        if !x.is_finite() {
            return false;
        }
        match self {
            LinkKind::Logit | LinkKind::LogLog => x > 0.0 && x < 1.0,
            LinkKind::Log | LinkKind::Sqrt | LinkKind::Identity => x > 0.0,
        }
    }

    /// Link value `g(x)`.
    pub fn value(self, x: f64) -> Result<f64> {
        if !self.in_domain(x) {
            return Err(Error::Domain {
                function: "link value",
                value: x,
                domain: self.domain(),
            });
        }
        Ok(match self {
            LinkKind::Logit => (x / (1.0 - x)).ln(),
            LinkKind::LogLog => -(-x.ln()).ln(),
            LinkKind::Log => x.ln(),
            LinkKind::Sqrt => x.sqrt(),
            LinkKind::Identity => x,
        })
    }

    /// Inverse link `g^{-1}(eta)`.
    ///
    /// Errors when `eta` lies outside the image of the link (e.g. a
    /// nonpositive `eta` under the `sqrt` or `identity` link). Values of
    /// `eta` extreme enough to saturate in floating point return the
    /// boundary value; admissibility checks downstream reject those.
    pub fn inverse(self, eta: f64) -> Result<f64> {
        if !eta.is_finite() {
            return Err(Error::Domain {
                function: "link inverse",
                value: eta,
                domain: "finite eta",
            });
        }
        match self {
            LinkKind::Logit => Ok(1.0 / (1.0 + (-eta).exp())),
            LinkKind::LogLog => Ok((-(-eta).exp()).exp()),
            LinkKind::Log => Ok(eta.exp()),
            LinkKind::Sqrt | LinkKind::Identity if eta <= 0.0 => Err(Error::Domain {
                function: "link inverse",
                value: eta,
                domain: "(0, inf)",
            }),
            LinkKind::Sqrt => Ok(eta * eta),
            LinkKind::Identity => Ok(eta),
        }
    }

    /// Derivative `g'(x)` of the link with respect to its argument.
    ///
    /// Strictly positive on the whole domain for every supported link.
    pub fn deriv(self, x: f64) -> Result<f64> {
        if !self.in_domain(x) {
            return Err(Error::Domain {
                function: "link derivative",
                value: x,
                domain: self.domain(),
            });
        }
        Ok(match self {
            LinkKind::Logit => 1.0 / (x * (1.0 - x)),
            LinkKind::LogLog => -1.0 / (x * x.ln()),
            LinkKind::Log => 1.0 / x,
            LinkKind::Sqrt => 0.5 / x.sqrt(),
            LinkKind::Identity => 1.0,
        })
    }
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logit" => Ok(LinkKind::Logit),
            "loglog" | "log-log" => Ok(LinkKind::LogLog),
            "log" => Ok(LinkKind::Log),
            "sqrt" => Ok(LinkKind::Sqrt),
            "identity" => Ok(LinkKind::Identity),
            other => Err(Error::Model(format!(
                "unknown link `{other}`; expected one of logit, loglog, log, sqrt, identity"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert_relative_eq!(
            LinkKind::Logit.value(0.88).unwrap(),
            1.9924301646902062,
            epsilon = 1e-14
        );
        assert_relative_eq!(LinkKind::Logit.value(0.5).unwrap(), 0.0, epsilon = 1e-15);
        // -log(-log(0.5)) = -log(log 2)
        assert_relative_eq!(
            LinkKind::LogLog.value(0.5).unwrap(),
            0.36651292058166433,
            epsilon = 1e-14
        );
        assert_relative_eq!(LinkKind::Log.value(1.0).unwrap(), 0.0);
        assert_relative_eq!(LinkKind::Sqrt.value(9.0).unwrap(), 3.0);
        assert_relative_eq!(LinkKind::Identity.value(4.2).unwrap(), 4.2);
    }

    #[test]
    fn restriction_sets() {
        assert!(LinkKind::Logit.valid_for_mean());
        assert!(LinkKind::LogLog.valid_for_mean());
        assert!(!LinkKind::Log.valid_for_mean());
        assert!(!LinkKind::Identity.valid_for_mean());
        assert!(LinkKind::Log.valid_for_precision());
        assert!(LinkKind::Sqrt.valid_for_precision());
        assert!(LinkKind::Identity.valid_for_precision());
        assert!(!LinkKind::Logit.valid_for_precision());
    }

    #[test]
    fn domain_errors() {
        for link in [LinkKind::Logit, LinkKind::LogLog] {
            assert!(link.value(0.0).is_err());
            assert!(link.value(1.0).is_err());
            assert!(link.value(-0.5).is_err());
            assert!(link.deriv(1.0).is_err());
        }
        for link in [LinkKind::Log, LinkKind::Sqrt, LinkKind::Identity] {
            assert!(link.value(0.0).is_err());
            assert!(link.value(-1.0).is_err());
        }
        assert!(LinkKind::Sqrt.inverse(-2.0).is_err());
        assert!(LinkKind::Sqrt.inverse(0.0).is_err());
        assert!(LinkKind::Identity.inverse(-1.0).is_err());
        assert!(LinkKind::Log.inverse(f64::INFINITY).is_err());
    }

    #[test]
    fn parse_and_display_round_trip() {
        for link in LinkKind::ALL {
            assert_eq!(link.name().parse::<LinkKind>().unwrap(), link);
        }
        assert_eq!("LOGIT".parse::<LinkKind>().unwrap(), LinkKind::Logit);
        assert!("cauchit".parse::<LinkKind>().is_err());
    }

    proptest! {
        #[test]
        fn inverse_round_trip(idx in 0usize..5, unit in 0.0f64..1.0) {
            let link = LinkKind::ALL[idx];
            let x = match link {
                LinkKind::Logit | LinkKind::LogLog => 1e-4 + unit * (0.9999 - 1e-4),
                _ => 1e-3 + unit * 1e3,
            };
            let eta = link.value(x).unwrap();
            let back = link.inverse(eta).unwrap();
            prop_assert!((back - x).abs() <= 1e-10 * (1.0 + x.abs()), "{link}: {x} -> {eta} -> {back}");
        }

        #[test]
        fn derivative_matches_finite_differences(idx in 0usize..5, unit in 0.01f64..0.99) {
            let link = LinkKind::ALL[idx];
            let x = match link {
                LinkKind::Logit | LinkKind::LogLog => unit,
                _ => 0.1 + unit * 50.0,
            };
            let h = 1e-6 * (1.0 + x.abs());
            let fd = (link.value(x + h).unwrap() - link.value(x - h).unwrap()) / (2.0 * h);
            let an = link.deriv(x).unwrap();
            prop_assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "{link} at {x}: {fd} vs {an}");
        }

        #[test]
        fn derivative_is_positive(idx in 0usize..5, unit in 0.001f64..0.999) {
            let link = LinkKind::ALL[idx];
            let x = match link {
                LinkKind::Logit | LinkKind::LogLog => unit,
                _ => unit * 100.0,
            };
            prop_assert!(link.deriv(x).unwrap() > 0.0);
        }
    }
}
