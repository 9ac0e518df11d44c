//! Result type shared by every q-Laplace transform evaluator.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

/// Evaluation route for `E[1/(ζ q^λ;q)_inf]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Empirical,
    Pmf,
    GenFunc,
    Prop6,
    Prop10,
    RankN,
    T110,
    Fredholm,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Empirical,
        Method::Pmf,
        Method::GenFunc,
        Method::Prop6,
        Method::Prop10,
        Method::RankN,
        Method::T110,
        Method::Fredholm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Empirical => "empirical",
            Method::Pmf => "pmf",
            Method::GenFunc => "genfunc",
            Method::Prop6 => "prop6",
            Method::Prop10 => "prop10",
            Method::RankN => "rank-n",
            Method::T110 => "t110",
            Method::Fredholm => "fredholm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| format!("unknown method '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QLapResult {
    pub value: Complex64,
    pub method: Method,
    /// Absolute error estimate (a standard error for Monte Carlo).
    pub error_estimate: f64,
}

impl QLapResult {
    pub fn new(value: Complex64, method: Method, error_estimate: f64) -> Self {
        Self {
            value,
            method,
            error_estimate,
        }
    }

    /// The value at `ζ = 0`, where every route reduces to 1.
    pub(crate) fn unit(method: Method) -> Self {
        Self::new(Complex64::new(1.0, 0.0), method, 0.0)
    }
}

/// True when `ζ = q^n` for some integer `n`, where `(ζ q^l;q)_inf`
/// vanishes for some `l`.
pub fn on_q_lattice(zeta: Complex64, q: f64) -> bool {
    if !(q > 0.0 && q < 1.0) || zeta.re <= 0.0 {
        return false;
    }
    if zeta.im.abs() > 1e-12 * zeta.re {
        return false;
    }
    let n = zeta.re.ln() / q.ln();
    (n - n.round()).abs() < 1e-10
}

/// True for `ζ` on the closed positive real axis, excluded by the integral
/// representations because of the branch cut of `(-ζ)^s`.
pub fn on_positive_axis(zeta: Complex64) -> bool {
    zeta.re > 0.0 && zeta.im == 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_detection() {
        assert!(on_q_lattice(Complex64::new(1.0, 0.0), 0.4));
        assert!(on_q_lattice(Complex64::new(0.4f64.powi(-3), 0.0), 0.4));
        assert!(!on_q_lattice(Complex64::new(-0.5, 0.0), 0.4));
        assert!(!on_q_lattice(Complex64::new(0.5, 0.0), 0.4));
        assert!(on_positive_axis(Complex64::new(0.5, 0.0)));
        assert!(!on_positive_axis(Complex64::new(0.5, 1e-3)));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }
}
