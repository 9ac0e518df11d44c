//! q-Pochhammer symbols and the q-Poisson distribution.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QSeriesError {
    #[error("q = {0} is outside [0, 1)")]
    InvalidQ(f64),
    #[error("q-Poisson parameter theta = {0} is outside [0, 1)")]
    InvalidTheta(f64),
    #[error("infinite product for |x| = {abs_x} not converged after {terms} factors")]
    NoConvergence { abs_x: f64, terms: usize },
}

/// Truncation control for `(x;q)_inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QPochConfig {
    pub tol: f64,
    pub max_terms: usize,
}

impl Default for QPochConfig {
    fn default() -> Self {
        Self {
            tol: 1e-14,
            max_terms: 10_000,
        }
    }
}

/// Factors smaller than this are treated as exact zeros of the product.
const ZERO_FACTOR: f64 = 1e-300;

fn check_q(q: f64) -> Result<(), QSeriesError> {
    if (0.0..1.0).contains(&q) {
        Ok(())
    } else {
        Err(QSeriesError::InvalidQ(q))
    }
}

/// `(x;q)_n = prod_{k<n} (1 - x q^k)`.
pub fn qpoch_finite(x: Complex64, q: f64, n: usize) -> Result<Complex64, QSeriesError> {
    check_q(q)?;
    let mut p = Complex64::new(1.0, 0.0);
    let mut qk = 1.0;
    for _ in 0..n {
        p *= 1.0 - x * qk;
        qk *= q;
    }
    Ok(p)
}

/// `(x;q)_inf`, truncated once the tail bound `|x| q^K / ((1-q)(1-|x| q^K))`
/// drops below `cfg.tol`.
///
/// Factors with `|x q^k| > 1` are accumulated as logarithms so that very
/// large arguments do not overflow before the small factors bring the
/// product back into range.
pub fn qpoch_inf(x: Complex64, q: f64, cfg: &QPochConfig) -> Result<Complex64, QSeriesError> {
    check_q(q)?;
    if x == Complex64::new(0.0, 0.0) {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let ax = x.norm();
    let mut direct = Complex64::new(1.0, 0.0);
    let mut logs = Complex64::new(0.0, 0.0);
    let mut qk = 1.0;
    for k in 0..cfg.max_terms {
        let r = ax * qk;
        if r < 1.0 && r / ((1.0 - q) * (1.0 - r)) < cfg.tol {
            return Ok(direct * logs.exp());
        }
        let f = 1.0 - x * qk;
        if f.norm() < ZERO_FACTOR {
            return Ok(Complex64::new(0.0, 0.0));
        }
        if r > 1.0 {
            logs += f.ln();
        } else {
            direct *= f;
        }
        qk *= q;
        if q == 0.0 && k == 0 {
            return Ok(direct * logs.exp());
        }
    }
    Err(QSeriesError::NoConvergence {
        abs_x: ax,
        terms: cfg.max_terms,
    })
}

/// `(x;q)_inf` with the default configuration.
pub fn qpoch(x: Complex64, q: f64) -> Result<Complex64, QSeriesError> {
    qpoch_inf(x, q, &QPochConfig::default())
}

/// Real-argument `(x;q)_inf` for the hot loops that only need reals.
pub(crate) fn qpoch_real(x: f64, q: f64) -> Result<f64, QSeriesError> {
    Ok(qpoch(Complex64::new(x, 0.0), q)?.re)
}

fn check_theta(theta: f64) -> Result<(), QSeriesError> {
    if (0.0..1.0).contains(&theta) {
        Ok(())
    } else {
        Err(QSeriesError::InvalidTheta(theta))
    }
}

/// q-Poisson probability `(theta;q)_inf theta^n / (q;q)_n`.
pub fn qpoisson_pmf(n: u64, theta: f64, q: f64) -> Result<f64, QSeriesError> {
    check_q(q)?;
    check_theta(theta)?;
    let head = qpoch_real(theta, q)?;
    let mut p = head;
    let mut qk = q;
    for _ in 0..n {
        p *= theta / (1.0 - qk);
        qk *= q;
    }
    Ok(p)
}

/// Inverse-CDF draw from the q-Poisson law.
pub fn qpoisson_sample<R: Rng + ?Sized>(theta: f64, q: f64, rng: &mut R) -> Result<u64, QSeriesError> {
    check_q(q)?;
    check_theta(theta)?;
    if theta == 0.0 {
        return Ok(0);
    }
    let u: f64 = rng.random();
    let mut p = qpoch_real(theta, q)?;
    let mut cum = 0.0;
    let mut qk = q;
    let mut n = 0u64;
    loop {
        cum += p;
        if u < cum || 1.0 - cum < 1e-15 {
            return Ok(n);
        }
        p *= theta / (1.0 - qk);
        qk *= q;
        n += 1;
    }
}
