//! Closed-form evaluations: the multiple-integral marginal of `λ_N`, nested
//! contour q-moments, the step-case generating function and the two line
//! integral representations of the q-Laplace transform.

mod integrals;
mod moments;
mod pmf;

pub use integrals::{qlap_prop10, qlap_prop6};
pub use moments::{qlap_genfunc_step, qmoment_random, qmoment_step, MomentMethod};
pub use pmf::{pmf_exact, pmf_table, qlap_via_pmf, PmfTable};

use num_complex::Complex64;
use thiserror::Error;

use crate::process::{ModelParams, ParamError};
use crate::qseries::{qpoch_inf, QPochConfig, QSeriesError};
use crate::quadrature::{QuadratureError, DEFAULT_TENSOR_CAP};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExactError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    QSeries(#[from] QSeriesError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("pole of 1/(x;q)_inf at evaluation point {0}")]
    Singularity(Complex64),
    #[error("zero node in the integration variables")]
    ZeroNode,
    #[error("imaginary part {imag:.3e} of the pmf at lambda = {lambda} exceeds 1e-9")]
    Accuracy { lambda: i64, imag: f64 },
    #[error("truncation: {0}")]
    Truncation(String),
    #[error("moment of order {n} diverges: alpha q^-n = {value} >= max a = {max_a}")]
    Divergence { n: usize, value: f64, max_a: f64 },
    #[error("domain: {0}")]
    Domain(String),
    #[error("integration path meets a singularity: {0}")]
    Path(String),
    #[error("degenerate rates: {0}")]
    Degeneracy(String),
}

/// Quadrature knobs shared by every exact evaluator.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactEvalConfig {
    /// Nodes per circle for the torus integrals of the marginal.
    pub circle_nodes: usize,
    /// Nodes on each vertical line.
    pub line_nodes: usize,
    /// Lines are truncated to `|Im s| <= line_half_height`.
    pub line_half_height: f64,
    /// The `ε` of the lines `iℝ - ε`.
    pub line_offset: f64,
    /// Nodes per circle of the torus coupled to the line integral; `None`
    /// picks enough nodes for the annulus fixed by `line_offset`.
    pub torus_nodes: Option<usize>,
    /// Circle radius of the marginal's torus relative to `max a`.
    pub pmf_radius: f64,
    /// Inclusive window `[lo, hi]` of `λ` values summed for the pmf route.
    pub lambda_window: (i64, i64),
    pub moment_method: MomentMethod,
    /// Nodes per circle of the nested moment contours.
    pub moment_nodes: usize,
    pub genfunc_max_terms: usize,
    pub tensor_cap: usize,
    pub qpoch: QPochConfig,
}

impl Default for ExactEvalConfig {
    fn default() -> Self {
        Self {
            circle_nodes: 64,
            line_nodes: 257,
            line_half_height: 12.0,
            line_offset: 0.5,
            torus_nodes: None,
            pmf_radius: 1.5,
            lambda_window: (-50, 150),
            moment_method: MomentMethod::Quadrature,
            moment_nodes: 128,
            genfunc_max_terms: 40,
            tensor_cap: DEFAULT_TENSOR_CAP,
            qpoch: QPochConfig::default(),
        }
    }
}

/// Below this modulus a denominator `(x;q)_inf` counts as a pole.
const POLE_TOL: f64 = 1e-12;

pub(crate) fn inv_qpoch(x: Complex64, q: f64, cfg: &QPochConfig) -> Result<Complex64, ExactError> {
    let p = qpoch_inf(x, q, cfg)?;
    if p.norm() < POLE_TOL {
        return Err(ExactError::Singularity(x));
    }
    Ok(p.inv())
}

/// Single-variable factor `e^{z t} Π_i 1/(α_i/z;q)_inf`; absent alphas
/// (stored as 0) contribute 1.
pub(crate) fn pi_single(z: Complex64, params: &ModelParams, cfg: &QPochConfig) -> Result<Complex64, ExactError> {
    let mut v = (z * params.t()).exp();
    for &al in params.alpha() {
        if al != 0.0 {
            v *= inv_qpoch(al / z, params.q(), cfg)?;
        }
    }
    Ok(v)
}

/// `Π(z) = Π_j e^{z_j t} Π_{i,j} 1/(α_i/z_j;q)_inf` in multiplicative variables.
pub fn pi_factor(z: &[Complex64], params: &ModelParams) -> Result<Complex64, ExactError> {
    let cfg = QPochConfig::default();
    if z.iter().any(|w| w.norm() == 0.0) {
        return Err(ExactError::ZeroNode);
    }
    z.iter().try_fold(Complex64::new(1.0, 0.0), |acc, &w| Ok(acc * pi_single(w, params, &cfg)?))
}

/// `Π(a)` evaluated at the rates.
pub(crate) fn pi_at_rates(params: &ModelParams, cfg: &QPochConfig) -> Result<Complex64, ExactError> {
    params
        .a()
        .iter()
        .try_fold(Complex64::new(1.0, 0.0), |acc, &a| {
            Ok(acc * pi_single(Complex64::new(a, 0.0), params, cfg)?)
        })
}

/// `(1/N!) Π_{i<j} (z_i/z_j;q)_inf (z_j/z_i;q)_inf`; the `(2πi)^{-N}` lives
/// in the quadrature weights.
pub fn mq_density(z: &[Complex64], q: f64) -> Result<Complex64, ExactError> {
    mq_density_with(z, q, &QPochConfig::default())
}

pub(crate) fn mq_density_with(z: &[Complex64], q: f64, cfg: &QPochConfig) -> Result<Complex64, ExactError> {
    if z.iter().any(|w| w.norm() == 0.0) {
        return Err(ExactError::ZeroNode);
    }
    let n = z.len();
    let mut v = Complex64::new(1.0 / factorial(n), 0.0);
    for i in 0..n {
        for j in i + 1..n {
            v *= qpoch_inf(z[i] / z[j], q, cfg)? * qpoch_inf(z[j] / z[i], q, cfg)?;
        }
    }
    Ok(v)
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `q^x` for complex exponents.
pub(crate) fn qpow(q: f64, x: Complex64) -> Complex64 {
    (x * q.ln()).exp()
}

/// Rejects `ζ` on the positive axis for the line-integral routes.
pub(crate) fn check_zeta_line(zeta: Complex64) -> Result<(), ExactError> {
    if crate::qlap::on_positive_axis(zeta) {
        return Err(ExactError::Domain(format!("zeta = {zeta} lies on the positive real axis")));
    }
    Ok(())
}

/// Exponent differences that make `(q^{a_i - a_j};q)_inf` vanish.
pub(crate) fn check_distinct_exponents(ae: &[f64]) -> Result<(), ExactError> {
    for i in 0..ae.len() {
        for j in i + 1..ae.len() {
            let d = ae[i] - ae[j];
            if (d - d.round()).abs() < 1e-8 {
                return Err(ExactError::Degeneracy(format!(
                    "exponents a_{} = {} and a_{} = {} differ by an integer",
                    i + 1,
                    ae[i],
                    j + 1,
                    ae[j]
                )));
            }
        }
    }
    Ok(())
}
