//! Determinantal formulas for the q-Laplace transform: the Fredholm
//! determinant on a circle around the rates and the two `N×N` rank-`N`
//! determinants.

mod kernel;
mod rank;

pub use kernel::{fredholm_det, kernel_main, kernel_twosided, nystrom_matrix};
pub use rank::{rank_n_qlap, rank_n_shifted, rank_n_unshifted, rank_n_via_t110};

use num_complex::Complex64;
use thiserror::Error;

use crate::exact::ExactError;
use crate::process::{ModelParams, ParamError};
use crate::qseries::{QPochConfig, QSeriesError};
use crate::quadrature::{CircleContour, QuadratureError, VerticalLine};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FredholmError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    QSeries(#[from] QSeriesError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error("integration path meets a singularity: {0}")]
    Path(String),
    #[error("contour C_a invalid: {0}")]
    Contour(String),
    #[error("non-finite matrix entry at ({row}, {col})")]
    Numeric { row: usize, col: usize },
    #[error("unshifted and shifted rank-N determinants differ by {diff:.3e}")]
    Inconsistent { diff: f64 },
    #[error("truncation: {0}")]
    Truncation(String),
    #[error("domain: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEval {
    pub value: Complex64,
    /// Bound on the part of the `s`-integral cut off at `|Im s| = T`, plus
    /// the rounding level of the sum.
    pub s_truncation_error: f64,
}

/// Which kernel the Nyström matrix is built from. The two-sided kernel is
/// written in exponent variables `w = q^v` and differs from the main one by
/// the diagonal conjugation `e^{(w_2 - w_1) t}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelForm {
    #[default]
    Main,
    TwoSided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NystromConfig {
    /// `C_a`; `None` builds the default circle with `contour_nodes` nodes.
    pub contour: Option<CircleContour>,
    pub contour_nodes: usize,
    /// The `s`-line; its offset is the `ε > 0` of every line in this module.
    pub s_line: VerticalLine,
    pub form: KernelForm,
    /// Repeat at doubled node counts and report the change as the error.
    pub estimate_error: bool,
    /// Nodes on the `v`-circle of the rank-`N` kernel factors.
    pub v_nodes: usize,
    /// Target size of the dropped tails of the `x`-integrals.
    pub x_tol: f64,
    pub max_x_nodes: usize,
    pub qpoch: QPochConfig,
}

impl Default for NystromConfig {
    fn default() -> Self {
        Self {
            contour: None,
            contour_nodes: 64,
            s_line: VerticalLine::new(0.5, 12.0, 257).expect("static line"),
            form: KernelForm::Main,
            estimate_error: true,
            v_nodes: 64,
            x_tol: 1e-15,
            max_x_nodes: 40_000,
            qpoch: QPochConfig::default(),
        }
    }
}

impl NystromConfig {
    pub fn eps(&self) -> f64 {
        self.s_line.offset
    }

    /// Same config with contour and line node counts doubled.
    pub fn doubled(&self) -> Result<Self, FredholmError> {
        let line = VerticalLine::new(self.s_line.offset, self.s_line.half_height, 2 * self.s_line.nodes - 1)?;
        let contour = match self.contour {
            Some(c) => Some(CircleContour::new(c.center, c.radius, 2 * c.nodes)?),
            None => None,
        };
        Ok(Self {
            contour,
            contour_nodes: 2 * self.contour_nodes,
            s_line: line,
            v_nodes: 2 * self.v_nodes,
            estimate_error: false,
            ..self.clone()
        })
    }
}

/// Clearance of `ε` from the zeros of `sin πs` at 0 and 1.
const EPS_CLEARANCE: f64 = 1e-2;

pub(crate) fn check_eps(eps: f64) -> Result<(), FredholmError> {
    if !(EPS_CLEARANCE..=1.0 - EPS_CLEARANCE).contains(&eps) {
        return Err(FredholmError::Path(format!(
            "eps = {eps} must lie in [{EPS_CLEARANCE}, {}]",
            1.0 - EPS_CLEARANCE
        )));
    }
    Ok(())
}

fn extremes(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)))
}

/// Largest `|w|` on `C_a` ruled out by the `α`-poles, `max_m α_m q^{-ε}`.
fn alpha_barrier(params: &ModelParams, eps: f64) -> f64 {
    let max_alpha = params.alpha().iter().cloned().fold(0.0, f64::max);
    max_alpha * params.q().powf(-eps)
}

/// Circle around the rates: centred at the midpoint of the rate cluster,
/// with radius 60% of the way from the cluster half-width to the tightest
/// of `q^ε (c + r) < c - r`, `c + r < min a / q` and `c - r > max α q^{-ε}`.
pub fn default_contour(params: &ModelParams, eps: f64, nodes: usize) -> Result<CircleContour, FredholmError> {
    check_eps(eps)?;
    let q = params.q();
    let (lo, hi) = extremes(params.a());
    let c = 0.5 * (lo + hi);
    let spread = 0.5 * (hi - lo);
    let qe = q.powf(eps);
    let limit = (c * (1.0 - qe) / (1.0 + qe)).min(lo / q - c).min(c - alpha_barrier(params, eps));
    if !(limit > spread * 1.001) {
        return Err(FredholmError::Contour(format!(
            "no circle around the rates [{lo}, {hi}] fits (limit {limit:.4}); change eps"
        )));
    }
    let contour = CircleContour::new(Complex64::new(c, 0.0), spread + 0.6 * (limit - spread), nodes)?;
    validate_contour(&contour, params, eps)?;
    Ok(contour)
}

/// `C_a` must enclose every `a_m`, exclude `a_m/q^k` (`k >= 1`), the
/// origin and the `α`-poles, and satisfy `q^ε max|w| < min|w|`.
pub fn validate_contour(contour: &CircleContour, params: &ModelParams, eps: f64) -> Result<(), FredholmError> {
    let q = params.q();
    let qe = q.powf(eps);
    let max_w = contour.center.norm() + contour.radius;
    let min_w = contour.center.norm() - contour.radius;
    let fail = |s: String| Err(FredholmError::Contour(s));
    for (m, &am) in params.a().iter().enumerate() {
        if contour.inside_margin(Complex64::new(am, 0.0)) <= 0.0 {
            return fail(format!("a_{} = {am} not enclosed", m + 1));
        }
        if contour.inside_margin(Complex64::new(am / q, 0.0)) >= 0.0 || am / q <= max_w {
            return fail(format!("a_{}/q = {} not excluded", m + 1, am / q));
        }
    }
    if min_w <= 0.0 {
        return fail("origin not excluded".into());
    }
    if qe * max_w >= min_w {
        return fail(format!("q^eps max|w| = {} >= min|w| = {min_w}", qe * max_w));
    }
    let barrier = alpha_barrier(params, eps);
    if barrier >= min_w {
        return fail(format!("alpha q^-eps = {barrier} not excluded (min|w| = {min_w})"));
    }
    Ok(())
}

pub(crate) fn resolved_contour(params: &ModelParams, cfg: &NystromConfig) -> Result<CircleContour, FredholmError> {
    match cfg.contour {
        Some(c) => {
            validate_contour(&c, params, cfg.eps())?;
            Ok(c)
        }
        None => default_contour(params, cfg.eps(), cfg.contour_nodes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_contour_is_valid() {
        for alpha in [0.0, 0.2, 0.4] {
            let p = ModelParams::half_stationary(0.4, vec![1.0, 0.9], alpha, 1.0).unwrap();
            for eps in [0.25, 0.5, 0.7] {
                let c = default_contour(&p, eps, 64).unwrap();
                validate_contour(&c, &p, eps).unwrap();
            }
        }
        // Small ε squeezes the annulus below the rate spread, large ε pushes
        // the α-poles past the rates.
        let p = ModelParams::half_stationary(0.4, vec![1.0, 0.9], 0.5, 1.0).unwrap();
        assert!(matches!(default_contour(&p, 0.1, 64), Err(FredholmError::Contour(_))));
        assert!(matches!(default_contour(&p, 0.9, 64), Err(FredholmError::Contour(_))));
    }

    #[test]
    fn bad_contours_are_named() {
        let p = ModelParams::half_stationary(0.4, vec![1.0, 0.9], 0.2, 1.0).unwrap();
        let small = CircleContour::new(Complex64::new(0.95, 0.0), 0.01, 64).unwrap();
        assert!(matches!(validate_contour(&small, &p, 0.5), Err(FredholmError::Contour(_))));
        let big = CircleContour::new(Complex64::new(0.95, 0.0), 0.6, 64).unwrap();
        assert!(matches!(validate_contour(&big, &p, 0.5), Err(FredholmError::Contour(_))));
        assert!(matches!(default_contour(&p, 0.0, 64), Err(FredholmError::Path(_))));
        assert!(matches!(default_contour(&p, 1.0, 64), Err(FredholmError::Path(_))));
    }
}
