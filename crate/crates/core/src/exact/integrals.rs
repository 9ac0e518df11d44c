use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{
    check_distinct_exponents, check_zeta_line, factorial, inv_qpoch, mq_density_with, pi_at_rates, pi_single, qpow,
    ExactError, ExactEvalConfig,
};
use crate::process::ModelParams;
use crate::qlap::{Method, QLapResult};
use crate::qseries::qpoch_inf;
use crate::quadrature::{line_rule, line_truncation_bound, neg_zeta_pow, VerticalLine};

/// Smallest distance from a pole of `1/sin` to the integration line.
const PATH_TOL: f64 = 1e-6;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn check_line_offset(eps: f64) -> Result<(), ExactError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(ExactError::Domain(format!("line offset eps = {eps} must be positive")));
    }
    Ok(())
}

/// `1/sin π(x + iy)` must stay bounded on the line `Re = x`.
fn check_sine_clearance(x: f64, what: &str) -> Result<(), ExactError> {
    if (x - x.round()).abs() < PATH_TOL {
        return Err(ExactError::Path(format!("{what}: Re = {x} passes through a zero of sin; change eps")));
    }
    Ok(())
}

/// Error of a trapezoid sum from its tail bound and the half-resolution sum.
/// On analytic integrands the trapezoid error squares when the step halves,
/// so `|fine - coarse|^2 / |fine|` estimates the fine error.
fn line_error(fine: Complex64, coarse: Complex64, zeta: Complex64, half_height: f64) -> f64 {
    let scale = fine.norm().max(1e-300);
    let delta = (fine - coarse).norm();
    let disc = if delta > 0.1 * scale { delta } else { delta * delta / scale };
    disc + line_truncation_bound(zeta, half_height) * scale.max(1.0)
}

/// Torus nodes making the aliasing error of the `(N-1)`-fold torus of
/// radius `q^{-ε/N}` negligible. That error decays like `q^{εM/N}`.
fn auto_torus_nodes(n: usize, eps: f64, q: f64) -> usize {
    let m = (n as f64 * (1e15f64).ln() / (eps * q.ln().abs())).ceil() as usize;
    (m.div_ceil(8) * 8).clamp(16, 1024)
}

/// Single line integral times an `(N-1)`-fold torus integral, with
/// `w_1 = q^s / (w_2 ⋯ w_N)`.
pub fn qlap_prop6(zeta: Complex64, params: &ModelParams, cfg: &ExactEvalConfig) -> Result<QLapResult, ExactError> {
    check_zeta_line(zeta)?;
    if zeta == c(0.0) {
        return Ok(QLapResult::unit(Method::Prop6));
    }
    let n = params.n();
    let q = params.q();
    let eps = cfg.line_offset;
    check_line_offset(eps)?;
    let big_a = params.total_exponent()?;
    check_sine_clearance(-eps - big_a, "s - A")?;
    let radius = q.powf(-eps / n as f64);
    let max_a = params.a().iter().cloned().fold(0.0, f64::max);
    if max_a >= radius {
        return Err(ExactError::Path(format!(
            "torus radius q^(-eps/N) = {radius} does not enclose max a = {max_a}; increase eps"
        )));
    }
    let qc = &cfg.qpoch;
    let line = VerticalLine::new(-eps, cfg.line_half_height, cfg.line_nodes)?;
    let rule = line_rule(&line);
    let mw = cfg.torus_nodes.unwrap_or_else(|| auto_torus_nodes(n, eps, q));
    let circle: Vec<Complex64> = (0..mw)
        .map(|k| Complex64::from_polar(radius, 2.0 * PI * k as f64 / mw as f64))
        .collect();
    let torus_size = mw
        .checked_pow(n as u32 - 1)
        .filter(|&s| s.saturating_mul(rule.len()) <= cfg.tensor_cap)
        .ok_or(crate::quadrature::QuadratureError::TooLarge {
            size: (mw as u128).pow(n as u32 - 1) * rule.len() as u128,
            cap: cfg.tensor_cap,
        })?;
    let torus_weight = 1.0 / (mw as f64).powi(n as i32 - 1);
    let qq = qpoch_inf(c(q), q, qc)?;
    let pre = -qq.powi(n as i32 - 2) / pi_at_rates(params, qc)?;

    let integrand = |s: Complex64| -> Result<Complex64, ExactError> {
        let d = s - big_a;
        let mut base = pre * PI / (PI * d).sin() * neg_zeta_pow(zeta, d);
        base *= qpoch_inf(qpow(q, d + 1.0), q, qc)? * qpoch_inf(qpow(q, -d), q, qc)?;
        let qs = qpow(q, s);
        let mut w = vec![c(0.0); n];
        let mut sum = c(0.0);
        for idx in 0..torus_size {
            let mut rest = idx;
            let mut prod = c(1.0);
            for wj in w.iter_mut().skip(1) {
                *wj = circle[rest % mw];
                rest /= mw;
                prod *= *wj;
            }
            w[0] = qs / prod;
            let mut g = mq_density_with(&w, q, qc)?;
            for &wj in &w {
                g *= pi_single(wj, params, qc)?;
                for &ai in params.a() {
                    g *= inv_qpoch(ai / wj, q, qc)?;
                }
            }
            sum += g;
        }
        Ok(base * sum * torus_weight)
    };
    let values: Vec<Complex64> = rule.nodes.par_iter().map(|&s| integrand(s)).collect::<Result<_, _>>()?;
    let (fine, coarse) = line_sums(&values, &rule.weights);
    Ok(QLapResult::new(fine, Method::Prop6, line_error(fine, coarse, zeta, cfg.line_half_height)))
}

/// Trapezoid sums at full and at half resolution.
fn line_sums(values: &[Complex64], weights: &[Complex64]) -> (Complex64, Complex64) {
    let mut fine = c(0.0);
    let mut coarse = c(0.0);
    for (j, (v, w)) in values.iter().zip(weights).enumerate() {
        fine += v * w;
        if j % 2 == 0 {
            coarse += v * w * 2.0;
        }
    }
    (fine, coarse)
}

/// `N`-fold line integral with the sine and Pochhammer kernel. The
/// integrand is a product of single-variable factors times the pair factor
/// `Π_{i<j} sin π(s_j - s_i) (q^{s_j} - q^{s_i})`.
pub fn qlap_prop10(zeta: Complex64, params: &ModelParams, cfg: &ExactEvalConfig) -> Result<QLapResult, ExactError> {
    check_zeta_line(zeta)?;
    if zeta == c(0.0) {
        return Ok(QLapResult::unit(Method::Prop10));
    }
    let n = params.n();
    let q = params.q();
    let eps = cfg.line_offset;
    check_line_offset(eps)?;
    let ae = params.a_exponents()?;
    check_distinct_exponents(&ae)?;
    for &aj in &ae {
        check_sine_clearance(-eps - aj, "s - a_j")?;
    }
    let qc = &cfg.qpoch;
    let line = VerticalLine::new(-eps, cfg.line_half_height, cfg.line_nodes)?;
    let rule = line_rule(&line);
    let m = rule.len();
    let size = (m as u128).pow(n as u32);
    if size > cfg.tensor_cap as u128 {
        return Err(crate::quadrature::QuadratureError::TooLarge { size, cap: cfg.tensor_cap }.into());
    }
    let qq = qpoch_inf(c(q), q, qc)?;

    let mut constant = c((-PI).powi(n as i32) / factorial(n));
    for &aj in &ae {
        let qa = c(q.powf(aj));
        constant /= q.powf((n as f64 - 1.0) * aj) * neg_zeta_pow(zeta, c(aj)) * pi_single(qa, params, qc)?;
    }
    for i in 0..n {
        for j in i + 1..n {
            let d = ae[j] - ae[i];
            constant *= (PI * d).sin() * (q.powf(ae[j]) - q.powf(ae[i]));
            constant /= qpoch_inf(c(q.powf(-d)), q, qc)? * qpoch_inf(c(q.powf(d)), q, qc)?;
        }
    }

    let node_factor = |s: Complex64| -> Result<Complex64, ExactError> {
        let mut u = neg_zeta_pow(zeta, s) * pi_single(qpow(q, s), params, qc)? / qq;
        for &aj in &ae {
            u *= qpoch_inf(qpow(q, s - aj + 1.0), q, qc)? / (PI * (s - aj)).sin();
        }
        Ok(u)
    };
    let u: Vec<Complex64> = rule
        .nodes
        .par_iter()
        .zip(&rule.weights)
        .map(|(&s, &w)| Ok(node_factor(s)? * w))
        .collect::<Result<_, ExactError>>()?;
    let qs: Vec<Complex64> = rule.nodes.iter().map(|&s| qpow(q, s)).collect();

    // Parallel over the first index, sequential inside; the partial sums are
    // combined in index order.
    let partial: Vec<(Complex64, Complex64)> = (0..m)
        .into_par_iter()
        .map(|first| {
            let inner = m.pow(n as u32 - 1);
            let mut idx = vec![first; n];
            let mut fine = c(0.0);
            let mut coarse = c(0.0);
            for k in 0..inner {
                let mut rest = k;
                for slot in idx.iter_mut().skip(1) {
                    *slot = rest % m;
                    rest /= m;
                }
                let mut v = c(1.0);
                for &i in &idx {
                    v *= u[i];
                }
                for i in 0..n {
                    for j in i + 1..n {
                        let (si, sj) = (rule.nodes[idx[i]], rule.nodes[idx[j]]);
                        v *= (PI * (sj - si)).sin() * (qs[idx[j]] - qs[idx[i]]);
                    }
                }
                fine += v;
                if idx.iter().all(|i| i % 2 == 0) {
                    coarse += v;
                }
            }
            (fine, coarse)
        })
        .collect();
    let (mut fine, mut coarse) = (c(0.0), c(0.0));
    for (f, g) in partial {
        fine += f;
        coarse += g;
    }
    fine *= constant;
    coarse *= constant * 2f64.powi(n as i32);
    Ok(QLapResult::new(fine, Method::Prop10, line_error(fine, coarse, zeta, cfg.line_half_height)))
}
