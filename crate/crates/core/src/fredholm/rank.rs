use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{check_eps, FredholmError, NystromConfig};
use crate::exact::{check_distinct_exponents, check_zeta_line, pi_single, qpow};
use crate::process::ModelParams;
use crate::qlap::{Method, QLapResult};
use crate::qseries::qpoch_inf;
use crate::quadrature::{circle_rule, line_rule, line_truncation_bound, neg_zeta_pow, CircleContour, VerticalLine};

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Largest accepted gap between the unshifted and shifted determinants.
const CONSISTENCY_TOL: f64 = 1e-6;

struct Setup {
    q: f64,
    ae: Vec<f64>,
    /// Smallest `α` exponent, `+∞` when every entry is absent.
    alpha_min: f64,
}

fn setup(zeta: Complex64, params: &ModelParams, cfg: &NystromConfig) -> Result<Setup, FredholmError> {
    check_zeta_line(zeta)?;
    check_eps(cfg.eps())?;
    let ae = params.a_exponents()?;
    check_distinct_exponents(&ae)?;
    let alpha_min = params.alpha_exponents()?.into_iter().fold(f64::INFINITY, f64::min);
    Ok(Setup {
        q: params.q(),
        ae,
        alpha_min,
    })
}

fn extremes(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)))
}

/// `(-ζ)^s Π(q^s) Π_m (q^{s-a_m};q) / (q;q)`.
fn single_weight(
    s: Complex64,
    zeta: Complex64,
    st: &Setup,
    params: &ModelParams,
    cfg: &NystromConfig,
) -> Result<Complex64, FredholmError> {
    let qc = &cfg.qpoch;
    let mut v = neg_zeta_pow(zeta, s) * pi_single(qpow(st.q, s), params, qc)? / qpoch_inf(c(st.q), st.q, qc)?;
    for &am in &st.ae {
        v *= qpoch_inf(qpow(st.q, s - am), st.q, qc)?;
    }
    Ok(v)
}

/// Column constants `q^{a_j} / ((-ζ)^{a_j} Π(q^{a_j}) Π_{m≠j} (q^{a_j-a_m};q))`.
fn column_constants(
    zeta: Complex64,
    st: &Setup,
    params: &ModelParams,
    cfg: &NystromConfig,
) -> Result<Vec<Complex64>, FredholmError> {
    let qc = &cfg.qpoch;
    st.ae
        .iter()
        .enumerate()
        .map(|(j, &aj)| {
            let mut d = neg_zeta_pow(zeta, c(aj)) * pi_single(c(st.q.powf(aj)), params, qc)?;
            for (m, &am) in st.ae.iter().enumerate() {
                if m != j {
                    d *= qpoch_inf(c(st.q.powf(aj - am)), st.q, qc)?;
                }
            }
            Ok(c(st.q.powf(aj)) / d)
        })
        .collect()
}

fn check_line(offset: f64, st: &Setup) -> Result<(), FredholmError> {
    for &aj in &st.ae {
        let d = offset - aj;
        if (d - d.round()).abs() < 1e-6 {
            return Err(FredholmError::Path(format!("Re s = {offset} meets a pole of 1/sin π(s - {aj})")));
        }
    }
    if offset >= st.alpha_min {
        return Err(FredholmError::Path(format!(
            "Re s = {offset} is beyond the first alpha pole at {}",
            st.alpha_min
        )));
    }
    Ok(())
}

/// `M_{ij} = c_j ∫ ds/(2πi) w(s) / (q^s - q^{a_i}) · π / sin π(s - a_j)`
/// on `Re s = offset`, plus `δ_{ij}` when `shifted`.
fn rank_matrix(
    zeta: Complex64,
    params: &ModelParams,
    cfg: &NystromConfig,
    st: &Setup,
    offset: f64,
    shifted: bool,
) -> Result<Complex64, FredholmError> {
    check_line(offset, st)?;
    let n = st.ae.len();
    let line = VerticalLine::new(offset, cfg.s_line.half_height, cfg.s_line.nodes)?;
    let rule = line_rule(&line);
    let cols = column_constants(zeta, st, params, cfg)?;
    let w: Vec<Complex64> = rule
        .nodes
        .par_iter()
        .zip(&rule.weights)
        .map(|(&s, &wt)| Ok(single_weight(s, zeta, st, params, cfg)? * wt))
        .collect::<Result<_, FredholmError>>()?;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let qa = st.q.powf(st.ae[i]);
        for j in 0..n {
            let mut sum = c(0.0);
            for (&s, &wl) in rule.nodes.iter().zip(&w) {
                sum += wl / (qpow(st.q, s) - qa) * PI / (PI * (s - st.ae[j])).sin();
            }
            m[(i, j)] = cols[j] * sum + if shifted && i == j { c(1.0) } else { c(0.0) };
            if !m[(i, j)].is_finite() {
                return Err(FredholmError::Numeric { row: i, col: j });
            }
        }
    }
    Ok(m.lu().determinant())
}

/// Offset strictly between `max a` and `min(min a + 1, min α)` (exponents).
fn shifted_offset(st: &Setup) -> Result<f64, FredholmError> {
    let (lo, hi) = extremes(&st.ae);
    let upper = (lo + 1.0).min(st.alpha_min);
    if !(upper > hi + 2e-2) {
        return Err(FredholmError::Domain(format!(
            "no shifted line between max a = {hi} and {upper} (exponents)"
        )));
    }
    Ok(0.5 * (hi + upper))
}

/// The rank-`N` determinant on `Re s = -ε`.
pub fn rank_n_unshifted(zeta: Complex64, params: &ModelParams, cfg: &NystromConfig) -> Result<Complex64, FredholmError> {
    let st = setup(zeta, params, cfg)?;
    rank_matrix(zeta, params, cfg, &st, -cfg.eps(), false)
}

/// `det(δ_ij + ...)` with the line moved past every `a_j`.
pub fn rank_n_shifted(zeta: Complex64, params: &ModelParams, cfg: &NystromConfig) -> Result<Complex64, FredholmError> {
    let st = setup(zeta, params, cfg)?;
    let offset = shifted_offset(&st)?;
    rank_matrix(zeta, params, cfg, &st, offset, true)
}

/// Both rank-`N` forms; the unshifted value is returned and their gap is
/// the error estimate.
pub fn rank_n_qlap(zeta: Complex64, params: &ModelParams, cfg: &NystromConfig) -> Result<QLapResult, FredholmError> {
    let st = setup(zeta, params, cfg)?;
    if zeta == c(0.0) {
        return Ok(QLapResult::unit(Method::RankN));
    }
    let a = rank_matrix(zeta, params, cfg, &st, -cfg.eps(), false)?;
    let b = rank_matrix(zeta, params, cfg, &st, shifted_offset(&st)?, true)?;
    let diff = (a - b).norm();
    if diff > CONSISTENCY_TOL {
        return Err(FredholmError::Inconsistent { diff });
    }
    let tail = line_truncation_bound(zeta, cfg.s_line.half_height);
    Ok(QLapResult::new(a, Method::RankN, diff + tail))
}

/// `-ζ / (-ζ + e^x)` without overflow.
fn weight_f(zeta: Complex64, x: f64) -> Complex64 {
    let b = -zeta;
    if x > 0.0 {
        let u = b * (-x).exp();
        u / (u + 1.0)
    } else {
        b / (b + x.exp())
    }
}

/// Finite-rank factors: `ψ_k(x) = Σ_j ψ̂_k(s_j) e^{s_j x}` over the line and
/// `φ_l(x) = Σ_i φ̂_l(v_i) e^{-v_i x}` over the circle around the exponents.
/// The constants `q^{a_k} - α_k` of both factors are folded into `ψ_k`,
/// which leaves `det(1 - E)` unchanged.
struct Factors {
    s: Vec<Complex64>,
    /// `n × |s|`, weights included.
    psi: Vec<Vec<Complex64>>,
    v: Vec<Complex64>,
    phi: Vec<Vec<Complex64>>,
}

fn factors(
    params: &ModelParams,
    cfg: &NystromConfig,
    st: &Setup,
    line: &VerticalLine,
    circle: &CircleContour,
) -> Result<Factors, FredholmError> {
    let q = st.q;
    let n = st.ae.len();
    let t = params.t();
    let qc = &cfg.qpoch;
    let qa: Vec<Complex64> = params.a().iter().map(|&x| c(x)).collect();
    let qal: Vec<Complex64> = params.alpha().iter().map(|&x| c(x)).collect();
    let sr = line_rule(line);
    let vr = circle_rule(circle);

    let psi_hat = |k: usize, s: Complex64| -> Result<Complex64, FredholmError> {
        let x = qpow(q, s);
        let mut f = (qa[k] - qal[k]) * (x * t).exp() * qpow(q, s * n as f64) / (x - qal[k]);
        for l in 0..k {
            f *= (x - qa[l]) / (x - qal[l]);
        }
        for m in 0..n {
            f *= qpoch_inf(x * q / qa[m], q, qc)? / qpoch_inf(qal[m] * qpow(q, 1.0 - s), q, qc)?;
        }
        Ok(f)
    };
    let phi_hat = |l: usize, v: Complex64| -> Result<Complex64, FredholmError> {
        let x = qpow(q, v);
        let mut f = q.ln() * (-x * t).exp() * qpow(q, -(n as f64 - 1.0) * v) / (x - qa[l]);
        for m in 0..l {
            f *= (x - qal[m]) / (x - qa[m]);
        }
        for m in 0..n {
            f *= qpoch_inf(qal[m] * qpow(q, 1.0 - v), q, qc)? / qpoch_inf(x * q / qa[m], q, qc)?;
        }
        Ok(f)
    };
    let mut psi = Vec::with_capacity(n);
    let mut phi = Vec::with_capacity(n);
    for k in 0..n {
        psi.push(
            sr.nodes
                .iter()
                .zip(&sr.weights)
                .map(|(&s, &w)| Ok(psi_hat(k, s)? * w))
                .collect::<Result<Vec<_>, FredholmError>>()?,
        );
        phi.push(
            vr.nodes
                .iter()
                .zip(&vr.weights)
                .map(|(&v, &w)| Ok(phi_hat(k, v)? * w))
                .collect::<Result<Vec<_>, FredholmError>>()?,
        );
    }
    Ok(Factors {
        s: sr.nodes,
        psi,
        v: vr.nodes,
        phi,
    })
}

/// `E_{kl} = Σ_p h f(x_p) ψ_k(x_p) φ_l(x_p)` over the grid `x_p = x_0 + p h`.
fn x_matrix(zeta: Complex64, fac: &Factors, x0: f64, h: f64, count: usize) -> DMatrix<Complex64> {
    let n = fac.psi.len();
    let parts: Vec<Vec<Complex64>> = (0..count)
        .into_par_iter()
        .map(|p| {
            let x = x0 + h * p as f64;
            let es: Vec<Complex64> = fac.s.iter().map(|&s| (s * x).exp()).collect();
            let ev: Vec<Complex64> = fac.v.iter().map(|&v| (-v * x).exp()).collect();
            let psi: Vec<Complex64> = fac.psi.iter().map(|r| r.iter().zip(&es).map(|(a, b)| a * b).sum()).collect();
            let phi: Vec<Complex64> = fac.phi.iter().map(|r| r.iter().zip(&ev).map(|(a, b)| a * b).sum()).collect();
            let f = weight_f(zeta, x) * h;
            let mut out = Vec::with_capacity(n * n);
            for pk in &psi {
                for pl in &phi {
                    out.push(f * pk * pl);
                }
            }
            out
        })
        .collect();
    let mut e = DMatrix::zeros(n, n);
    for part in parts {
        for k in 0..n {
            for l in 0..n {
                e[(k, l)] += part[k * n + l];
            }
        }
    }
    e
}

/// `det(1 - f K)` on `L²(ℝ)` through the rank-`N` structure of `K`. The
/// `s`-integral is cut at `|Im s| = T` and the `x`-integral is a trapezoid
/// sum on a window where the dropped tails are below `cfg.x_tol`.
pub fn rank_n_via_t110(zeta: Complex64, params: &ModelParams, cfg: &NystromConfig) -> Result<QLapResult, FredholmError> {
    let st = setup(zeta, params, cfg)?;
    if zeta == c(0.0) {
        return Ok(QLapResult::unit(Method::T110));
    }
    let n = st.ae.len();
    // v-circle around the exponents and an s-line to its right with
    // 0 < Re(s - v) < 1 on the whole circle.
    let (lo, hi) = extremes(&st.ae);
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let gap = 0.2f64.min(0.5 * (0.5 - half)).min(0.5 * (st.alpha_min - hi));
    if !(gap > 0.02) {
        return Err(FredholmError::Domain(format!(
            "exponent spread {:.3} leaves no room for the v-contour",
            2.0 * half
        )));
    }
    let radius = half + gap;
    let offset = 0.5 * ((center + radius) + (center - radius + 1.0).min(st.alpha_min));
    let line = VerticalLine::new(offset, cfg.s_line.half_height, cfg.s_line.nodes)?;
    let circle = CircleContour::new(c(center), radius, cfg.v_nodes)?;
    let fac = factors(params, cfg, &st, &line, &circle)?;

    // Tails: e^{y x} on the left and |ζ| e^{-(1-y) x} on the right, with
    // y = offset - Re v.
    let y_min = offset - (center + radius);
    let y_max = offset - (center - radius);
    let scale: f64 = fac.psi.iter().flatten().map(|z| z.norm()).sum::<f64>()
        * fac.phi.iter().flatten().map(|z| z.norm()).sum::<f64>();
    let left = (scale.max(1.0) / cfg.x_tol).ln() / y_min;
    let right = (zeta.norm() * scale.max(1.0) / cfg.x_tol).ln().max(0.0) / (1.0 - y_max);
    // Oscillation up to |Im(s - v)| <= T + r and poles of f at distance
    // π - |arg(-ζ)| from the real axis set the step.
    let d = 0.9 * (PI - (-zeta).arg().abs());
    let h_max = 2.0 * PI / (cfg.s_line.half_height + radius + (1e15f64).ln() / d);
    let h = 0.5 * h_max;
    let count = ((left + right) / h).ceil() as usize + 1;
    if count > cfg.max_x_nodes {
        return Err(FredholmError::Truncation(format!(
            "x-window [-{left:.1}, {right:.1}] needs {count} nodes (limit {})",
            cfg.max_x_nodes
        )));
    }
    let fine = x_matrix(zeta, &fac, -left, h, count);
    let coarse = x_matrix(zeta, &fac, -left, 2.0 * h, count.div_ceil(2));
    let det = |e: DMatrix<Complex64>| (DMatrix::identity(n, n) - e).lu().determinant();
    let value = det(fine);
    let error = (value - det(coarse)).norm() + line_truncation_bound(zeta, cfg.s_line.half_height) + cfg.x_tol;
    Ok(QLapResult::new(value, Method::T110, error))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{qlap_via_pmf, ExactEvalConfig};
    use crate::fredholm::fredholm_det;

    fn params(n: usize) -> ModelParams {
        ModelParams::half_stationary(0.4, vec![1.0, 0.9][..n].to_vec(), 0.2, 1.0).unwrap()
    }

    fn quick() -> NystromConfig {
        NystromConfig {
            estimate_error: false,
            ..Default::default()
        }
    }

    #[test]
    fn weight_is_a_probability_for_negative_zeta() {
        for z in [-1e-6, -0.3, -5.0] {
            for x in [-800.0, -3.0, 0.0, 2.5, 800.0] {
                let f = weight_f(c(z), x);
                assert!(f.im == 0.0 && f.re >= 0.0 && f.re <= 1.0, "{z} {x} {f}");
            }
        }
    }

    #[test]
    fn rank_n_matches_fredholm_at_one_particle() {
        let p = params(1);
        for z in [c(-0.2), Complex64::new(-0.5, 0.4)] {
            let a = rank_n_qlap(z, &p, &quick()).unwrap().value;
            let b = fredholm_det(z, &p, &quick()).unwrap().value;
            assert!((a - b).norm() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn shifted_and_unshifted_agree() {
        for n in [1, 2] {
            let p = params(n);
            for z in [c(-0.2), c(-0.8), Complex64::new(-0.3, -0.5)] {
                let a = rank_n_unshifted(z, &p, &quick()).unwrap();
                let b = rank_n_shifted(z, &p, &quick()).unwrap();
                assert!((a - b).norm() < 1e-8, "N={n} {a} vs {b}");
            }
        }
        let p = ModelParams::step(0.4, vec![1.0, 0.9, 0.8], 0.7).unwrap();
        let a = rank_n_unshifted(c(-0.4), &p, &quick()).unwrap();
        let b = rank_n_shifted(c(-0.4), &p, &quick()).unwrap();
        assert!((a - b).norm() < 1e-8, "N=3 {a} vs {b}");
    }

    #[test]
    fn rank_n_matches_pmf() {
        let p = params(2);
        for z in [-0.2, -0.8] {
            let a = rank_n_qlap(c(z), &p, &quick()).unwrap().value;
            let b = qlap_via_pmf(c(z), &p, &ExactEvalConfig::default()).unwrap().value;
            assert!((a - b).norm() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn t110_matches_rank_n() {
        for n in [1, 2] {
            let p = params(n);
            for z in [c(-0.2), c(-0.8), Complex64::new(-0.4, 0.3)] {
                let a = rank_n_qlap(z, &p, &quick()).unwrap().value;
                let b = rank_n_via_t110(z, &p, &quick()).unwrap();
                assert!((a - b.value).norm() < 1e-5, "N={n} {a} vs {}", b.value);
                assert!(b.error_estimate < 1e-6, "{}", b.error_estimate);
            }
        }
    }

    #[test]
    fn zeta_zero_and_errors() {
        let p = params(2);
        assert_eq!(rank_n_qlap(c(0.0), &p, &quick()).unwrap().value, c(1.0));
        assert_eq!(rank_n_via_t110(c(0.0), &p, &quick()).unwrap().value, c(1.0));
        let shifted = rank_n_shifted(c(-1e-300), &p, &quick()).unwrap();
        assert!((shifted - 1.0).norm() < 1e-12);
        let equal = p.with_rates(vec![1.0, 1.0]).unwrap();
        assert!(matches!(rank_n_qlap(c(-0.2), &equal, &quick()), Err(FredholmError::Exact(_))));
        assert!(matches!(rank_n_qlap(c(0.3), &p, &quick()), Err(FredholmError::Exact(_))));
    }
}
