use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{check_eps, resolved_contour, FredholmError, KernelEval, KernelForm, NystromConfig};
use crate::exact::{check_zeta_line, inv_qpoch, qpow};
use crate::process::ModelParams;
use crate::qlap::{Method, QLapResult};
use crate::qseries::qpoch_inf;
use crate::quadrature::{circle_rule, line_rule, line_truncation_bound, neg_zeta_pow, QuadratureRule};

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `π (-ζ)^s / sin πs`.
fn sine_weight(zeta: Complex64, s: Complex64) -> Complex64 {
    neg_zeta_pow(zeta, s) * PI / (PI * s).sin()
}

/// The line integral passes through `w_2` when `q^ε |w_1| = |w_2|`.
fn check_pole_clearance(w1: Complex64, w2: Complex64, q: f64, eps: f64) -> Result<(), FredholmError> {
    let r = q.powf(eps) * w1.norm();
    if (r - w2.norm()).abs() <= 1e-9 * w2.norm().max(1e-300) {
        return Err(FredholmError::Path(format!(
            "q^s w1 meets w2 = {w2} on the s-line; move eps so that q^eps |w1| != |w2|"
        )));
    }
    Ok(())
}

/// `(-1) π(-ζ)^s/sin πs · e^{q^s w_1 t} · Π_m (α_m/w_1;q)/(α_m/(q^s w_1);q)
/// · Π_m (q^s w_1/a_m;q)/(w_1/a_m;q)`, everything in the main kernel that
/// does not involve `w_2`.
fn main_factor(
    w1: Complex64,
    s: Complex64,
    zeta: Complex64,
    params: &ModelParams,
    cfg: &NystromConfig,
) -> Result<Complex64, FredholmError> {
    let q = params.q();
    let qc = &cfg.qpoch;
    let x = qpow(q, s) * w1;
    let mut v = -sine_weight(zeta, s) * (x * params.t()).exp();
    for &al in params.alpha() {
        if al != 0.0 {
            v *= qpoch_inf(al / w1, q, qc)? * inv_qpoch(al / x, q, qc)?;
        }
    }
    for &am in params.a() {
        v *= qpoch_inf(x / am, q, qc)? * inv_qpoch(w1 / am, q, qc)?;
    }
    Ok(v)
}

/// The two-sided kernel's `w_2`-free factor in exponent variables:
/// `-π(-ζ)^s/sin πs · e^{(q^{v_1+s} - q^{v_1}) t}
/// · Π_m (q^{s+v_1-a_m};q)(q^{α_m-v_1};q)/((q^{v_1-a_m};q)(q^{α_m-s-v_1};q))`.
fn twosided_factor(
    v1: Complex64,
    s: Complex64,
    zeta: Complex64,
    ae: &[f64],
    alpha_e: &[f64],
    params: &ModelParams,
    cfg: &NystromConfig,
) -> Result<Complex64, FredholmError> {
    let q = params.q();
    let qc = &cfg.qpoch;
    let mut v = -sine_weight(zeta, s) * ((qpow(q, v1 + s) - qpow(q, v1)) * params.t()).exp();
    for &am in ae {
        v *= qpoch_inf(qpow(q, s + v1 - am), q, qc)? * inv_qpoch(qpow(q, v1 - am), q, qc)?;
    }
    for &al in alpha_e.iter().filter(|x| x.is_finite()) {
        v *= qpoch_inf(qpow(q, al - v1), q, qc)? * inv_qpoch(qpow(q, al - s - v1), q, qc)?;
    }
    Ok(v)
}

/// `κ` in the `e^{-κ|Im s|}` decay of `(-ζ)^s/sin πs`.
fn decay_rate(zeta: Complex64) -> f64 {
    (PI - (-zeta).arg().abs()).max(1e-3)
}

/// Sums `Σ_l wt_l g_l` and reports the dropped tails estimated from the end
/// values, `|g(±T)| / (2π κ)`, plus the rounding level.
fn line_sum(values: &[Complex64], rule: &QuadratureRule, zeta: Complex64) -> KernelEval {
    let mut value = c(0.0);
    let mut abs = 0.0;
    for (g, w) in values.iter().zip(&rule.weights) {
        value += g * w;
        abs += (g * w).norm();
    }
    let ends = values[0].norm() + values[values.len() - 1].norm();
    KernelEval {
        value,
        s_truncation_error: ends / (2.0 * PI * decay_rate(zeta)) + 1e-15 * abs,
    }
}

fn check_kernel_inputs(zeta: Complex64, cfg: &NystromConfig) -> Result<(), FredholmError> {
    check_zeta_line(zeta)?;
    check_eps(cfg.eps())
}

/// `K_ζ(w_1, w_2)`: the `s`-integral over `iℝ + ε` by the line rule.
pub fn kernel_main(
    w1: Complex64,
    w2: Complex64,
    zeta: Complex64,
    params: &ModelParams,
    cfg: &NystromConfig,
) -> Result<KernelEval, FredholmError> {
    check_kernel_inputs(zeta, cfg)?;
    let q = params.q();
    check_pole_clearance(w1, w2, q, cfg.eps())?;
    let rule = line_rule(&cfg.s_line);
    let e2 = (-w2 * params.t()).exp();
    let values: Vec<Complex64> = rule
        .nodes
        .iter()
        .map(|&s| Ok(main_factor(w1, s, zeta, params, cfg)? * e2 / (qpow(q, s) * w1 - w2)))
        .collect::<Result<_, FredholmError>>()?;
    Ok(line_sum(&values, &rule, zeta))
}

/// The kernel in exponent variables `w_i = q^{v_i}`, general finite or
/// absent `α_m` (absent entries drop out).
pub fn kernel_twosided(
    v1: Complex64,
    v2: Complex64,
    zeta: Complex64,
    params: &ModelParams,
    cfg: &NystromConfig,
) -> Result<KernelEval, FredholmError> {
    check_kernel_inputs(zeta, cfg)?;
    let q = params.q();
    check_pole_clearance(qpow(q, v1), qpow(q, v2), q, cfg.eps())?;
    let ae = params.a_exponents()?;
    let alpha_e = params.alpha_exponents()?;
    let rule = line_rule(&cfg.s_line);
    let w2 = qpow(q, v2);
    let values: Vec<Complex64> = rule
        .nodes
        .iter()
        .map(|&s| Ok(twosided_factor(v1, s, zeta, &ae, &alpha_e, params, cfg)? / (qpow(q, s + v1) - w2)))
        .collect::<Result<_, FredholmError>>()?;
    Ok(line_sum(&values, &rule, zeta))
}

/// `D_{jk} = ω_k K_ζ(w_j, w_k)` on the nodes of `C_a`, with the circle
/// rule's `∮ dw/(2πi)` weights `ω_k`.
pub fn nystrom_matrix(
    zeta: Complex64,
    params: &ModelParams,
    cfg: &NystromConfig,
) -> Result<DMatrix<Complex64>, FredholmError> {
    check_kernel_inputs(zeta, cfg)?;
    let q = params.q();
    let t = params.t();
    let contour = resolved_contour(params, cfg)?;
    let circle = circle_rule(&contour);
    let line = line_rule(&cfg.s_line);
    let qs: Vec<Complex64> = line.nodes.iter().map(|&s| qpow(q, s)).collect();
    let ae = params.a_exponents()?;
    let alpha_e = params.alpha_exponents()?;
    let lq = q.ln();
    let m = circle.len();
    let rows: Vec<Vec<Complex64>> = circle
        .nodes
        .par_iter()
        .map(|&wj| {
            let g: Vec<Complex64> = match cfg.form {
                KernelForm::Main => line
                    .nodes
                    .iter()
                    .zip(&line.weights)
                    .map(|(&s, &wt)| Ok(main_factor(wj, s, zeta, params, cfg)? * wt))
                    .collect::<Result<_, FredholmError>>()?,
                KernelForm::TwoSided => {
                    let vj = wj.ln() / lq;
                    line.nodes
                        .iter()
                        .zip(&line.weights)
                        .map(|(&s, &wt)| Ok(twosided_factor(vj, s, zeta, &ae, &alpha_e, params, cfg)? * wt))
                        .collect::<Result<_, FredholmError>>()?
                }
            };
            let row = (0..m)
                .map(|k| {
                    let wk = circle.nodes[k];
                    let col = match cfg.form {
                        KernelForm::Main => (-wk * t).exp(),
                        KernelForm::TwoSided => c(1.0),
                    };
                    let sum: Complex64 = g.iter().zip(&qs).map(|(&gl, &ql)| gl / (ql * wj - wk)).sum();
                    sum * col * circle.weights[k]
                })
                .collect();
            Ok(row)
        })
        .collect::<Result<_, FredholmError>>()?;
    let mut d = DMatrix::zeros(m, m);
    for (j, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            if !v.is_finite() {
                return Err(FredholmError::Numeric { row: j, col: k });
            }
            d[(j, k)] = v;
        }
    }
    Ok(d)
}

fn det_identity_plus(d: DMatrix<Complex64>) -> Complex64 {
    let n = d.nrows();
    (DMatrix::identity(n, n) + d).lu().determinant()
}

/// `det(1 + K_ζ)` on `L²(C_a)` by Nyström discretisation.
pub fn fredholm_det(zeta: Complex64, params: &ModelParams, cfg: &NystromConfig) -> Result<QLapResult, FredholmError> {
    check_kernel_inputs(zeta, cfg)?;
    if zeta == c(0.0) {
        return Ok(QLapResult::unit(Method::Fredholm));
    }
    let value = det_identity_plus(nystrom_matrix(zeta, params, cfg)?);
    let tail = line_truncation_bound(zeta, cfg.s_line.half_height);
    let error = if cfg.estimate_error {
        let fine = det_identity_plus(nystrom_matrix(zeta, params, &cfg.doubled()?)?);
        (fine - value).norm() + tail
    } else {
        tail
    };
    Ok(QLapResult::new(value, Method::Fredholm, error))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{qlap_via_pmf, ExactEvalConfig};
    use crate::quadrature::VerticalLine;

    fn params(n: usize, alpha: f64) -> ModelParams {
        ModelParams::half_stationary(0.4, vec![1.0, 0.9][..n].to_vec(), alpha, 1.0).unwrap()
    }

    fn quick() -> NystromConfig {
        NystromConfig {
            estimate_error: false,
            ..Default::default()
        }
    }

    #[test]
    fn kernel_vanishes_as_zeta_goes_to_zero() {
        let p = params(2, 0.2);
        let (w1, w2) = (Complex64::new(1.0, 0.1), Complex64::new(0.9, -0.05));
        let mut last = f64::INFINITY;
        for z in [-1e-2, -1e-4, -1e-6] {
            let k = kernel_main(w1, w2, c(z), &p, &quick()).unwrap().value.norm();
            assert!(k < last);
            last = k;
        }
        assert!(last < 1e-2);
        let v1 = w1.ln() / 0.4f64.ln();
        let v2 = w2.ln() / 0.4f64.ln();
        assert!(kernel_twosided(v1, v2, c(-1e-6), &p, &quick()).unwrap().value.norm() < 1e-2);
    }

    #[test]
    fn zero_alpha_gives_step_kernel() {
        let p = params(2, 0.0);
        let step = ModelParams::step(0.4, vec![1.0, 0.9], 1.0).unwrap();
        let (w1, w2) = (Complex64::new(1.05, 0.1), Complex64::new(0.85, -0.05));
        let z = Complex64::new(-0.3, 0.2);
        let a = kernel_main(w1, w2, z, &p, &quick()).unwrap().value;
        let b = kernel_main(w1, w2, z, &step, &quick()).unwrap().value;
        assert_eq!(a, b);
        // α -> 0 continuously.
        let tiny = params(2, 1e-12);
        let d = kernel_main(w1, w2, z, &tiny, &quick()).unwrap().value;
        assert!((d - a).norm() < 1e-10);
    }

    #[test]
    fn kernel_truncation_error_covers_doubling_height() {
        let p = params(2, 0.2);
        let (w1, w2) = (Complex64::new(1.0, 0.1), Complex64::new(0.9, -0.05));
        for z in [c(-0.8), Complex64::new(-0.3, 0.6)] {
            for h in [3.0, 6.0, 12.0] {
                let base = NystromConfig {
                    s_line: VerticalLine::new(0.5, h, (64.0 * h) as usize + 1).unwrap(),
                    ..quick()
                };
                let tall = NystromConfig {
                    s_line: VerticalLine::new(0.5, 2.0 * h, (128.0 * h) as usize + 1).unwrap(),
                    ..quick()
                };
                let a = kernel_main(w1, w2, z, &p, &base).unwrap();
                let b = kernel_main(w1, w2, z, &p, &tall).unwrap();
                assert!((a.value - b.value).norm() <= a.s_truncation_error, "T={h}");
            }
        }
    }

    #[test]
    fn twosided_reduces_to_main() {
        let lq = 0.4f64.ln();
        let (w1, w2) = (Complex64::new(1.0, 0.1), Complex64::new(0.9, -0.05));
        let (v1, v2) = (w1.ln() / lq, w2.ln() / lq);
        let z = Complex64::new(-0.6, 0.1);
        for t in [0.0, 1.0] {
            for n in [1, 2] {
                let p = params(n, 0.2).with_time(t).unwrap();
                let main = kernel_main(w1, w2, z, &p, &quick()).unwrap().value;
                let two = kernel_twosided(v1, v2, z, &p, &quick()).unwrap().value;
                let conj = ((w1 - w2) * t).exp();
                assert!((two * conj - main).norm() < 1e-10 * main.norm().max(1.0), "t={t} N={n}");
            }
        }
    }

    #[test]
    fn twosided_determinant_matches_main() {
        let p = params(2, 0.2);
        let main = fredholm_det(c(-0.5), &p, &quick()).unwrap().value;
        let cfg = NystromConfig {
            form: KernelForm::TwoSided,
            ..quick()
        };
        let two = fredholm_det(c(-0.5), &p, &cfg).unwrap().value;
        assert!((main - two).norm() < 1e-10);
    }

    #[test]
    fn single_particle_matches_pmf() {
        let p = params(1, 0.2);
        let v = fredholm_det(c(-0.5), &p, &NystromConfig::default()).unwrap();
        let r = qlap_via_pmf(c(-0.5), &p, &ExactEvalConfig::default()).unwrap().value;
        assert!((v.value - r).norm() < 1e-6, "{} vs {r}", v.value);
        assert!(v.error_estimate < 1e-7);
        assert_eq!(fredholm_det(c(0.0), &p, &quick()).unwrap().value, c(1.0));
    }

    #[test]
    fn node_doubling() {
        let p = params(2, 0.2);
        let v = fredholm_det(c(-0.8), &p, &NystromConfig::default()).unwrap();
        assert!(v.error_estimate < 1e-7, "{}", v.error_estimate);
    }

    #[test]
    fn series_truncation_near_zero_zeta() {
        let p = params(2, 0.2);
        let z = c(-1e-3);
        let d = nystrom_matrix(z, &p, &quick()).unwrap();
        let tr = d.trace();
        let tr2 = (&d * &d).trace();
        let series = c(1.0) + tr + 0.5 * (tr * tr - tr2);
        let det = fredholm_det(z, &p, &quick()).unwrap().value;
        let size = d.norm();
        assert!(size < 0.1);
        assert!((det - series).norm() < 10.0 * size.powi(3), "{det} vs {series}");
        // A 2πi mismatch in the weights would show up at first order.
        let exact = qlap_via_pmf(z, &p, &ExactEvalConfig::default()).unwrap().value;
        assert!((det - exact).norm() < 1e-8);
    }

    #[test]
    fn analytic_in_zeta() {
        let p = params(2, 0.2);
        let cfg = quick();
        let z0 = -0.5;
        let h = 1e-4;
        let f = |z: Complex64| fredholm_det(z, &p, &cfg).unwrap().value;
        let fd = (f(c(z0 + h)) - f(c(z0 - h))) / (2.0 * h);
        // The value at real ζ carries ~1e-13 of imaginary rounding, so the
        // complex step cannot be taken tiny.
        let hs = 1e-6;
        let cs = f(Complex64::new(z0, hs)).im / hs;
        assert!((fd.re - cs).abs() < 1e-4, "{fd} vs {cs}");
        assert!(fd.im.abs() < 1e-6);
    }

    #[test]
    fn path_errors() {
        let p = params(2, 0.2);
        let w1 = c(1.0);
        let w2 = c(0.4f64.powf(0.5));
        assert!(matches!(kernel_main(w1, w2, c(-0.5), &p, &quick()), Err(FredholmError::Path(_))));
        assert!(matches!(fredholm_det(c(0.5), &p, &quick()), Err(FredholmError::Exact(_))));
    }
}
