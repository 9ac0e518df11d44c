//! Numerical checks of the standalone identities behind the determinantal
//! formulas: Cauchy determinants, the telescoping partial fraction, the
//! sine integral and the residue-matching relations between q-Pochhammer
//! products.
//!
//! Every check reports `|lhs - rhs| / max(1, |lhs|)` except the bilateral
//! sine sum, whose values decay like `e^{-c|l|}` and are compared relative
//! to `|lhs|`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::qseries::{qpoch_finite, qpoch_inf, QPochConfig, QSeriesError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdentityError {
    #[error(transparent)]
    QSeries(#[from] QSeriesError),
    #[error("singular input: {0}")]
    Singular(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error("at least one draw is required")]
    NoDraws,
    #[error("no generic parameters found after {0} redraws")]
    Redraws(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub name: String,
    pub max_abs_deviation: f64,
    pub trials: usize,
    /// Inputs of the worst trial, integers stored as real parts.
    pub worst_case_inputs: Vec<(String, Complex64)>,
    /// Deviation allowed by the suite.
    pub threshold: f64,
}

impl IdentityReport {
    fn single(name: &str, deviation: f64, inputs: Vec<(String, Complex64)>) -> Self {
        Self {
            name: name.to_string(),
            max_abs_deviation: deviation,
            trials: 1,
            worst_case_inputs: inputs,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    /// Fold another trial of the same identity into this report.
    pub fn absorb(&mut self, other: IdentityReport) {
        self.trials += other.trials;
        // NaN deviations must win so that they are never hidden.
        if !(other.max_abs_deviation <= self.max_abs_deviation) {
            self.max_abs_deviation = other.max_abs_deviation;
            self.worst_case_inputs = other.worst_case_inputs;
        }
    }

    pub fn passed(&self) -> bool {
        self.max_abs_deviation.is_finite() && self.max_abs_deviation < self.threshold
    }

    fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }
}

pub const DEFAULT_THRESHOLD: f64 = 1e-10;
/// Truncated bilateral sums at `N >= 2`.
pub const BILATERAL_THRESHOLD: f64 = 1e-6;
pub const DEFAULT_L_TRUNC: i64 = 30;
pub const SUITE_Q: f64 = 0.5;
pub const SUITE_SEED: u64 = 20_140_501;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);
/// Denominators below this are treated as singular.
const SINGULAR: f64 = 1e-12;

fn qp(e: Complex64, q: f64) -> Complex64 {
    (e * q.ln()).exp()
}

fn sinpi(z: Complex64) -> Complex64 {
    (z * PI).sin()
}

fn deviation(lhs: Complex64, rhs: Complex64) -> f64 {
    (lhs - rhs).norm() / lhs.norm().max(1.0)
}

fn labelled(prefix: &str, v: &[Complex64]) -> Vec<(String, Complex64)> {
    v.iter()
        .enumerate()
        .map(|(i, &x)| (format!("{prefix}{}", i + 1), x))
        .collect()
}

fn check_q(q: f64) -> Result<(), IdentityError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(IdentityError::Domain(format!("q = {q} outside (0, 1)")));
    }
    Ok(())
}

fn check_lengths(s: &[Complex64], a: &[Complex64]) -> Result<(), IdentityError> {
    if s.is_empty() || s.len() != a.len() {
        return Err(IdentityError::Domain(format!(
            "need two non-empty vectors of equal length, got {} and {}",
            s.len(),
            a.len()
        )));
    }
    Ok(())
}

fn nonzero(x: Complex64, what: impl FnOnce() -> String) -> Result<Complex64, IdentityError> {
    if x.norm() < SINGULAR {
        return Err(IdentityError::Singular(what()));
    }
    Ok(x)
}

/// Product form and determinant of `1/pair(s_i, a_j)`, where
/// `pair(x, y) = f(x) - f(y)` or its sine analogue.
fn cauchy(
    s: &[Complex64],
    a: &[Complex64],
    pair: impl Fn(Complex64, Complex64) -> Complex64,
) -> Result<(Complex64, Complex64), IdentityError> {
    let n = s.len();
    let mut m = DMatrix::from_element(n, n, C0);
    let mut lhs = C1;
    for i in 0..n {
        for j in 0..n {
            let d = nonzero(pair(s[i], a[j]), || format!("denominator vanishes at (i, j) = ({}, {})", i + 1, j + 1))?;
            m[(i, j)] = 1.0 / d;
            lhs /= d;
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            lhs *= pair(a[i], a[j]) * pair(s[j], s[i]);
        }
    }
    Ok((lhs, m.determinant()))
}

/// Rational Cauchy determinant with entries `1/(q^{s_i} - q^{a_j})`.
pub fn check_cauchy_rational(s: &[Complex64], a: &[Complex64], q: f64) -> Result<IdentityReport, IdentityError> {
    check_q(q)?;
    check_lengths(s, a)?;
    let (lhs, rhs) = cauchy(s, a, |x, y| qp(x, q) - qp(y, q))?;
    let mut inputs = labelled("s", s);
    inputs.extend(labelled("a", a));
    Ok(IdentityReport::single("cauchy_rational", deviation(lhs, rhs), inputs))
}

/// Trigonometric Cauchy determinant with entries `1/sin π(s_i - a_j)`.
///
/// The numerator is `prod_{i<j} sin π(a_i - a_j) sin π(s_j - s_i)`.
pub fn check_cauchy_trig(s: &[Complex64], a: &[Complex64]) -> Result<IdentityReport, IdentityError> {
    check_lengths(s, a)?;
    let (lhs, rhs) = cauchy(s, a, |x, y| sinpi(x - y))?;
    let mut inputs = labelled("s", s);
    inputs.extend(labelled("a", a));
    Ok(IdentityReport::single("cauchy_trig", deviation(lhs, rhs), inputs))
}

/// Telescoping expansion
/// `(prod_m r_m - 1)/(q^s - q^v) = sum_k (q^{a_k} - q^{α_k}) / ((q^s - q^{α_k})(q^v - q^{a_k})) prod_{l<k} r_l`
/// with `r_m = (q^s - q^{a_m})(q^v - q^{α_m}) / ((q^s - q^{α_m})(q^v - q^{a_m}))`.
/// All of `a`, `alpha` are exponents.
pub fn check_partial_fraction(
    s: Complex64,
    v: Complex64,
    a: &[Complex64],
    alpha: &[Complex64],
    q: f64,
) -> Result<IdentityReport, IdentityError> {
    check_q(q)?;
    check_lengths(a, alpha)?;
    let (qs, qv) = (qp(s, q), qp(v, q));
    let sv = nonzero(qs - qv, || "q^s = q^v".into())?;
    let mut ratio = C1;
    let mut rhs = C0;
    for (m, (&am, &alm)) in a.iter().zip(alpha).enumerate() {
        let (qa, qal) = (qp(am, q), qp(alm, q));
        let d_s = nonzero(qs - qal, || format!("q^s = q^alpha_{}", m + 1))?;
        let d_v = nonzero(qv - qa, || format!("q^v = q^a_{}", m + 1))?;
        rhs += (qa - qal) / (d_s * d_v) * ratio;
        ratio *= (qs - qa) * (qv - qal) / (d_s * d_v);
    }
    let lhs = (ratio - 1.0) / sv;
    let mut inputs = vec![("s".to_string(), s), ("v".to_string(), v)];
    inputs.extend(labelled("a", a));
    inputs.extend(labelled("alpha", alpha));
    Ok(IdentityReport::single("partial_fraction", deviation(lhs, rhs), inputs))
}

/// Smallest allowed distance `π - |arg(-ζ)|` of the poles of the integrand
/// from the real axis.
const MIN_STRIP: f64 = 0.05;
/// Target size of each dropped tail of the sine integral.
const SINE_TAIL: f64 = 1e-17;

/// Trapezoidal value of `∫_R -ζ e^{xy} / (-ζ + e^x) dx`.
pub fn sine_integral(y: f64, zeta: Complex64) -> Result<Complex64, IdentityError> {
    if !(y > 0.0 && y < 1.0) {
        return Err(IdentityError::Domain(format!("y = {y} outside (0, 1)")));
    }
    let mz = -zeta;
    let strip = PI - mz.arg().abs();
    if mz.norm() == 0.0 || !(strip >= MIN_STRIP) {
        return Err(IdentityError::Domain(format!(
            "zeta = {zeta} too close to the positive real axis"
        )));
    }
    let shift = mz.norm().ln();
    // Integrand ~ e^{xy} on the left and -ζ e^{-x(1-y)} on the right of ln|ζ|.
    let left = shift - (1.0 / (y * SINE_TAIL)).ln() / y;
    let right = shift + (1.0 / ((1.0 - y) * SINE_TAIL)).ln() / (1.0 - y);
    // Aliasing error ~ e^{-2π d / h} with d just inside the pole strip.
    let h = 2.0 * PI * 0.9 * strip / (1.0 / SINE_TAIL).ln();
    let n = ((right - left) / h).ceil() as usize;
    let h = (right - left) / n as f64;
    let f = |x: f64| -> Complex64 {
        if x < shift {
            mz * (x * y).exp() / (mz + x.exp())
        } else {
            mz * (-x * (1.0 - y)).exp() / (mz * (-x).exp() + 1.0)
        }
    };
    let mut sum = 0.5 * (f(left) + f(right));
    for k in 1..n {
        sum += f(left + k as f64 * h);
    }
    Ok(sum * h)
}

/// `π (-ζ)^y / sin πy` against the numerical integral.
pub fn check_sine_integral(y: f64, zeta: Complex64) -> Result<IdentityReport, IdentityError> {
    let rhs = sine_integral(y, zeta)?;
    let lhs = PI * (-zeta).powf(y) / (PI * y).sin();
    let inputs = vec![("y".to_string(), Complex64::new(y, 0.0)), ("zeta".to_string(), zeta)];
    Ok(IdentityReport::single("sine_integral", deviation(lhs, rhs), inputs))
}

/// Both sides of the infinite-product relation used for the pairwise
/// factors, `x = a_i - a_j`.
pub fn a113_sides(
    ai: Complex64,
    aj: Complex64,
    ni: u32,
    nj: u32,
    q: f64,
    cfg: &QPochConfig,
) -> Result<(Complex64, Complex64), IdentityError> {
    let x = ai - aj;
    let (ni_f, nj_f) = (ni as f64, nj as f64);
    let p = |e: Complex64| qpoch_inf(qp(e, q), q, cfg);
    let lhs = p(x + ni_f - nj_f)? * p(-x + nj_f - ni_f)?
        / (q.powf(ni_f * nj_f) * p(x - nj_f)? * p(-x - ni_f)?);
    let rhs = p(x + ni_f + 1.0)? * p(-x + nj_f + 1.0)? * (qp(aj + nj_f, q) - qp(ai + ni_f, q)) * (qp(ai, q) - qp(aj, q))
        / (qp(ai + aj, q) * p(x)? * p(-x)?);
    Ok((lhs, rhs))
}

/// `(x;q)_n` against `(-x)^n q^{n(n-1)/2} (x^{-1} q^{1-n};q)_n`.
pub fn a115_sides(x: Complex64, n: u32, q: f64) -> Result<(Complex64, Complex64), IdentityError> {
    let nf = n as f64;
    let lhs = qpoch_finite(x, q, n as usize)?;
    let rhs = (-x).powu(n) * q.powf(nf * (nf - 1.0) / 2.0) * qpoch_finite(q.powf(1.0 - nf) / x, q, n as usize)?;
    Ok((lhs, rhs))
}

/// Three ways of writing the finite product over exponents
/// `x - n_j, ..., x + n_i`: the two split forms and
/// `(q^{x-n_j};q)_{n_i+n_j+1}`.
pub fn a117_sides(x: Complex64, ni: u32, nj: u32, q: f64) -> Result<[Complex64; 3], IdentityError> {
    let (ni_f, nj_f) = (ni as f64, nj as f64);
    let (ni, nj) = (ni as usize, nj as usize);
    let first = qpoch_finite(qp(x + ni_f - nj_f, q), q, nj + 1)? * qpoch_finite(qp(x - nj_f, q), q, ni)?;
    let whole = qpoch_finite(qp(x - nj_f, q), q, ni + nj + 1)?;
    let last = qpoch_finite(qp(x - nj_f, q), q, nj + 1)? * qpoch_finite(qp(x + 1.0, q), q, ni)?;
    Ok([first, whole, last])
}

/// Both sides of the relation between the `α`-pole and rate-pole residues,
/// and their common closed form `(-1)^{n_i+1} q^{-(a_i+n_i) n_i + n_i(n_i-1)/2}`.
pub fn a118_sides(
    ai: Complex64,
    aj: Complex64,
    alj: Complex64,
    ni: u32,
    nj: u32,
    q: f64,
    cfg: &QPochConfig,
) -> Result<[Complex64; 3], IdentityError> {
    let (ni_f, nj_f) = (ni as f64, nj as f64);
    let p = |e: Complex64| qpoch_inf(qp(e, q), q, cfg);
    let lhs = qp(ai, q) * p(ai - alj + ni_f - nj_f + 1.0)? * p(alj - ai + nj_f - ni_f)?
        / (qp((ni_f + 1.0) * (alj + nj_f), q) * p(ai - alj - nj_f)? * p(alj - ai + nj_f + 1.0)?);
    let rhs = -p(ai - aj + ni_f + 1.0)? * p(aj - ai - ni_f)? / (qp(aj * ni_f, q) * p(ai - aj + 1.0)? * p(aj - ai)?);
    let sign = if ni % 2 == 0 { -1.0 } else { 1.0 };
    let closed = sign * qp(-(ai + ni_f) * ni_f, q) * q.powf(ni_f * (ni_f - 1.0) / 2.0);
    Ok([lhs, rhs, closed])
}

/// `sin w` as `(sin(w) e^{-|Im w|}, |Im w|)`, safe for large imaginary parts.
fn sin_scaled(w: Complex64) -> (Complex64, f64) {
    let y = w.im.abs();
    let s = ((I * w - y).exp() - (-I * w - y).exp()) / (2.0 * I);
    (s, y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilateralSides {
    pub lhs: Complex64,
    pub rhs: Complex64,
    /// Sum of `|term|` over the boundary `max_i |l_i| = L` of the box.
    pub tail: f64,
}

/// Truncated bilateral sum over `l_1 + ... + l_N = ell`, `|l_i| <= l_trunc`,
/// against its closed product form.
pub fn a121_sides(
    z: &[Complex64],
    a: &[Complex64],
    ell: i64,
    q: f64,
    l_trunc: i64,
    cfg: &QPochConfig,
) -> Result<BilateralSides, IdentityError> {
    check_q(q)?;
    check_lengths(z, a)?;
    let n = z.len();
    let lq = q.ln();
    let im = |l: i64| I * (2.0 * PI * l as f64 / lq);
    let term = |ls: &[i64]| -> Complex64 {
        let mut val = C1;
        let mut scale = 0.0;
        for i in 0..n {
            for j in 0..n {
                let (s, y) = sin_scaled(PI * (z[i] - a[j] + im(ls[i])));
                val /= s;
                scale -= y;
            }
            for j in i + 1..n {
                let (s, y) = sin_scaled(PI * (z[j] - z[i] + im(ls[j] - ls[i])));
                val *= s;
                scale += y;
            }
        }
        val * scale.exp()
    };

    let mut lhs = C0;
    let mut tail = 0.0;
    let mut ls = vec![-l_trunc; n];
    loop {
        let free: i64 = ls[..n - 1].iter().sum();
        ls[n - 1] = ell - free;
        if ls[n - 1].abs() <= l_trunc {
            let t = term(&ls);
            lhs += t;
            if ls.iter().any(|l| l.abs() == l_trunc) {
                tail += t.norm();
            }
        }
        // Odometer over the first n - 1 labels.
        let mut k = 0;
        while k + 1 < n {
            ls[k] += 1;
            if ls[k] <= l_trunc {
                break;
            }
            ls[k] = -l_trunc;
            k += 1;
        }
        if k + 1 >= n {
            break;
        }
    }

    let p = |e: Complex64| qpoch_inf(qp(e, q), q, cfg);
    let zs: Complex64 = z.iter().sum();
    let asum: Complex64 = a.iter().sum();
    let qq = qpoch_inf(Complex64::new(q, 0.0), q, cfg)?;
    let mut rhs = (qq * qq * qp(asum, q) * lq / PI).powu(n as u32 - 1);
    rhs *= p(zs - asum + 1.0)? * p(asum - zs)? / sinpi(zs - asum + im(ell));
    for i in 0..n {
        for j in i + 1..n {
            rhs *= p(z[i] - z[j])? * p(z[j] - z[i])? * p(a[i] - a[j])? * p(a[j] - a[i])?;
            rhs /= (qp(z[j], q) - qp(z[i], q)) * (qp(a[j], q) - qp(a[i], q)) * sinpi(a[j] - a[i]);
        }
        for j in 0..n {
            rhs /= p(z[i] - a[j] + 1.0)? * p(a[i] - z[j])?;
        }
    }
    Ok(BilateralSides { lhs, rhs, tail })
}

fn draw_complex<R: Rng>(rng: &mut R, half: f64) -> Complex64 {
    Complex64::new(rng.random_range(-half..half), rng.random_range(-half..half))
}

const MAX_REDRAWS: usize = 1000;
/// Parameters closer than this to a pole or zero of either side are redrawn.
const GENERIC: f64 = 1e-3;

/// Call `trial` on fresh draws until it yields a report, skipping draws on
/// which it reports a singular input.
fn generic_trial<R: Rng>(
    rng: &mut R,
    mut trial: impl FnMut(&mut R) -> Result<Option<IdentityReport>, IdentityError>,
) -> Result<IdentityReport, IdentityError> {
    for _ in 0..MAX_REDRAWS {
        match trial(rng) {
            Ok(Some(r)) => return Ok(r),
            Ok(None) | Err(IdentityError::Singular(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(IdentityError::Redraws(MAX_REDRAWS))
}

fn repeat<R: Rng>(
    rng: &mut R,
    draws: usize,
    mut trial: impl FnMut(&mut R) -> Result<Option<IdentityReport>, IdentityError>,
) -> Result<IdentityReport, IdentityError> {
    if draws == 0 {
        return Err(IdentityError::NoDraws);
    }
    let mut report = generic_trial(rng, &mut trial)?;
    for _ in 1..draws {
        report.absorb(generic_trial(rng, &mut trial)?);
    }
    Ok(report)
}

fn far_from(x: Complex64) -> bool {
    x.norm() > GENERIC
}

/// Seeded random sweeps of the pointwise appendix relations and the
/// bilateral sum at `N = 1` and `N = 2`.
pub fn check_appendix(q: f64, draws: usize, seed: u64) -> Result<Vec<IdentityReport>, IdentityError> {
    check_q(q)?;
    if draws == 0 {
        return Err(IdentityError::NoDraws);
    }
    let cfg = QPochConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    let ints = |rng: &mut ChaCha8Rng| (rng.random_range(0..=8u32), rng.random_range(0..=8u32));
    let int_inputs = |ni: u32, nj: u32| {
        vec![
            ("n_i".to_string(), Complex64::new(ni as f64, 0.0)),
            ("n_j".to_string(), Complex64::new(nj as f64, 0.0)),
        ]
    };
    let mut out = Vec::new();

    out.push(repeat(rng, draws, |rng| {
        let (ai, aj) = (draw_complex(rng, 1.0), draw_complex(rng, 1.0));
        let (ni, nj) = ints(rng);
        // Both sides carry (q^{±(a_i - a_j)};q)_inf in a denominator.
        if !far_from(qp(ai, q) - qp(aj, q)) || !far_from(qpoch_inf(qp(ai - aj, q), q, &cfg)?) {
            return Ok(None);
        }
        let (l, r) = a113_sides(ai, aj, ni, nj, q, &cfg)?;
        let mut inputs = vec![("a_i".to_string(), ai), ("a_j".to_string(), aj)];
        inputs.extend(int_inputs(ni, nj));
        Ok(Some(IdentityReport::single("a113", deviation(l, r), inputs)))
    })?);

    out.push(repeat(rng, draws, |rng| {
        let x = draw_complex(rng, 2.0);
        let n = rng.random_range(0..=8u32);
        if !far_from(x) {
            return Ok(None);
        }
        let (l, r) = a115_sides(x, n, q)?;
        let inputs = vec![("x".to_string(), x), ("n".to_string(), Complex64::new(n as f64, 0.0))];
        Ok(Some(IdentityReport::single("a115", deviation(l, r), inputs)))
    })?);

    out.push(repeat(rng, draws, |rng| {
        let x = draw_complex(rng, 1.0);
        let (ni, nj) = ints(rng);
        let [first, whole, last] = a117_sides(x, ni, nj, q)?;
        let dev = deviation(whole, first).max(deviation(whole, last));
        let mut inputs = vec![("x".to_string(), x)];
        inputs.extend(int_inputs(ni, nj));
        Ok(Some(IdentityReport::single("a117", dev, inputs)))
    })?);

    out.push(repeat(rng, draws, |rng| {
        let (ai, aj, alj) = (draw_complex(rng, 1.0), draw_complex(rng, 1.0), draw_complex(rng, 1.0));
        let (ni, nj) = ints(rng);
        let generic = far_from(qpoch_inf(qp(ai - alj - nj as f64, q), q, &cfg)?)
            && far_from(qpoch_inf(qp(alj - ai + nj as f64 + 1.0, q), q, &cfg)?)
            && far_from(qpoch_inf(qp(ai - aj + 1.0, q), q, &cfg)?)
            && far_from(qpoch_inf(qp(aj - ai, q), q, &cfg)?);
        if !generic {
            return Ok(None);
        }
        let [l, r, c] = a118_sides(ai, aj, alj, ni, nj, q, &cfg)?;
        let dev = deviation(c, l).max(deviation(c, r));
        let mut inputs = vec![("a_i".to_string(), ai), ("a_j".to_string(), aj), ("alpha_j".to_string(), alj)];
        inputs.extend(int_inputs(ni, nj));
        Ok(Some(IdentityReport::single("a118", dev, inputs)))
    })?);

    for (n, threshold) in [(1usize, DEFAULT_THRESHOLD), (2, BILATERAL_THRESHOLD)] {
        let name = format!("a121_n{n}");
        out.push(
            repeat(rng, draws, |rng| {
                let z: Vec<Complex64> = (0..n).map(|_| draw_complex(rng, 1.0)).collect();
                let a: Vec<Complex64> = (0..n).map(|_| draw_complex(rng, 0.5)).collect();
                let ell = rng.random_range(-3..=3i64);
                if !bilateral_generic(&z, &a, q) {
                    return Ok(None);
                }
                let sides = a121_sides(&z, &a, ell, q, DEFAULT_L_TRUNC, &cfg)?;
                let dev = (sides.lhs - sides.rhs).norm() / sides.lhs.norm();
                let mut inputs = labelled("z", &z);
                inputs.extend(labelled("a", &a));
                inputs.push(("l".to_string(), Complex64::new(ell as f64, 0.0)));
                Ok(Some(IdentityReport::single(&name, dev, inputs)))
            })?
            .with_threshold(threshold),
        );
    }
    Ok(out)
}

/// Rejects draws near a zero of any sine or of the `q^z` differences.
fn bilateral_generic(z: &[Complex64], a: &[Complex64], q: f64) -> bool {
    let n = z.len();
    let zs: Complex64 = z.iter().sum();
    let asum: Complex64 = a.iter().sum();
    let mut ok = far_from(sinpi(zs - asum)) && far_from(qpoch_finite(qp(zs - asum, q), q, 1).unwrap_or(C0));
    for i in 0..n {
        for j in 0..n {
            ok &= far_from(sinpi(z[i] - a[j]));
            if i < j {
                ok &= far_from(sinpi(a[j] - a[i])) && far_from(qp(z[j], q) - qp(z[i], q));
            }
        }
    }
    ok
}

/// Run every identity check on `draws` seeded random draws each.
pub fn run_suite(seed: u64, draws: usize) -> Result<Vec<IdentityReport>, IdentityError> {
    if draws == 0 {
        return Err(IdentityError::NoDraws);
    }
    let q = SUITE_Q;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    let vec3 = |rng: &mut ChaCha8Rng| -> Vec<Complex64> { (0..3).map(|_| draw_complex(rng, 1.0)).collect() };
    let mut out = Vec::new();

    out.push(repeat(rng, draws, |rng| {
        let (s, a) = (vec3(rng), vec3(rng));
        check_cauchy_rational(&s, &a, q).map(Some)
    })?);
    out.push(repeat(rng, draws, |rng| {
        let (s, a) = (vec3(rng), vec3(rng));
        check_cauchy_trig(&s, &a).map(Some)
    })?);
    out.push(repeat(rng, draws, |rng| {
        let (s, v) = (draw_complex(rng, 1.0), draw_complex(rng, 1.0));
        let (a, alpha) = (vec3(rng), vec3(rng));
        check_partial_fraction(s, v, &a, &alpha, q).map(Some)
    })?);
    out.push(repeat(rng, draws, |rng| {
        let y = rng.random_range(0.1..0.9);
        let r = rng.random_range(0.1f64..10.0);
        let theta = rng.random_range(-2.5..2.5);
        check_sine_integral(y, -Complex64::from_polar(r, theta)).map(Some)
    })?);
    let seed_app = rng.random();
    out.extend(check_appendix(q, draws, seed_app)?);
    Ok(out)
}
