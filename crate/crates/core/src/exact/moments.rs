use num_complex::Complex64;
use rayon::prelude::*;

use super::{ExactError, ExactEvalConfig};
use crate::process::ModelParams;
use crate::qlap::{Method, QLapResult};
use crate::qseries::{qpoch_finite, qpoch_inf};
use crate::quadrature::{build_nested_contours, circle_rule, tensor_rule};

/// How the nested contour integral is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMethod {
    /// Tensor trapezoid rule on the validated nested circles.
    Quadrature,
    /// Exact sum over the iterated residues at `a_m q^r`.
    Residues,
}

/// `Π_m a_m/(a_m - z) · e^{(q-1) t z} / (z - e)`, the per-variable factor.
struct MomentIntegrand<'a> {
    a: &'a [f64],
    q: f64,
    t: f64,
    excluded: f64,
}

impl MomentIntegrand<'_> {
    fn f(&self, z: Complex64) -> Complex64 {
        let mut v = ((self.q - 1.0) * self.t * z).exp() / (z - self.excluded);
        for &am in self.a {
            v *= am / (am - z);
        }
        v
    }

    /// `f` with the simple pole at `a_skip` replaced by its residue factor.
    fn f_residue(&self, z: Complex64, skip: usize) -> Complex64 {
        let mut v = ((self.q - 1.0) * self.t * z).exp() / (z - self.excluded);
        for (m, &am) in self.a.iter().enumerate() {
            v *= if m == skip { Complex64::new(-am, 0.0) } else { am / (am - z) };
        }
        v
    }
}

fn prefactor(n: usize, q: f64) -> f64 {
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    sign * q.powf((n * n.saturating_sub(1)) as f64 / 2.0)
}

fn nested_quadrature(n: usize, g: &MomentIntegrand, cfg: &ExactEvalConfig) -> Result<Complex64, ExactError> {
    let excluded = (g.excluded != 0.0).then(|| Complex64::new(g.excluded, 0.0));
    let contours = build_nested_contours(g.a, g.q, n, excluded, cfg.moment_nodes)?;
    let rules: Vec<_> = contours.iter().map(circle_rule).collect();
    let tensor = tensor_rule(&rules, cfg.tensor_cap)?;
    let q = g.q;
    let terms: Vec<Complex64> = (0..tensor.len())
        .into_par_iter()
        .map(|k| {
            let z = tensor.point(k);
            let mut v = tensor.weights[k];
            for j in 0..n {
                v *= g.f(z[j]);
                for k2 in j + 1..n {
                    v *= (z[j] - z[k2]) / (z[j] - z[k2] * q);
                }
            }
            v
        })
        .collect();
    Ok(terms.into_iter().sum::<Complex64>() * prefactor(n, q))
}

/// Poles `a_m q^r` (`r < n`) and the excluded point must all be distinct.
fn check_residue_poles(n: usize, g: &MomentIntegrand) -> Result<(), ExactError> {
    let mut poles = Vec::new();
    for (m, &am) in g.a.iter().enumerate() {
        for r in 0..n {
            poles.push((m, r, am * g.q.powi(r as i32)));
        }
    }
    for (i, &(m, r, p)) in poles.iter().enumerate() {
        if (p - g.excluded).abs() < 1e-10 * p {
            return Err(ExactError::Degeneracy(format!("pole a_{} q^{r} meets the excluded point", m + 1)));
        }
        for &(m2, r2, p2) in &poles[i + 1..] {
            if m2 != m && (p - p2).abs() < 1e-10 * p {
                return Err(ExactError::Degeneracy(format!(
                    "poles a_{} q^{r} and a_{} q^{r2} coincide",
                    m + 1,
                    m2 + 1
                )));
            }
        }
    }
    Ok(())
}

/// Iterated residues for orders `0..=n_max` in one depth-first pass.
///
/// The innermost variable is fixed first. A variable labelled `m` sits at
/// `a_m q^r`, where `r` counts the inner variables already labelled `m`:
/// for `r = 0` the pole of `a_m/(a_m - z)` is taken, otherwise the pole of
/// `1/(z - q z_k)` at the previous member of the chain. The partial product
/// after `d` variables does not depend on the total order, so depth `d` of
/// the tree sums to the `d`-th moment (before the prefactor).
fn residue_moments(n_max: usize, g: &MomentIntegrand) -> Vec<Complex64> {
    struct Frame {
        z: Complex64,
        label: usize,
        rank: usize,
    }
    fn walk(g: &MomentIntegrand, stack: &mut Vec<Frame>, counts: &mut [usize], acc: Complex64, out: &mut [Complex64]) {
        let depth = stack.len();
        out[depth] += acc;
        if depth + 1 == out.len() {
            return;
        }
        for m in 0..g.a.len() {
            let r = counts[m];
            let z = g.a[m] * g.q.powi(r as i32);
            let z = Complex64::new(z, 0.0);
            let mut v = if r == 0 { g.f_residue(z, m) } else { g.f(z) };
            // `z` is outer to every variable on the stack.
            for fr in stack.iter() {
                v *= z - fr.z;
                if !(fr.label == m && fr.rank + 1 == r) {
                    v /= z - fr.z * g.q;
                }
            }
            stack.push(Frame { z, label: m, rank: r });
            counts[m] += 1;
            walk(g, stack, counts, acc * v, out);
            counts[m] -= 1;
            stack.pop();
        }
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n_max + 1];
    // Split the first level across threads; each branch has its own buffer.
    let branches: Vec<Vec<Complex64>> = (0..g.a.len())
        .into_par_iter()
        .map(|m| {
            let mut local = vec![Complex64::new(0.0, 0.0); n_max + 1];
            if n_max == 0 {
                return local;
            }
            let z = Complex64::new(g.a[m], 0.0);
            let mut stack = vec![Frame { z, label: m, rank: 0 }];
            let mut counts = vec![0; g.a.len()];
            counts[m] = 1;
            walk(g, &mut stack, &mut counts, g.f_residue(z, m), &mut local[..]);
            local
        })
        .collect();
    out[0] = Complex64::new(1.0, 0.0);
    for b in branches {
        for (o, v) in out.iter_mut().zip(b) {
            *o += v;
        }
    }
    for (d, o) in out.iter_mut().enumerate() {
        *o *= prefactor(d, g.q);
    }
    out
}

fn moment(n: usize, params: &ModelParams, excluded: f64, cfg: &ExactEvalConfig) -> Result<Complex64, ExactError> {
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let q = params.q();
    if q <= 0.0 {
        return Err(ExactError::Domain("nested contours need q > 0".into()));
    }
    let g = MomentIntegrand {
        a: params.a(),
        q,
        t: params.t(),
        excluded,
    };
    match cfg.moment_method {
        MomentMethod::Quadrature => nested_quadrature(n, &g, cfg),
        MomentMethod::Residues => {
            check_residue_poles(n, &g)?;
            Ok(residue_moments(n, &g)[n])
        }
    }
}

/// `E[q^{n λ_N}]` for step initial data.
pub fn qmoment_step(n: usize, params: &ModelParams, cfg: &ExactEvalConfig) -> Result<Complex64, ExactError> {
    if !params.is_step() {
        return Err(ExactError::Domain("qmoment_step needs alpha = 0".into()));
    }
    moment(n, params, 0.0, cfg)
}

/// `E[q^{n λ_N}]` for half-stationary data, refused when
/// `α q^{-n} >= max a` (the moment is infinite there).
pub fn qmoment_random(n: usize, params: &ModelParams, cfg: &ExactEvalConfig) -> Result<Complex64, ExactError> {
    let alpha = params
        .half_stationary_alpha()
        .ok_or_else(|| ExactError::Domain("qmoment_random needs alpha = (α, 0, ..., 0)".into()))?;
    if alpha == 0.0 {
        return moment(n, params, 0.0, cfg);
    }
    let q = params.q();
    let max_a = params.a().iter().cloned().fold(0.0, f64::max);
    let value = alpha * q.powf(-(n as f64));
    if value >= max_a {
        return Err(ExactError::Divergence { n, value, max_a });
    }
    moment(n, params, alpha / q, cfg)
}

/// Leaves of the residue tree accepted by the generating function.
const MAX_RESIDUE_LEAVES: f64 = 1e9;

/// `Σ_n ζ^n/(q;q)_n E[q^{n λ_N}]` for step data, using the residue
/// evaluation of every moment. Since `0 <= q^{nλ} <= 1`, the tail after
/// order `n` is at most `|ζ|^{n+1} / ((q;q)_inf (1 - |ζ|))`.
pub fn qlap_genfunc_step(zeta: Complex64, params: &ModelParams, cfg: &ExactEvalConfig) -> Result<QLapResult, ExactError> {
    if !params.is_step() {
        return Err(ExactError::Domain("the moment generating function only applies to step data".into()));
    }
    if zeta == Complex64::new(0.0, 0.0) {
        return Ok(QLapResult::unit(Method::GenFunc));
    }
    let q = params.q();
    let az = zeta.norm();
    if az >= 1.0 {
        return Err(ExactError::Truncation(format!("|zeta| = {az} >= 1: series does not converge")));
    }
    let qq = qpoch_inf(Complex64::new(q, 0.0), q, &cfg.qpoch)?.re;
    let tail = |n: usize| az.powi(n as i32 + 1) / (qq * (1.0 - az));
    let tol = 1e-12;
    let n_max = (0..=cfg.genfunc_max_terms).find(|&n| tail(n) < tol).ok_or_else(|| {
        ExactError::Truncation(format!(
            "tail bound {:.3e} after {} terms",
            tail(cfg.genfunc_max_terms),
            cfg.genfunc_max_terms
        ))
    })?;
    let leaves = (params.n() as f64).powi(n_max as i32);
    if leaves > MAX_RESIDUE_LEAVES {
        return Err(ExactError::Truncation(format!(
            "{n_max} terms need {leaves:.3e} residue terms; reduce |zeta|"
        )));
    }
    let g = MomentIntegrand {
        a: params.a(),
        q,
        t: params.t(),
        excluded: 0.0,
    };
    check_residue_poles(n_max, &g)?;
    let moments = residue_moments(n_max, &g);
    let mut value = Complex64::new(0.0, 0.0);
    let mut zn = Complex64::new(1.0, 0.0);
    for (n, mu) in moments.iter().enumerate() {
        let qn = qpoch_finite(Complex64::new(q, 0.0), q, n)?;
        value += zn / qn * mu;
        zn *= zeta;
    }
    Ok(QLapResult::new(value, Method::GenFunc, tail(n_max) + 1e-14))
}
