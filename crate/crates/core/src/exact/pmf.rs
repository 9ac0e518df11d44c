use num_complex::Complex64;
use rayon::prelude::*;

use super::{inv_qpoch, mq_density_with, pi_at_rates, pi_single, ExactError, ExactEvalConfig};
use crate::process::ModelParams;
use crate::qlap::{on_q_lattice, Method, QLapResult};
use crate::qseries::qpoch_inf;
use crate::quadrature::{circle_rule, tensor_rule, CircleContour};

/// pmf values on an integer window with extrapolated tail masses.
#[derive(Debug, Clone, PartialEq)]
pub struct PmfTable {
    pub lo: i64,
    pub values: Vec<f64>,
    /// Estimated mass below `lo`.
    pub tail_low: f64,
    /// Estimated mass above `hi()`.
    pub tail_high: f64,
}

impl PmfTable {
    pub fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }

    pub fn get(&self, lambda: i64) -> Option<f64> {
        let i = lambda.checked_sub(self.lo)?;
        usize::try_from(i).ok().and_then(|i| self.values.get(i).copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &p)| (self.lo + i as i64, p))
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_low + self.tail_high
    }
}

/// Integrand of the marginal on one torus, split as `base * ratio^λ`.
struct TorusGrid {
    base: Vec<Complex64>,
    ratio: Vec<Complex64>,
}

impl TorusGrid {
    fn eval(&self, lambda: i64) -> Complex64 {
        let k = lambda as i32;
        self.base.iter().zip(&self.ratio).map(|(&b, &u)| b * u.powi(k)).sum()
    }
}

fn torus_grid(params: &ModelParams, radius: f64, cfg: &ExactEvalConfig) -> Result<TorusGrid, ExactError> {
    let n = params.n();
    let q = params.q();
    let qc = &cfg.qpoch;
    let circle = CircleContour::new(Complex64::new(0.0, 0.0), radius, cfg.circle_nodes)?;
    let rules = vec![circle_rule(&circle); n];
    let torus = tensor_rule(&rules, cfg.tensor_cap)?;
    let big_a: f64 = params.a().iter().product();
    let pre = qpoch_inf(Complex64::new(q, 0.0), q, qc)?.powi(n as i32 - 1) / pi_at_rates(params, qc)?;
    let points: Vec<(Complex64, Complex64)> = (0..torus.len())
        .into_par_iter()
        .map(|k| {
            let z = torus.point(k);
            let prod: Complex64 = z.iter().product();
            let u = big_a / prod;
            let mut v = torus.weights[k] / prod * pre * mq_density_with(z, q, qc)? * qpoch_inf(u, q, qc)?;
            for &zj in z {
                v *= pi_single(zj, params, qc)?;
                for &ai in params.a() {
                    v *= inv_qpoch(ai / zj, q, qc)?;
                }
            }
            Ok((v, u))
        })
        .collect::<Result<_, ExactError>>()?;
    let (base, ratio) = points.into_iter().unzip();
    Ok(TorusGrid { base, ratio })
}

/// Torus radius in units of `max a`. Negative `λ` makes the integrand grow
/// with the radius, so the circle is pulled in as `|λ|` increases.
fn relative_radius(lambda: i64, n: usize, cfg: &ExactEvalConfig) -> f64 {
    if lambda >= 0 {
        cfg.pmf_radius
    } else {
        let size = (cfg.circle_nodes + 3 * n * lambda.unsigned_abs() as usize) as f64;
        cfg.pmf_radius.min((32.0 / size).exp())
    }
}

fn max_rate(params: &ModelParams) -> f64 {
    params.a().iter().cloned().fold(0.0, f64::max)
}

fn real_part(lambda: i64, v: Complex64) -> Result<f64, ExactError> {
    if v.im.abs() > 1e-9 {
        return Err(ExactError::Accuracy { lambda, imag: v.im });
    }
    Ok(v.re)
}

/// `P(λ_N = lambda)` from the N-fold torus integral.
pub fn pmf_exact(lambda: i64, params: &ModelParams, cfg: &ExactEvalConfig) -> Result<f64, ExactError> {
    let r = relative_radius(lambda, params.n(), cfg) * max_rate(params);
    let grid = torus_grid(params, r, cfg)?;
    real_part(lambda, grid.eval(lambda))
}

/// Below this level the pmf is indistinguishable from rounding noise.
const NOISE_FLOOR: f64 = 1e-13;

/// Geometric extrapolation from the five outermost values, innermost first.
fn tail_estimate(edge: &[f64]) -> f64 {
    let mags: Vec<f64> = edge.iter().map(|p| p.abs()).collect();
    let top = mags.iter().cloned().fold(0.0, f64::max);
    if top < NOISE_FLOOR {
        return top;
    }
    let r = mags
        .windows(2)
        .map(|w| if w[0] == 0.0 { f64::INFINITY } else { w[1] / w[0] })
        .fold(0.0, f64::max);
    if r >= 1.0 {
        return f64::INFINITY;
    }
    mags[mags.len() - 1] * r / (1.0 - r)
}

/// pmf on `cfg.lambda_window`.
pub fn pmf_table(params: &ModelParams, cfg: &ExactEvalConfig) -> Result<PmfTable, ExactError> {
    let (lo, hi) = cfg.lambda_window;
    if hi - lo < 9 {
        return Err(ExactError::Truncation(format!("lambda window [{lo}, {hi}] is too narrow")));
    }
    let n = params.n();
    let amax = max_rate(params);
    let len = (hi - lo + 1) as usize;
    let mut values = vec![0.0; len];
    if hi >= 0 {
        // One grid serves every nonnegative λ.
        let grid = torus_grid(params, cfg.pmf_radius * amax, cfg)?;
        for lambda in lo.max(0)..=hi {
            values[(lambda - lo) as usize] = real_part(lambda, grid.eval(lambda))?;
        }
    }
    // The left tail decays geometrically while the torus integral carries a
    // rounding floor near 1e-13; stop at the first value that is below the
    // floor or no longer decaying, and extrapolate from the accepted ones.
    let mut left_tail = None;
    let mut prev = f64::INFINITY;
    for lambda in (lo..=hi.min(-1)).rev() {
        let grid = torus_grid(params, relative_radius(lambda, n, cfg) * amax, cfg)?;
        let v = real_part(lambda, grid.eval(lambda))?;
        if v.abs() < NOISE_FLOOR || (v.abs() < 1e-9 && v.abs() > 0.5 * prev) {
            let i = (lambda - lo) as usize + 1;
            let accepted = &values[i..(i + 3).min(len)];
            let extra = if accepted.iter().all(|p| p.abs() >= NOISE_FLOOR) && accepted.len() == 3 {
                tail_estimate(&[accepted[2], accepted[1], accepted[0]])
            } else {
                0.0
            };
            left_tail = Some(v.abs() + if extra.is_finite() { extra } else { 0.0 });
            break;
        }
        values[(lambda - lo) as usize] = v;
        prev = v.abs();
    }
    let k = values.len();
    let tail_low = left_tail.unwrap_or_else(|| {
        let mut low_edge: Vec<f64> = values[..5].to_vec();
        low_edge.reverse();
        tail_estimate(&low_edge)
    });
    Ok(PmfTable {
        lo,
        tail_low,
        tail_high: tail_estimate(&values[k - 5..]),
        values,
    })
}

/// Largest tail mass accepted by `qlap_via_pmf`.
pub const MAX_TAIL_MASS: f64 = 1e-10;

/// `Σ_λ P(λ) / (ζ q^λ;q)_inf` over the window.
pub fn qlap_via_pmf(zeta: Complex64, params: &ModelParams, cfg: &ExactEvalConfig) -> Result<QLapResult, ExactError> {
    let q = params.q();
    if on_q_lattice(zeta, q) {
        return Err(ExactError::Domain(format!("zeta = {zeta} lies on the lattice q^n")));
    }
    if zeta == Complex64::new(0.0, 0.0) {
        return Ok(QLapResult::unit(Method::Pmf));
    }
    let table = pmf_table(params, cfg)?;
    if !(table.tail_mass() <= MAX_TAIL_MASS) {
        return Err(ExactError::Truncation(format!(
            "tail mass {:.3e} outside the lambda window [{}, {}]",
            table.tail_mass(),
            table.lo,
            table.hi()
        )));
    }
    // For very negative λ the Pochhammer overflows and the weight is 0.
    let weight = |l: i64| -> Result<Complex64, ExactError> {
        let d = qpoch_inf(zeta * q.powf(l as f64), q, &cfg.qpoch)?;
        Ok(if d.is_finite() { d.inv() } else { Complex64::new(0.0, 0.0) })
    };
    let mut value = Complex64::new(0.0, 0.0);
    for (l, p) in table.iter().filter(|&(_, p)| p != 0.0) {
        value += weight(l)? * p;
    }
    let err = table.tail_high * weight(table.hi())?.norm().max(1.0)
        + table.tail_low * weight(table.lo)?.norm()
        + 1e-12;
    Ok(QLapResult::new(value, Method::Pmf, err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qseries::qpoch;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn poisson(k: i64) -> f64 {
        (1..=k).fold((-1.0f64).exp(), |p, j| p / j as f64)
    }

    #[test]
    fn single_particle_is_poisson() {
        let p = ModelParams::step(0.4, vec![1.0], 1.0).unwrap();
        let cfg = ExactEvalConfig::default();
        for l in 0..=2 {
            assert!((pmf_exact(l, &p, &cfg).unwrap() - poisson(l)).abs() < 1e-8);
        }
        assert!(pmf_exact(-3, &p, &cfg).unwrap().abs() < 1e-12);
    }

    #[test]
    fn normalization_and_tails() {
        let cfg = ExactEvalConfig::default();
        for p in [
            ModelParams::step(0.4, vec![1.0, 0.9], 1.0).unwrap(),
            ModelParams::half_stationary(0.4, vec![1.0, 0.9], 0.2, 1.0).unwrap(),
        ] {
            let t = pmf_table(&p, &cfg).unwrap();
            assert!((t.mass() - 1.0).abs() < 1e-6, "mass {}", t.mass());
            assert!(t.tail_mass() < 1e-10);
        }
    }

    #[test]
    fn narrow_window_is_rejected() {
        let p = ModelParams::half_stationary(0.4, vec![1.0], 0.2, 1.0).unwrap();
        let cfg = ExactEvalConfig {
            lambda_window: (0, 6),
            ..Default::default()
        };
        assert!(matches!(pmf_table(&p, &cfg), Err(ExactError::Truncation(_))));
        let cfg = ExactEvalConfig {
            lambda_window: (-2, 12),
            ..Default::default()
        };
        assert!(matches!(qlap_via_pmf(c(-0.5, 0.0), &p, &cfg), Err(ExactError::Truncation(_))));
    }

    #[test]
    fn qlap_via_pmf_examples() {
        let p = ModelParams::step(0.4, vec![1.0], 1.0).unwrap();
        let cfg = ExactEvalConfig::default();
        let one = qlap_via_pmf(c(0.0, 0.0), &p, &cfg).unwrap();
        assert!((one.value - 1.0).norm() < 1e-10);
        let z = c(-0.5, 0.2);
        let v = qlap_via_pmf(z, &p, &cfg).unwrap();
        let exact: Complex64 = (0..80)
            .map(|l| qpoch(z * 0.4f64.powi(l as i32), 0.4).unwrap().inv() * poisson(l))
            .sum();
        assert!((v.value - exact).norm() < 1e-9);
        assert!(matches!(qlap_via_pmf(c(1.0, 0.0), &p, &cfg), Err(ExactError::Domain(_))));
    }
}
