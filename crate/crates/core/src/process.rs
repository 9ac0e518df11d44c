//! Model parameters and exact continuous-time simulation of the q-TASEP.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::qlap::{on_q_lattice, Method, QLapResult};
use crate::qseries::{qpoch, qpoisson_sample, QSeriesError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("q = {0} is outside [0, 1)")]
    InvalidQ(f64),
    #[error("need at least one particle")]
    NoParticles,
    #[error("rate a_{index} = {value} is outside (0, 1]")]
    InvalidRate { index: usize, value: f64 },
    #[error("alpha has {got} entries, expected {expected}")]
    AlphaLength { got: usize, expected: usize },
    #[error("alpha_{index} = {value} must lie in [0, min a = {min_a})")]
    InvalidAlpha { index: usize, value: f64, min_a: f64 },
    #[error("time t = {0} must be finite and nonnegative")]
    InvalidTime(f64),
    #[error("exponent form needs 0 < q < 1 (got q = {0})")]
    NoExponentForm(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    QSeries(#[from] QSeriesError),
    #[error("half-stationary initial data needs alpha = (α, 0, ..., 0); got {0:?}")]
    NotHalfStationary(Vec<f64>),
    #[error("zeta = {0} lies on the lattice q^n where the transform is undefined")]
    ZetaOnLattice(Complex64),
    #[error("positions {0:?} are not strictly decreasing")]
    Ordering(Vec<i64>),
    #[error("particle index {index} out of range for {n} particles")]
    Index { index: usize, n: usize },
    #[error("need at least one trajectory")]
    NoTrajectories,
    #[error("non-finite weight at lambda = {0}")]
    NonFinite(i64),
}

/// Model data in multiplicative form.
///
/// `alpha[i] = 0.0` stands for an absent parameter (exponent `+∞`), so the
/// half-stationary q-TASEP is `alpha = (α, 0, ..., 0)` and step initial data
/// is `alpha = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    q: f64,
    a: Vec<f64>,
    alpha: Vec<f64>,
    t: f64,
}

impl ModelParams {
    pub fn new(q: f64, a: Vec<f64>, alpha: Vec<f64>, t: f64) -> Result<Self, ParamError> {
        if !(0.0..1.0).contains(&q) {
            return Err(ParamError::InvalidQ(q));
        }
        if a.is_empty() {
            return Err(ParamError::NoParticles);
        }
        for (index, &value) in a.iter().enumerate() {
            if !(value > 0.0 && value <= 1.0) {
                return Err(ParamError::InvalidRate { index, value });
            }
        }
        if alpha.len() != a.len() {
            return Err(ParamError::AlphaLength {
                got: alpha.len(),
                expected: a.len(),
            });
        }
        let min_a = a.iter().cloned().fold(f64::INFINITY, f64::min);
        for (index, &value) in alpha.iter().enumerate() {
            if !(value >= 0.0 && value < min_a) {
                return Err(ParamError::InvalidAlpha { index, value, min_a });
            }
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(ParamError::InvalidTime(t));
        }
        Ok(Self { q, a, alpha, t })
    }

    pub fn step(q: f64, a: Vec<f64>, t: f64) -> Result<Self, ParamError> {
        let n = a.len();
        Self::new(q, a, vec![0.0; n], t)
    }

    pub fn half_stationary(q: f64, a: Vec<f64>, alpha: f64, t: f64) -> Result<Self, ParamError> {
        let mut al = vec![0.0; a.len()];
        if let Some(first) = al.first_mut() {
            *first = alpha;
        }
        Self::new(q, a, al, t)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn with_time(&self, t: f64) -> Result<Self, ParamError> {
        Self::new(self.q, self.a.clone(), self.alpha.clone(), t)
    }

    pub fn with_alpha(&self, alpha: Vec<f64>) -> Result<Self, ParamError> {
        Self::new(self.q, self.a.clone(), alpha, self.t)
    }

    pub fn with_rates(&self, a: Vec<f64>) -> Result<Self, ParamError> {
        Self::new(self.q, a, self.alpha.clone(), self.t)
    }

    pub fn is_step(&self) -> bool {
        self.alpha.iter().all(|&x| x == 0.0)
    }

    /// `Some(α)` when alpha has the pattern `(α, 0, ..., 0)`.
    pub fn half_stationary_alpha(&self) -> Option<f64> {
        if self.alpha[1..].iter().all(|&x| x == 0.0) {
            Some(self.alpha[0])
        } else {
            None
        }
    }

    fn ln_q(&self) -> Result<f64, ParamError> {
        if self.q > 0.0 {
            Ok(self.q.ln())
        } else {
            Err(ParamError::NoExponentForm(self.q))
        }
    }

    /// Exponents `log_q a_i` (0 for `a_i = 1`).
    pub fn a_exponents(&self) -> Result<Vec<f64>, ParamError> {
        let lq = self.ln_q()?;
        Ok(self.a.iter().map(|&x| x.ln() / lq).collect())
    }

    /// Exponents `log_q α_i`, `+∞` for absent entries.
    pub fn alpha_exponents(&self) -> Result<Vec<f64>, ParamError> {
        let lq = self.ln_q()?;
        Ok(self
            .alpha
            .iter()
            .map(|&x| if x == 0.0 { f64::INFINITY } else { x.ln() / lq })
            .collect())
    }

    /// `A = Σ_j log_q a_j`.
    pub fn total_exponent(&self) -> Result<f64, ParamError> {
        Ok(self.a_exponents()?.iter().sum())
    }
}

/// Positions `x_1 > x_2 > ... > x_N`; index 0 is the leading particle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticleConfig {
    x: Vec<i64>,
}

impl ParticleConfig {
    pub fn new(x: Vec<i64>) -> Result<Self, SimError> {
        if x.is_empty() {
            return Err(ParamError::NoParticles.into());
        }
        if x.windows(2).any(|w| w[0] <= w[1]) {
            return Err(SimError::Ordering(x));
        }
        Ok(Self { x })
    }

    pub fn positions(&self) -> &[i64] {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Empty sites in front of particle `i`; `None` for the leader.
    pub fn gap(&self, i: usize) -> Option<i64> {
        (i > 0).then(|| self.x[i - 1] - self.x[i] - 1)
    }

    /// `λ_N = x_N + N`.
    pub fn lambda(&self) -> i64 {
        self.x[self.x.len() - 1] + self.x.len() as i64
    }

    fn is_ordered(&self) -> bool {
        self.x.windows(2).all(|w| w[0] > w[1])
    }
}

pub fn init_step(n: usize) -> Result<ParticleConfig, SimError> {
    ParticleConfig::new((1..=n as i64).map(|i| -i).collect())
}

/// Gaps drawn independently from q-Poisson(α/a_i).
pub fn init_half_stationary<R: Rng + ?Sized>(
    params: &ModelParams,
    rng: &mut R,
) -> Result<ParticleConfig, SimError> {
    let alpha = params
        .half_stationary_alpha()
        .ok_or_else(|| SimError::NotHalfStationary(params.alpha().to_vec()))?;
    let mut x = Vec::with_capacity(params.n());
    let mut front = 0i64;
    for &ai in params.a() {
        let gap = qpoisson_sample(alpha / ai, params.q(), rng)? as i64;
        front = front - 1 - gap;
        x.push(front);
    }
    Ok(ParticleConfig { x })
}

/// `a_i (1 - q^gap)` with an infinite gap for the leader.
pub fn hop_rate(config: &ParticleConfig, i: usize, params: &ModelParams) -> Result<f64, SimError> {
    if i >= config.n() || i >= params.n() {
        return Err(SimError::Index { index: i, n: config.n() });
    }
    Ok(rate(config, i, params))
}

fn rate(config: &ParticleConfig, i: usize, params: &ModelParams) -> f64 {
    let ai = params.a()[i];
    match config.gap(i) {
        None => ai,
        Some(g) => ai * (1.0 - params.q().powf(g as f64)),
    }
}

/// Exact event-driven simulation from time 0 to `t_end`.
pub fn simulate<R: Rng + ?Sized>(
    config: &ParticleConfig,
    params: &ModelParams,
    t_end: f64,
    rng: &mut R,
) -> Result<ParticleConfig, SimError> {
    if config.n() != params.n() {
        return Err(SimError::Index {
            index: config.n(),
            n: params.n(),
        });
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(ParamError::InvalidTime(t_end).into());
    }
    let mut state = config.clone();
    let n = state.n();
    let mut rates: Vec<f64> = (0..n).map(|i| rate(&state, i, params)).collect();
    let mut time = 0.0;
    loop {
        let total: f64 = rates.iter().sum();
        let u: f64 = rng.random();
        time += -(1.0 - u).ln() / total;
        if time > t_end {
            return Ok(state);
        }
        let mut pick = rng.random::<f64>() * total;
        let mut i = n - 1;
        for (k, &r) in rates.iter().enumerate() {
            if pick < r {
                i = k;
                break;
            }
            pick -= r;
        }
        // Rounding can leave `pick` past the last positive rate.
        while rates[i] == 0.0 {
            i -= 1;
        }
        state.x[i] += 1;
        debug_assert!(state.is_ordered());
        rates[i] = rate(&state, i, params);
        if i + 1 < n {
            rates[i + 1] = rate(&state, i + 1, params);
        }
    }
}

/// Empirical law of `λ_N` over independent trajectories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalDist {
    pub counts: BTreeMap<i64, u64>,
    pub total: u64,
    pub seed: u64,
}

impl EmpiricalDist {
    pub fn frequency(&self, lambda: i64) -> f64 {
        self.counts.get(&lambda).copied().unwrap_or(0) as f64 / self.total as f64
    }

    /// Binomial standard error of `frequency(lambda)`.
    pub fn frequency_std_error(&self, lambda: i64) -> f64 {
        let p = self.frequency(lambda);
        (p * (1.0 - p) / self.total as f64).sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.counts
            .iter()
            .map(|(&l, &c)| l as f64 * c as f64)
            .sum::<f64>()
            / self.total as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.counts
            .iter()
            .map(|(&l, &c)| (l as f64 - m).powi(2) * c as f64)
            .sum::<f64>()
            / self.total as f64
    }

    /// `P(λ <= lambda)`.
    pub fn cdf(&self, lambda: i64) -> f64 {
        self.counts.range(..=lambda).map(|(_, &c)| c).sum::<u64>() as f64 / self.total as f64
    }
}

/// Generator for trajectory `index`: the base seed fixes the key and the
/// index selects an independent ChaCha stream.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn initial_config<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> Result<ParticleConfig, SimError> {
    if params.is_step() {
        init_step(params.n())
    } else {
        init_half_stationary(params, rng)
    }
}

/// Runs `trajectories` independent copies up to `params.t()`. The result
/// does not depend on the thread count.
pub fn sample_lambda(params: &ModelParams, trajectories: u64, seed: u64) -> Result<EmpiricalDist, SimError> {
    if trajectories == 0 {
        return Err(SimError::NoTrajectories);
    }
    if !params.is_step() && params.half_stationary_alpha().is_none() {
        return Err(SimError::NotHalfStationary(params.alpha().to_vec()));
    }
    let counts = (0..trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(seed, i);
            let start = initial_config(params, &mut rng)?;
            Ok(simulate(&start, params, params.t(), &mut rng)?.lambda())
        })
        .try_fold(BTreeMap::new, |mut acc: BTreeMap<i64, u64>, l: Result<i64, SimError>| {
            *acc.entry(l?).or_insert(0) += 1;
            Ok::<_, SimError>(acc)
        })
        .try_reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            Ok(a)
        })?;
    Ok(EmpiricalDist {
        counts,
        total: trajectories,
        seed,
    })
}

/// Largest weight magnitude accepted without a warning.
const WEIGHT_WARN: f64 = 1e12;

/// Sample mean of `1/(ζ q^λ;q)_inf` with its standard error.
pub fn empirical_qlaplace(dist: &EmpiricalDist, zeta: Complex64, q: f64) -> Result<QLapResult, SimError> {
    if on_q_lattice(zeta, q) {
        return Err(SimError::ZetaOnLattice(zeta));
    }
    if zeta == Complex64::new(0.0, 0.0) {
        return Ok(QLapResult::unit(Method::Empirical));
    }
    let n = dist.total as f64;
    let mut mean = Complex64::new(0.0, 0.0);
    let mut second = 0.0;
    for (&l, &c) in &dist.counts {
        let w = qpoch(zeta * q.powf(l as f64), q)?.inv();
        if !(w.re.is_finite() && w.im.is_finite()) {
            return Err(SimError::NonFinite(l));
        }
        if w.norm() > WEIGHT_WARN {
            log::warn!("weight {:.3e} at lambda = {l} for zeta = {zeta}", w.norm());
        }
        let f = c as f64 / n;
        mean += w * f;
        second += w.norm_sqr() * f;
    }
    let var = (second - mean.norm_sqr()).max(0.0);
    Ok(QLapResult::new(mean, Method::Empirical, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qseries::qpoisson_pmf;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn poisson(mu: f64, k: i64) -> f64 {
        if k < 0 {
            return 0.0;
        }
        let mut p = (-mu).exp();
        for j in 1..=k {
            p *= mu / j as f64;
        }
        p
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(1.0, vec![1.0], vec![0.0], 1.0).is_err());
        assert!(ModelParams::new(0.4, vec![1.2], vec![0.0], 1.0).is_err());
        assert!(ModelParams::new(0.4, vec![1.0, 0.9], vec![0.95, 0.0], 1.0).is_err());
        assert!(ModelParams::new(0.4, vec![1.0], vec![0.0, 0.0], 1.0).is_err());
        assert!(ModelParams::new(0.4, vec![1.0], vec![0.0], -1.0).is_err());
        let p = ModelParams::half_stationary(0.4, vec![1.0, 0.9], 0.2, 1.0).unwrap();
        assert_eq!(p.half_stationary_alpha(), Some(0.2));
        let e = p.a_exponents().unwrap();
        assert_eq!(e[0], 0.0);
        assert!((0.4f64.powf(e[1]) - 0.9).abs() < 1e-15);
        assert_eq!(p.alpha_exponents().unwrap()[1], f64::INFINITY);
        let tasep = ModelParams::step(0.0, vec![1.0], 1.0).unwrap();
        assert!(tasep.a_exponents().is_err());
    }

    #[test]
    fn step_initial_data() {
        let s = init_step(3).unwrap();
        assert_eq!(s.positions(), &[-1, -2, -3]);
        assert_eq!(s.gap(1), Some(0));
        assert_eq!(s.gap(2), Some(0));
        assert_eq!(s.lambda(), 0);
        assert!(ParticleConfig::new(vec![0, 0]).is_err());
    }

    #[test]
    fn half_stationary_reduces_to_step() {
        let p = ModelParams::half_stationary(0.4, vec![1.0, 0.8, 0.9], 0.0, 1.0).unwrap();
        let mut rng = trajectory_rng(1, 0);
        assert_eq!(init_half_stationary(&p, &mut rng).unwrap(), init_step(3).unwrap());
        let general = ModelParams::new(0.4, vec![1.0, 0.9], vec![0.1, 0.2], 1.0).unwrap();
        assert!(matches!(
            init_half_stationary(&general, &mut rng),
            Err(SimError::NotHalfStationary(_))
        ));
    }

    #[test]
    fn half_stationary_gap_law() {
        let (q, alpha) = (0.4, 0.3);
        let p = ModelParams::half_stationary(q, vec![1.0], alpha, 0.0).unwrap();
        let mut rng = trajectory_rng(11, 0);
        let draws = 100_000u64;
        let mut counts = BTreeMap::new();
        for _ in 0..draws {
            let x = init_half_stationary(&p, &mut rng).unwrap();
            *counts.entry(-1 - x.positions()[0]).or_insert(0u64) += 1;
        }
        for k in 0..8 {
            let pk = qpoisson_pmf(k as u64, alpha, q).unwrap();
            let got = counts.get(&k).copied().unwrap_or(0) as f64;
            let sigma = (draws as f64 * pk * (1.0 - pk)).sqrt().max(1.0);
            assert!((got - draws as f64 * pk).abs() < 4.0 * sigma, "gap {k}");
        }
    }

    #[test]
    fn rates() {
        let p = ModelParams::step(0.4, vec![0.7, 0.9, 0.8], 1.0).unwrap();
        let x = ParticleConfig::new(vec![5, 4, 1]).unwrap();
        assert_eq!(hop_rate(&x, 0, &p).unwrap(), 0.7);
        assert_eq!(hop_rate(&x, 1, &p).unwrap(), 0.0);
        assert!((hop_rate(&x, 2, &p).unwrap() - 0.8 * (1.0 - 0.4f64.powi(2))).abs() < 1e-15);
        assert!(hop_rate(&x, 3, &p).is_err());
        let tasep = ModelParams::step(0.0, vec![1.0, 0.6], 1.0).unwrap();
        let y = ParticleConfig::new(vec![3, 0]).unwrap();
        assert_eq!(hop_rate(&y, 1, &tasep).unwrap(), 0.6);
    }

    #[test]
    fn zero_time_is_identity() {
        let p = ModelParams::step(0.4, vec![1.0, 1.0], 0.0).unwrap();
        let x = init_step(2).unwrap();
        let mut rng = trajectory_rng(3, 0);
        assert_eq!(simulate(&x, &p, 0.0, &mut rng).unwrap(), x);
        let d = sample_lambda(&p, 100, 5).unwrap();
        assert_eq!(d.counts.len(), 1);
        assert_eq!(d.frequency(0), 1.0);
    }

    #[test]
    fn free_particle_is_poisson() {
        let p = ModelParams::step(0.4, vec![1.0], 2.0).unwrap();
        let d = sample_lambda(&p, 100_000, 17).unwrap();
        assert_eq!(d.total, 100_000);
        assert_eq!(d.counts.values().sum::<u64>(), 100_000);
        assert!((d.mean() - 2.0).abs() < 3.0 * (2.0f64 / 1e5).sqrt());
    }

    #[test]
    fn tasep_second_particle_is_delayed() {
        let p = ModelParams::step(0.0, vec![1.0, 1.0], 1.0).unwrap();
        let d = sample_lambda(&p, 100_000, 23).unwrap();
        let se = (d.variance() / 1e5).sqrt();
        assert!(d.mean() + 4.0 * se < 1.0);
    }

    #[test]
    fn half_stationary_single_particle_convolution() {
        let (q, alpha, t) = (0.4, 0.3, 1.0);
        let p = ModelParams::half_stationary(q, vec![1.0], alpha, t).unwrap();
        let d = sample_lambda(&p, 100_000, 29).unwrap();
        for l in -3i64..5 {
            let exact: f64 = (0..60)
                .map(|g| poisson(t, l + g) * qpoisson_pmf(g as u64, alpha, q).unwrap())
                .sum();
            let sigma = (exact * (1.0 - exact) / 1e5).sqrt().max(1e-5);
            assert!((d.frequency(l) - exact).abs() < 4.0 * sigma, "lambda {l}");
        }
    }

    #[test]
    fn determinism_and_monotonicity() {
        let p = ModelParams::half_stationary(0.4, vec![1.0, 0.9], 0.2, 0.5).unwrap();
        let d1 = sample_lambda(&p, 100_000, 99).unwrap();
        assert_eq!(d1, sample_lambda(&p, 100_000, 99).unwrap());
        let later = sample_lambda(&p.with_time(1.5).unwrap(), 100_000, 100).unwrap();
        for l in -3..6 {
            let se = (d1.frequency_std_error(l).powi(2) + later.frequency_std_error(l).powi(2)).sqrt();
            assert!(later.cdf(l) <= d1.cdf(l) + 4.0 * se.max(1e-6), "lambda {l}");
        }
    }

    #[test]
    fn empirical_qlaplace_examples() {
        let point = EmpiricalDist {
            counts: BTreeMap::from([(0, 10)]),
            total: 10,
            seed: 0,
        };
        assert_eq!(empirical_qlaplace(&point, c(0.0, 0.0), 0.4).unwrap().value, c(1.0, 0.0));
        let z = c(-0.5, 0.3);
        let v = empirical_qlaplace(&point, z, 0.4).unwrap();
        assert!((v.value - qpoch(z, 0.4).unwrap().inv()).norm() < 1e-15);
        assert!(matches!(
            empirical_qlaplace(&point, c(0.16, 0.0), 0.4),
            Err(SimError::ZetaOnLattice(_))
        ));

        let (q, zeta) = (0.4, c(-0.5, 0.0));
        let p = ModelParams::step(q, vec![1.0], 1.0).unwrap();
        let d = sample_lambda(&p, 100_000, 31).unwrap();
        let r = empirical_qlaplace(&d, zeta, q).unwrap();
        let exact: Complex64 = (0..60)
            .map(|l| qpoch(zeta * q.powi(l as i32), q).unwrap().inv() * poisson(1.0, l))
            .sum();
        assert!((r.value - exact).norm() < 3.0 * r.error_estimate);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn ordering_survives_every_event(seed in 0u64..1000, n in 1usize..5, q in 0.0f64..0.9, alpha in 0.0f64..0.5) {
            let a: Vec<f64> = (0..n).map(|i| 1.0 - 0.1 * i as f64).collect();
            let p = ModelParams::half_stationary(q, a, alpha, 3.0).unwrap();
            let mut rng = trajectory_rng(seed, 0);
            let mut x = init_half_stationary(&p, &mut rng).unwrap();
            for _ in 0..20 {
                x = simulate(&x, &p, 0.2, &mut rng).unwrap();
                prop_assert!(x.is_ordered());
            }
        }
    }
}
