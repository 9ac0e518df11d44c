//! Discretized contours: circles for `∮ dw/(2πi)`, vertical lines for
//! `∫ ds/(2πi)`, tensor products and the nested circle families used by the
//! moment formulas.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

/// Which of the nested-contour conditions failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NestedConstraint {
    RatesInside,
    OriginOutside,
    ExcludedOutside,
    ScaledContainment,
}

impl fmt::Display for NestedConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RatesInside => "(i) every rate strictly inside every contour",
            Self::OriginOutside => "(ii) origin strictly outside every contour",
            Self::ExcludedOutside => "(iii) excluded point strictly outside every contour",
            Self::ScaledContainment => "(iv) q*C_k strictly inside C_j for k > j",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("invalid contour: {0}")]
    InvalidContour(String),
    #[error("tensor rule with {size} nodes exceeds cap {cap}")]
    TooLarge { size: u128, cap: usize },
    #[error("tensor rule needs at least one factor")]
    Empty,
    #[error("nested contours violate {constraint}: {detail}")]
    Geometry {
        constraint: NestedConstraint,
        detail: String,
    },
}

/// Default cap on tensor rule size.
pub const DEFAULT_TENSOR_CAP: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleContour {
    pub center: Complex64,
    pub radius: f64,
    pub nodes: usize,
}

impl CircleContour {
    pub fn new(center: Complex64, radius: f64, nodes: usize) -> Result<Self, QuadratureError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(QuadratureError::InvalidContour(format!("radius {radius}")));
        }
        if nodes < 8 {
            return Err(QuadratureError::InvalidContour(format!("{nodes} nodes (need >= 8)")));
        }
        Ok(Self {
            center,
            radius,
            nodes,
        })
    }

    /// Signed clearance of `p` from the circle: positive when inside.
    pub fn inside_margin(&self, p: Complex64) -> f64 {
        self.radius - (p - self.center).norm()
    }

    pub fn rule(&self) -> QuadratureRule {
        circle_rule(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalLine {
    pub offset: f64,
    pub half_height: f64,
    pub nodes: usize,
}

impl VerticalLine {
    pub fn new(offset: f64, half_height: f64, nodes: usize) -> Result<Self, QuadratureError> {
        if !(half_height > 0.0 && half_height.is_finite()) {
            return Err(QuadratureError::InvalidContour(format!("half height {half_height}")));
        }
        if nodes < 2 {
            return Err(QuadratureError::InvalidContour(format!("{nodes} line nodes")));
        }
        if !offset.is_finite() {
            return Err(QuadratureError::InvalidContour(format!("offset {offset}")));
        }
        Ok(Self {
            offset,
            half_height,
            nodes,
        })
    }

    pub fn with_offset(&self, offset: f64) -> Self {
        Self { offset, ..*self }
    }

    pub fn rule(&self) -> QuadratureRule {
        line_rule(self)
    }
}

/// Nodes and weights; applying the rule to `f` means `Σ w_j f(z_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<Complex64>,
    pub weights: Vec<Complex64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn apply<F: FnMut(Complex64) -> Complex64>(&self, mut f: F) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}

/// Trapezoid rule on the circle, weights `(w_j - c)/M` for `∮ dw/(2πi)`.
pub fn circle_rule(c: &CircleContour) -> QuadratureRule {
    let m = c.nodes;
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for j in 0..m {
        let e = Complex64::from_polar(c.radius, 2.0 * PI * j as f64 / m as f64);
        nodes.push(c.center + e);
        weights.push(e / m as f64);
    }
    QuadratureRule { nodes, weights }
}

/// Trapezoid rule for `∫ ds/(2πi)` over `s = offset + iy`, `|y| <= T`.
/// With `ds = i dy` the weights are real: `h/(2π)`, halved at the ends.
pub fn line_rule(l: &VerticalLine) -> QuadratureRule {
    let m = l.nodes;
    let h = 2.0 * l.half_height / (m - 1) as f64;
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for j in 0..m {
        let y = -l.half_height + h * j as f64;
        nodes.push(Complex64::new(l.offset, y));
        let end = j == 0 || j == m - 1;
        weights.push(Complex64::new(if end { 0.5 } else { 1.0 } * h / (2.0 * PI), 0.0));
    }
    QuadratureRule { nodes, weights }
}

/// Decay bound `exp(-(π - |arg(-ζ)|) T)` for integrands carrying
/// `(-ζ)^s π / sin(πs)`, the dominant factor at large `|Im s|`.
pub fn line_truncation_bound(zeta: Complex64, half_height: f64) -> f64 {
    let arg = (-zeta).arg().abs();
    (-(PI - arg) * half_height).exp()
}

/// `(-ζ)^s` on the principal branch, cut along the negative reals.
pub fn neg_zeta_pow(zeta: Complex64, s: Complex64) -> Complex64 {
    let base = -zeta;
    if base == Complex64::new(0.0, 0.0) {
        return Complex64::new(0.0, 0.0);
    }
    (s * base.ln()).exp()
}

/// Product rule over several variables. Point `i` occupies
/// `nodes[i*dim..(i+1)*dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRule {
    pub dim: usize,
    pub nodes: Vec<Complex64>,
    pub weights: Vec<Complex64>,
}

impl TensorRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[Complex64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn apply<F: FnMut(&[Complex64]) -> Complex64>(&self, mut f: F) -> Complex64 {
        (0..self.len()).map(|i| self.weights[i] * f(self.point(i))).sum()
    }
}

pub fn tensor_rule(rules: &[QuadratureRule], cap: usize) -> Result<TensorRule, QuadratureError> {
    if rules.is_empty() {
        return Err(QuadratureError::Empty);
    }
    let size: u128 = rules.iter().map(|r| r.len() as u128).product();
    if size > cap as u128 {
        return Err(QuadratureError::TooLarge { size, cap });
    }
    let size = size as usize;
    let dim = rules.len();
    let mut nodes = Vec::with_capacity(size * dim);
    let mut weights = Vec::with_capacity(size);
    let mut idx = vec![0usize; dim];
    for _ in 0..size {
        let mut w = Complex64::new(1.0, 0.0);
        for (d, r) in rules.iter().enumerate() {
            nodes.push(r.nodes[idx[d]]);
            w *= r.weights[idx[d]];
        }
        weights.push(w);
        // Last index runs fastest.
        for d in (0..dim).rev() {
            idx[d] += 1;
            if idx[d] < rules[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(TensorRule { dim, nodes, weights })
}

const NESTED_MARGIN: f64 = 1e-3;

fn geometry(constraint: NestedConstraint, detail: String) -> QuadratureError {
    QuadratureError::Geometry { constraint, detail }
}

/// Checks the four containment conditions with margin `1e-3 * radius`.
/// Contour `j` carries variable `z_{j+1}`.
pub fn validate_nested(
    contours: &[CircleContour],
    a: &[f64],
    q: f64,
    excluded: Option<Complex64>,
) -> Result<(), QuadratureError> {
    for (j, c) in contours.iter().enumerate() {
        let margin = NESTED_MARGIN * c.radius;
        for &am in a {
            if c.inside_margin(Complex64::new(am, 0.0)) <= margin {
                return Err(geometry(
                    NestedConstraint::RatesInside,
                    format!("rate {am} vs contour {}", j + 1),
                ));
            }
        }
        if -c.inside_margin(Complex64::new(0.0, 0.0)) <= margin {
            return Err(geometry(
                NestedConstraint::OriginOutside,
                format!("contour {} reaches the origin", j + 1),
            ));
        }
        if let Some(e) = excluded {
            if -c.inside_margin(e) <= margin {
                return Err(geometry(
                    NestedConstraint::ExcludedOutside,
                    format!("point {e} vs contour {}", j + 1),
                ));
            }
        }
        for (k, ck) in contours.iter().enumerate().skip(j + 1) {
            let reach = (ck.center * q - c.center).norm() + q * ck.radius;
            if c.radius - reach <= margin {
                return Err(geometry(
                    NestedConstraint::ScaledContainment,
                    format!("q*C_{} not inside C_{}", k + 1, j + 1),
                ));
            }
        }
    }
    Ok(())
}

/// Builds circles `C_1..C_n` around the midpoint of the rate cluster and
/// validates them.
///
/// Radii are chosen from the innermost circle outwards: each lower bound is
/// the larger of the cluster spread and the reach of `q*C_{j+1}`, the upper
/// bound is the distance to the nearest point that must stay outside, and
/// every radius sits `share` of the way between them.
pub fn build_nested_contours(
    a: &[f64],
    q: f64,
    n: usize,
    excluded: Option<Complex64>,
    nodes: usize,
) -> Result<Vec<CircleContour>, QuadratureError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(QuadratureError::InvalidContour(format!("q = {q}")));
    }
    if a.is_empty() || a.iter().any(|&x| !(x > 0.0)) {
        return Err(QuadratureError::InvalidContour("rates must be positive".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let (lo, hi) = a
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    let mu = 0.5 * (lo + hi);
    let spread = 0.5 * (hi - lo);
    let pad = 4.0 * NESTED_MARGIN;
    let mut ub = mu;
    let mut ub_kind = NestedConstraint::OriginOutside;
    if let Some(e) = excluded {
        let d = (e - mu).norm();
        if d <= spread * (1.0 + pad) {
            return Err(geometry(
                NestedConstraint::ExcludedOutside,
                format!("excluded point {e} lies within the rate cluster"),
            ));
        }
        if d < ub {
            ub = d;
            ub_kind = NestedConstraint::ExcludedOutside;
        }
    }
    let ub = ub * (1.0 - pad);
    let lower = |inner: Option<f64>| {
        let reach = inner.map_or(0.0, |r| (1.0 - q) * mu + q * r);
        spread.max(reach) * (1.0 + pad) + f64::EPSILON
    };

    // Feasibility with the tightest chain.
    let mut r = lower(None);
    for _ in 1..n {
        r = lower(Some(r));
    }
    if r >= ub {
        let constraint = if n == 1 { ub_kind } else { NestedConstraint::ScaledContainment };
        return Err(geometry(
            constraint,
            format!("no room: outermost radius needs {r:.6} but only {ub:.6} available"),
        ));
    }

    let share = 1.0 / (n as f64 + 1.0);
    let mut radii = vec![0.0; n];
    let mut inner = None;
    for j in (0..n).rev() {
        let lb = lower(inner);
        // Leave enough room for the remaining outer circles.
        let mut room_lb = lb;
        for _ in 0..j {
            room_lb = lower(Some(room_lb));
        }
        let slack = (ub - room_lb).max(0.0);
        radii[j] = lb + share * slack;
        inner = Some(radii[j]);
    }
    let contours = radii
        .into_iter()
        .map(|r| CircleContour::new(Complex64::new(mu, 0.0), r, nodes))
        .collect::<Result<Vec<_>, _>>()?;
    validate_nested(&contours, a, q, excluded)?;
    Ok(contours)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qseries::qpoch;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn circle_rule_residues() {
        let circ = CircleContour::new(c(0.3, -0.2), 0.7, 64).unwrap();
        let r = circle_rule(&circ);
        let one = r.apply(|w| (w - circ.center).inv());
        assert!((one - 1.0).norm() < 1e-12);
        assert!(r.apply(|w| w).norm() < 1e-14);
        let outside = r.apply(|w| (w - c(1.5, 0.4)).inv());
        assert!(outside.norm() < 1e-10);
        assert!(CircleContour::new(c(0.0, 0.0), 1.0, 4).is_err());
    }

    fn line_integrand(zeta: Complex64, q: f64, u: Complex64) -> Complex64 {
        let qu = (u * q.ln()).exp() * q;
        Complex64::new(PI, 0.0) / (u * PI).sin() * neg_zeta_pow(zeta, u) * qpoch(qu, q).unwrap()
            / qpoch(c(q, 0.0), q).unwrap()
    }

    #[test]
    fn line_rule_q_binomial() {
        let (zeta, q) = (c(-0.3, 0.0), 0.5);
        let target = -qpoch(zeta, q).unwrap().inv();
        let l = VerticalLine::new(-0.5, 40.0, 1025).unwrap();
        let v = line_rule(&l).apply(|u| line_integrand(zeta, q, u));
        assert!((v - target).norm() < 1e-8, "{v} vs {target}");
        let l2 = VerticalLine::new(-0.5, 50.0, 1281).unwrap();
        let v2 = line_rule(&l2).apply(|u| line_integrand(zeta, q, u));
        assert!((v - v2).norm() < 10.0 * line_truncation_bound(zeta, 40.0) + 1e-12);
        // Only the n = 0 residue survives as zeta -> 0.
        let small = c(-1e-6, 0.0);
        let l3 = VerticalLine::new(-0.5, 12.0, 257).unwrap();
        let v3 = line_rule(&l3).apply(|u| line_integrand(small, q, u));
        assert!((v3 + qpoch(small, q).unwrap().inv()).norm() < 1e-8);
        assert!((v3 + 1.0).norm() < 1e-5);
    }

    #[test]
    fn tensor_examples() {
        let one = |w: f64| QuadratureRule {
            nodes: vec![c(1.0, 0.0)],
            weights: vec![c(w, 0.0)],
        };
        let t = tensor_rule(&[one(2.0), one(3.0)], DEFAULT_TENSOR_CAP).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.weights[0], c(6.0, 0.0));

        let cx = CircleContour::new(c(0.5, 0.0), 1.0, 16).unwrap().rule();
        let cy = CircleContour::new(c(-0.2, 0.1), 0.5, 20).unwrap().rule();
        let f = |z: Complex64| (z - 0.3).inv() + z * 0.1;
        let g = |z: Complex64| (z + 0.1).inv();
        let t = tensor_rule(&[cx.clone(), cy.clone()], DEFAULT_TENSOR_CAP).unwrap();
        let sep = t.apply(|p| f(p[0]) * g(p[1]));
        assert!((sep - cx.apply(f) * cy.apply(g)).norm() < 1e-13);

        let centers = [c(0.0, 0.0), c(1.0, 1.0), c(-2.0, 0.5)];
        let rules: Vec<_> = centers
            .iter()
            .map(|&z| CircleContour::new(z, 0.5, 32).unwrap().rule())
            .collect();
        let t = tensor_rule(&rules, DEFAULT_TENSOR_CAP).unwrap();
        let v = t.apply(|p| p.iter().zip(&centers).map(|(&w, &z)| (w - z).inv()).product());
        assert!((v - 1.0).norm() < 1e-10);

        assert!(matches!(
            tensor_rule(&rules, 1000),
            Err(QuadratureError::TooLarge { .. })
        ));
        assert!(matches!(tensor_rule(&[], 10), Err(QuadratureError::Empty)));
    }

    #[test]
    fn nested_validation_examples() {
        let a = [1.0];
        let big = CircleContour::new(c(1.0, 0.0), 0.5, 64).unwrap();
        validate_nested(&[big], &a, 0.4, None).unwrap();
        let excluded = Some(c(0.25 / 0.4, 0.0));
        let small = CircleContour::new(c(1.0, 0.0), 0.3, 64).unwrap();
        validate_nested(&[small], &a, 0.4, excluded).unwrap();
        match validate_nested(&[big], &a, 0.4, excluded) {
            Err(QuadratureError::Geometry { constraint, .. }) => {
                assert_eq!(constraint, NestedConstraint::ExcludedOutside)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nested_pair_contains_scaled_circle() {
        let (a, q) = ([1.0, 0.9], 0.4);
        let cs = build_nested_contours(&a, q, 2, None, 64).unwrap();
        assert_eq!(cs.len(), 2);
        let outer = cs[0];
        let inner = cs[1];
        for j in 0..256 {
            let p = (inner.center + Complex64::from_polar(inner.radius, 2.0 * PI * j as f64 / 256.0)) * q;
            assert!(outer.inside_margin(p) > 1e-3 * outer.radius);
        }
    }

    #[test]
    fn nested_infeasible_names_constraint() {
        // Excluded point sitting inside the rate cluster.
        let err = build_nested_contours(&[1.0, 0.5], 0.4, 1, Some(c(0.75, 0.0)), 64).unwrap_err();
        assert!(matches!(
            err,
            QuadratureError::Geometry {
                constraint: NestedConstraint::ExcludedOutside,
                ..
            }
        ));
        // Deep nesting cannot keep the origin outside.
        let err = build_nested_contours(&[1.0], 0.9, 40, None, 64).unwrap_err();
        assert!(matches!(err, QuadratureError::Geometry { .. }));
    }

    #[test]
    fn rules_are_bit_identical() {
        let circ = CircleContour::new(c(0.95, 0.0), 0.2, 64).unwrap();
        assert_eq!(circle_rule(&circ), circle_rule(&circ));
        let l = VerticalLine::new(0.5, 12.0, 257).unwrap();
        assert_eq!(line_rule(&l), line_rule(&l));
    }

    proptest! {
        #[test]
        fn doubling_nodes_converges(cr in -1.0f64..1.0, ci in -1.0f64..1.0, pr in 2.0f64..4.0, pa in 0.0f64..6.28) {
            let center = c(cr, ci);
            let p = center + Complex64::from_polar(pr, pa);
            let f = |w: Complex64| (w - p).inv() * (w * 0.3).exp() + (w - center).inv();
            let r1 = CircleContour::new(center, 1.0, 64).unwrap().rule().apply(f);
            let r2 = CircleContour::new(center, 1.0, 128).unwrap().rule().apply(f);
            prop_assert!((r1 - r2).norm() < 1e-10);
        }

        #[test]
        fn built_contours_validate(n in 1usize..4, lo in 0.5f64..1.0, width in 0.0f64..0.2, q in 0.2f64..0.6) {
            let a = [lo, (lo + width).min(1.0)];
            if let Ok(cs) = build_nested_contours(&a, q, n, None, 64) {
                prop_assert!(validate_nested(&cs, &a, q, None).is_ok());
            }
        }
    }
}
