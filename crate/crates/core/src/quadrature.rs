//! Quadrature rules and a bracketing maximiser shared by the analysis modules.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::{Error, Result};

/// Composite Simpson rule on `[a, b]` with `intervals` sub-intervals.
///
/// `intervals` is rounded up to the next even number.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals.max(2).next_multiple_of(2);
    let h = (b - a) / n as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..n {
        let v = f(a + i as f64 * h);
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even)
}

/// Gauss–Legendre nodes and weights mapped onto `[a, b]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize, a: f64, b: f64) -> Result<Self> {
        let order = NonZeroUsize::new(order)
            .ok_or_else(|| Error::domain("Gauss-Legendre order must be positive"))?;
        let rule = GaussLegendre::new(order);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (mid + half * x, half * w))
            .unzip();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Result of a golden-section search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the maximum of a unimodal function on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `tol`. Fails with
/// [`Error::Convergence`] (reporting the final bracket) if `max_iter`
/// iterations are not enough or the objective is not finite.
pub fn golden_section_max<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Maximum> {
    if !(lo < hi) {
        return Err(Error::domain(format!("empty search bracket [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for iteration in 0..max_iter {
        if !fc.is_finite() || !fd.is_finite() {
            return Err(Error::Convergence(format!(
                "objective not finite inside bracket [{a}, {b}]"
            )));
        }
        if (b - a).abs() <= tol {
            let (x, value) = if fc >= fd { (c, fc) } else { (d, fd) };
            return Ok(Maximum {
                x,
                value,
                evaluations: iteration + 2,
            });
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    Err(Error::Convergence(format!(
        "golden-section search stopped after {max_iter} iterations with bracket [{a}, {b}]"
    )))
}

/// Coarse scan followed by golden-section refinement around the best sample.
///
/// Suitable for objectives that are unimodal only locally, e.g. piecewise
/// smooth overlaps with kinks.
pub fn scan_then_refine<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    samples: usize,
    tol: f64,
) -> Result<Maximum> {
    let samples = samples.max(3);
    let step = (hi - lo) / (samples - 1) as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..samples {
        let v = f(lo + i as f64 * step);
        if v > best.1 {
            best = (i, v);
        }
    }
    let centre = lo + best.0 as f64 * step;
    let a = (centre - step).max(lo);
    let b = (centre + step).min(hi);
    let mut refined = golden_section_max(&mut f, a, b, tol, 200)?;
    // the sampled grid point can beat the refinement at a bracket edge
    if best.1 > refined.value {
        refined.x = centre;
        refined.value = best.1;
    }
    refined.evaluations += samples;
    Ok(refined)
}
