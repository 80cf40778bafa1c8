//! Limited-memory BFGS with a strong-Wolfe line search (bracketing phase and
//! cubic-interpolation zoom).

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsSettings {
    pub max_iterations: usize,
    pub history: usize,
    /// Stop once ‖g‖∞ ≤ tol · ‖g(x0)‖∞.
    pub tol: f64,
    /// Absolute floor on the gradient test.
    pub abs_tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search_evals: usize,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        LbfgsSettings {
            max_iterations: 500,
            history: 10,
            tol: 1e-6,
            abs_tol: 0.0,
            c1: 1e-4,
            c2: 0.9,
            max_line_search_evals: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    /// No decrease is representable in floating point along the best direction.
    NoProgress,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LbfgsError<E> {
    #[error("objective failed at the initial point: {0}")]
    Initial(E),
    #[error("non-finite objective or gradient at the initial point")]
    NonFinite,
    #[error("line search failed at iteration {iteration} (f = {objective:e}, |g|inf = {grad_norm:e}, directional derivative {slope:e})")]
    LineSearch {
        iteration: usize,
        objective: f64,
        grad_norm: f64,
        slope: f64,
        iterate: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub g: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub initial_grad_norm: f64,
    pub grad_norm: f64,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Point {
    alpha: f64,
    f: f64,
    slope: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

enum Search {
    Found(Point),
    Failed { last_alpha: f64 },
}

struct LineSearch<'a, F> {
    eval: &'a mut F,
    x0: &'a [f64],
    d: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    budget: usize,
    evaluations: usize,
}

impl<F, E> LineSearch<'_, F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
{
    /// Trial point, or `None` when the objective fails or is not finite there.
    fn point(&mut self, alpha: f64) -> Option<Point> {
        self.evaluations += 1;
        self.budget = self.budget.saturating_sub(1);
        let x: Vec<f64> = self.x0.iter().zip(self.d).map(|(a, b)| a + alpha * b).collect();
        match (self.eval)(&x) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => {
                let slope = dot(&g, self.d);
                Some(Point { alpha, f, slope, x, g })
            }
            _ => None,
        }
    }

    fn armijo(&self, p: &Point) -> bool {
        p.f <= self.f0 + self.c1 * p.alpha * self.slope0
    }

    fn curvature(&self, p: &Point) -> bool {
        p.slope.abs() <= -self.c2 * self.slope0
    }

    fn run(&mut self, alpha_init: f64) -> Search {
        let mut lo = Point {
            alpha: 0.0,
            f: self.f0,
            slope: self.slope0,
            x: self.x0.to_vec(),
            g: Vec::new(),
        };
        let mut alpha = alpha_init;
        let mut first = true;
        while self.budget > 0 {
            let Some(p) = self.point(alpha) else {
                return self.zoom(lo, alpha, None);
            };
            if !self.armijo(&p) || (!first && p.f >= lo.f) {
                return self.zoom(lo, p.alpha, Some(p));
            }
            if self.curvature(&p) {
                return Search::Found(p);
            }
            if p.slope >= 0.0 {
                let lo_alpha = lo.alpha;
                return self.zoom(p, lo_alpha, Some(lo));
            }
            first = false;
            alpha = p.alpha * 4.0;
            lo = p;
        }
        self.accept_or_fail(lo, alpha)
    }

    /// Shrink `[lo, hi]` (in either order) until a strong-Wolfe point is found.
    fn zoom(&mut self, mut lo: Point, mut hi_alpha: f64, mut hi: Option<Point>) -> Search {
        while self.budget > 0 {
            let width = hi_alpha - lo.alpha;
            if width.abs() <= 1e-16 * lo.alpha.abs().max(1e-300) || width == 0.0 {
                break;
            }
            let mut trial = match &hi {
                Some(h) => cubic_min(lo.alpha, lo.f, lo.slope, h.alpha, h.f, h.slope),
                None => None,
            }
            .unwrap_or(lo.alpha + 0.5 * width);
            let (a, b) = if lo.alpha < hi_alpha {
                (lo.alpha, hi_alpha)
            } else {
                (hi_alpha, lo.alpha)
            };
            let margin = 0.1 * (b - a);
            if !(trial > a + margin && trial < b - margin) {
                trial = lo.alpha + 0.5 * width;
            }
            match self.point(trial) {
                None => {
                    hi_alpha = trial;
                    hi = None;
                }
                Some(p) => {
                    if !self.armijo(&p) || p.f >= lo.f {
                        hi_alpha = p.alpha;
                        hi = Some(p);
                    } else {
                        if self.curvature(&p) {
                            return Search::Found(p);
                        }
                        if p.slope * (hi_alpha - lo.alpha) >= 0.0 {
                            hi_alpha = lo.alpha;
                            hi = Some(std::mem::replace(&mut lo, p));
                        } else {
                            lo = p;
                        }
                    }
                }
            }
        }
        self.accept_or_fail(lo, hi_alpha)
    }

    /// Out of budget: keep the best sufficient-decrease point if there is one.
    fn accept_or_fail(&mut self, lo: Point, last_alpha: f64) -> Search {
        if lo.alpha > 0.0 && lo.f < self.f0 {
            Search::Found(lo)
        } else {
            Search::Failed { last_alpha }
        }
    }
}

/// Minimizer of the cubic interpolating `(a, fa, da)` and `(b, fb, db)`.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = db - da + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let t = b - (b - a) * (db + d2 - d1) / denom;
    t.is_finite().then_some(t)
}

/// Minimize `eval` from `x0`. Trial points where `eval` fails or returns a
/// non-finite value are treated as lying beyond the acceptable step.
pub fn minimize<F, E>(mut eval: F, x0: Vec<f64>, settings: &LbfgsSettings) -> Result<LbfgsResult, LbfgsError<E>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
{
    let (mut f, mut g) = eval(&x0).map_err(LbfgsError::Initial)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(LbfgsError::NonFinite);
    }
    let mut x = x0;
    let mut evaluations = 1;
    let g0 = inf_norm(&g);
    let threshold = (settings.tol * g0).max(settings.abs_tol);
    let mut trace = vec![f];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let finish = |x, f, g: Vec<f64>, iterations, evaluations, trace, termination| {
        let grad_norm = inf_norm(&g);
        Ok(LbfgsResult {
            x,
            f,
            g,
            iterations,
            evaluations,
            trace,
            initial_grad_norm: g0,
            grad_norm,
            termination,
        })
    };
    if inf_norm(&g) <= threshold {
        return finish(x, f, g, 0, evaluations, trace, Termination::GradientTolerance);
    }
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        let mut d = two_loop(&g, &pairs);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            pairs.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let mut alpha0 = if pairs.is_empty() {
            (1.0 / inf_norm(&d)).min(1.0)
        } else {
            1.0
        };
        let found = loop {
            let mut ls = LineSearch {
                eval: &mut eval,
                x0: &x,
                d: &d,
                f0: f,
                slope0: slope,
                c1: settings.c1,
                c2: settings.c2,
                budget: settings.max_line_search_evals,
                evaluations: 0,
            };
            let result = ls.run(alpha0);
            evaluations += ls.evaluations;
            match result {
                Search::Found(p) => break Some(p),
                Search::Failed { last_alpha } => {
                    if !pairs.is_empty() {
                        // retry once along steepest descent with fresh curvature
                        pairs.clear();
                        d = g.iter().map(|v| -v).collect();
                        slope = dot(&g, &d);
                        alpha0 = (1.0 / inf_norm(&d)).min(1.0);
                        continue;
                    }
                    let predicted = -slope * last_alpha;
                    if predicted <= 1e-10 * f.abs().max(1.0) {
                        break None;
                    }
                    return Err(LbfgsError::LineSearch {
                        iteration: iterations,
                        objective: f,
                        grad_norm: inf_norm(&g),
                        slope,
                        iterate: x,
                    });
                }
            }
        };
        let Some(p) = found else {
            return finish(x, f, g, iterations, evaluations, trace, Termination::NoProgress);
        };
        iterations += 1;
        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if pairs.len() == settings.history {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = p.x;
        f = p.f;
        g = p.g;
        trace.push(f);
        if inf_norm(&g) <= threshold {
            return finish(x, f, g, iterations, evaluations, trace, Termination::GradientTolerance);
        }
    }
    finish(x, f, g, iterations, evaluations, trace, Termination::MaxIterations)
}

/// `−H g` from the stored curvature pairs, with `H0 = (sᵀy / yᵀy) I`.
fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in &mut q {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>), ()> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn solves_rosenbrock() {
        let settings = LbfgsSettings {
            tol: 1e-10,
            ..LbfgsSettings::default()
        };
        let r = minimize(rosenbrock, vec![-1.2, 1.0], &settings).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
        for w in r.trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let quad = |x: &[f64]| -> Result<(f64, Vec<f64>), ()> {
            Ok((x.iter().map(|v| (v - 2.0).powi(2)).sum(), x.iter().map(|v| 2.0 * (v - 2.0)).collect()))
        };
        let r = minimize(quad, vec![2.0; 3], &LbfgsSettings::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.termination, Termination::GradientTolerance);
    }

    #[test]
    fn quadratic_converges_quickly() {
        let quad = |x: &[f64]| -> Result<(f64, Vec<f64>), ()> {
            let w = [1.0, 10.0, 100.0];
            let f = x.iter().zip(w).map(|(v, w)| w * (v - 1.0).powi(2)).sum();
            let g = x.iter().zip(w).map(|(v, w)| 2.0 * w * (v - 1.0)).collect();
            Ok((f, g))
        };
        let r = minimize(quad, vec![0.0; 3], &LbfgsSettings::default()).unwrap();
        assert_eq!(r.termination, Termination::GradientTolerance);
        assert!(r.iterations < 30);
    }

    #[test]
    fn failed_trials_shrink_the_step() {
        // undefined beyond x = 0.5
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>), ()> {
            if x[0] > 0.5 {
                Err(())
            } else {
                Ok(((x[0] - 0.4).powi(2), vec![2.0 * (x[0] - 0.4)]))
            }
        };
        let r = minimize(f, vec![-10.0], &LbfgsSettings::default()).unwrap();
        assert!((r.x[0] - 0.4).abs() < 1e-6);
    }
}
