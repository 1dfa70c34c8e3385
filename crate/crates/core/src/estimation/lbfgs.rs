//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when |f_k − f_{k+1}| / max(|f_k|, |f_{k+1}|, 1) ≤ ftol.
    pub ftol: f64,
    /// Stop when max_i |g_i| ≤ gtol.
    pub gtol: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub max_backtracks: usize,
}

/// SciPy's L-BFGS-B default relative-decrease tolerance (factr = 1e7 times
/// machine epsilon).
pub const SCIPY_FTOL: f64 = 1e7 * f64::EPSILON;

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 10, max_iter: 5000, ftol: SCIPY_FTOL, gtol: 1e-6, c1: 1e-4, max_backtracks: 60 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    RelativeDecrease,
    MaxIterations,
    /// No step along the search direction decreased the objective.
    LineSearch,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone)]
pub struct NonFiniteObjective {
    pub iteration: usize,
    pub x: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `f`, which returns the value and writes the gradient into its
/// second argument. Accepted iterates never increase the objective.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &LbfgsOptions) -> Result<LbfgsOutcome, NonFiniteObjective>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; dim];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(NonFiniteObjective { iteration: 0, x });
    }

    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut d = vec![0.0; dim];
    let mut x_new = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];
    let mut alpha_buf = vec![0.0; opts.memory];

    for iter in 0..opts.max_iter {
        if max_abs(&g) <= opts.gtol {
            return Ok(LbfgsOutcome { x, f: fx, iterations: iter, evaluations, termination: Termination::Gradient });
        }

        // Two-loop recursion for d = −H g.
        d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
        for (k, (s, y, rho)) in hist.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha_buf[k] = a;
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
        }
        let gamma = hist.back().map_or_else(
            || 1.0 / max_abs(&g).max(1.0),
            |(s, y, _)| dot(s, y) / dot(y, y),
        );
        d.iter_mut().for_each(|di| *di *= gamma);
        for (k, (s, y, rho)) in hist.iter().enumerate() {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (alpha_buf[k] - b) * si);
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi / max_abs(&g).max(1.0));
            slope = dot(&g, &d);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            x_new.iter_mut().zip(x.iter().zip(&d)).for_each(|(xn, (xi, di))| *xn = xi + step * di);
            let f_new = f(&x_new, &mut g_new);
            evaluations += 1;
            if f_new.is_finite() && f_new <= fx + opts.c1 * step * slope && g_new.iter().all(|v| v.is_finite()) {
                accepted = Some(f_new);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            if !fx.is_finite() {
                return Err(NonFiniteObjective { iteration: iter, x });
            }
            return Ok(LbfgsOutcome { x, f: fx, iterations: iter, evaluations, termination: Termination::LineSearch });
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }

        let rel = (fx - f_new).abs() / fx.abs().max(f_new.abs()).max(1.0);
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        if rel <= opts.ftol {
            let termination =
                if max_abs(&g) <= opts.gtol { Termination::Gradient } else { Termination::RelativeDecrease };
            return Ok(LbfgsOutcome { x, f: fx, iterations: iter + 1, evaluations, termination });
        }
    }
    Ok(LbfgsOutcome { x, f: fx, iterations: opts.max_iter, evaluations, termination: Termination::MaxIterations })
}
