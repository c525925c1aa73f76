//! Box-constrained limited-memory quasi-Newton minimizer.
//!
//! The search direction comes from the two-loop L-BFGS recursion restricted
//! to the free variables (coordinates pinned at a bound with the gradient
//! pushing outward are held fixed), followed by an Armijo backtracking line
//! search along the projected arc. If the line search fails the step falls
//! back to the projected gradient direction.

use nalgebra::DVector;
use std::collections::VecDeque;

/// Armijo sufficient-decrease constant.
const ARMIJO_C: f64 = 1e-4;
/// Curvature pairs with `s.y <= CURVATURE_SKIP * |s||y|` are not stored.
const CURVATURE_SKIP: f64 = 1e-12;
const MAX_BACKTRACKS: usize = 60;

/// Per-coordinate lower/upper bounds; entries may be infinite.
#[derive(Debug, Clone)]
pub struct Bounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl Bounds {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert!(
            lower.iter().zip(upper.iter()).all(|(l, u)| l <= u),
            "lower bound above upper bound"
        );
        Bounds { lower, upper }
    }

    /// `[0, hi]^n` box.
    pub fn box_upper(n: usize, hi: f64) -> Self {
        Bounds::new(DVector::zeros(n), DVector::from_element(n, hi))
    }

    fn project(&self, x: &mut DVector<f64>) {
        for i in 0..x.len() {
            x[i] = x[i].clamp(self.lower[i], self.upper[i]);
        }
    }
}

#[derive(Debug, Clone)]
pub struct EngineOptions {
    pub max_iter: usize,
    /// Infinity norm of the projected gradient at termination.
    pub pg_tol: f64,
    /// Relative objective change over the last accepted step.
    pub rel_obj_tol: f64,
    /// Quasi-Newton history length.
    pub memory: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            max_iter: 200,
            pg_tol: 1e-5,
            rel_obj_tol: 1e-9,
            memory: 10,
        }
    }
}

/// Which stopping rule fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ProjectedGradientTol,
    RelativeObjectiveTol,
    IterationCap,
    LineSearchStall,
}

impl Termination {
    /// True when a tolerance (rather than the iteration cap or a stalled
    /// line search) ended the run.
    pub fn converged(self) -> bool {
        matches!(
            self,
            Termination::ProjectedGradientTol | Termination::RelativeObjectiveTol
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Termination::ProjectedGradientTol => "projected-gradient",
            Termination::RelativeObjectiveTol => "relative-objective",
            Termination::IterationCap => "iteration-cap",
            Termination::LineSearchStall => "line-search-stall",
        }
    }
}

/// Result of a bounded minimization.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
    /// Accepted steps taken.
    pub iterations: usize,
    pub evals: usize,
    pub termination: Termination,
    /// Objective value after each accepted step (starting value first).
    pub trace: Vec<f64>,
}

struct History {
    s: VecDeque<DVector<f64>>,
    y: VecDeque<DVector<f64>>,
    rho: VecDeque<f64>,
    gamma: f64,
    memory: usize,
}

impl History {
    fn new(memory: usize) -> Self {
        History {
            s: VecDeque::new(),
            y: VecDeque::new(),
            rho: VecDeque::new(),
            gamma: 1.0,
            memory: memory.max(1),
        }
    }

    fn push(&mut self, s: DVector<f64>, y: DVector<f64>) {
        let sy = s.dot(&y);
        if sy <= CURVATURE_SKIP * s.norm() * y.norm() {
            return;
        }
        self.gamma = sy / y.dot(&y);
        self.rho.push_back(1.0 / sy);
        self.s.push_back(s);
        self.y.push_back(y);
        if self.s.len() > self.memory {
            self.s.pop_front();
            self.y.pop_front();
            self.rho.pop_front();
        }
    }

    /// Two-loop recursion: returns `-H g` for the implicit inverse Hessian.
    fn direction(&self, g: &DVector<f64>) -> DVector<f64> {
        let k = self.s.len();
        let mut q = g.clone();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            alpha[i] = self.rho[i] * self.s[i].dot(&q);
            q -= &self.y[i] * alpha[i];
        }
        q *= self.gamma;
        for i in 0..k {
            let beta = self.rho[i] * self.y[i].dot(&q);
            q += &self.s[i] * (alpha[i] - beta);
        }
        -q
    }
}

/// Minimizes `f` over the box, starting from the projection of `x0`.
///
/// `f` must return the objective and its gradient; it is only ever called at
/// feasible points.
pub fn minimize_box<F>(mut f: F, x0: DVector<f64>, bounds: &Bounds, opts: &EngineOptions) -> Minimum
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let n = x0.len();
    let mut x = x0;
    bounds.project(&mut x);
    let (mut fx, mut g) = f(&x);
    let mut evals = 1;
    let mut trace = vec![fx];

    if n == 0 {
        return Minimum {
            x,
            value: fx,
            grad: g,
            iterations: 0,
            evals,
            termination: Termination::ProjectedGradientTol,
            trace,
        };
    }

    let mut hist = History::new(opts.memory);
    let mut iterations = 0;
    let mut termination = Termination::IterationCap;

    while iterations < opts.max_iter {
        if pg_inf_norm(&x, &g, bounds) <= opts.pg_tol {
            termination = Termination::ProjectedGradientTol;
            break;
        }

        // Free-variable gradient: zero out coordinates pinned at a bound.
        let mut g_free = g.clone();
        for i in 0..n {
            let at_lower = x[i] <= bounds.lower[i] && g[i] > 0.0;
            let at_upper = x[i] >= bounds.upper[i] && g[i] < 0.0;
            if at_lower || at_upper {
                g_free[i] = 0.0;
            }
        }

        let mut d = hist.direction(&g_free);
        for i in 0..n {
            if g_free[i] == 0.0 && (x[i] <= bounds.lower[i] || x[i] >= bounds.upper[i]) {
                d[i] = 0.0;
            }
        }
        if d.dot(&g) >= -1e-12 * d.norm() * g.norm() {
            d = -g_free.clone();
        }

        let t0 = if hist.s.is_empty() {
            (1.0 / g_free.norm().max(1.0)).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for attempt in 0..2 {
            if attempt == 1 {
                // Projected-gradient fallback.
                d = -g_free.clone();
            }
            if let Some(step) = armijo_arc(&mut f, &x, fx, &g, &d, t0, bounds, &mut evals) {
                accepted = Some(step);
                break;
            }
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            termination = Termination::LineSearchStall;
            break;
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        hist.push(s, y);

        let rel_change = (fx - f_new).abs() / (1.0 + f_new.abs());
        x = x_new;
        fx = f_new;
        g = g_new;
        iterations += 1;
        trace.push(fx);

        if rel_change <= opts.rel_obj_tol {
            termination = Termination::RelativeObjectiveTol;
            break;
        }
    }

    if termination == Termination::IterationCap && pg_inf_norm(&x, &g, bounds) <= opts.pg_tol {
        termination = Termination::ProjectedGradientTol;
    }

    Minimum {
        x,
        value: fx,
        grad: g,
        iterations,
        evals,
        termination,
        trace,
    }
}

/// Infinity norm of `x - P(x - g)`, the bound-aware first-order residual.
pub fn pg_inf_norm(x: &DVector<f64>, g: &DVector<f64>, bounds: &Bounds) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let stepped = (x[i] - g[i]).clamp(bounds.lower[i], bounds.upper[i]);
        worst = worst.max((x[i] - stepped).abs());
    }
    worst
}

#[allow(clippy::too_many_arguments)]
fn armijo_arc<F>(
    f: &mut F,
    x: &DVector<f64>,
    fx: f64,
    g: &DVector<f64>,
    d: &DVector<f64>,
    t0: f64,
    bounds: &Bounds,
    evals: &mut usize,
) -> Option<(DVector<f64>, f64, DVector<f64>)>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut t = t0;
    for _ in 0..MAX_BACKTRACKS {
        let mut x_t = x + d * t;
        bounds.project(&mut x_t);
        let delta = &x_t - x;
        let slope = g.dot(&delta);
        if delta.norm() == 0.0 {
            return None;
        }
        if slope < 0.0 {
            let (f_t, g_t) = f(&x_t);
            *evals += 1;
            if f_t <= fx + ARMIJO_C * slope {
                return Some((x_t, f_t, g_t));
            }
        }
        t *= 0.5;
    }
    None
}
