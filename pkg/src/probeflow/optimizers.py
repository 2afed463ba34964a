"""Full-batch optimizers over flat float64 parameter vectors.

Both take an evaluator callable params -> (loss, grad) and are fully
deterministic. The quasi-Newton path is limited-memory with the standard
two-loop recursion and a strong Wolfe line search; curvature pairs are kept
only when s.y > 0, so the inverse-Hessian estimate stays positive definite.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericsError

# Strong Wolfe constants.
C1 = 1e-4
C2 = 0.9


@dataclass
class AdamState:
    """Moment estimates and step counter of the Adam update."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


@dataclass
class OptimizeResult:
    x: np.ndarray
    loss: float
    trace: list[float]            # loss after each accepted/performed step
    termination: str
    n_iters: int
    n_evals: int


@dataclass
class LbfgsOptions:
    max_iters: int = 500
    history: int = 50
    gtol: float = 1e-5            # infinity-norm gradient tolerance
    ftol: float = 1e-10           # relative decrease tolerance
    ftol_patience: int = 3        # consecutive sub-ftol decreases needed to stop
    c1: float = C1
    c2: float = C2
    max_line_evals: int = 25
    plain: bool = False           # textbook behavior: no stall rescues

    def __post_init__(self):
        if self.max_iters < 0 or self.history < 1 or self.max_line_evals < 2:
            raise ConfigError("bad L-BFGS options")
        if self.ftol_patience < 1:
            raise ConfigError("ftol_patience must be >= 1")
        if not (0 < self.c1 < self.c2 < 1):
            raise ConfigError("need 0 < c1 < c2 < 1")


def write_trace_csv(path: str, trace: list[float]) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss"])
        for i, v in enumerate(trace):
            writer.writerow([i, repr(float(v))])


def adam_minimize(evaluate, x0: np.ndarray, iters: int, lr: float = 1e-3,
                  beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8) -> OptimizeResult:
    """Plain full-batch Adam with bias correction.

    Args:
        evaluate: params -> (loss, grad).
        x0: start vector.
        iters: number of updates (each uses one evaluation).

    Returns:
        OptimizeResult; the final loss is re-evaluated at the last iterate.

    Raises:
        NumericsError: non-finite loss or gradient encountered.
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    state = AdamState.zeros(x.size)
    trace: list[float] = []
    n_evals = 0
    for _ in range(iters):
        f, g = evaluate(x)
        n_evals += 1
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            raise NumericsError("non-finite loss/gradient in Adam", tag="adam")
        trace.append(f)
        state.step += 1
        state.m = beta1 * state.m + (1 - beta1) * g
        state.v = beta2 * state.v + (1 - beta2) * g * g
        m_hat = state.m / (1 - beta1 ** state.step)
        v_hat = state.v / (1 - beta2 ** state.step)
        x = x - lr * m_hat / (np.sqrt(v_hat) + eps)
    f, _ = evaluate(x)
    n_evals += 1
    trace.append(f)
    return OptimizeResult(x, f, trace, "iteration-cap", iters, n_evals)


def _two_loop(g: np.ndarray, s_list: list, y_list: list, rho_list: list) -> np.ndarray:
    """Two-loop recursion returning the descent direction -H g."""
    q = g.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    if s_list:
        s, y = s_list[-1], y_list[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        b = rho * (y @ q)
        q += s * (a - b)
    return -q


def _cubic_step(a_lo, f_lo, d_lo, a_hi, f_hi) -> float:
    """Minimizer of the cubic fit through (a_lo, f_lo, d_lo) and (a_hi, f_hi);
    falls back to bisection when the fit degenerates."""
    h = a_hi - a_lo
    if h == 0.0 or not np.isfinite(f_hi):
        return a_lo + 0.5 * h
    # Quadratic interpolation using the derivative at a_lo.
    denom = 2.0 * (f_hi - f_lo - d_lo * h)
    if denom <= 0 or not np.isfinite(denom):
        return a_lo + 0.5 * h
    step = -d_lo * h * h / denom
    step = min(max(step, 0.1 * h), 0.9 * h) if h > 0 else max(min(step, 0.1 * h), 0.9 * h)
    return a_lo + step


class _LineEval:
    """Caches directional evaluations along x + alpha * d."""

    def __init__(self, evaluate, x, d):
        self.evaluate = evaluate
        self.x = x
        self.d = d
        self.n_evals = 0
        self.best = None  # (f, alpha, x, g)

    def __call__(self, alpha: float):
        xt = self.x + alpha * self.d
        try:
            f, g = self.evaluate(xt)
        except NumericsError:
            return np.inf, 0.0, None, None
        self.n_evals += 1
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            return np.inf, 0.0, None, None
        if self.best is None or f < self.best[0]:
            self.best = (f, alpha, xt, g)
        return f, float(g @ self.d), xt, g


def _strong_wolfe(line: _LineEval, f0: float, d0: float, alpha_init: float,
                  c1: float, c2: float, max_evals: int):
    """Bracket + zoom search for a strong Wolfe step.

    Returns (alpha, f, x, g) or None on failure.
    """
    alpha_prev, f_prev, d_prev = 0.0, f0, d0
    alpha = alpha_init
    alpha_max = 1e6 * max(alpha_init, 1.0)
    bracket = None
    for i in range(max_evals):
        f, d, xt, g = line(alpha)
        if f > f0 + c1 * alpha * d0 or (i > 0 and f >= f_prev):
            bracket = (alpha_prev, f_prev, d_prev, alpha, f, d)
            break
        if abs(d) <= -c2 * d0:
            return alpha, f, xt, g
        if d >= 0:
            bracket = (alpha, f, d, alpha_prev, f_prev, d_prev)
            break
        alpha_prev, f_prev, d_prev = alpha, f, d
        alpha = min(2.0 * alpha, alpha_max)
    if bracket is None:
        return None

    a_lo, f_lo, d_lo, a_hi, f_hi, d_hi = bracket
    for _ in range(max(max_evals - line.n_evals, 0)):
        alpha = _cubic_step(a_lo, f_lo, d_lo, a_hi, f_hi)
        f, d, xt, g = line(alpha)
        if f > f0 + c1 * alpha * d0 or f >= f_lo:
            a_hi, f_hi, d_hi = alpha, f, d
        else:
            if abs(d) <= -c2 * d0:
                return alpha, f, xt, g
            if d * (a_hi - a_lo) >= 0:
                a_hi, f_hi, d_hi = a_lo, f_lo, d_lo
            a_lo, f_lo, d_lo = alpha, f, d
        if abs(a_hi - a_lo) < 1e-14 * max(1.0, abs(a_lo)):
            break
    return None


def _armijo_best(line: _LineEval, f0: float, d0: float, c1: float):
    """Best evaluated point satisfying sufficient decrease, or None."""
    if line.best is None:
        return None
    f, alpha, xt, g = line.best
    if alpha > 0 and f <= f0 + c1 * alpha * d0:
        return alpha, f, xt, g
    return None


def lbfgs_minimize(evaluate, x0: np.ndarray,
                   options: LbfgsOptions | None = None) -> OptimizeResult:
    """Limited-memory quasi-Newton minimization with strong Wolfe steps.

    Every accepted step satisfies the sufficient-decrease condition, so the
    recorded trace is non-increasing. When the curvature condition cannot
    be met along a direction (the loss has kink surfaces through its
    piecewise-linear velocity channel), the search falls back the way
    mainstream implementations do: retry steepest descent with a cleared
    history, then accept the best sufficient-decrease point. A fallback
    acceptance straddles a kink, so its gradient pair is not stored and the
    curvature memory is cleared; the next iteration restarts from steepest
    descent at the new point. Termination: gradient tolerance; relative
    decrease below ftol on `ftol_patience` consecutive iterations (a single
    tiny step near a kink is not evidence of convergence); a line search
    that finds no decrease at all; or the iteration cap. The best-seen
    iterate is always returned.

    With options.plain=True all of the stall rescues above are disabled and
    the routine behaves like an off-the-shelf library implementation: a
    failed strong-Wolfe search aborts immediately, curvature pairs are only
    skipped on the classical positive-curvature guard, the memory is never
    cleared, and the final (not best-seen) iterate is returned. The
    single-pass baseline trains in this mode; the staged curriculum keeps
    the hardened behavior.

    Args:
        evaluate: params -> (loss, grad).
        x0: start vector.
        options: LbfgsOptions; defaults are conservative.

    Returns:
        OptimizeResult with a termination reason string.
    """
    opts = options or LbfgsOptions()
    x = np.array(x0, dtype=np.float64, copy=True)
    f, g = evaluate(x)
    n_evals = 1
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericsError("non-finite loss/gradient at the start", tag="lbfgs")
    trace: list[float] = [f]
    best_x, best_f = x.copy(), f
    if np.max(np.abs(g)) <= opts.gtol:
        return OptimizeResult(x, f, trace, "grad-tol", 0, n_evals)

    s_list: list[np.ndarray] = []
    y_list: list[np.ndarray] = []
    rho_list: list[float] = []
    termination = "iteration-cap"
    n_iters = 0
    tiny_run = 0
    for _ in range(opts.max_iters):
        d = _two_loop(g, s_list, y_list, rho_list)
        d0 = float(d @ g)
        used_memory = bool(s_list)
        if d0 >= 0:
            # Fallback to steepest descent if the model direction degenerates.
            d = -g
            d0 = float(d @ g)
            used_memory = False
        alpha_init = 1.0 if s_list else min(1.0, 1.0 / max(np.sum(np.abs(g)), 1.0))
        line = _LineEval(evaluate, x, d)
        hit = _strong_wolfe(line, f, d0, alpha_init, opts.c1, opts.c2,
                            opts.max_line_evals)
        n_evals += line.n_evals
        weak = False
        if hit is None and not opts.plain and used_memory:
            # The quasi-Newton direction failed; restart from the gradient.
            s_list, y_list, rho_list = [], [], []
            fallback = _armijo_best(line, f, d0, opts.c1)
            d = -g
            d0 = float(d @ g)
            alpha_init = min(1.0, 1.0 / max(np.sum(np.abs(g)), 1.0))
            line = _LineEval(evaluate, x, d)
            hit = _strong_wolfe(line, f, d0, alpha_init, opts.c1, opts.c2,
                                opts.max_line_evals)
            n_evals += line.n_evals
            if hit is None:
                hit = _armijo_best(line, f, d0, opts.c1) or fallback
                weak = hit is not None
        elif hit is None and not opts.plain:
            hit = _armijo_best(line, f, d0, opts.c1)
            weak = hit is not None
        if hit is None:
            if not opts.plain and line.best is not None and line.best[0] < best_f:
                best_f, _, best_x, _ = line.best
                best_x = best_x.copy()
            termination = "line-search-failure"
            break
        alpha, f_new, x_new, g_new = hit
        n_iters += 1
        if weak:
            # The gradient pair straddles a kink; it would poison the
            # curvature model, so restart the memory instead.
            s_list, y_list, rho_list = [], [], []
        else:
            s = x_new - x
            y = g_new - g
            sy = float(s @ y)
            if opts.plain:
                keep = sy > 2.22e-16 * float(y @ y)
            else:
                keep = sy > 1e-10 * float(np.linalg.norm(s) * np.linalg.norm(y))
            if keep:
                s_list.append(s)
                y_list.append(y)
                rho_list.append(1.0 / sy)
                if len(s_list) > opts.history:
                    s_list.pop(0)
                    y_list.pop(0)
                    rho_list.pop(0)
        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        trace.append(f)
        if f < best_f:
            best_f, best_x = f, x.copy()
        if np.max(np.abs(g)) <= opts.gtol:
            termination = "grad-tol"
            break
        if decrease <= opts.ftol * max(1.0, abs(f)):
            tiny_run += 1
            if tiny_run >= opts.ftol_patience:
                termination = "ftol"
                break
        else:
            tiny_run = 0
    if opts.plain:
        return OptimizeResult(x, f, trace, termination, n_iters, n_evals)
    return OptimizeResult(best_x, best_f, trace, termination, n_iters, n_evals)
