"""Augmented-Lagrangian NLP solver with a projected quasi-Newton inner loop.

Solves ``min F(y)`` subject to ``c_L <= c(y) <= c_U`` and ``y_L <= y <= y_U``.
Box bounds are kept exactly by projection; general constraints enter a
Powell-Hestenes-Rockafellar augmented objective

    L_A(y) = F(y) + sum_i lambda_i v_i + rho/2 v_i^2,
    v_i = c_i - clip(c_i + lambda_i / rho, c_L_i, c_U_i),

where the clipped term is the optimal slack of row ``i``.  With
``lambda = 0`` the violation ``v`` is zero inside the range and the plain
distance to it outside.
"""

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError

log = logging.getLogger(__name__)

ARMIJO_C1 = 1e-4
LBFGS_MEMORY = 10

CONVERGED = "converged"
MAX_ITERS = "max-iters"
LINE_SEARCH_FAILURE = "line-search-failure"


@dataclass(frozen=True)
class SolverOptions:
    max_outer_iters: int = 50
    max_inner_iters: int = 200
    constraint_tol: float = 1e-6
    optimality_tol: float = 1e-6
    initial_penalty: float = 10.0
    penalty_growth: float = 10.0
    max_penalty: float = 1e6
    inner_step_tol: float = 1e-10
    verbose: bool = False

    def __post_init__(self):
        for name in (
            "max_outer_iters",
            "max_inner_iters",
            "constraint_tol",
            "optimality_tol",
            "initial_penalty",
            "max_penalty",
            "inner_step_tol",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.penalty_growth > 1:
            raise ValueError(f"penalty_growth must exceed 1, got {self.penalty_growth}")


@dataclass
class SolveReport:
    y_star: np.ndarray
    status: str
    final_constraint_violation: float
    final_cost: float
    outer_iterations: int
    inner_evaluations: int
    multipliers: np.ndarray = field(repr=False, default=None)
    penalty: float = None
    optimality: float = None
    history: list = field(repr=False, default_factory=list)

    @property
    def converged(self):
        return self.status == CONVERGED

    def as_dict(self):
        return {
            "status": self.status,
            "final_constraint_violation": self.final_constraint_violation,
            "final_cost": self.final_cost,
            "outer_iterations": self.outer_iterations,
            "inner_evaluations": self.inner_evaluations,
            "penalty": self.penalty,
            "optimality": self.optimality,
            "history": self.history,
        }


def project_to_box(y, y_lower, y_upper):
    """Componentwise clamp of ``y`` into ``[y_lower, y_upper]``."""
    return np.minimum(np.maximum(np.asarray(y, dtype=float), y_lower), y_upper)


def constraint_violation(problem, c):
    """Signed distance of each row from its range (zero inside)."""
    return c - np.clip(c, problem.c_lower, problem.c_upper)


def _checked(value, what, y):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(f"{what} returned a non-finite value", np.array(y, copy=True))
    return arr


def _shifted_violation(problem, c, multipliers, penalty):
    return c - np.clip(c + multipliers / penalty, problem.c_lower, problem.c_upper)


def _merit(problem, y, multipliers, penalty):
    F = float(_checked(problem.cost(y), "cost", y))
    c = _checked(problem.constraints(y), "constraints", y)
    v = _shifted_violation(problem, c, multipliers, penalty)
    return F + multipliers @ v + 0.5 * penalty * (v @ v), F, c


def augmented_objective(problem, y, multipliers, penalty):
    """Value and gradient of the augmented objective at ``y``."""
    if not penalty > 0:
        raise ValueError(f"penalty must be positive, got {penalty}")
    y = np.asarray(y, dtype=float)
    multipliers = np.asarray(multipliers, dtype=float)
    value, _, c = _merit(problem, y, multipliers, penalty)
    v = _shifted_violation(problem, c, multipliers, penalty)
    grad = _checked(problem.cost_gradient(y), "cost gradient", y)
    weights = multipliers + penalty * v
    if np.any(weights):
        J = _checked(problem.constraint_jacobian(y), "constraint Jacobian", y)
        grad = grad + J.T @ weights
    return value, grad


def _projected_gradient(y, g, lower, upper):
    return project_to_box(y - g, lower, upper) - y


def _lbfgs_matrix(pairs, n):
    """Dense BFGS matrix rebuilt from the stored pairs, seeded with a scaled identity."""
    if not pairs:
        return np.eye(n)
    s, r = pairs[-1]
    B = np.eye(n) * ((s @ r) / (s @ s))
    for s, r in pairs:
        Bs = B @ s
        B += np.outer(r, r) / (r @ s) - np.outer(Bs, Bs) / (s @ Bs)
    return B


class _InnerResult:
    __slots__ = ("y", "value", "grad", "optimality", "evaluations", "stalled")

    def __init__(self, y, value, grad, optimality, evaluations, stalled):
        self.y = y
        self.value = value
        self.grad = grad
        self.optimality = optimality
        self.evaluations = evaluations
        self.stalled = stalled


def _damped_solve(H, g, damping):
    """Solve ``(H + mu I) d = g`` for the smallest ``mu >= damping`` that is positive definite.

    Returns the direction and the shift actually used.
    """
    scale = max(1e-12, np.max(np.abs(np.diag(H)), initial=0.0))
    mu = damping
    eye = np.eye(H.shape[0])
    while True:
        try:
            L = np.linalg.cholesky(H + mu * eye)
            break
        except np.linalg.LinAlgError:
            mu = max(10.0 * mu, 1e-10 * scale)
    return np.linalg.solve(L.T, np.linalg.solve(L, g)), mu


def _penalty_terms(problem, y, multipliers, penalty):
    """Value, gradient and Gauss-Newton penalty Hessian of the augmented objective."""
    F = float(_checked(problem.cost(y), "cost", y))
    c = _checked(problem.constraints(y), "constraints", y)
    shifted = c + multipliers / penalty
    v = c - np.clip(shifted, problem.c_lower, problem.c_upper)
    grad = _checked(problem.cost_gradient(y), "cost gradient", y)
    n = y.size
    gauss_newton = np.zeros((n, n))
    if problem.cost_hessian is not None:
        gauss_newton = gauss_newton + problem.cost_hessian(y)
    if c.size:
        J = _checked(problem.constraint_jacobian(y), "constraint Jacobian", y)
        grad = grad + J.T @ (multipliers + penalty * v)
        # rows whose optimal slack sits on a bound carry the quadratic penalty
        active = (shifted <= problem.c_lower) | (shifted >= problem.c_upper)
        Ja = J[active]
        gauss_newton = penalty * (Ja.T @ Ja)
        if problem.constraint_hessian is not None:
            gauss_newton = gauss_newton + problem.constraint_hessian(y, multipliers + penalty * v)
    value = F + multipliers @ v + 0.5 * penalty * (v @ v)
    return value, grad, gauss_newton


def _minimize_box(problem, y, multipliers, penalty, tol, opts):
    """Projected quasi-Newton minimization of the augmented objective.

    The model Hessian is the Gauss-Newton penalty term ``rho J^T J`` plus
    whatever second derivatives the problem supplies.  Missing curvature is
    learned by BFGS from gradient differences with the known part removed.
    An adaptive shift keeps the model positive definite.  Steps are taken
    on the free variables and pulled back into the box along the projection
    arc.
    """
    lower, upper = problem.y_lower, problem.y_upper
    n = y.size
    value, grad, gn = _penalty_terms(problem, y, multipliers, penalty)
    evaluations = 1
    pairs = deque(maxlen=LBFGS_MEMORY)
    # with both Hessians supplied the model is exact and needs no secant term
    exact = problem.cost_hessian is not None and (
        problem.constraint_hessian is not None or problem.n_constraints == 0
    )
    fixed = lower == upper
    stalled = False
    damping = 0.0
    optimality = np.max(np.abs(_projected_gradient(y, grad, lower, upper)), initial=0.0)
    for _ in range(opts.max_inner_iters):
        if optimality <= tol:
            break
        eps = min(1e-3, optimality)
        at_lower = (y <= lower + eps) & (grad > 0)
        at_upper = (y >= upper - eps) & (grad < 0)
        free = ~(at_lower | at_upper | fixed)
        model = gn if exact else gn + _lbfgs_matrix(pairs, n)
        H = model[np.ix_(free, free)]
        d = np.zeros(n)
        d[free], damping = _damped_solve(H, grad[free], damping)
        d = -d
        # variables pressing on a bound get a diagonally scaled descent step;
        # the projection then lands them on the bound instead of leaving
        # them stranded inside the epsilon band
        pressing = ~free & ~fixed
        d[pressing] = -grad[pressing] / np.maximum(np.abs(np.diag(model))[pressing], 1.0)
        if not grad @ d < 0:
            pairs.clear()
            d = np.where(fixed, 0.0, -grad)

        step = 1.0
        while True:
            trial = project_to_box(y + step * d, lower, upper)
            trial_value, _, _ = _merit(problem, trial, multipliers, penalty)
            evaluations += 1
            if trial_value <= value + ARMIJO_C1 * (grad @ (trial - y)):
                break
            step *= 0.5
            if step < opts.inner_step_tol:
                stalled = True
                break
        if stalled:
            break
        # Levenberg-style damping: relax after full steps, stiffen after cuts
        if step == 1.0:
            damping *= 0.1
        else:
            diag = max(1e-12, np.max(np.abs(np.diag(H)), initial=0.0))
            damping = max(2.0 * damping, 1e-8 * diag)

        new_value, new_grad, new_gn = _penalty_terms(problem, trial, multipliers, penalty)
        s = trial - y
        r = new_grad - grad - new_gn @ s
        sr = s @ r
        if sr > 1e-10 * np.sqrt((s @ s) * (r @ r)):
            pairs.append((s, r))
        y, value, grad, gn = trial, new_value, new_grad, new_gn
        optimality = np.max(np.abs(_projected_gradient(y, grad, lower, upper)), initial=0.0)
    return _InnerResult(y, value, grad, optimality, evaluations, stalled)


def _check_problem(problem):
    n = problem.y_guess.size
    if problem.y_lower.shape != (n,) or problem.y_upper.shape != (n,):
        raise ValueError("variable bounds do not match the guess length")
    c = np.asarray(problem.constraints(problem.y_guess), dtype=float)
    if c.shape != problem.c_lower.shape:
        raise ValueError(
            f"constraints return {c.shape} values but bounds describe {problem.c_lower.shape}"
        )
    g = np.asarray(problem.cost_gradient(problem.y_guess), dtype=float)
    if g.shape != (n,):
        raise ValueError(f"cost gradient has shape {g.shape}, expected ({n},)")


def solve(problem, opts=None):
    """Minimize the NLP from ``problem.y_guess``.

    Each outer iteration minimizes the augmented objective under the box
    bounds, then updates ``lambda <- lambda + rho v``.  The penalty grows
    by ``penalty_growth``, up to ``max_penalty``, whenever an infeasible
    iterate's violation fails to shrink fourfold or the inner loop stalls.
    Convergence requires the constraint violation (infinity norm) below
    ``constraint_tol`` and the projected gradient of the Lagrangian below
    ``optimality_tol`` relative to ``max(1, |F|)``.
    """
    opts = opts or SolverOptions()
    _check_problem(problem)
    y = project_to_box(problem.y_guess, problem.y_lower, problem.y_upper)
    multipliers = np.zeros(problem.n_constraints)
    penalty = float(opts.initial_penalty)
    c = _checked(problem.constraints(y), "constraints", y)
    violation = np.max(np.abs(constraint_violation(problem, c)), initial=0.0)
    inner_tol = 1.0 / penalty
    evaluations = 0
    history = []
    status = MAX_ITERS
    optimality = np.inf
    best = None
    outer = 0

    for outer in range(1, opts.max_outer_iters + 1):
        inner = _minimize_box(problem, y, multipliers, penalty, inner_tol, opts)
        evaluations += inner.evaluations
        y = inner.y
        F = float(_checked(problem.cost(y), "cost", y))
        c = _checked(problem.constraints(y), "constraints", y)
        new_violation = np.max(np.abs(constraint_violation(problem, c)), initial=0.0)
        scale = max(1.0, abs(F))
        optimality = inner.optimality / scale

        history.append(
            {
                "iteration": outer,
                "cost": F,
                "violation": new_violation,
                "penalty": penalty,
                "optimality": optimality,
                "inner_evaluations": inner.evaluations,
            }
        )
        if opts.verbose:
            log.info(
                "iteration=%d cost=%.10e violation=%.3e penalty=%.3e optimality=%.3e",
                outer,
                F,
                new_violation,
                penalty,
                optimality,
            )

        candidate = (new_violation > opts.constraint_tol, new_violation if new_violation > opts.constraint_tol else F)
        if best is None or candidate < best[0]:
            best = (candidate, y.copy(), F, new_violation, optimality)

        if new_violation <= opts.constraint_tol and optimality <= opts.optimality_tol:
            status = CONVERGED
            best = (candidate, y.copy(), F, new_violation, optimality)
            break

        multipliers = multipliers + penalty * _shifted_violation(problem, c, multipliers, penalty)
        feasible = new_violation <= opts.constraint_tol
        if not feasible and (inner.stalled or new_violation > 0.25 * violation):
            penalty = min(penalty * opts.penalty_growth, max(opts.max_penalty, penalty))
        violation = new_violation
        inner_tol = max(opts.optimality_tol * scale, 0.1 * inner_tol)

    if status != CONVERGED and history and history[-1]["inner_evaluations"] and inner.stalled:
        status = LINE_SEARCH_FAILURE if best[0][0] else status
    _, y_best, F_best, viol_best, opt_best = best
    return SolveReport(
        y_star=y_best,
        status=status,
        final_constraint_violation=float(viol_best),
        final_cost=float(F_best),
        outer_iterations=outer,
        inner_evaluations=evaluations,
        multipliers=multipliers,
        penalty=penalty,
        optimality=float(opt_best),
        history=history,
    )
