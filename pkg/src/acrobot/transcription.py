"""Direct-collocation transcription of the swing-up problem into an NLP.

Decision vector layout, knot-major: ``y = [x_1, u_1, x_2, u_2, ..., x_N, u_N]``.
Constraints are the ``N - 1`` dynamics defects followed by the pinned initial
and final states.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .dynamics import LinkChainParams, accelerations

SCHEMES = ("euler", "trapezoid")


@dataclass(frozen=True)
class OcpSpec:
    """Fixed-horizon, rest-to-rest optimal control problem.

    Bounds given as scalars are broadcast: ``u_max`` applies to every
    actuated joint, ``q_max`` / ``qd_max`` to every angle / rate, with the
    lower bounds mirrored when omitted.
    """

    params: LinkChainParams
    x_init: np.ndarray
    x_final: np.ndarray
    t_final: float = 3.0
    n_knots: int = 25
    u_min: np.ndarray = None
    u_max: np.ndarray = 20.0
    x_min: np.ndarray = None
    x_max: np.ndarray = None
    scheme: str = "trapezoid"

    def __post_init__(self):
        n, m = self.params.n_links, self.params.n_controls
        nx = 2 * n

        def vec(value, size, name):
            arr = np.broadcast_to(np.asarray(value, dtype=float), (size,)).copy()
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            return arr

        x_init = vec(self.x_init, nx, "x_init")
        x_final = vec(self.x_final, nx, "x_final")
        u_max = vec(self.u_max, m, "u_max")
        u_min = -u_max if self.u_min is None else vec(self.u_min, m, "u_min")
        if self.x_max is None:
            x_max = np.concatenate([np.full(n, 2 * np.pi), np.full(n, 4 * np.pi)])
        else:
            x_max = vec(self.x_max, nx, "x_max")
        x_min = -x_max if self.x_min is None else vec(self.x_min, nx, "x_min")

        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if int(self.n_knots) != self.n_knots or self.n_knots < 3:
            raise ValueError(f"n_knots must be an integer >= 3, got {self.n_knots}")
        if not (np.isfinite(self.t_final) and self.t_final > 0):
            raise ValueError(f"t_final must be positive, got {self.t_final}")
        if np.any(u_min > u_max) or np.any(x_min > x_max):
            raise ValueError("lower bounds must not exceed upper bounds")
        for name, x in (("x_init", x_init), ("x_final", x_final)):
            if np.any(x < x_min) or np.any(x > x_max):
                raise ValueError(f"{name} lies outside the state bounds")

        for name, value in (
            ("x_init", x_init),
            ("x_final", x_final),
            ("u_min", u_min),
            ("u_max", u_max),
            ("x_min", x_min),
            ("x_max", x_max),
        ):
            value.flags.writeable = False
            object.__setattr__(self, name, value)
        object.__setattr__(self, "n_knots", int(self.n_knots))
        object.__setattr__(self, "t_final", float(self.t_final))

    @classmethod
    def swing_up(cls, params, **kwargs):
        """Hanging rest to upright rest: ``(0, ..., 0)`` to ``(pi, 0, ..., 0)``."""
        nx = 2 * params.n_links
        x_final = np.zeros(nx)
        x_final[0] = np.pi
        return cls(params, np.zeros(nx), x_final, **kwargs)

    @property
    def n_state(self):
        return 2 * self.params.n_links

    @property
    def n_control(self):
        return self.params.n_controls

    @property
    def knot_size(self):
        return self.n_state + self.n_control

    @property
    def dim(self):
        return self.n_knots * self.knot_size

    @property
    def step(self):
        return self.t_final / (self.n_knots - 1)

    @property
    def times(self):
        return np.linspace(0.0, self.t_final, self.n_knots)


@dataclass
class NlpProblem:
    """``min F(y)`` s.t. ``c_lower <= c(y) <= c_upper``, ``y_lower <= y <= y_upper``.

    ``cost_hessian(y)`` and ``constraint_hessian(y, w)``, when given, return
    the Hessians of ``F`` and of ``w . c(y)``; the solver then uses them in
    its step model.

    ``sparsity`` (rows x columns, bool) and ``column_groups`` are optional
    structure hints for :func:`constraint_jacobian_fd`: columns in one group
    touch disjoint rows and can be differenced together.
    """

    cost: Callable
    cost_gradient: Callable
    constraints: Callable
    c_lower: np.ndarray
    c_upper: np.ndarray
    y_lower: np.ndarray
    y_upper: np.ndarray
    y_guess: np.ndarray
    constraint_jacobian: Optional[Callable] = None
    constraint_hessian: Optional[Callable] = None
    cost_hessian: Optional[Callable] = None
    sparsity: Optional[np.ndarray] = None
    column_groups: Optional[list] = None
    spec: Optional[OcpSpec] = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("c_lower", "c_upper", "y_lower", "y_upper", "y_guess"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if self.c_lower.shape != self.c_upper.shape:
            raise ValueError("constraint bounds differ in length")
        if not (self.y_lower.shape == self.y_upper.shape == self.y_guess.shape):
            raise ValueError("variable bounds and guess differ in length")
        if np.any(self.c_lower > self.c_upper) or np.any(self.y_lower > self.y_upper):
            raise ValueError("lower bounds must not exceed upper bounds")
        if self.constraint_jacobian is None:
            self.constraint_jacobian = lambda y: constraint_jacobian_fd(self, y)

    @property
    def dim(self):
        return self.y_guess.size

    @property
    def n_constraints(self):
        return self.c_lower.size


def pack(states, controls):
    """Interleave per-knot states and controls into one decision vector."""
    states = np.asarray(states, dtype=float)
    controls = np.asarray(controls, dtype=float)
    if controls.ndim == 1:
        controls = controls[:, None]
    if states.ndim != 2 or controls.ndim != 2 or states.shape[0] != controls.shape[0]:
        raise ValueError(f"cannot pack states {states.shape} with controls {controls.shape}")
    return np.concatenate([states, controls], axis=1).reshape(-1)


def unpack(y, n_state, n_control):
    """Split a decision vector into ``(states (N, n_state), controls (N, n_control))``."""
    y = np.asarray(y, dtype=float)
    size = n_state + n_control
    if y.ndim != 1 or y.size % size:
        raise ValueError(f"decision vector of length {y.size} is not a multiple of {size}")
    knots = y.reshape(-1, size)
    return knots[:, :n_state].copy(), knots[:, n_state:].copy()


def _split(spec, y):
    y = np.asarray(y, dtype=float)
    if y.shape != (spec.dim,):
        raise ValueError(f"expected decision vector of length {spec.dim}, got {y.shape}")
    return unpack(y, spec.n_state, spec.n_control)


def knot_derivatives(spec, states, controls):
    """``f(x_k, u_k)`` at every knot, shape ``(N, 2n)``."""
    n = spec.params.n_links
    q, qd = states[:, :n], states[:, n:]
    return np.concatenate([qd, accelerations(spec.params, q, qd, controls)], axis=1)


def defects(spec, y):
    """Stacked defects ``zeta_k``, shape ``((N - 1) * 2n,)``.

    Euler: ``x_{k+1} - x_k - h f_k``.  Trapezoid:
    ``x_{k+1} - x_k - h/2 (f_k + f_{k+1})``.
    """
    states, controls = _split(spec, y)
    f = knot_derivatives(spec, states, controls)
    h = spec.step
    if spec.scheme == "euler":
        increment = h * f[:-1]
    else:
        increment = 0.5 * h * (f[:-1] + f[1:])
    return (states[1:] - states[:-1] - increment).reshape(-1)


def _quadrature_weights(spec):
    w = np.full(spec.n_knots, spec.step)
    w[[0, -1]] = 0.5 * spec.step
    return w


def effort_cost(spec, y):
    """Trapezoidal quadrature of ``u(t) . u(t)`` over the horizon.

    The step is applied last as ``t_final / (N - 1)`` so a constant control
    integrates exactly.
    """
    _, controls = _split(spec, y)
    unit = np.ones(spec.n_knots)
    unit[[0, -1]] = 0.5
    return float(spec.t_final * (unit @ np.sum(controls**2, axis=1)) / (spec.n_knots - 1))


def effort_cost_gradient(spec, y):
    _, controls = _split(spec, y)
    grad = np.zeros((spec.n_knots, spec.knot_size))
    grad[:, spec.n_state :] = 2.0 * _quadrature_weights(spec)[:, None] * controls
    return grad.reshape(-1)


def effort_cost_hessian(spec, y=None):
    """Constant diagonal Hessian of :func:`effort_cost`."""
    diag = np.zeros((spec.n_knots, spec.knot_size))
    diag[:, spec.n_state :] = 2.0 * _quadrature_weights(spec)[:, None]
    return np.diag(diag.reshape(-1))


def boundary_constraints(spec, y):
    """``(x_1 - x_init, x_N - x_final)``."""
    states, _ = _split(spec, y)
    return np.concatenate([states[0] - spec.x_init, states[-1] - spec.x_final])


@lru_cache(maxsize=None)
def _second_difference_stencil(size):
    """Offset signs for a central second-difference Hessian.

    Row 0 is the base point, then ``+e_i, -e_i`` for each ``i``, then the
    four corners ``(+,+), (+,-), (-,+), (-,-)`` of each pair ``i < j``.
    """
    pairs = [(i, j) for i in range(size) for j in range(i + 1, size)]
    signs = np.zeros((1 + 2 * size + 4 * len(pairs), size))
    for i in range(size):
        signs[1 + 2 * i, i] = 1.0
        signs[2 + 2 * i, i] = -1.0
    row = 1 + 2 * size
    for i, j in pairs:
        for si in (1.0, -1.0):
            for sj in (1.0, -1.0):
                signs[row, i], signs[row, j] = si, sj
                row += 1
    signs.flags.writeable = False
    return signs, pairs


def defect_hessian(spec, y, weights):
    """Hessian of ``weights . defects(y)`` by batched second differences.

    Each knot's dynamics depend only on that knot, so the result is block
    diagonal with one ``(2n + m)``-square block per knot.  Only the
    acceleration rows of ``f`` are nonlinear.
    """
    states, controls = _split(spec, y)
    N, nx, size, n = spec.n_knots, spec.n_state, spec.knot_size, spec.params.n_links
    mu = np.asarray(weights, dtype=float)[: (N - 1) * nx].reshape(N - 1, nx)
    h = spec.step
    knot_weights = np.zeros((N, nx))
    if spec.scheme == "euler":
        knot_weights[:-1] = -h * mu
    else:
        knot_weights[:-1] -= 0.5 * h * mu
        knot_weights[1:] -= 0.5 * h * mu
    w = knot_weights[:, n:]
    z = np.concatenate([states, controls], axis=1)

    # every perturbed copy of z goes through the dynamics in one batch
    steps = 1e-4 * (1.0 + np.abs(z))
    signs, pairs = _second_difference_stencil(size)
    batch = z[None] + signs[:, None, :] * steps[None]
    acc = accelerations(spec.params, batch[..., :n], batch[..., n:nx], batch[..., nx:])
    phi = np.sum(w * acc, axis=-1)
    base, phi = phi[0], phi[1:]

    blocks = np.zeros((N, size, size))
    for i in range(size):
        blocks[:, i, i] = (phi[2 * i] - 2.0 * base + phi[2 * i + 1]) / steps[:, i] ** 2
    start = 2 * size
    for p, (i, j) in enumerate(pairs):
        pp, pm, mp, mm = phi[start + 4 * p : start + 4 * p + 4]
        blocks[:, i, j] = blocks[:, j, i] = (pp - pm - mp + mm) / (4.0 * steps[:, i] * steps[:, j])
    H = np.zeros((spec.dim, spec.dim))
    for k in range(N):
        H[k * size : (k + 1) * size, k * size : (k + 1) * size] = blocks[k]
    return H


def collocation_jacobian(spec, y):
    """Constraint Jacobian assembled from per-knot derivatives of ``f``.

    ``df/dz_k`` is central-differenced (step ``1e-6 (1 + |z|)``) for all
    knots at once; the defect and boundary rows are then linear in those
    blocks.
    """
    states, controls = _split(spec, y)
    N, nx, size, n = spec.n_knots, spec.n_state, spec.knot_size, spec.params.n_links
    z = np.concatenate([states, controls], axis=1)
    steps = 1e-6 * (1.0 + np.abs(z))
    batch = np.repeat(z[None], 2 * size, axis=0)
    for i in range(size):
        batch[2 * i, :, i] += steps[:, i]
        batch[2 * i + 1, :, i] -= steps[:, i]
    acc = accelerations(spec.params, batch[..., :n], batch[..., n:nx], batch[..., nx:])
    # df[k, r, i] = d f_r / d z_i at knot k
    df = np.zeros((N, nx, size))
    df[:, :n, n:nx] = np.eye(n)
    diff = (acc[0::2] - acc[1::2]) / (2.0 * steps.T[:, :, None])
    df[:, n:, :] = np.transpose(diff, (1, 2, 0))

    h = spec.step
    eye = np.zeros((nx, size))
    eye[:, :nx] = np.eye(nx)
    J = np.zeros(((N - 1) * nx + 2 * nx, spec.dim))
    for k in range(N - 1):
        rows = slice(k * nx, (k + 1) * nx)
        left = slice(k * size, (k + 1) * size)
        right = slice((k + 1) * size, (k + 2) * size)
        if spec.scheme == "euler":
            J[rows, left] = -eye - h * df[k]
            J[rows, right] = eye
        else:
            J[rows, left] = -eye - 0.5 * h * df[k]
            J[rows, right] = eye - 0.5 * h * df[k + 1]
    base = (N - 1) * nx
    J[base : base + nx, :nx] = np.eye(nx)
    J[base + nx :, (N - 1) * size : (N - 1) * size + nx] = np.eye(nx)
    return J


def _knot_structure(spec):
    """Sparsity pattern and a two-colouring of the columns by knot parity."""
    N, nx, size = spec.n_knots, spec.n_state, spec.knot_size
    n_rows = (N - 1) * nx + 2 * nx
    pattern = np.zeros((n_rows, spec.dim), dtype=bool)
    for k in range(N - 1):
        pattern[k * nx : (k + 1) * nx, k * size : (k + 2) * size] = True
    base = (N - 1) * nx
    pattern[base : base + nx, :nx] = np.eye(nx, dtype=bool)
    pattern[base + nx :, (N - 1) * size : (N - 1) * size + nx] = np.eye(nx, dtype=bool)
    # knots k and k + 2 never share a row, so same-parity knots form a group
    groups = [
        np.array([k * size + j for k in range(parity, N, 2)])
        for parity in (0, 1)
        for j in range(size)
    ]
    return pattern, groups


def build_nlp(spec):
    """Assemble the collocation NLP: cost, constraints, bounds and guess.

    The box repeats the state and control bounds at every knot, except that
    the first and last states are pinned to their boundary values.  The guess
    interpolates states linearly between the boundary values with zero
    controls.
    """
    N, nx, m = spec.n_knots, spec.n_state, spec.n_control

    def constraints(y):
        return np.concatenate([defects(spec, y), boundary_constraints(spec, y)])

    n_rows = (N - 1) * nx + 2 * nx
    zeros = np.zeros(n_rows)

    y_lower = np.tile(np.concatenate([spec.x_min, spec.u_min]), N)
    y_upper = np.tile(np.concatenate([spec.x_max, spec.u_max]), N)
    # the boundary states are also pinned in the box, so projection keeps
    # the boundary rows exactly satisfied
    last = (N - 1) * (nx + m)
    y_lower[:nx] = y_upper[:nx] = spec.x_init
    y_lower[last : last + nx] = y_upper[last : last + nx] = spec.x_final
    s = np.linspace(0.0, 1.0, N)[:, None]
    guess_states = (1.0 - s) * spec.x_init + s * spec.x_final
    y_guess = pack(guess_states, np.zeros((N, m)))

    pattern, groups = _knot_structure(spec)
    return NlpProblem(
        cost=lambda y: effort_cost(spec, y),
        cost_gradient=lambda y: effort_cost_gradient(spec, y),
        constraints=constraints,
        c_lower=zeros,
        c_upper=zeros.copy(),
        y_lower=y_lower,
        y_upper=y_upper,
        y_guess=y_guess,
        constraint_jacobian=lambda y: collocation_jacobian(spec, y),
        constraint_hessian=lambda y, w: defect_hessian(spec, y, w),
        cost_hessian=lambda y: effort_cost_hessian(spec, y),
        sparsity=pattern,
        column_groups=groups,
        spec=spec,
    )


def resample_guess(spec, times, states, controls):
    """Decision vector on ``spec``'s grid, linearly interpolated from another grid.

    Used to warm-start a refined mesh from a coarser solution.  The result
    is clipped to the knot bounds of ``spec``.
    """
    times = np.asarray(times, dtype=float)
    z = np.hstack([np.atleast_2d(states), np.atleast_2d(controls)])
    if z.shape != (times.size, spec.knot_size):
        raise ValueError(f"expected {times.size} knots of size {spec.knot_size}, got {z.shape}")
    grid = spec.times * (times[-1] - times[0]) / spec.t_final + times[0]
    knots = np.column_stack([np.interp(grid, times, z[:, j]) for j in range(spec.knot_size)])
    lower = np.concatenate([spec.x_min, spec.u_min])
    upper = np.concatenate([spec.x_max, spec.u_max])
    return np.clip(knots, lower, upper).reshape(-1)


def constraint_jacobian_fd(problem, y):
    """Central-difference constraint Jacobian, step ``1e-6 (1 + |y_j|)``.

    When the problem supplies ``sparsity`` and ``column_groups``, every
    column of a group is perturbed in the same evaluation and the
    differences are scattered back by the pattern.  Rows outside a column's
    pattern are exactly zero.
    """
    y = np.asarray(y, dtype=float)
    steps = 1e-6 * (1.0 + np.abs(y))
    rows = problem.n_constraints
    J = np.zeros((rows, y.size))
    if problem.sparsity is None or problem.column_groups is None:
        groups = [np.array([j]) for j in range(y.size)]
        pattern = None
    else:
        groups = problem.column_groups
        pattern = problem.sparsity
    for cols in groups:
        yp, ym = y.copy(), y.copy()
        yp[cols] += steps[cols]
        ym[cols] -= steps[cols]
        diff = problem.constraints(yp) - problem.constraints(ym)
        for j in cols:
            column = diff / (yp[j] - ym[j])
            if pattern is None:
                J[:, j] = column
            else:
                J[pattern[:, j], j] = column[pattern[:, j]]
    return J
