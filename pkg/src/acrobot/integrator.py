"""Fixed-step RK4 integration of mass-matrix ODEs."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import MassMatrixOde, State, total_energy
from .errors import DivergenceError, SingularMatrixError

DIVERGENCE_LIMIT = 1e6


def lu_solve(A, b):
    """Solve ``A x = b`` by LU factorization with scaled partial pivoting.

    The pivot row maximizes ``|a_ik|`` relative to the row's largest
    original entry.  In the block system ``[[I, 0], [C, M]]`` this keeps the
    identity rows as pivots even when fast motion makes ``C`` huge.  Raises :class:`SingularMatrixError` when a pivot falls below
    ``1e-14`` times the norm of its original row.
    """
    # plain lists: the systems here are 4x4 or 6x6, where numpy call
    # overhead dominates the arithmetic
    a = np.asarray(A, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or np.size(b) != n:
        raise ValueError(f"cannot solve system with A {a.shape} and b {np.shape(b)}")
    rows = a.tolist()
    x = np.asarray(b, dtype=float).reshape(-1).tolist()
    scale = [max(abs(v) for v in row) or 1.0 for row in rows]
    for k in range(n):
        p = max(range(k, n), key=lambda i: abs(rows[i][k]) / scale[i])
        if p != k:
            rows[k], rows[p] = rows[p], rows[k]
            x[k], x[p] = x[p], x[k]
            scale[k], scale[p] = scale[p], scale[k]
        pivot_row = rows[k]
        pivot = pivot_row[k]
        if abs(pivot) <= 1e-14 * scale[k]:
            raise SingularMatrixError(f"pivot {k} is {pivot:.3e}; matrix is singular")
        for i in range(k + 1, n):
            row = rows[i]
            f = row[k] / pivot
            if f != 0.0:
                for j in range(k + 1, n):
                    row[j] -= f * pivot_row[j]
                x[i] -= f * x[k]
    for k in range(n - 1, -1, -1):
        row = rows[k]
        acc = x[k]
        for j in range(k + 1, n):
            acc -= row[j] * x[j]
        x[k] = acc / row[k]
    return np.array(x)


def _derivative(ode, x, u, t):
    return lu_solve(ode.mass_of(x, t), ode.rhs_of(x, u, t))


def rk4_step(ode, state, control, t, dt):
    """One classical Runge-Kutta step; the control is held over the step.

    ``control`` may also be a callable ``u(t)`` evaluated at each stage time.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    u = control if callable(control) else (lambda _t, c=control: c)
    x = np.asarray(state, dtype=float)
    k1 = _derivative(ode, x, u(t), t)
    k2 = _derivative(ode, x + 0.5 * dt * k1, u(t + 0.5 * dt), t + 0.5 * dt)
    k3 = _derivative(ode, x + 0.5 * dt * k2, u(t + 0.5 * dt), t + 0.5 * dt)
    k4 = _derivative(ode, x + dt * k3, u(t + dt), t + dt)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class Trajectory:
    """Time-sampled states and, optionally, controls.

    ``states`` has shape ``(T, 2n)``; ``controls`` is ``(T, m)`` for
    ``sampling="knot"`` and ``(T - 1, m)`` for piecewise-constant
    ``sampling="interval"`` controls.
    """

    times: np.ndarray
    states: np.ndarray
    controls: Optional[np.ndarray] = None
    sampling: str = "knot"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if self.controls is not None:
            self.controls = np.asarray(self.controls, dtype=float)
            if self.controls.ndim == 1:
                self.controls = self.controls[:, None]
        if self.sampling not in ("knot", "interval"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")
        n_t = self.times.size
        if self.states.shape[0] != n_t:
            raise ValueError(f"{self.states.shape[0]} states for {n_t} times")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.controls is not None:
            expected = n_t if self.sampling == "knot" else n_t - 1
            if self.controls.shape[0] != expected:
                raise ValueError(
                    f"{self.controls.shape[0]} controls for {n_t} times ({self.sampling} sampling)"
                )
        arrays = [self.times, self.states] + ([self.controls] if self.controls is not None else [])
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("trajectory contains non-finite values")

    @property
    def n_links(self):
        return self.states.shape[1] // 2

    @property
    def final_state(self):
        return State.from_vector(self.states[-1])

    def state_at(self, k):
        return State.from_vector(self.states[k])

    def control_at(self, t):
        """First-order hold of the knot controls, clamped outside the grid."""
        if self.controls is None:
            raise ValueError("trajectory carries no controls")
        if self.sampling == "interval":
            k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.controls) - 1)
            return self.controls[k].copy()
        return np.array(
            [np.interp(t, self.times, self.controls[:, j]) for j in range(self.controls.shape[1])]
        )


@dataclass(frozen=True)
class RolloutConfig:
    """Horizon, step and control source for :func:`simulate`.

    ``control`` is ``None`` for a passive run, a :class:`Trajectory` to
    interpolate controls from, or a callable ``u(t, x)``.
    """

    t_span: tuple
    dt: float
    control: object = None

    def __post_init__(self):
        t0, t1 = self.t_span
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not t1 > t0:
            raise ValueError(f"t_span end must exceed start, got {self.t_span}")

    @property
    def control_source(self):
        if self.control is None:
            return "zero"
        if isinstance(self.control, Trajectory):
            return "interpolated"
        return "callback"


def _control_function(params, cfg) -> Callable:
    m = params.n_controls
    if cfg.control is None:
        zero = np.zeros(m)
        return lambda t, x: zero
    if isinstance(cfg.control, Trajectory):
        ref = cfg.control
        return lambda t, x: ref.control_at(t)
    return lambda t, x: np.asarray(cfg.control(t, x), dtype=float).reshape(m)


def _guard(x, t):
    if not np.all(np.isfinite(x)):
        raise DivergenceError("non-finite state encountered", t)
    if np.max(np.abs(x)) > DIVERGENCE_LIMIT:
        raise DivergenceError(f"state magnitude exceeded {DIVERGENCE_LIMIT:g}", t)


def _integrate(params, x0, times, control_fn):
    ode = MassMatrixOde(params)
    xs = np.empty((times.size, x0.size))
    xs[0] = x0
    x = x0
    for k in range(times.size - 1):
        t = times[k]
        dt = times[k + 1] - t
        # the first-order hold is re-evaluated at every stage time
        x = rk4_step(ode, x, lambda s, x=x: control_fn(s, x), t, dt)
        _guard(x, times[k + 1])
        xs[k + 1] = x
    return xs


def simulate(params, initial, cfg):
    """Integrate the chain from ``initial`` over ``cfg.t_span``.

    Output times are ``t0 + k dt`` with the last step shortened to land on
    ``t1`` exactly.
    """
    if isinstance(initial, State):
        x0 = initial.as_vector()
    else:
        x0 = np.asarray(initial, dtype=float).reshape(-1)
    if x0.size != 2 * params.n_links:
        raise ValueError(f"initial state has {x0.size} entries, expected {2 * params.n_links}")
    t0, t1 = (float(t) for t in cfg.t_span)
    n_full = int(np.floor((t1 - t0) / cfg.dt * (1 + 1e-12)))
    times = t0 + cfg.dt * np.arange(n_full + 1)
    times = times[times < t1 - 1e-9 * cfg.dt]
    times = np.append(times, t1)
    control_fn = _control_function(params, cfg)
    states = _integrate(params, x0, times, control_fn)
    controls = None
    if cfg.control is not None:
        controls = np.array([control_fn(t, x) for t, x in zip(times, states)])
    return Trajectory(times, states, controls)


def rollout_with_controls(params, initial, reference, dt):
    """Replay the reference's controls open loop through the integrator.

    Controls follow a first-order hold between the reference knots and are
    clamped to the last knot beyond it.  Every reference interval is cut into
    equal sub-steps no longer than ``dt`` so the output hits each knot time.
    """
    if reference.controls is None:
        raise ValueError("reference trajectory carries no controls")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if isinstance(initial, State):
        x0 = initial.as_vector()
    else:
        x0 = np.asarray(initial, dtype=float).reshape(-1)
    knots = reference.times
    pieces = [knots[:1]]
    for a, b in zip(knots[:-1], knots[1:]):
        n_sub = max(1, int(np.ceil((b - a) / dt - 1e-9)))
        inner = a + (b - a) * np.arange(1, n_sub) / n_sub
        pieces.extend([inner, [b]])
    times = np.concatenate(pieces)

    def control_fn(t, x):
        return reference.control_at(t)

    states = _integrate(params, x0, times, control_fn)
    controls = np.array([reference.control_at(t) for t in times])
    return Trajectory(times, states, controls)


def energy_drift(params, traj):
    """Largest ``|E(t) - E(0)|`` along the trajectory, relative to ``|E(0)|``.

    Falls back to the absolute drift when the initial energy is exactly zero.
    """
    energies = np.array([total_energy(params, traj.state_at(k)) for k in range(traj.times.size)])
    scale = abs(energies[0]) or 1.0
    return float(np.max(np.abs(energies - energies[0])) / scale)
