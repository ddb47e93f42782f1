"""Manipulator-equation terms for point-mass acrobots.

The chain hangs from a fixed pivot.  Link ``i`` is massless with length
``l_i`` and carries a point mass ``m_i`` at its far end.  ``q_1`` is measured
from the straight-down vertical and every later angle is relative to the
previous link, so ``q = 0`` is the hanging rest and ``q = (pi, 0, ...)`` is
the upright balance point.  The equations of motion are

    M(q) qdd + C(q, qd) qd = tau_g(q) + B u

and as a first-order system in ``x = (q, qd)``

    [[I, 0], [C, M]] xdot = (qd, tau_g + B u).

Every evaluator below accepts arrays with arbitrary leading batch axes
(``q.shape == (..., n)``) so the transcription can evaluate all knots at once.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np

from .errors import ModelMismatchError, SingularMatrixError

DEFAULT_GRAVITY = 9.81


@dataclass(frozen=True)
class LinkChainParams:
    """Physical parameters of an n-link point-mass chain.

    Parameters
    ----------
    masses : sequence of float
        Point mass at the far end of each link [kg].
    lengths : sequence of float
        Link lengths [m].
    gravity : float
        Gravitational acceleration [m/s^2].
    actuated : sequence of bool, optional
        Which joints receive a control torque.  Defaults to every joint
        except the first (the acrobot configuration).
    """

    masses: tuple
    lengths: tuple
    gravity: float = DEFAULT_GRAVITY
    actuated: tuple = field(default=None)

    def __post_init__(self):
        masses = tuple(float(m) for m in self.masses)
        lengths = tuple(float(l) for l in self.lengths)
        n = len(masses)
        if n < 1 or len(lengths) != n:
            raise ModelMismatchError(
                f"need one mass per link, got {n} masses and {len(lengths)} lengths"
            )
        actuated = self.actuated
        if actuated is None:
            actuated = (False,) + (True,) * (n - 1)
        actuated = tuple(bool(a) for a in actuated)
        if len(actuated) != n:
            raise ModelMismatchError(f"actuated mask has {len(actuated)} entries, expected {n}")
        if not all(np.isfinite(m) and m > 0 for m in masses):
            raise ValueError(f"masses must be positive, got {masses}")
        if not all(np.isfinite(l) and l > 0 for l in lengths):
            raise ValueError(f"lengths must be positive, got {lengths}")
        if not (np.isfinite(self.gravity) and self.gravity >= 0):
            raise ValueError(f"gravity must be >= 0, got {self.gravity}")
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "gravity", float(self.gravity))
        object.__setattr__(self, "actuated", actuated)

    @classmethod
    def acrobot(cls, n_links=2, mass=1.0, length=1.0, gravity=DEFAULT_GRAVITY):
        """Uniform chain actuated at every joint but the pivot."""
        return cls((mass,) * n_links, (length,) * n_links, gravity)

    @property
    def n_links(self):
        return len(self.masses)

    @property
    def n_controls(self):
        return sum(self.actuated)

    @property
    def is_acrobot(self):
        """True when the pivot is passive and some other joint is driven."""
        return not self.actuated[0] and any(self.actuated[1:])

    def actuation_matrix(self):
        """The n x m map ``B`` from control inputs to joint torques."""
        rows = [i for i, a in enumerate(self.actuated) if a]
        B = np.zeros((self.n_links, len(rows)))
        B[rows, np.arange(len(rows))] = 1.0
        return B


@dataclass(frozen=True)
class State:
    """Joint angles ``q`` [rad] and joint rates ``qdot`` [rad/s]."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        qdot = np.array(self.qdot, dtype=float).reshape(-1)
        if q.shape != qdot.shape:
            raise ModelMismatchError(f"q has {q.size} entries but qdot has {qdot.size}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qdot))):
            raise ValueError("state entries must be finite")
        q.flags.writeable = False
        qdot.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size % 2:
            raise ModelMismatchError(f"state vector must have even length, got {x.size}")
        n = x.size // 2
        return cls(x[:n], x[n:])

    @property
    def n_links(self):
        return self.q.size

    def as_vector(self):
        return np.concatenate([self.q, self.qdot])


@dataclass(frozen=True)
class ManipulatorTerms:
    """``M``, ``C``, ``tau_g`` and ``B`` evaluated at one state."""

    M: np.ndarray
    C: np.ndarray
    tau_g: np.ndarray
    B: np.ndarray


def _check_links(params, n, state=None):
    if params.n_links != n:
        raise ModelMismatchError(f"expected a {n}-link chain, got {params.n_links} links")
    if state is not None and state.n_links != n:
        raise ModelMismatchError(f"expected a {n}-link state, got {state.n_links} angles")


# --- inertia matrix ----------------------------------------------------------
#
# M(q) is stored as M0 + sum_t A_t cos(sum of q over joints J_t).  The constant
# matrices are the closed forms regrouped by cosine factor; for three
# links this reads M_12 with m_3 l_1 l_3 c_{2+3} so that M is symmetric.


@lru_cache(maxsize=64)
def _inertia_coefficients(params):
    m, l = params.masses, params.lengths
    if params.n_links == 2:
        m1, m2 = m
        l1, l2 = l
        M0 = np.array(
            [
                [(m1 + m2) * l1**2 + m2 * l2**2, m2 * l2**2],
                [m2 * l2**2, m2 * l2**2],
            ]
        )
        b = m2 * l1 * l2
        terms = [((1,), b * np.array([[2.0, 1.0], [1.0, 0.0]]))]
        return M0, terms
    if params.n_links == 3:
        m1, m2, m3 = m
        l1, l2, l3 = l
        m123, m23 = m1 + m2 + m3, m2 + m3
        a33 = m3 * l3**2
        a22 = m23 * l2**2 + a33
        M0 = np.array(
            [
                [m123 * l1**2 + a22, a22, a33],
                [a22, a22, a33],
                [a33, a33, a33],
            ]
        )
        terms = [
            ((1,), m23 * l1 * l2 * np.array([[2.0, 1, 0], [1, 0, 0], [0, 0, 0]])),
            ((2,), m3 * l2 * l3 * np.array([[2.0, 2, 1], [2, 2, 1], [1, 1, 0]])),
            ((1, 2), m3 * l1 * l3 * np.array([[2.0, 1, 1], [1, 0, 0], [1, 0, 0]])),
        ]
        return M0, terms
    raise ModelMismatchError(f"closed forms exist for 2 and 3 links, got {params.n_links}")


def mass_matrix(params, q):
    """Inertia matrix ``M(q)``; shape ``(..., n, n)``."""
    q = np.asarray(q, dtype=float)
    M0, terms = _inertia_coefficients(params)
    M = M0
    for joints, A in terms:
        M = M + np.cos(q[..., list(joints)].sum(axis=-1))[..., None, None] * A
    return M


def mass_matrix_gradient(params, q):
    """Analytic ``dM/dq``; ``out[..., k, i, j] = dM_ij / dq_k``."""
    q = np.asarray(q, dtype=float)
    M0, terms = _inertia_coefficients(params)
    n = M0.shape[0]
    dM = np.zeros(q.shape[:-1] + (n, n, n))
    for joints, A in terms:
        s = np.sin(q[..., list(joints)].sum(axis=-1))[..., None, None]
        for k in joints:
            dM[..., k, :, :] -= s * A
    return dM


def mass_matrix_gradient_fd(params, q):
    """Central-difference ``dM/dq`` for a single configuration."""
    q = np.asarray(q, dtype=float)
    n = q.size
    dM = np.empty((n, n, n))
    for k in range(n):
        h = 1e-6 * max(1.0, abs(q[k]))
        qp, qm = q.copy(), q.copy()
        qp[k] += h
        qm[k] -= h
        dM[k] = (mass_matrix(params, qp) - mass_matrix(params, qm)) / (2 * h)
    return dM


# --- gravity -----------------------------------------------------------------


def gravity_torque(params, q):
    """Gravity torque ``tau_g(q) = -dU/dq``; shape ``(..., n)``."""
    q = np.asarray(q, dtype=float)
    g = params.gravity
    if params.n_links == 2:
        m1, m2 = params.masses
        l1, l2 = params.lengths
        s1 = np.sin(q[..., 0])
        s12 = np.sin(q[..., 0] + q[..., 1])
        return -g * np.stack([(m1 + m2) * l1 * s1 + m2 * l2 * s12, m2 * l2 * s12], axis=-1)
    if params.n_links == 3:
        m1, m2, m3 = params.masses
        l1, l2, l3 = params.lengths
        s1 = np.sin(q[..., 0])
        s12 = np.sin(q[..., 0] + q[..., 1])
        s123 = np.sin(q[..., 0] + q[..., 1] + q[..., 2])
        tg3 = m3 * l3 * s123
        tg2 = (m2 + m3) * l2 * s12 + tg3
        tg1 = (m1 + m2 + m3) * l1 * s1 + tg2
        return -g * np.stack([tg1, tg2, tg3], axis=-1)
    raise ModelMismatchError(f"closed forms exist for 2 and 3 links, got {params.n_links}")


# --- Coriolis ----------------------------------------------------------------


def christoffel_coriolis(params, state, dM_dq):
    """Coriolis matrix from Christoffel symbols of the first kind.

    ``C_ij = sum_k 1/2 (dM_ij/dq_k + dM_ik/dq_j - dM_jk/dq_i) qd_k``.  With
    this choice ``dM/dt - 2C`` is skew-symmetric.

    Parameters
    ----------
    params : LinkChainParams
        Unused beyond signature symmetry with the other term evaluators.
    state : State or ndarray
        A :class:`State`, or joint rates with shape ``(..., n)``.
    dM_dq : ndarray
        ``dM_dq[..., k, i, j] = dM_ij / dq_k``.
    """
    qdot = state.qdot if isinstance(state, State) else np.asarray(state, dtype=float)
    dM = np.asarray(dM_dq, dtype=float)
    return 0.5 * (
        np.einsum("...kij,...k->...ij", dM, qdot)
        + np.einsum("...jik,...k->...ij", dM, qdot)
        - np.einsum("...ijk,...k->...ij", dM, qdot)
    )


def closed_form_coriolis_2link(params, q, qdot):
    """Two-link Coriolis matrix in the compact closed form.

    ``C = b s2 [[0, -(2 qd1 + qd2)], [qd1, 0]]`` with ``b = m2 l1 l2``.  It
    differs entrywise from the Christoffel matrix but yields the same vector
    ``C qd``, so the equations of motion agree.
    """
    m2 = params.masses[1]
    l1, l2 = params.lengths
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    bs2 = m2 * l1 * l2 * np.sin(q[..., 1])
    zero = np.zeros_like(bs2)
    row1 = np.stack([zero, -bs2 * (2 * qdot[..., 0] + qdot[..., 1])], axis=-1)
    row2 = np.stack([bs2 * qdot[..., 0], zero], axis=-1)
    return np.stack([row1, row2], axis=-2)


def coriolis_matrix(params, q, qdot):
    """The Coriolis matrix used by the shipped dynamics (batched)."""
    if params.n_links == 2:
        return closed_form_coriolis_2link(params, q, qdot)
    return christoffel_coriolis(params, qdot, mass_matrix_gradient(params, q))


# --- assembled terms -----------------------------------------------------------


def manipulator_terms_2link(params, state):
    """``M``, ``C``, ``tau_g``, ``B`` of the two-link acrobot."""
    _check_links(params, 2, state)
    return ManipulatorTerms(
        M=mass_matrix(params, state.q),
        C=closed_form_coriolis_2link(params, state.q, state.qdot),
        tau_g=gravity_torque(params, state.q),
        B=params.actuation_matrix(),
    )


def manipulator_terms_3link(params, state):
    """``M``, ``C``, ``tau_g``, ``B`` of the three-link acrobot.

    ``C`` comes from :func:`christoffel_coriolis` with the analytic ``dM/dq``.
    """
    _check_links(params, 3, state)
    return ManipulatorTerms(
        M=mass_matrix(params, state.q),
        C=christoffel_coriolis(params, state, mass_matrix_gradient(params, state.q)),
        tau_g=gravity_torque(params, state.q),
        B=params.actuation_matrix(),
    )


def manipulator_terms(params, state):
    if params.n_links == 2:
        return manipulator_terms_2link(params, state)
    if params.n_links == 3:
        return manipulator_terms_3link(params, state)
    raise ModelMismatchError(f"closed forms exist for 2 and 3 links, got {params.n_links}")


def accelerations(params, q, qdot, u):
    """Joint accelerations ``M^-1 (tau_g + B u - C qd)`` for a batch of states."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape[-1:] != (params.n_controls,):
        raise ModelMismatchError(
            f"expected {params.n_controls} control inputs, got shape {u.shape}"
        )
    M = mass_matrix(params, q)
    C = coriolis_matrix(params, q, qdot)
    rhs = gravity_torque(params, q) + u @ params.actuation_matrix().T
    rhs = rhs - np.einsum("...ij,...j->...i", C, qdot)
    try:
        return np.linalg.solve(M, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc


def state_derivative(params, state, control=None):
    """``xdot = (qd, qdd)`` of the controlled chain.

    Solves the block system ``[[I, 0], [C, M]] xdot = (qd, tau_g + B u)`` by
    forward substitution: the top block gives ``qd``, the bottom a solve
    against ``M``.
    """
    _check_links(params, params.n_links, state)
    if control is None:
        control = np.zeros(params.n_controls)
    qdd = accelerations(params, state.q, state.qdot, np.asarray(control, dtype=float).reshape(-1))
    return np.concatenate([state.qdot, qdd])


# --- energies ----------------------------------------------------------------


def kinetic_energy(params, state):
    """Kinetic energy [J] from the hand-derived expression for 2 or 3 links."""
    _check_links(params, params.n_links, state)
    q, qd = state.q, state.qdot
    if params.n_links == 2:
        m1, m2 = params.masses
        l1, l2 = params.lengths
        w1, w2 = qd[0], qd[0] + qd[1]
        return (
            0.5 * (m1 + m2) * l1**2 * w1**2
            + 0.5 * m2 * l2**2 * w2**2
            + m2 * l1 * l2 * w1 * w2 * np.cos(q[1])
        )
    if params.n_links == 3:
        m1, m2, m3 = params.masses
        l1, l2, l3 = params.lengths
        w1, w2, w3 = qd[0], qd[0] + qd[1], qd[0] + qd[1] + qd[2]
        return (
            0.5 * (m1 + m2 + m3) * l1**2 * w1**2
            + 0.5 * (m2 + m3) * l2**2 * w2**2
            + 0.5 * m3 * l3**2 * w3**2
            + (m2 + m3) * l1 * l2 * w1 * w2 * np.cos(q[1])
            + m3 * l1 * l3 * w1 * w3 * np.cos(q[1] + q[2])
            + m3 * l2 * l3 * w2 * w3 * np.cos(q[2])
        )
    raise ModelMismatchError(f"closed forms exist for 2 and 3 links, got {params.n_links}")


def potential_energy(params, state):
    """Gravitational potential energy [J], zero level at the pivot."""
    _check_links(params, params.n_links, state)
    q, g = state.q, params.gravity
    if params.n_links == 2:
        m1, m2 = params.masses
        l1, l2 = params.lengths
        return -(m1 + m2) * g * l1 * np.cos(q[0]) - m2 * g * l2 * np.cos(q[0] + q[1])
    if params.n_links == 3:
        m1, m2, m3 = params.masses
        l1, l2, l3 = params.lengths
        return (
            -(m1 + m2 + m3) * l1 * g * np.cos(q[0])
            - (m2 + m3) * l2 * g * np.cos(q[0] + q[1])
            - m3 * l3 * g * np.cos(q[0] + q[1] + q[2])
        )
    raise ModelMismatchError(f"closed forms exist for 2 and 3 links, got {params.n_links}")


def total_energy(params, state):
    return kinetic_energy(params, state) + potential_energy(params, state)


class MassMatrixOde:
    """First-order mass-matrix form ``Mass(x, t) xdot = f(x, u, t)`` of a chain.

    Single-state evaluation for the integrator.  The coefficient matrices of
    ``M`` and the matching Christoffel tensors are built once here so a call
    costs a handful of small array operations.
    """

    def __init__(self, params):
        _inertia_coefficients(params)  # rejects unsupported link counts
        self.params = params
        n = params.n_links
        self.n_links = n
        self.dimension = 2 * n
        self._B = params.actuation_matrix()
        self._M0, terms = _inertia_coefficients(params)
        self._joints = [joints for joints, _ in terms]
        self._A = [A for _, A in terms]
        # C = -sum_t sin(angle_t) * (qd . K_t) with K_t[l] the Christoffel
        # matrix of dM = A_t on the joints of term t, evaluated at qd = e_l
        eye = np.eye(n)
        K = []
        for joints, A in terms:
            dM = np.zeros((n, n, n))
            dM[list(joints)] = A
            K.append(np.stack([christoffel_coriolis(params, eye[l], dM) for l in range(n)]))
        # (l, t * n * n): one matmul with qd gives every K_t contracted at once
        self._K = np.stack(K, axis=1).reshape(n, -1)
        m_tail = np.cumsum(params.masses[::-1])[::-1]
        self._gravity_weights = (params.gravity * m_tail * np.array(params.lengths)).tolist()
        self._template = np.zeros((2 * n, 2 * n))
        self._template[:n, :n] = eye

    def _inertia(self, q):
        M = self._M0
        for joints, A in zip(self._joints, self._A):
            M = M + math.cos(sum(q[j] for j in joints)) * A
        return M

    def _coriolis(self, q, qd):
        if self.n_links == 2:
            m2 = self.params.masses[1]
            l1, l2 = self.params.lengths
            bs2 = m2 * l1 * l2 * math.sin(q[1])
            return np.array([[0.0, -bs2 * (2 * qd[0] + qd[1])], [bs2 * qd[0], 0.0]])
        n = self.n_links
        sines = np.array([-math.sin(sum(q[j] for j in joints)) for joints in self._joints])
        return (sines @ (qd @ self._K).reshape(len(sines), n * n)).reshape(n, n)

    def _gravity(self, q):
        phi = 0.0
        terms = []
        for qk, w in zip(q, self._gravity_weights):
            phi += qk
            terms.append(w * math.sin(phi))
        tau = []
        acc = 0.0
        for t in reversed(terms):
            acc += t
            tau.append(-acc)
        return tau[::-1]

    def mass_of(self, x, t=0.0):
        n = self.n_links
        x = np.asarray(x, dtype=float)
        q = x[:n].tolist()
        out = self._template.copy()
        out[n:, :n] = self._coriolis(q, x[n:])
        out[n:, n:] = self._inertia(q)
        return out

    def rhs_of(self, x, u, t=0.0):
        n = self.n_links
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float).reshape(-1)
        return np.concatenate([x[n:], np.array(self._gravity(x[:n].tolist())) + self._B @ u])
