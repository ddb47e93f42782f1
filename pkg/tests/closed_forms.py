"""Hand-expanded closed forms used as independent oracles.

Everything here is written out term by term, without the coefficient
grouping used inside the package, so agreement is a real cross-check.
All functions take scalar arguments.
"""

import numpy as np


def kinetic_2link(m, l, q, qd):
    m1, m2 = m
    l1, l2 = l
    return (
        0.5 * (m1 + m2) * l1**2 * qd[0] ** 2
        + 0.5 * m2 * l2**2 * (qd[0] + qd[1]) ** 2
        + m2 * l1 * l2 * qd[0] * (qd[0] + qd[1]) * np.cos(q[1])
    )


def potential_2link(m, l, g, q):
    m1, m2 = m
    l1, l2 = l
    return -(m1 + m2) * g * l1 * np.cos(q[0]) - m2 * g * l2 * np.cos(q[0] + q[1])


def coriolis_2link(m, l, q, qd):
    """Compact two-link Coriolis matrix, ``b s2 [[0, -(2 qd1 + qd2)], [qd1, 0]]``."""
    b = m[1] * l[0] * l[1] * np.sin(q[1])
    return np.array([[0.0, -b * (2 * qd[0] + qd[1])], [b * qd[0], 0.0]])


def kinetic_3link(m, l, q, qd):
    """Kinetic energy from the point-mass velocities, summed link by link."""
    phi = np.cumsum(q)
    w = np.cumsum(qd)
    vx = np.cumsum(np.asarray(l) * w * np.cos(phi))
    vy = np.cumsum(np.asarray(l) * w * np.sin(phi))
    return 0.5 * float(np.sum(np.asarray(m) * (vx**2 + vy**2)))


def potential_3link(m, l, g, q):
    phi = np.cumsum(q)
    height = np.cumsum(-np.asarray(l) * np.cos(phi))
    return float(g * np.sum(np.asarray(m) * height))


def mass_3link(m, l, q, m12_coupling_mass=None):
    """Three-link inertia matrix expanded entry by entry.

    ``m12_coupling_mass`` sets the mass multiplying ``l1 l3 c23`` in the
    (1, 2) entry.  The symmetric matrix needs ``m3`` there; passing ``m2``
    reproduces a commonly tabulated variant that is only symmetric when
    ``m2 == m3``.  The (2, 1) entry always uses ``m3``.
    """
    m1, m2, m3 = m
    l1, l2, l3 = l
    c2, c3, c23 = np.cos(q[1]), np.cos(q[2]), np.cos(q[1] + q[2])
    mk = m3 if m12_coupling_mass is None else m12_coupling_mass
    M11 = (
        (m1 + m2 + m3) * l1**2
        + (m2 + m3) * l2**2
        + m3 * l3**2
        + 2 * (m2 + m3) * l1 * l2 * c2
        + 2 * m3 * l1 * l3 * c23
        + 2 * m3 * l2 * l3 * c3
    )
    M12 = (m2 + m3) * l2**2 + m3 * l3**2 + (m2 + m3) * l1 * l2 * c2 + mk * l1 * l3 * c23 + 2 * m3 * l2 * l3 * c3
    M21 = (m2 + m3) * l2**2 + m3 * l3**2 + (m2 + m3) * l1 * l2 * c2 + m3 * l1 * l3 * c23 + 2 * m3 * l2 * l3 * c3
    M13 = m3 * l3**2 + m3 * l1 * l3 * c23 + m3 * l2 * l3 * c3
    M22 = (m2 + m3) * l2**2 + m3 * l3**2 + 2 * m3 * l2 * l3 * c3
    M23 = m3 * l3**2 + m3 * l2 * l3 * c3
    M33 = m3 * l3**2
    return np.array([[M11, M12, M13], [M21, M22, M23], [M13, M23, M33]])


def tabulated_coriolis_3link(m, l, q, qd):
    """A commonly tabulated entrywise three-link Coriolis matrix.

    Kept as a documented reference; it is not a valid Coriolis matrix for
    the chain (see ``test_dynamics``).
    """
    m1, m2, m3 = m
    l1, l2, l3 = l
    d1, d2, d3 = qd
    s2, s3, s23 = np.sin(q[1]), np.sin(q[2]), np.sin(q[1] + q[2])
    w = d1 + d2 + d3
    C11 = 0.0
    C12 = -(m2 + m3) * l1 * l2 * (2 * d1 + d2) * s2 - m3 * l1 * l3 * (2 * d1 + d2 + d3) * s23
    C13 = -m3 * l1 * l3 * (2 * d1 + d2 + d3) * s23 - m3 * l2 * l3 * (2 * d1 + d2 + d3) * s3
    C21 = (
        -(m2 + m3) * l1 * l2 * d2 * s2
        - m3 * l1 * l3 * (d2 + d3) * s23
        + (m2 + m3) * l1 * l2 * (d1 + d2) * s2
        + m3 * l1 * l3 * w * s3
    )
    C22 = m3 * l1 * l3 * w * s3
    C23 = -m3 * l2 * l3 * (2 * d1 + 2 * d2 + d3) * s3
    C31 = -m3 * l1 * l3 * (d2 + d3) * s23 + m3 * l1 * l3 * w * s23 + m3 * l2 * l3 * w * s3
    C32 = m3 * l2 * l3 * w * s3
    C33 = -m3 * l2 * l3 * (d1 + d2) * s3
    return np.array([[C11, C12, C13], [C21, C22, C23], [C31, C32, C33]])
