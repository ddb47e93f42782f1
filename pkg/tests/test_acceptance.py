"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (also collected in
the terminal summary) and then asserts.  Tolerances are the stated ones.
"""

import json
import time

import numpy as np
import pytest

from acrobot import (
    LinkChainParams,
    NlpProblem,
    OcpSpec,
    RolloutConfig,
    State,
    Trajectory,
    augmented_objective,
    boundary_constraints,
    build_nlp,
    constraint_jacobian_fd,
    defects,
    effort_cost,
    energy_drift,
    pack,
    read_trajectory,
    resample_guess,
    rollout_with_controls,
    simulate,
    solve,
    state_derivative,
    unpack,
    write_trajectory,
)
from acrobot.cli import main
from acrobot.config import default_config
from acrobot.dynamics import (
    christoffel_coriolis,
    closed_form_coriolis_2link,
    gravity_torque,
    mass_matrix,
    mass_matrix_gradient,
)

import conftest

G = 9.81


def report(number, checks, elapsed=None):
    """Record and print one line for a criterion; ``checks`` maps clause -> (ok, value)."""
    passed = all(ok for ok, _ in checks.values())
    parts = [f"{name}={'ok' if ok else 'FAIL'}({value})" for name, (ok, value) in checks.items()]
    if elapsed is not None:
        parts.append(f"{elapsed:.1f}s")
    detail = " ".join(parts)
    conftest.ACCEPTANCE_RESULTS[number] = (passed, detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    return passed


def fmt(x):
    return f"{x:.3g}"


# --- shared solves -----------------------------------------------------------------------


def run_solve(model, n_knots=25, guess_from=None):
    cfg = default_config(model)
    spec = OcpSpec(cfg.params, cfg.ocp.x_init, cfg.ocp.x_final, n_knots=n_knots)
    problem = build_nlp(spec)
    if guess_from is not None:
        coarse_spec, coarse = guess_from
        X, U = unpack(coarse.y_star, coarse_spec.n_state, coarse_spec.n_control)
        problem.y_guess = resample_guess(spec, coarse_spec.times, X, U)
    start = time.perf_counter()
    result = solve(problem, cfg.solver)
    return spec, result, time.perf_counter() - start


@pytest.fixture(scope="module")
def swing_up_2():
    return run_solve("acrobot2")


@pytest.fixture(scope="module")
def swing_up_3():
    return run_solve("acrobot3")


# --- 1 --------------------------------------------------------------------------------------


def batched_potential(m, l, q):
    phi = np.cumsum(q, axis=-1)
    return G * np.sum(m * np.cumsum(-l * np.cos(phi), axis=-1), axis=-1)


def batched_kinetic(m, l, q, qd):
    phi = np.cumsum(q, axis=-1)
    w = np.cumsum(qd, axis=-1)
    vx = np.cumsum(l * w * np.cos(phi), axis=-1)
    vy = np.cumsum(l * w * np.sin(phi), axis=-1)
    return 0.5 * np.sum(m * (vx**2 + vy**2), axis=-1)


def kinetic_2link_expanded(m, l, q, qd):
    m1, m2, l1, l2 = m[:, 0], m[:, 1], l[:, 0], l[:, 1]
    return (
        0.5 * (m1 + m2) * l1**2 * qd[:, 0] ** 2
        + 0.5 * m2 * l2**2 * (qd[:, 0] + qd[:, 1]) ** 2
        + m2 * l1 * l2 * qd[:, 0] * (qd[:, 0] + qd[:, 1]) * np.cos(q[:, 1])
    )


def dynamics_checks(n, samples, rng):
    m = rng.uniform(0.2, 3.0, (samples, n))
    l = rng.uniform(0.2, 2.0, (samples, n))
    q = rng.uniform(-np.pi, np.pi, (samples, n))
    qd = rng.uniform(-5.0, 5.0, (samples, n))
    v = rng.normal(size=(samples, n))
    sym = chol = grav = kin = skew = entry = 0.0
    for i in range(samples):
        p = LinkChainParams(m[i], l[i])
        M = mass_matrix(p, q[i])
        sym = max(sym, np.max(np.abs(M - M.T)))
        np.linalg.cholesky(M)
        chol += 1
        h = 1e-6
        grad = np.array(
            [
                (batched_potential(m[i], l[i], q[i] + h * e) - batched_potential(m[i], l[i], q[i] - h * e)) / (2 * h)
                for e in np.eye(n)
            ]
        )
        tau = gravity_torque(p, q[i])
        grav = max(grav, np.max(np.abs(tau + grad)) / max(1.0, np.max(np.abs(tau))))
        T = (kinetic_2link_expanded(m[i : i + 1], l[i : i + 1], q[i : i + 1], qd[i : i + 1])[0]
             if n == 2 else batched_kinetic(m[i], l[i], q[i], qd[i]))
        kin = max(kin, abs(0.5 * qd[i] @ M @ qd[i] - T))
        dM = mass_matrix_gradient(p, q[i])
        C = christoffel_coriolis(p, qd[i], dM)
        Mdot = np.einsum("kij,k->ij", dM, qd[i])
        skew = max(skew, abs(v[i] @ (Mdot - 2 * C) @ v[i]))
        if n == 2:
            entry = max(entry, np.max(np.abs(closed_form_coriolis_2link(p, q[i], qd[i]) - C)))
    return sym, chol, grav, kin, skew, entry


def test_criterion_1_dynamics_correctness():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    r2 = dynamics_checks(2, 10_000, rng)
    r3 = dynamics_checks(3, 10_000, rng)
    elapsed = time.perf_counter() - start
    checks = {
        "symmetric": (max(r2[0], r3[0]) <= 1e-12, fmt(max(r2[0], r3[0]))),
        "cholesky": (r2[1] == r3[1] == 10_000, f"{int(r2[1] + r3[1])}/20000"),
        "gravity": (max(r2[2], r3[2]) <= 1e-6, fmt(max(r2[2], r3[2]))),
        "kinetic": (max(r2[3], r3[3]) <= 1e-10, fmt(max(r2[3], r3[3]))),
        "skew": (max(r2[4], r3[4]) <= 1e-8, fmt(max(r2[4], r3[4]))),
        "2link_C_entrywise": (r2[5] <= 1e-8, fmt(r2[5])),
        "runtime": (elapsed < 30.0, f"{elapsed:.1f}s"),
    }
    assert report(1, checks)


# --- 2 --------------------------------------------------------------------------------------


def test_criterion_2_energy_conservation():
    start = time.perf_counter()
    drifts = []
    for n in (2, 3):
        p = LinkChainParams.acrobot(n)
        x0 = np.r_[np.pi / 3, np.zeros(2 * n - 1)]
        drifts.append(energy_drift(p, simulate(p, x0, RolloutConfig((0.0, 10.0), 1e-3))))
    p = LinkChainParams.acrobot(2)
    x0 = np.r_[np.pi / 3, 0.0, 0.0, 0.0]

    def end(dt):
        return simulate(p, x0, RolloutConfig((0.0, 1.0), dt)).states[-1]

    reference = end(0.01 / 8)
    ratio = np.abs(end(0.02) - reference).max() / np.abs(end(0.01) - reference).max()
    elapsed = time.perf_counter() - start
    checks = {
        "drift2": (drifts[0] < 1e-6, fmt(drifts[0])),
        "drift3": (drifts[1] < 1e-6, fmt(drifts[1])),
        "order_ratio": (12 <= ratio <= 20, fmt(ratio)),
        "runtime": (elapsed < 10.0, f"{elapsed:.1f}s"),
    }
    assert report(2, checks)


# --- 3 --------------------------------------------------------------------------------------


def test_criterion_3_equilibria():
    worst = 0.0
    for n in (2, 3):
        p = LinkChainParams.acrobot(n)
        for q in (np.zeros(n), np.r_[np.pi, np.zeros(n - 1)]):
            xdot = state_derivative(p, State(q, np.zeros(n)), np.zeros(p.n_controls))
            worst = max(worst, np.max(np.abs(xdot)))
    assert report(3, {"max_xdot": (worst <= 1e-12, fmt(worst))})


# --- 4 / 5 ----------------------------------------------------------------------------------


def swing_up_checks(spec, result, elapsed, limit):
    y = result.y_star
    X, _ = unpack(y, spec.n_state, spec.n_control)
    max_defect = np.max(np.abs(defects(spec, y)))
    boundary = np.max(np.abs(boundary_constraints(spec, y)))
    return {
        "status": (result.converged, result.status),
        "max_defect": (max_defect <= 1e-6, fmt(max_defect)),
        "boundary": (boundary <= 1e-8, fmt(boundary)),
        "first_knot": (np.array_equal(X[0], spec.x_init), np.round(X[0], 12).tolist()),
        "last_knot": (np.array_equal(X[-1], spec.x_final), np.round(X[-1], 12).tolist()),
        "runtime": (elapsed < limit, f"{elapsed:.1f}s"),
    }


def test_criterion_4_two_link_swing_up(swing_up_2):
    spec, result, elapsed = swing_up_2
    checks = swing_up_checks(spec, result, elapsed, 60.0)
    checks["defaults"] = (
        spec.n_knots == 25 and spec.t_final == 3.0 and np.all(spec.u_max == 20.0) and spec.params.masses == (1.0, 1.0),
        "N=25 T=3 |u|<=20",
    )
    np.testing.assert_array_equal(spec.x_final, [np.pi, 0, 0, 0])
    assert report(4, checks)


def test_criterion_5_three_link_swing_up(swing_up_3):
    spec, result, elapsed = swing_up_3
    checks = swing_up_checks(spec, result, elapsed, 300.0)
    B = spec.params.actuation_matrix()
    checks["first_joint_passive"] = (spec.n_control == 2 and np.all(B[0] == 0.0), f"m={spec.n_control}")
    np.testing.assert_array_equal(spec.x_final, [np.pi, 0, 0, 0, 0, 0])
    assert report(5, checks)


# --- 6 --------------------------------------------------------------------------------------


def rollout_error(spec, result):
    X, U = unpack(result.y_star, spec.n_state, spec.n_control)
    reference = Trajectory(spec.times, X, U)
    final = rollout_with_controls(spec.params, X[0], reference, 1e-3).states[-1]
    n = spec.params.n_links
    err = np.abs(final - spec.x_final)
    return err[:n], err[n:]


def test_criterion_6_open_loop_consistency(swing_up_2, swing_up_3):
    checks = {}
    for label, coarse in (("2link", swing_up_2), ("3link", swing_up_3)):
        spec, result, _ = coarse
        ang, rate = rollout_error(spec, result)
        checks[f"{label}_N25_angles"] = (np.all(ang <= 0.1), fmt(ang.max()))
        checks[f"{label}_N25_rates"] = (np.all(rate <= 0.5), fmt(rate.max()))
        fine_spec, fine, _ = run_solve(
            "acrobot2" if label == "2link" else "acrobot3", n_knots=50, guess_from=(spec, result)
        )
        ang50, rate50 = rollout_error(fine_spec, fine)
        before = max(ang.max(), rate.max())
        after = max(ang50.max(), rate50.max())
        checks[f"{label}_N50_solve"] = (fine.converged, fine.status)
        checks[f"{label}_N50_decrease"] = (after < before, f"{fmt(before)}->{fmt(after)}")
    assert report(6, checks)


# --- 7 --------------------------------------------------------------------------------------


def small_problem(cost, grad, cons, c_bounds, y_lower, guess, jac=None):
    n = len(guess)
    return NlpProblem(
        cost=cost,
        cost_gradient=grad,
        constraints=cons,
        c_lower=np.array(c_bounds[0], dtype=float),
        c_upper=np.array(c_bounds[1], dtype=float),
        y_lower=np.full(n, -np.inf) if y_lower is None else np.array(y_lower, dtype=float),
        y_upper=np.full(n, np.inf),
        y_guess=np.array(guess, dtype=float),
        constraint_jacobian=jac,
    )


def test_criterion_7_solver_suite():
    no_cons = lambda y: np.zeros(0)
    r1 = solve(small_problem(lambda y: (y[0] - 1) ** 2, lambda y: 2 * (y - 1), no_cons, ([], []), None, [0.0]))
    e1 = abs(r1.y_star[0] - 1.0)
    r2 = solve(
        small_problem(lambda y: y @ y, lambda y: 2 * y, lambda y: np.array([y.sum()]), ([1.0], [1.0]), None, [0.0, 0.0])
    )
    e2 = np.max(np.abs(r2.y_star - 0.5))
    r3 = solve(small_problem(lambda y: y @ y, lambda y: 2 * y, no_cons, ([], []), [1.0], [5.0]))

    rng = np.random.default_rng(7)
    A = rng.normal(size=(2, 5))
    b = rng.normal(size=2)
    a = rng.normal(size=5)
    p = small_problem(
        lambda y: np.sum((y - a) ** 2) + 0.1 * np.sum(y**4),
        lambda y: 2 * (y - a) + 0.4 * y**3,
        lambda y: np.concatenate([A @ y - b, [y @ y]]),
        (np.r_[0.0, 0.0, 0.5], np.r_[0.0, 0.0, 2.0]),
        None,
        np.zeros(5),
        jac=lambda y: np.vstack([A, 2 * y]),
    )
    worst = 0.0
    for _ in range(10):
        y, lam, rho = rng.normal(size=5), rng.normal(size=3), rng.uniform(0.5, 20)
        _, grad = augmented_objective(p, y, lam, rho)
        fd = np.array(
            [
                (augmented_objective(p, y + 1e-6 * e, lam, rho)[0] - augmented_objective(p, y - 1e-6 * e, lam, rho)[0])
                / 2e-6
                for e in np.eye(5)
            ]
        )
        worst = max(worst, np.max(np.abs(grad - fd)) / max(1.0, np.max(np.abs(grad))))
    checks = {
        "quadratic": (r1.converged and e1 <= 1e-8, fmt(e1)),
        "equality_kkt": (r2.converged and e2 <= 1e-6, fmt(e2)),
        "active_bound": (r3.converged and r3.y_star[0] == 1.0, repr(float(r3.y_star[0]))),
        "augmented_gradient": (worst <= 1e-6, fmt(worst)),
    }
    assert report(7, checks)


# --- 8 --------------------------------------------------------------------------------------


def dense_jacobian(problem, y):
    """Brute-force column differences with Richardson extrapolation."""
    J = np.zeros((problem.n_constraints, y.size))
    for j in range(y.size):
        e = np.zeros(y.size)
        e[j] = 1e-3 * (1 + abs(y[j]))
        d1 = (problem.constraints(y + e) - problem.constraints(y - e)) / (2 * e[j])
        d2 = (problem.constraints(y + e / 2) - problem.constraints(y - e / 2)) / e[j]
        J[:, j] = (4 * d2 - d1) / 3
    return J


def test_criterion_8_transcription_oracles():
    rng = np.random.default_rng(8)
    roundtrip = True
    for N, nx, m in [(2, 2, 1), (25, 4, 1), (25, 6, 2)]:
        S, U = rng.normal(size=(N, nx)), rng.normal(size=(N, m))
        S2, U2 = unpack(pack(S, U), nx, m)
        roundtrip &= S2.tobytes() == S.tobytes() and U2.tobytes() == U.tobytes()
    roundtrip &= np.array_equal(pack([[1, 2], [3, 4]], [[5], [6]]), [1, 2, 5, 3, 4, 6])

    worst_defect = 0.0
    for n in (2, 3):
        p = LinkChainParams.acrobot(n)
        for scheme in ("euler", "trapezoid"):
            spec = OcpSpec.swing_up(p, t_final=0.5, n_knots=11, scheme=scheme)
            h = spec.step
            U = rng.normal(size=(11, spec.n_control))
            X = np.zeros((11, 2 * n))
            X[0, 0] = 0.4

            def f(x, u):
                return state_derivative(p, State(x[:n], x[n:]), u)

            for k in range(10):
                fk = f(X[k], U[k])
                nxt = X[k] + h * fk
                if scheme == "trapezoid":
                    for _ in range(200):
                        new = X[k] + 0.5 * h * (fk + f(nxt, U[k + 1]))
                        done = np.max(np.abs(new - nxt)) == 0.0
                        nxt = new
                        if done:
                            break
                X[k + 1] = nxt
            worst_defect = max(worst_defect, np.max(np.abs(defects(spec, pack(X, U)))))

    worst_jac = 0.0
    for n in (2, 3):
        for scheme in ("euler", "trapezoid"):
            spec = OcpSpec.swing_up(LinkChainParams.acrobot(n), n_knots=4, scheme=scheme)
            problem = build_nlp(spec)
            for _ in range(3):
                y = pack(rng.normal(scale=0.5, size=(4, spec.n_state)), rng.normal(scale=1.5, size=(4, spec.n_control)))
                oracle = dense_jacobian(problem, y)
                scale = np.max(np.abs(oracle))
                for J in (constraint_jacobian_fd(problem, y), problem.constraint_jacobian(y)):
                    worst_jac = max(worst_jac, np.max(np.abs(J - oracle)) / scale)

    spec = OcpSpec(LinkChainParams.acrobot(2), np.zeros(4), np.zeros(4), t_final=1.0, n_knots=25)
    cost = effort_cost(spec, pack(np.zeros((25, 4)), np.ones((25, 1))))
    checks = {
        "pack_roundtrip": (roundtrip, roundtrip),
        "recurrence_defects": (worst_defect <= 1e-12, fmt(worst_defect)),
        "jacobian_vs_dense": (worst_jac <= 1e-6, fmt(worst_jac)),
        "constant_effort": (cost == 1.0, repr(cost)),
    }
    assert report(8, checks)


# --- 9 --------------------------------------------------------------------------------------


def test_criterion_9_files_and_determinism(tmp_path):
    rng = np.random.default_rng(9)
    bitwise = True
    for i in range(20):
        n, m = (2, 1) if i % 2 else (3, 2)
        T = int(rng.integers(2, 60))
        traj = Trajectory(
            np.cumsum(rng.uniform(1e-4, 1.0, T)),
            rng.normal(size=(T, 2 * n)) * 10.0 ** rng.integers(-300, 300, size=(T, 2 * n)),
            rng.normal(size=(T, m)),
        )
        write_trajectory(tmp_path / "t.csv", traj)
        back = read_trajectory(tmp_path / "t.csv")
        bitwise &= all(
            a.tobytes() == b.tobytes()
            for a, b in ((back.times, traj.times), (back.states, traj.states), (back.controls, traj.controls))
        )

    config = tmp_path / "run.yaml"
    config.write_text("model: acrobot2\ntask:\n  n_knots: 9\nintegrator:\n  dt: 0.01\n  duration: 1\n")
    outputs, codes = [], []
    for run in range(2):
        out = tmp_path / f"run{run}"
        common = ["--config", str(config), "--out", str(out)]
        codes += [
            main(["simulate", *common, "--frames", "2"]),
            main(["optimize", *common]),
            main(["rollout", str(out / "solution.csv"), *common]),
            main(["render", str(out / "solution.csv"), *common, "--frames", "3"]),
        ]
        outputs.append({f.name: f.read_bytes() for f in sorted(out.iterdir())})
    deterministic = outputs[0] == outputs[1] and len(outputs[0]) > 0
    checks = {
        "bitwise_roundtrip": (bitwise, "20 tables"),
        "cli_exit_codes": (codes == [0] * 8, codes),
        "cli_deterministic": (deterministic, f"{len(outputs[0])} files"),
    }
    assert report(9, checks)
