"""Scalar fixed-point operator, its cubic, and the unitary conjugation."""

import numpy as np
import pytest

from copr.fixedpoint import (ScalarStep, f_i, lambda_root, solution_set_distance,
                             t_identity, t_scalar, t_unitary)

from conftest import random_coeffs, random_unitary


def brute_force_minimizer(a_i, y_i, radii=400, angles=256, starts=6):
    """Polar grid search refined from the best few grid local minima.

    The refinement stays in polar coordinates: the objective has a kink
    valley along a circle of fixed modulus, and a cartesian grid stalls
    against it because every axis step leaks modulus first order. Along
    the angle axis the kink term is constant, so a shrinking (rho, theta)
    grid descends cleanly. Several seeds guard against near-ties between
    basins on the coarse grid.
    """

    def objective(zz):
        r = y_i - 2.0 * (zz * np.conj(a_i)).real + abs(a_i) ** 2
        s2 = np.abs(zz - a_i) ** 2
        return r * r + 2.0 * s2 + 1.0 + 2.0 * np.abs(r - s2)

    rmax = 3.0 * max(abs(a_i), np.sqrt(y_i), 1e-3)
    rr = np.linspace(0.0, rmax, radii)
    th = np.linspace(0.0, 2.0 * np.pi, angles, endpoint=False)
    vals = objective(rr[:, None] * np.exp(1j * th)[None, :])
    # grid local minima: angle wraps, radius clamps at both ends
    side = np.minimum(np.roll(vals, 1, 1), np.roll(vals, -1, 1))
    up = np.roll(vals, 1, 0)
    up[0] = np.inf
    dn = np.roll(vals, -1, 0)
    dn[-1] = np.inf
    mask = (vals <= side) & (vals <= up) & (vals <= dn)
    cand_r = np.broadcast_to(rr[:, None], vals.shape)[mask]
    cand_t = np.broadcast_to(th[None, :], vals.shape)[mask]
    order = np.argsort(vals[mask])[:starts]
    best, best_val = None, np.inf
    for rho, theta in zip(cand_r[order], cand_t[order]):
        span_r = rmax * 8.0 / radii
        span_t = 2.0 * np.pi * 8.0 / angles
        for _ in range(40):
            rs = np.maximum(rho + np.linspace(-span_r, span_r, 9), 0.0)
            ts = theta + np.linspace(-span_t, span_t, 9)
            vals = objective(rs[:, None] * np.exp(1j * ts)[None, :])
            k = np.unravel_index(np.argmin(vals), vals.shape)
            rho, theta = rs[k[0]], ts[k[1]]
            span_r /= 2.0
            span_t /= 2.0
        point = rho * np.exp(1j * theta)
        val = float(objective(np.array([point]))[0])
        if val < best_val:
            best, best_val = point, val
    return best


def test_lambda_root_satisfies_cubic(rng):
    for y in rng.uniform(0.01, 5.0, size=200):
        lam = lambda_root(y)
        g = lam ** 3 + 2 * (1 - y) * lam ** 2 + (y * y - 6 * y + 1) * lam - 4 * y
        assert abs(g) <= 1e-10 * max(1.0, y ** 3)
        assert lam > 0


def test_lambda_root_bracket_small_y(rng):
    # for y <= 1 the root sits strictly inside (2.25 y, 4 y)
    for y in rng.uniform(1e-4, 1.0, size=200):
        lam = lambda_root(y)
        assert 2.25 * y < lam < 4.0 * y


def test_lambda_root_reference_value():
    assert lambda_root(1.0) == pytest.approx(2.3829757679062374, abs=1e-9)


def test_lambda_root_rejects_nonpositive():
    with pytest.raises(ValueError):
        lambda_root(0.0)
    with pytest.raises(ValueError):
        lambda_root(-1.0)


def test_scalar_zero_measurement_halves_exactly(rng):
    for _ in range(20):
        a = complex(rng.normal(), rng.normal())
        step = t_scalar(a, 0.0)
        assert step.kind == "point"
        assert step.value == 0.5 * a


def test_scalar_zero_anchor_is_disk():
    step = t_scalar(0.0, 2.5)
    assert step.kind == "disk"
    assert step.value == 0.0
    assert step.radius == pytest.approx(np.sqrt(2.5))


def test_scalar_unit_fixed_point():
    # |a| = 1 <= sqrt(lambda(1)) ~ 1.5437, lands on the unit circle
    step = t_scalar(1.0, 1.0)
    assert step.kind == "point"
    assert step.value == pytest.approx(1.0, abs=1e-12)


def test_scalar_on_circle_is_fixed(rng):
    for _ in range(50):
        y = rng.uniform(0.05, 3.0)
        a = np.sqrt(y) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        assert abs(t_scalar(a, y).value - a) <= 1e-12 * max(1.0, abs(a))


def test_scalar_matches_brute_force(rng):
    for _ in range(100):
        a = complex(rng.normal(), rng.normal())
        y = rng.uniform(0.01, 3.0)
        got = t_scalar(a, y).value
        ref = brute_force_minimizer(a, y)
        assert abs(got - ref) <= 1e-4


def test_scalar_never_beaten_by_probes(rng):
    # the returned point achieves the smallest objective among random probes
    for _ in range(200):
        a = complex(rng.normal(), rng.normal())
        y = rng.uniform(0.01, 3.0)
        val = f_i(t_scalar(a, y).value, a, y)
        probes = (rng.normal(size=50) + 1j * rng.normal(size=50)) * max(abs(a), np.sqrt(y))
        assert val <= min(f_i(p, a, y) for p in probes) + 1e-8


def test_case_continuity_at_boundary(rng):
    for y in (0.3, 1.0, 2.0):
        root = np.sqrt(lambda_root(y))
        lo = t_scalar(root * (1 - 1e-9), y).value
        hi = t_scalar(root * (1 + 1e-9), y).value
        assert abs(lo - hi) <= 1e-6


def test_far_anchor_contracts_to_circle(rng):
    for _ in range(20):
        y = rng.uniform(0.1, 2.0)
        a = (np.sqrt(lambda_root(y)) + rng.uniform(0.5, 3.0)) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        errs = []
        for _ in range(40):
            errs.append(abs(abs(a) - np.sqrt(y)))
            a = t_scalar(a, y).value
        errs.append(abs(abs(a) - np.sqrt(y)))
        assert errs[-1] <= 1e-8
        ratios = [e1 / e0 for e0, e1 in zip(errs, errs[1:]) if e0 > 1e-12]
        assert all(r < 1.0 for r in ratios)


def test_f_i_rejects_negative_measurement():
    with pytest.raises(ValueError, match="nonnegative"):
        f_i(1.0, 1.0, -0.5)
    with pytest.raises(ValueError, match="nonnegative"):
        t_scalar(1.0, -0.5)


def test_identity_map_componentwise(rng):
    a = random_coeffs(30, rng)
    y = rng.uniform(0.0, 2.0, size=30)
    y[:3] = 0.0
    out = t_identity(a, y)
    ref = np.array([t_scalar(ai, yi).value for ai, yi in zip(a, y)])
    np.testing.assert_allclose(out, ref, atol=1e-14)


def test_identity_map_flags(rng):
    a = random_coeffs(5, rng)
    a[2] = 0.0
    y = np.full(5, 0.8)
    out, flags = t_identity(a, y, return_flags=True)
    assert flags[2] and not flags[0]
    assert out[2] == 0.0


def test_unitary_reduces_to_identity(rng):
    a = random_coeffs(8, rng)
    y = rng.uniform(0.05, 2.0, size=8)
    np.testing.assert_allclose(t_unitary(a, y, np.eye(8, dtype=complex)),
                               t_identity(a, y), atol=1e-13)


def test_unitary_conjugation_identity(rng):
    U = random_unitary(10, rng)
    a = random_coeffs(10, rng)
    y = rng.uniform(0.05, 2.0, size=10)
    ref = np.conj(U.T) @ t_identity(U @ a, y)
    np.testing.assert_allclose(t_unitary(a, y, U), ref, atol=1e-12)


def test_unitary_fixed_point(rng):
    U = random_unitary(8, rng)
    a = random_coeffs(8, rng)
    y = np.abs(U @ a) ** 2
    np.testing.assert_allclose(t_unitary(a, y, U), a, atol=1e-10)


def test_unitary_rejects_nonunitary(rng):
    bad = np.eye(6, dtype=complex)
    bad[0, 0] = 1.5
    with pytest.raises(ValueError, match="deviat"):
        t_unitary(random_coeffs(6, rng), np.ones(6), bad)


def test_picard_converges_linearly(rng):
    U = random_unitary(12, rng)
    a_star = random_coeffs(12, rng)
    y = np.abs(U @ a_star) ** 2
    assert y.min() > 1e-3
    a = a_star + 0.05 * np.linalg.norm(a_star) / np.sqrt(12) * random_coeffs(12, rng)
    iterates = [a]
    for _ in range(20):
        iterates.append(t_unitary(iterates[-1], y, U))
    limit = iterates[-1]
    errs = [np.linalg.norm(it - limit) for it in iterates[:-1]]
    assert errs[-1] <= 1e-8
    ratios = [e1 / e0 for e0, e1 in zip(errs, errs[1:]) if e0 > 1e-12]
    assert ratios and max(ratios) < 1.0


def test_solution_set_distance(rng):
    U = random_unitary(6, rng)
    a = random_coeffs(6, rng)
    y = np.abs(U @ a) ** 2
    assert solution_set_distance(a, y, U) <= 1e-12
    bumped = a + 0.1 * random_coeffs(6, rng)
    assert solution_set_distance(bumped, y, U) > 1e-3
