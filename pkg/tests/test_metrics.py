"""Alignment, SNR, and Strehl metrics."""

import numpy as np
import pytest

from copr.metrics import phase_from_coeffs, piston_align, snr_db, strehl
from copr.forward import make_basis, make_pupil_grid

from conftest import random_coeffs


def test_pure_phase_offset_aligns_exactly(rng):
    a_star = random_coeffs(16, rng)
    for theta in (0.3, 1.7, -2.9):
        c, err = piston_align(np.exp(1j * theta) * a_star, a_star)
        assert err <= 1e-12
        assert abs(c - np.exp(-1j * theta)) <= 1e-8


def test_alignment_matches_qr_footnote(rng):
    # alignment angle from the QR of [a_hat a_star]: angle(R12 / R11)
    for _ in range(30):
        a_hat = random_coeffs(12, rng)
        a_star = random_coeffs(12, rng)
        c, _ = piston_align(a_hat, a_star)
        _, R = np.linalg.qr(np.column_stack([a_hat, a_star]))
        assert abs(c - np.exp(1j * np.angle(R[0, 1] / R[0, 0]))) <= 1e-10


def test_alignment_is_global_phase_invariant(rng):
    a_hat = random_coeffs(10, rng)
    a_star = random_coeffs(10, rng)
    _, err0 = piston_align(a_hat, a_star)
    _, err1 = piston_align(np.exp(0.8j) * a_hat, a_star)
    assert abs(err0 - err1) <= 1e-12


def test_alignment_error_is_squared_gap(rng):
    a_star = random_coeffs(8, rng)
    a_hat = a_star + 0.01 * random_coeffs(8, rng)
    c, err = piston_align(a_hat, a_star)
    assert err == pytest.approx(np.linalg.norm(c * a_hat - a_star) ** 2, rel=1e-10)
    # the reported phase beats any probed one
    thetas = np.linspace(0, 2 * np.pi, 720)
    probed = min(np.linalg.norm(np.exp(1j * t) * a_hat - a_star) ** 2 for t in thetas)
    assert err <= probed + 1e-12


def test_alignment_rejects_zero_estimate(rng):
    with pytest.raises(ValueError):
        piston_align(np.zeros(4, dtype=complex), random_coeffs(4, rng))


def test_snr_formula(rng):
    # noise-to-signal orientation: cleaner data gives more negative values
    y = rng.uniform(0.1, 1.0, size=100)
    noise = 0.01 * rng.normal(size=100)
    got = snr_db(y, y + noise)
    ref = 10.0 * np.log10(np.sum(noise ** 2) / np.sum(y ** 2))
    assert got == pytest.approx(ref, abs=1e-12)
    assert got < 0


def test_snr_clean_is_minus_infinite(rng):
    y = rng.uniform(0.1, 1.0, size=10)
    assert snr_db(y, y.copy()) == float("-inf")


def test_snr_shape_mismatch(rng):
    with pytest.raises(ValueError, match="shape"):
        snr_db(np.ones(3), np.ones(4))


def test_strehl_exact_match():
    grid = make_pupil_grid(16, 0.45)
    phi = np.zeros((16, 16))
    phi[grid.mask] = np.linspace(-0.4, 0.4, grid.mask.sum())
    assert strehl(phi, phi, grid.mask) == 1.0


def test_strehl_removes_piston():
    grid = make_pupil_grid(16, 0.45)
    phi = np.zeros((16, 16))
    phi[grid.mask] = np.linspace(-0.4, 0.4, grid.mask.sum())
    assert strehl(phi, phi + 0.7, grid.mask) == pytest.approx(1.0, abs=1e-12)


def test_strehl_known_rms():
    # de-pistoned RMS residual of 0.1 rad gives exp(-0.01)
    grid = make_pupil_grid(16, 0.45)
    n = grid.mask.sum()
    resid = np.zeros((16, 16))
    raw = np.linspace(-1.0, 1.0, n)
    raw -= raw.mean()
    raw *= 0.1 / np.sqrt((raw ** 2).mean())
    resid[grid.mask] = raw
    phi = np.zeros((16, 16))
    s = strehl(phi + resid, phi, grid.mask)
    assert s == pytest.approx(np.exp(-0.01), abs=1e-9)


def test_strehl_bounded(rng):
    grid = make_pupil_grid(12, 0.45)
    for _ in range(10):
        a = rng.normal(size=(12, 12)) * 2.0
        b = rng.normal(size=(12, 12)) * 2.0
        s = strehl(a, b, grid.mask)
        assert 0.0 <= s <= 1.0


def test_strehl_empty_mask(rng):
    with pytest.raises(ValueError):
        strehl(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4), dtype=bool))


def test_phase_from_coeffs_shape_and_mask(rng):
    grid = make_pupil_grid(16, 0.4)
    basis = make_basis(grid, 3)
    a = random_coeffs(basis.n_basis, rng)
    phase = phase_from_coeffs(basis, a)
    assert phase.shape == (16, 16)
    assert np.all(phase[~grid.mask] == 0.0)


def test_phase_from_coeffs_degenerate_field(rng):
    grid = make_pupil_grid(16, 0.4)
    basis = make_basis(grid, 3)
    with pytest.raises(ValueError):
        phase_from_coeffs(basis, np.zeros(basis.n_basis, dtype=complex))
