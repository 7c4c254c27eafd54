"""Optical forward models: grids, diversities, bases, propagation, mirror."""

import numpy as np
import pytest

from copr.forward import (add_noise, build_modal_U, build_zonal_U, defocus_phase,
                          fft2c, ifft2c, make_basis, make_defocus_diversities,
                          make_mirror, make_pupil_grid, mirror_phase,
                          simulate_measurements)

from conftest import random_coeffs


def test_grid_mask_geometry():
    grid = make_pupil_grid(32, 0.4)
    assert grid.mask.shape == (32, 32)
    assert grid.n_pixels == 32 * 32
    # rho is normalized to 1 at the aperture edge; the disk is centered
    # on the sample used by the centered DFT convention
    assert grid.rho[grid.mask].max() <= 1.0 + 1e-12
    assert np.hypot(grid.x, grid.y)[grid.mask].max() <= 0.4 + 1e-12
    assert grid.mask[16, 16]
    assert not grid.mask[0, 0]
    assert 0 < grid.mask.sum() < 32 * 32


def test_grid_validation():
    with pytest.raises(ValueError, match="radius"):
        make_pupil_grid(16, 1.5)
    with pytest.raises(ValueError, match="positive"):
        make_pupil_grid(0, 0.4)


def test_fft2c_is_unitary(rng):
    x = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    assert np.linalg.norm(fft2c(x)) == pytest.approx(np.linalg.norm(x), rel=1e-12)
    np.testing.assert_allclose(ifft2c(fft2c(x)), x, atol=1e-12)


def test_fft2c_centering(rng):
    # a centered impulse spreads to a flat modulus, not a checkerboard ramp
    x = np.zeros((8, 8), dtype=complex)
    x[4, 4] = 1.0
    out = fft2c(x)
    np.testing.assert_allclose(np.abs(out), np.full((8, 8), 1.0 / 8.0), atol=1e-12)


def test_defocus_phase_profile():
    grid = make_pupil_grid(32, 0.4)
    phi = defocus_phase(grid, 1.0)
    # rotationally symmetric and quadratic in the radius on the aperture
    r2 = grid.rho[grid.mask] ** 2
    coeffs = np.polyfit(r2, phi[grid.mask], 1)
    fit = np.polyval(coeffs, r2)
    assert np.abs(fit - phi[grid.mask]).max() <= 1e-10
    assert abs(coeffs[0]) > 0
    np.testing.assert_allclose(defocus_phase(grid, 2.0), 2.0 * phi, atol=1e-12)


def test_diversity_set(rng):
    grid = make_pupil_grid(16, 0.4)
    divs = make_defocus_diversities(grid, [-0.5, 0.0, 0.5])
    assert divs.n_d == 3
    assert divs.phases.shape == (3, 16, 16)
    np.testing.assert_allclose(divs.phases[1], 0.0, atol=1e-14)


def test_zonal_U_is_unitary_per_diversity(rng):
    grid = make_pupil_grid(8, 0.4)
    divs = make_defocus_diversities(grid, [-0.3, 0.4])
    U = build_zonal_U(grid, divs)
    assert U.form == "zonal"
    assert U.n_a == 64 and U.n_y == 128
    dense = U.to_dense()
    for d in range(2):
        blk = dense[d * 64:(d + 1) * 64]
        np.testing.assert_allclose(np.conj(blk.T) @ blk, np.eye(64), atol=1e-10)


def test_zonal_apply_matches_dense(rng):
    grid = make_pupil_grid(8, 0.4)
    U = build_zonal_U(grid, make_defocus_diversities(grid, [0.2, -0.7]))
    a = random_coeffs(U.n_a, rng)
    np.testing.assert_allclose(U.apply(a), U.to_dense() @ a, atol=1e-11)


def test_zonal_adjoint_consistency(rng):
    grid = make_pupil_grid(8, 0.4)
    U = build_zonal_U(grid, make_defocus_diversities(grid, [0.2, -0.7]))
    a = random_coeffs(U.n_a, rng)
    v = random_coeffs(U.n_y, rng)
    lhs = np.vdot(v, U.apply(a))
    rhs = np.vdot(U.adjoint(v), a)
    assert lhs == pytest.approx(rhs, rel=1e-11)


def test_basis_is_masked_and_sized(rng):
    grid = make_pupil_grid(16, 0.4)
    basis = make_basis(grid, 4)
    assert basis.n_basis == 16
    assert basis.cube.shape == (16, 16, 16)
    off = basis.cube[:, ~grid.mask]
    assert np.abs(off).max() == 0.0
    # every function keeps some energy on the aperture
    assert (np.abs(basis.cube).reshape(16, -1).max(axis=1) > 0).all()


def test_modal_U_matches_direct_transform(rng):
    grid = make_pupil_grid(16, 0.4)
    divs = make_defocus_diversities(grid, [0.3])
    basis = make_basis(grid, 3)
    U = build_modal_U(basis, divs)
    assert U.form == "modal"
    a = random_coeffs(U.n_a, rng)
    # propagate the summed field directly through the centered transform
    field = np.tensordot(a, basis.cube, axes=(0, 0))
    ref = fft2c(field * np.exp(1j * divs.phases[0])).ravel()
    np.testing.assert_allclose(U.apply(a), ref, atol=1e-10)


def test_modal_U_crop(rng):
    grid = make_pupil_grid(16, 0.4)
    divs = make_defocus_diversities(grid, [0.1, 0.6])
    basis = make_basis(grid, 3)
    U = build_modal_U(basis, divs, crop=(4, 4))
    assert U.n_y == 2 * 16
    a = random_coeffs(U.n_a, rng)
    full = build_modal_U(basis, divs)
    fields = full.apply(a).reshape(2, 16, 16)
    cropped = fields[:, 6:10, 6:10].reshape(-1)
    np.testing.assert_allclose(U.apply(a), cropped, atol=1e-12)


def test_simulate_measurements_normalized(rng):
    grid = make_pupil_grid(8, 0.4)
    U = build_zonal_U(grid, make_defocus_diversities(grid, [0.2]))
    a = random_coeffs(U.n_a, rng)
    meas = simulate_measurements(U, a)
    assert meas.y.max() == pytest.approx(1.0)
    assert meas.y.min() >= 0.0
    np.testing.assert_allclose(meas.y * meas.scale, np.abs(U.apply(a)) ** 2,
                               atol=1e-12)
    assert meas.meta["form"] == "zonal"


def test_simulate_rejects_zero_field(rng):
    grid = make_pupil_grid(8, 0.4)
    U = build_zonal_U(grid, make_defocus_diversities(grid, [0.2]))
    with pytest.raises(ValueError, match="degenerate"):
        simulate_measurements(U, np.zeros(U.n_a, dtype=complex))


def test_add_noise_clips_and_records(rng):
    grid = make_pupil_grid(8, 0.4)
    U = build_zonal_U(grid, make_defocus_diversities(grid, [0.2]))
    meas = simulate_measurements(U, random_coeffs(U.n_a, rng))
    noisy = add_noise(meas, 0.5, np.random.default_rng(1))
    assert noisy.y.min() >= 0.0
    assert noisy.meta["sigma"] == 0.5
    assert not np.array_equal(noisy.y, meas.y)
    # sigma zero copies the data
    same = add_noise(meas, 0.0, np.random.default_rng(1))
    np.testing.assert_array_equal(same.y, meas.y)


def test_add_noise_validates_arguments(rng):
    grid = make_pupil_grid(8, 0.4)
    U = build_zonal_U(grid, make_defocus_diversities(grid, [0.2]))
    meas = simulate_measurements(U, random_coeffs(U.n_a, rng))
    with pytest.raises(ValueError, match="sigma"):
        add_noise(meas, -0.1, np.random.default_rng(1))
    with pytest.raises(ValueError, match="Generator"):
        add_noise(meas, 0.1, np.random.RandomState(1))


def test_mirror_influence_and_linearity(rng):
    grid = make_pupil_grid(32, 0.4)
    mirror = make_mirror(grid, 12)
    assert mirror.n_u == 12
    u = rng.uniform(0, 1, size=12)
    phi = mirror_phase(mirror, u)
    assert phi.shape == (32, 32)
    np.testing.assert_allclose(mirror_phase(mirror, 2 * u), 2 * phi, atol=1e-12)
    # influence functions are nonnegative bumps covering the aperture
    assert mirror.influence.min() >= 0.0
    assert mirror.influence.shape == (32 * 32, 12)
    coverage = mirror.influence.sum(axis=1).reshape(32, 32)
    assert coverage[grid.mask].min() > 0.0


def test_mirror_rejects_bad_commands(rng):
    grid = make_pupil_grid(16, 0.4)
    mirror = make_mirror(grid, 6)
    with pytest.raises(ValueError):
        mirror_phase(mirror, np.ones(5))
