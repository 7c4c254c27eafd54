"""Quality metrics for reconstructed coefficients and phase maps."""

from __future__ import annotations

import math

import numpy as np


def piston_align(a_hat: np.ndarray, a_star: np.ndarray):
    """Optimal global-phase alignment of an estimate against a reference.

    Returns ``(c, error)`` where ``c = exp(1j * angle(<a_hat, a_star>))``
    maximizes the overlap and ``error = ||c * a_hat - a_star||**2`` is the
    squared residual after alignment.  A global phase is unobservable in
    intensity data, so comparisons are only meaningful modulo ``c``.

    Raises
    ------
    ValueError
        When the inner product vanishes (orthogonal or zero vectors), in
        which case no alignment phase is defined.
    """
    a_hat = np.asarray(a_hat, dtype=complex)
    a_star = np.asarray(a_star, dtype=complex)
    if a_hat.shape != a_star.shape:
        raise ValueError(f"shape mismatch: {a_hat.shape} vs {a_star.shape}")
    inner = np.vdot(a_hat, a_star)
    if inner == 0:
        raise ValueError("alignment phase undefined: estimate and reference "
                         "are orthogonal or zero")
    c = inner / abs(inner)
    error = float(np.linalg.norm(c * a_hat - a_star) ** 2)
    return c, error


def snr_db(y_clean: np.ndarray, y_noisy: np.ndarray) -> float:
    """Noise-to-signal power ratio in decibels.

    Computed as ``10 log10(||y_noisy - y_clean||^2 / ||y_clean||^2)``.
    Note the orientation: lower (more negative) values mean cleaner data,
    and identical inputs give ``-inf``.
    """
    y_clean = np.asarray(y_clean, dtype=float)
    y_noisy = np.asarray(y_noisy, dtype=float)
    if y_clean.shape != y_noisy.shape:
        raise ValueError(f"shape mismatch: {y_clean.shape} vs {y_noisy.shape}")
    signal = float(np.linalg.norm(y_clean) ** 2)
    if signal == 0:
        raise ValueError("reference measurements are identically zero")
    noise = float(np.linalg.norm(y_noisy - y_clean) ** 2)
    if noise == 0:
        return float("-inf")
    return 10.0 * math.log10(noise / signal)


def strehl(phi_true: np.ndarray, phi_hat: np.ndarray, mask: np.ndarray) -> float:
    """Extended Marechal Strehl estimate from the residual phase.

    The residual ``phi_true - phi_hat`` is restricted to the aperture,
    its mean (piston) removed, and the ratio approximated as
    ``exp(-rms**2)``, clipped into [0, 1].
    """
    phi_true = np.asarray(phi_true, dtype=float)
    phi_hat = np.asarray(phi_hat, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if not (phi_true.shape == phi_hat.shape == mask.shape):
        raise ValueError("phase maps and mask must share one shape")
    if not mask.any():
        raise ValueError("empty aperture mask")
    residual = (phi_true - phi_hat)[mask]
    residual = residual - residual.mean()
    delta2 = float(np.mean(residual ** 2))
    return float(np.clip(math.exp(-delta2), 0.0, 1.0))


def phase_from_coeffs(basis, a: np.ndarray) -> np.ndarray:
    """Aperture phase map of a modal field, zero outside the mask.

    Raises
    ------
    ValueError
        If the synthesized field vanishes identically on the aperture,
        where no phase is defined.
    """
    a = np.asarray(a, dtype=complex)
    if a.shape != (basis.n_basis,):
        raise ValueError(f"coefficients must have shape ({basis.n_basis},), got {a.shape}")
    field = np.tensordot(a, basis.cube.astype(complex), axes=(0, 0))
    mask = basis.grid.mask
    if not np.abs(field[mask]).max() > 0:
        raise ValueError("degenerate field: zero everywhere on the aperture")
    phase = np.zeros(field.shape)
    phase[mask] = np.angle(field[mask])
    return phase
