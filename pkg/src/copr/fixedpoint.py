"""Closed-form fixed-point operator for the unitary forward map.

When the forward map is unitary the per-measurement nuclear-norm
objective separates, and the minimizer over a single complex amplitude
has a closed form with three regimes controlled by the positive root of
a cubic.  Iterating the resulting operator reproduces the solver's outer
loop without any inner optimization, which makes it a cheap convergence
reference: its fixed points are exactly the measurement-consistent
amplitude vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def f_i(x: complex, a_i: complex, y_i: float) -> float:
    """Squared per-measurement nuclear norm as a function of the amplitude.

    With ``r = y - 2 Re(x conj(a)) + |a|**2`` and ``s = |x - a|`` this is
    ``r**2 + 2 s**2 + 1 + 2 |r - s**2|``.
    """
    if y_i < 0:
        raise ValueError(f"measurement must be nonnegative, got {y_i}")
    r = y_i - 2.0 * (x * np.conj(a_i)).real + abs(a_i) ** 2
    s2 = abs(x - a_i) ** 2
    return float(r * r + 2.0 * s2 + 1.0 + 2.0 * abs(r - s2))


def _cubic(t: float, y: float) -> float:
    return t ** 3 + 2.0 * (1.0 - y) * t * t + (y * y - 6.0 * y + 1.0) * t - 4.0 * y


def _cubic_deriv(t: float, y: float) -> float:
    return 3.0 * t * t + 4.0 * (1.0 - y) * t + (y * y - 6.0 * y + 1.0)


def lambda_root(y: float) -> float:
    """Unique positive root of ``t^3 + 2(1-y)t^2 + (y^2-6y+1)t - 4y``.

    The root separates the two single-point regimes of the scalar step.
    For ``y <= 1`` it lies in ``(2.25 y, 4 y)``; the lower end of the
    bracket is relaxed to zero when that bound does not hold.  Solved by
    a bracketed Newton iteration with bisection fallback.
    """
    if y <= 0:
        raise ValueError(f"the cubic has a positive root only for y > 0, got {y}")
    lo = 2.25 * y
    if _cubic(lo, y) >= 0.0:
        lo = 0.0
    hi = 4.0 * y
    # g(0) = -4y < 0 and g(4y) = y (36 y^2 + 8 y) > 0, so the bracket is valid
    t = 0.5 * (lo + hi)
    for _ in range(100):
        g = _cubic(t, y)
        if g == 0.0:
            return t
        if g > 0.0:
            hi = t
        else:
            lo = t
        dg = _cubic_deriv(t, y)
        t_new = t - g / dg if dg != 0.0 else 0.5 * (lo + hi)
        if not lo < t_new < hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-12 * max(t, 1e-300):
            return t_new
        t = t_new
    return t


@dataclass(frozen=True)
class ScalarStep:
    """Result of the scalar fixed-point map.

    ``kind`` is ``"point"`` for the single-valued regimes and ``"disk"``
    when the whole disk of radius ``radius`` minimizes the objective, in
    which case ``value`` holds the deterministic selection (the center).
    """

    kind: str
    value: complex
    radius: float = 0.0


def t_scalar(a_i: complex, y_i: float) -> ScalarStep:
    """Minimizer of :func:`f_i` over the complex amplitude.

    Three regimes for ``y > 0``: a flat disk of radius ``sqrt(y)`` when
    the anchor is zero, a jump onto the circle of radius ``sqrt(y)``
    while ``|a| <= sqrt(lambda_root(y))``, and a strict shrink toward it
    beyond.  For ``y = 0`` the map halves the anchor.  The two point
    formulas agree at the regime boundary.
    """
    if y_i < 0:
        raise ValueError(f"measurement must be nonnegative, got {y_i}")
    a_i = complex(a_i)
    if y_i == 0.0:
        return ScalarStep(kind="point", value=0.5 * a_i)
    mag = abs(a_i)
    if mag == 0.0:
        return ScalarStep(kind="disk", value=0.0 + 0.0j, radius=math.sqrt(y_i))
    lam = lambda_root(y_i)
    if mag <= math.sqrt(lam):
        return ScalarStep(kind="point", value=(math.sqrt(y_i) / mag) * a_i)
    scale = (y_i + mag * mag + 1.0) / (2.0 * (mag * mag + 1.0))
    return ScalarStep(kind="point", value=scale * a_i)


def t_identity(a: np.ndarray, y: np.ndarray, return_flags: bool = False):
    """Componentwise scalar step for an identity forward map.

    Returns the vector of selections; with ``return_flags`` also a
    boolean array marking components where the step was set-valued (the
    disk regime) and the center was selected.
    """
    a = np.asarray(a, dtype=complex)
    y = np.asarray(y, dtype=float)
    if a.shape != y.shape:
        raise ValueError(f"amplitude and measurement shapes differ: {a.shape} vs {y.shape}")
    out = np.empty_like(a)
    flags = np.zeros(a.shape, dtype=bool)
    for i in range(a.shape[0]):
        step = t_scalar(a[i], y[i])
        out[i] = step.value
        flags[i] = step.kind == "disk"
    if return_flags:
        return out, flags
    return out


def _unitary_deviation(U, n: int) -> float:
    """Measured deviation of ``U^H U`` from the identity."""
    if hasattr(U, "to_dense") and n <= 4096:
        dense = U.to_dense()
        gram = dense.conj().T @ dense
        return float(np.linalg.norm(gram - np.eye(n)))
    # large factored operators: probe with a few deterministic vectors
    rng = np.random.default_rng(0)
    dev = 0.0
    for _ in range(4):
        v = rng.normal(size=n) + 1j * rng.normal(size=n)
        v /= np.linalg.norm(v)
        w = U.adjoint(U.apply(v)) if hasattr(U, "apply") else U.conj().T @ (U @ v)
        dev = max(dev, float(np.linalg.norm(w - v)))
    return dev


def t_unitary(a: np.ndarray, y: np.ndarray, U) -> np.ndarray:
    """One fixed-point sweep through a unitary forward map.

    Applies the componentwise step in the measurement domain and maps
    back: ``U^H T(U a)``.

    Raises
    ------
    ValueError
        If the map is not square or not unitary to 1e-10; the measured
        deviation is included in the message.
    """
    n_y = U.n_y if hasattr(U, "n_y") else np.asarray(U).shape[0]
    n_a = U.n_a if hasattr(U, "n_a") else np.asarray(U).shape[1]
    if n_y != n_a:
        raise ValueError(f"forward map is {n_y} x {n_a}, cannot be unitary")
    dev = _unitary_deviation(U, n_a)
    if dev > 1e-10:
        raise ValueError(f"forward map is not unitary: deviation {dev:.3e} exceeds 1e-10")
    a = np.asarray(a, dtype=complex)
    z = U.apply(a) if hasattr(U, "apply") else np.asarray(U) @ a
    z_new = t_identity(z, y)
    if hasattr(U, "adjoint"):
        return U.adjoint(z_new)
    return np.asarray(U).conj().T @ z_new


def solution_set_distance(a: np.ndarray, y: np.ndarray, U) -> float:
    """Distance from ``a`` to the measurement-consistent set, unitary maps.

    For unitary ``U`` the set is the preimage of a product of circles,
    so the distance is ``|| |U a| - sqrt(y) ||``.
    """
    z = U.apply(a) if hasattr(U, "apply") else np.asarray(U) @ np.asarray(a, dtype=complex)
    return float(np.linalg.norm(np.abs(z) - np.sqrt(np.asarray(y, dtype=float))))
