"""Classical alternating-projection baseline.

Alternates between the set of amplitude vectors with the measured moduli
and the range of the forward map.  Serves as the comparison point for
the convex solver in the experiment harness.
"""

from __future__ import annotations

import time

import numpy as np
import scipy.linalg

from .admm import SolveTrace
from .errors import RankDeficiencyError


def _range_projector(U):
    """Least-squares projector onto the coefficient space.

    Returns a callable mapping image-plane amplitudes to the coefficients
    of the closest field in the range of ``U``.
    """
    if hasattr(U, "form") and U.form == "zonal":
        # each diversity block is unitary, so U^H U = n_d * I
        n_d = U.n_y // U.n_a
        return lambda q: U.adjoint(q) / n_d
    dense = U.to_dense() if hasattr(U, "to_dense") else np.asarray(U, dtype=complex)
    gram = dense.conj().T @ dense
    try:
        chol = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError:
        w = np.linalg.eigvalsh(gram)
        cond = np.inf if w.min().real <= 0 else float(w.max().real / w.min().real)
        raise RankDeficiencyError(
            "forward map has linearly dependent columns; range projection "
            "is not defined", condition=cond)
    return lambda q: scipy.linalg.cho_solve(chol, dense.conj().T @ q, check_finite=False)


def alternating_projections(U, y: np.ndarray, a0: np.ndarray | None = None,
                            iters: int = 200, tol: float = 0.0):
    """Phase retrieval by alternating magnitude and range projections.

    Parameters
    ----------
    U : PropagationMatrix or ndarray
    y : ndarray
        Nonnegative measurements.
    a0 : ndarray, optional
        Starting coefficients; when omitted the zero-phase amplitudes
        ``sqrt(y)`` are range-projected to get the first iterate.
    iters : int
        Iteration budget.
    tol : float
        Early stop when the misfit improves by less than this; 0 runs
        the full budget.

    Returns
    -------
    (a, trace)
        Trace rows carry the measurement misfit in the objective column;
        the residual and penalty columns stay empty (not defined here).
    """
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("measurements must be nonnegative")
    n_y = U.n_y if hasattr(U, "n_y") else np.asarray(U).shape[0]
    if y.shape != (n_y,):
        raise ValueError(f"measurements must have shape ({n_y},), got {y.shape}")
    project = _range_projector(U)
    root_y = np.sqrt(y)

    def apply(v):
        return U.apply(v) if hasattr(U, "apply") else np.asarray(U) @ v

    if a0 is None:
        a = project(root_y.astype(complex))
    else:
        a = np.asarray(a0, dtype=complex)
    trace = SolveTrace(label="alternating_projections")
    prev_misfit = None
    for k in range(1, iters + 1):
        tic = time.perf_counter()
        p = apply(a)
        mag = np.abs(p)
        # zero amplitudes carry no phase information: fall back to zero phase
        phase = np.where(mag > 0, p / np.where(mag > 0, mag, 1.0), 1.0 + 0.0j)
        q = root_y * phase
        a = project(q)
        p_fit = apply(a)
        fit = float(np.abs(y - np.abs(p_fit) ** 2).sum())
        trace.append(k, fit, float("nan"), float("nan"), float("nan"),
                     (time.perf_counter() - tic) * 1e3)
        if prev_misfit is not None and abs(prev_misfit - fit) <= tol and tol > 0:
            trace.converged = True
            break
        prev_misfit = fit
    return a, trace
