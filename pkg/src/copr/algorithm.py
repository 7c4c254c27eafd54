"""Outer anchor-refresh loop around the nuclear-norm ADMM solver.

Each sweep minimizes the lifted nuclear norm for the current anchor and
then re-anchors at the negated solution, which makes the lifted objective
agree with the measurement misfit at the solution.  The inner solver is
run with a tolerance proportional to the current misfit so early sweeps
stay cheap.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .admm import AdmmOptions, SolveTrace, nn_admm


@dataclass
class CoprOptions:
    """Outer-loop tunables.

    Attributes
    ----------
    tau : float
        Misfit level that counts as converged.
    max_outer : int
        Sweep budget.
    b0 : ndarray or None
        Initial anchor; zeros when omitted.
    lam : float
        Sparsity weight forwarded to the inner solver.
    admm : AdmmOptions
        Inner-solver settings; the inner tolerance is overridden per
        sweep by the schedule below.
    inner_tol_floor, inner_tol_factor : float
        Inner tolerance for a sweep is
        ``max(inner_tol_floor, inner_tol_factor * misfit)`` evaluated at
        the sweep's starting coefficients.
    """

    tau: float = 1e-6
    max_outer: int = 50
    b0: np.ndarray | None = None
    lam: float = 0.0
    admm: AdmmOptions = field(default_factory=AdmmOptions)
    inner_tol_floor: float = 1e-8
    inner_tol_factor: float = 0.1


@dataclass
class OuterRecord:
    """One summary row per outer sweep."""

    outer: int
    misfit: float
    nuclear_norm: float
    inner_iterations: int
    inner_converged: bool
    ms: float


@dataclass
class CoprResult:
    """Final coefficients plus the outer and last inner traces."""

    a: np.ndarray
    converged: bool
    outer_trace: list
    inner_total: int
    last_inner_trace: SolveTrace | None = None

    def to_dict(self) -> dict:
        return {
            "coefficients": [[float(v.real), float(v.imag)] for v in self.a],
            "converged": bool(self.converged),
            "inner_total": int(self.inner_total),
            "outer_trace": [
                {"outer": r.outer, "misfit": r.misfit,
                 "nuclear_norm": r.nuclear_norm,
                 "inner_iterations": r.inner_iterations,
                 "inner_converged": r.inner_converged, "ms": r.ms}
                for r in self.outer_trace],
        }


def misfit(U, a: np.ndarray, y: np.ndarray) -> float:
    """Measurement misfit ``sum |y - |U a|**2|``."""
    amps = U.apply(a) if hasattr(U, "apply") else np.asarray(U) @ np.asarray(a, dtype=complex)
    return float(np.abs(np.asarray(y, dtype=float) - np.abs(amps) ** 2).sum())


def copr(U, y: np.ndarray, opts: CoprOptions | None = None) -> CoprResult:
    """Phase retrieval by repeated nuclear-norm minimization.

    Parameters
    ----------
    U : PropagationMatrix or ndarray
        Forward map from coefficients to image-plane amplitudes.
    y : ndarray
        Nonnegative intensity measurements.
    opts : CoprOptions

    Returns
    -------
    CoprResult
        ``converged`` is True when the misfit reached ``opts.tau``.  The
        normal-matrix factorization is rebuilt on every sweep because the
        anchor changes.
    """
    opts = opts or CoprOptions()
    y = np.asarray(y, dtype=float)
    n_a = U.n_a if hasattr(U, "n_a") else np.asarray(U).shape[1]
    b = np.zeros(n_a, dtype=complex) if opts.b0 is None else np.asarray(opts.b0, dtype=complex)
    if b.shape != (n_a,):
        raise ValueError(f"initial anchor must have shape ({n_a},), got {b.shape}")

    a = -b
    current_misfit = misfit(U, a, y)
    outer_trace: list[OuterRecord] = []
    inner_total = 0
    converged = False
    last_trace = None

    for sweep in range(1, opts.max_outer + 1):
        tic = time.perf_counter()
        inner_tol = max(opts.inner_tol_floor, opts.inner_tol_factor * current_misfit)
        inner_opts = replace(opts.admm, tol=inner_tol, lam=opts.lam)
        a, last_trace = nn_admm(U, b, y, inner_opts)
        current_misfit = misfit(U, a, y)
        inner_total += last_trace.n_iterations
        nn = last_trace.objective[-1] if last_trace.objective else float("nan")
        outer_trace.append(OuterRecord(
            outer=sweep, misfit=current_misfit, nuclear_norm=nn,
            inner_iterations=last_trace.n_iterations,
            inner_converged=last_trace.converged,
            ms=(time.perf_counter() - tic) * 1e3))
        if current_misfit <= opts.tau:
            converged = True
            break
        b = -a

    return CoprResult(a=a, converged=converged, outer_trace=outer_trace,
                      inner_total=inner_total, last_inner_trace=last_trace)
