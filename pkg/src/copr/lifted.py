"""Lifted block form of the measurement-fit certificate.

For coefficients ``a``, anchor ``b`` and data ``y`` the lifted matrix is
(after a symmetric permutation) block diagonal with one 2x2 block per
measurement::

    block_i = [[c_i, t_i],
               [conj(t_i), 1]]

where, with ``alpha = U a`` and ``beta = U b``::

    c_i = y_i + 2 Re(conj(alpha_i) beta_i) + |beta_i|**2   (real)
    t_i = conj(alpha_i + beta_i)

The block determinant ``c_i - |t_i|**2`` collapses to ``y_i - |alpha_i|**2``
for every ``b``, so the matrix drops rank exactly on measurement-consistent
coefficients; its nuclear norm is the convex surrogate minimized by the
solver.  Everything here is vectorized over blocks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BlockLifted:
    """Structured lifted matrix: per-block top-left ``c`` and off-diagonal ``t``.

    The lower-left entry is always ``conj(t)`` and the lower-right entry 1,
    so only two arrays are stored.
    """

    c: np.ndarray  # (n_y,) float
    t: np.ndarray  # (n_y,) complex

    @property
    def n_y(self) -> int:
        return self.c.shape[0]

    @property
    def blocks(self) -> np.ndarray:
        """Dense (n_y, 2, 2) complex stack of the blocks."""
        n = self.n_y
        out = np.empty((n, 2, 2), dtype=complex)
        out[:, 0, 0] = self.c
        out[:, 0, 1] = self.t
        out[:, 1, 0] = np.conj(self.t)
        out[:, 1, 1] = 1.0
        return out


def build_M(U, a: np.ndarray, b: np.ndarray, y: np.ndarray) -> BlockLifted:
    """Assemble the lifted blocks for coefficients ``a`` against anchor ``b``.

    Parameters
    ----------
    U : PropagationMatrix or ndarray
        Forward map; anything with ``apply`` or a dense (n_y, n_a) array.
    a, b : ndarray
        Complex coefficient vectors of length n_a.
    y : ndarray
        Nonnegative measurements of length n_y.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("measurements must be nonnegative")
    alpha = U.apply(a) if hasattr(U, "apply") else np.asarray(U) @ np.asarray(a, dtype=complex)
    beta = U.apply(b) if hasattr(U, "apply") else np.asarray(U) @ np.asarray(b, dtype=complex)
    if alpha.shape != y.shape:
        raise ValueError(f"measurement length {y.shape[0]} does not match "
                         f"forward map output {alpha.shape[0]}")
    # top-left entry is real by construction; assembled directly in real arithmetic
    c = y + 2.0 * (np.conj(alpha) * beta).real + np.abs(beta) ** 2
    t = np.conj(alpha + beta)
    return BlockLifted(c=c, t=t)


def rank_residuals(Mb: BlockLifted) -> np.ndarray:
    """Per-block determinant magnitude ``|c - |t|**2|``.

    Zero exactly when the block is rank one, i.e. when the corresponding
    measurement is fit; independent of the anchor ``b``.
    """
    return np.abs(Mb.c - np.abs(Mb.t) ** 2)


def nuclear_norm(Mb: BlockLifted) -> float:
    """Nuclear norm of the lifted matrix via the per-block closed form.

    Each block is Hermitian with eigenvalue sum ``c + 1`` and product
    ``c - |t|**2``, giving a per-block nuclear norm of
    ``sqrt(c**2 + 2|t|**2 + 1 + 2|c - |t|**2|)``.
    """
    tt = np.abs(Mb.t) ** 2
    per_block = np.sqrt(Mb.c ** 2 + 2.0 * tt + 1.0 + 2.0 * np.abs(Mb.c - tt))
    return float(per_block.sum())


def to_dense(Mb: BlockLifted) -> np.ndarray:
    """Dense (2 n_y, 2 n_y) matrix with the 2x2 blocks on the diagonal."""
    n = Mb.n_y
    out = np.zeros((2 * n, 2 * n), dtype=complex)
    blocks = Mb.blocks
    for i in range(n):
        out[2 * i:2 * i + 2, 2 * i:2 * i + 2] = blocks[i]
    return out


def dump_blocks_csv(Mb: BlockLifted, path) -> None:
    """Debug dump, one row per block: index, c, Re t, Im t."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "c", "re_t", "im_t"])
        for i in range(Mb.n_y):
            writer.writerow([i, repr(float(Mb.c[i])),
                             repr(float(Mb.t[i].real)), repr(float(Mb.t[i].imag))])


# ---------------------------------------------------------------------------
# closed-form 2x2 SVD and singular value thresholding, vectorized over blocks

_REL_EPS = 1e-14


def svd2x2_stack(blocks: np.ndarray):
    """SVD of a stack of general complex 2x2 matrices.

    Returns ``(u, s, vh)`` with ``u @ diag(s) @ vh`` reconstructing each
    block, singular values nonincreasing, and a deterministic phase
    convention: each row of ``vh`` is scaled so its largest-magnitude
    entry is real positive.  Zero blocks get identity factors.

    Singular values come from the eigenvalues of the 2x2 Gram matrix;
    the left vectors are rebuilt from the right ones, which keeps the
    reconstruction exact even for nearly rank-one blocks.
    """
    B = np.ascontiguousarray(blocks, dtype=complex)
    if B.ndim != 3 or B.shape[1:] != (2, 2):
        raise ValueError(f"expected a (n, 2, 2) stack, got shape {B.shape}")
    n = B.shape[0]

    b00, b01 = B[:, 0, 0], B[:, 0, 1]
    b10, b11 = B[:, 1, 0], B[:, 1, 1]
    g11 = (np.abs(b00) ** 2 + np.abs(b10) ** 2).real
    g22 = (np.abs(b01) ** 2 + np.abs(b11) ** 2).real
    g12 = np.conj(b00) * b01 + np.conj(b10) * b11
    mean = 0.5 * (g11 + g22)
    diff = 0.5 * (g11 - g22)
    rad = np.sqrt(diff * diff + np.abs(g12) ** 2)

    # right singular vectors, pivoting on the dominant diagonal entry
    v1 = np.empty((n, 2), dtype=complex)
    use_first = diff >= 0
    v1[:, 0] = np.where(use_first, rad + diff, g12)
    v1[:, 1] = np.where(use_first, np.conj(g12), rad - diff)
    # (near-)repeated singular values: eigenbasis is arbitrary, fix identity
    repeated = rad <= _REL_EPS * np.maximum(mean, 1e-300)
    v1[repeated, 0] = 1.0
    v1[repeated, 1] = 0.0
    v1 /= np.linalg.norm(v1, axis=1)[:, None]
    v2 = np.column_stack([-np.conj(v1[:, 1]), np.conj(v1[:, 0])])

    w1 = np.einsum("nij,nj->ni", B, v1)
    s1 = np.linalg.norm(w1, axis=1)
    scale = np.sqrt(g11 + g22)
    ok1 = s1 > _REL_EPS * np.maximum(scale, 1e-300)
    u1 = np.where(ok1[:, None], w1 / np.where(ok1, s1, 1.0)[:, None],
                  np.array([1.0, 0.0], dtype=complex))

    w2 = np.einsum("nij,nj->ni", B, v2)
    w2 -= (np.conj(u1) * w2).sum(axis=1)[:, None] * u1
    s2 = np.linalg.norm(w2, axis=1)
    ok2 = s2 > _REL_EPS * np.maximum(scale, 1e-300)
    u2_fallback = np.column_stack([-np.conj(u1[:, 1]), np.conj(u1[:, 0])])
    u2 = np.where(ok2[:, None], w2 / np.where(ok2, s2, 1.0)[:, None], u2_fallback)
    s2 = np.where(ok2, s2, 0.0)
    s1 = np.where(ok1, s1, 0.0)

    # numerical ties can come back fractionally out of order; enforce s1 >= s2
    swap = s2 > s1
    if swap.any():
        s1[swap], s2[swap] = s2[swap], s1[swap].copy()
        u1[swap], u2[swap] = u2[swap], u1[swap].copy()
        v1[swap], v2[swap] = v2[swap], v1[swap].copy()

    u = np.stack([u1, u2], axis=2)          # columns are left vectors
    v = np.stack([v1, v2], axis=2)
    s = np.stack([s1, s2], axis=1)

    # zero blocks: identity factors by convention
    zero = scale == 0.0
    if zero.any():
        u[zero] = np.eye(2)
        v[zero] = np.eye(2)
        s[zero] = 0.0

    # phase convention: largest-magnitude entry of each row of vh real positive
    for k in (0, 1):
        vk = v[:, :, k]
        pick_second = np.abs(vk[:, 1]) > np.abs(vk[:, 0])
        lead = np.where(pick_second, vk[:, 1], vk[:, 0])
        mag = np.abs(lead)
        phase = np.where(mag > 0, lead / np.where(mag > 0, mag, 1.0), 1.0)
        v[:, :, k] *= np.conj(phase)[:, None]
        u[:, :, k] *= np.conj(phase)[:, None]

    vh = np.conj(np.swapaxes(v, 1, 2))
    return u, s, vh


def svd2x2(block: np.ndarray):
    """SVD of a single 2x2 complex matrix; see :func:`svd2x2_stack`."""
    u, s, vh = svd2x2_stack(np.asarray(block, dtype=complex)[None, :, :])
    return u[0], s[0], vh[0]


def svt_stack(blocks: np.ndarray, threshold: float) -> np.ndarray:
    """Singular value thresholding applied blockwise.

    Shrinks each singular value by ``threshold`` (floored at zero), the
    proximal map of the nuclear norm.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    u, s, vh = svd2x2_stack(blocks)
    s = np.maximum(s - threshold, 0.0)
    return np.einsum("nik,nk,nkj->nij", u, s, vh)


def svt(block: np.ndarray, threshold: float) -> np.ndarray:
    """Singular value thresholding of a single 2x2 block."""
    return svt_stack(np.asarray(block, dtype=complex)[None, :, :], threshold)[0]


def stack_nuclear_norm(blocks: np.ndarray) -> float:
    """Nuclear norm of a general block stack (used for diagnostics)."""
    _, s, _ = svd2x2_stack(blocks)
    return float(s.sum())
