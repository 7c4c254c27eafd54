"""Optical forward models for phase-diverse intensity measurements.

A pupil-plane field is propagated to one focal image per diversity phase;
the recorded data are pixel intensities.  Two parameterizations of the
pupil field are supported:

* zonal: one complex unknown per pupil pixel, so each diversity block of
  the propagation matrix is a (phase-masked) unitary DFT;
* modal: the field is a linear combination of Gaussian radial basis
  functions and the propagation matrix is a dense tall matrix with one
  column per basis function.

All DFTs are unitary and centered, so intensity crops can be taken around
the image core with plain index windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def fft2c(x: np.ndarray) -> np.ndarray:
    """Centered unitary 2-D DFT (batched over leading axes)."""
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(x, axes=(-2, -1)),
                                       norm="ortho"), axes=(-2, -1))


def ifft2c(x: np.ndarray) -> np.ndarray:
    """Inverse (and adjoint) of :func:`fft2c`."""
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(x, axes=(-2, -1)),
                                        norm="ortho"), axes=(-2, -1))


@dataclass(frozen=True)
class PupilGrid:
    """Square sampling grid holding a circular aperture.

    Attributes
    ----------
    m : int
        Samples per side.
    radius : float
        Aperture radius as a fraction of the grid half-side.
    x, y : ndarray
        Normalized coordinates in [-1, 1), cell-centered so that the
        origin falls on the sample ``(m//2, m//2)`` used by the centered
        DFT convention.
    mask : ndarray of bool
        True inside the aperture (x**2 + y**2 <= radius**2).
    """

    m: int
    radius: float
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)

    @property
    def rho(self) -> np.ndarray:
        """Radial coordinate normalized to 1 at the aperture edge."""
        return np.hypot(self.x, self.y) / self.radius

    @property
    def n_pixels(self) -> int:
        return self.m * self.m


def make_pupil_grid(m: int, radius: float) -> PupilGrid:
    """Build a pupil grid with a centered circular aperture.

    Parameters
    ----------
    m : int
        Grid side length, must be positive.
    radius : float
        Aperture radius relative to the half-side, in (0, 1].

    Raises
    ------
    ValueError
        On non-positive sizes or an aperture that contains no samples.
    """
    if m < 1:
        raise ValueError(f"grid size must be positive, got {m}")
    if not 0 < radius <= 1:
        raise ValueError(f"aperture radius must lie in (0, 1], got {radius}")
    coords = (np.arange(m) - m // 2) * (2.0 / m)
    x, y = np.meshgrid(coords, coords, indexing="xy")
    mask = x * x + y * y <= radius * radius
    if not mask.any():
        raise ValueError(
            f"degenerate aperture: no samples inside radius {radius} on a {m}x{m} grid")
    return PupilGrid(m=m, radius=radius, x=x, y=y, mask=mask)


def defocus_phase(grid: PupilGrid, coeff: float) -> np.ndarray:
    """Defocus diversity phase ``coeff * (2*rho**2 - 1)`` on the aperture.

    The quadratic mode is zero-mean over the unit disk; outside the
    aperture the phase is set to zero.
    """
    phase = np.zeros((grid.m, grid.m))
    phase[grid.mask] = coeff * (2.0 * grid.rho[grid.mask] ** 2 - 1.0)
    return phase


@dataclass(frozen=True)
class DiversitySet:
    """Collection of known diversity phases applied before propagation.

    ``labels`` keeps the generating coefficient of each phase map so that
    result files can identify the diversity channel.
    """

    phases: np.ndarray  # (n_d, m, m) float
    labels: tuple

    @property
    def n_d(self) -> int:
        return self.phases.shape[0]


def make_defocus_diversities(grid: PupilGrid, coeffs) -> DiversitySet:
    """One defocus phase map per coefficient."""
    coeffs = [float(c) for c in coeffs]
    if not coeffs:
        raise ValueError("at least one diversity coefficient is required")
    phases = np.stack([defocus_phase(grid, c) for c in coeffs])
    return DiversitySet(phases=phases, labels=tuple(coeffs))


@dataclass(frozen=True)
class BasisSet:
    """Gaussian radial basis functions sampled on a pupil grid.

    Attributes
    ----------
    grid : PupilGrid
    centers : ndarray, shape (n, 2)
        Basis centers in normalized pupil coordinates.
    spreads : ndarray, shape (n,)
        Exponential decay rates; basis i is
        ``mask * exp(-spreads[i] * ((x-cx)**2 + (y-cy)**2))``.
    cube : ndarray, shape (n, m, m)
        Sampled (aperture-windowed) basis functions.
    """

    grid: PupilGrid
    centers: np.ndarray
    spreads: np.ndarray
    cube: np.ndarray = field(repr=False)

    @property
    def n_basis(self) -> int:
        return self.cube.shape[0]


def make_basis(grid: PupilGrid, k: int, spread: float | None = None) -> BasisSet:
    """Lay out a k-by-k grid of Gaussian basis functions over the aperture.

    Centers are cell-centered over the aperture bounding box, so ``k=1``
    places a single basis function at the origin.  The default spread is
    chosen so two adjacent basis functions decay to 0.5 halfway between
    their centers.

    Parameters
    ----------
    grid : PupilGrid
    k : int
        Basis functions per side; the set has ``k*k`` members.
    spread : float, optional
        Decay rate applied to all members; overrides the default.
    """
    if k < 1:
        raise ValueError(f"basis layout needs k >= 1, got {k}")
    r = grid.radius
    pitch = 2.0 * r / k
    centers_1d = -r + (np.arange(k) + 0.5) * pitch
    cx, cy = np.meshgrid(centers_1d, centers_1d, indexing="xy")
    centers = np.column_stack([cx.ravel(), cy.ravel()])
    if spread is None:
        # value 0.5 at half the center-to-center distance
        spread = 4.0 * math.log(2.0) / pitch ** 2
    if spread <= 0:
        raise ValueError(f"spread must be positive, got {spread}")
    dx = grid.x[None, :, :] - centers[:, 0, None, None]
    dy = grid.y[None, :, :] - centers[:, 1, None, None]
    cube = np.exp(-spread * (dx * dx + dy * dy)) * grid.mask[None, :, :]
    spreads = np.full(len(centers), float(spread))
    return BasisSet(grid=grid, centers=centers, spreads=spreads, cube=cube)


def _crop_slices(m: int, crop: tuple[int, int] | None):
    if crop is None:
        return slice(None), slice(None)
    h, w = crop
    if not (0 < h <= m and 0 < w <= m):
        raise ValueError(f"crop window {crop} does not fit a {m}x{m} image")
    r0 = m // 2 - h // 2
    c0 = m // 2 - w // 2
    return slice(r0, r0 + h), slice(c0, c0 + w)


class PropagationMatrix:
    """Linear map from field coefficients to stacked image-plane samples.

    Modal instances hold a dense complex matrix.  Zonal instances stay
    factored (diversity phase screens plus the centered unitary DFT) and
    densify lazily only when a caller needs explicit columns.

    Attributes
    ----------
    form : str
        ``"modal"`` or ``"zonal"``.
    n_y : int
        Number of image-plane samples (all diversities stacked).
    n_a : int
        Number of coefficients.
    crop : tuple or None
        Per-diversity image crop window (rows, cols).
    """

    def __init__(self, form, n_y, n_a, crop=None, dense=None,
                 phase_screens=None, m=None, labels=None):
        self.form = form
        self.n_y = n_y
        self.n_a = n_a
        self.crop = crop
        self.labels = labels
        self._dense = dense
        self._screens = phase_screens
        self._m = m

    def apply(self, a: np.ndarray) -> np.ndarray:
        """Return ``U @ a`` as a flat complex vector of length n_y."""
        a = np.asarray(a, dtype=complex)
        if a.shape != (self.n_a,):
            raise ValueError(f"coefficient vector must have shape ({self.n_a},), "
                             f"got {a.shape}")
        if self._dense is not None:
            return self._dense @ a
        field_2d = a.reshape(self._m, self._m)
        blocks = fft2c(self._screens * field_2d[None, :, :])
        return blocks.reshape(-1)

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        """Return ``U^H @ v``."""
        v = np.asarray(v, dtype=complex)
        if v.shape != (self.n_y,):
            raise ValueError(f"image vector must have shape ({self.n_y},), got {v.shape}")
        if self._dense is not None:
            return self._dense.conj().T @ v
        blocks = v.reshape(len(self._screens), self._m, self._m)
        fields = np.conj(self._screens) * ifft2c(blocks)
        return fields.sum(axis=0).reshape(-1)

    def to_dense(self) -> np.ndarray:
        """Materialize the full complex matrix (cached)."""
        if self._dense is None:
            eye = np.eye(self.n_a, dtype=complex)
            cols = [self.apply(eye[:, j]) for j in range(self.n_a)]
            self._dense = np.column_stack(cols)
        return self._dense


def build_modal_U(basis: BasisSet, diversities: DiversitySet,
                  crop: tuple[int, int] | None = None) -> PropagationMatrix:
    """Dense propagation matrix for a modal field parameterization.

    Column i of diversity block d is the (optionally cropped) centered
    DFT of ``basis_i * exp(1j * phase_d)``, flattened row-major.

    Raises
    ------
    ValueError
        If basis and diversities live on different grids or the crop
        window does not fit the image.
    """
    m = basis.grid.m
    if diversities.phases.shape[1:] != (m, m):
        raise ValueError("basis and diversity phases are sampled on different grids")
    rs, cs = _crop_slices(m, crop)
    blocks = []
    for phase in diversities.phases:
        fields = basis.cube * np.exp(1j * phase)[None, :, :]
        imgs = fft2c(fields)[:, rs, cs]            # (n_basis, h, w)
        blocks.append(imgs.reshape(basis.n_basis, -1).T)
    dense = np.vstack(blocks)
    if not np.isfinite(dense).all():
        raise ValueError("propagation matrix contains non-finite entries")
    return PropagationMatrix(form="modal", n_y=dense.shape[0], n_a=basis.n_basis,
                             crop=crop, dense=dense, labels=diversities.labels)


def build_zonal_U(grid: PupilGrid, diversities: DiversitySet) -> PropagationMatrix:
    """Factored propagation operator with one unknown per pupil sample.

    Each diversity block acts as ``vec o DFT o diag(exp(1j*phase_d))`` and
    is therefore unitary; full image frames are kept (no crop).
    """
    m = grid.m
    if diversities.phases.shape[1:] != (m, m):
        raise ValueError("diversity phases are sampled on a different grid")
    screens = np.exp(1j * diversities.phases)
    return PropagationMatrix(form="zonal", n_y=diversities.n_d * m * m, n_a=m * m,
                             crop=None, phase_screens=screens, m=m,
                             labels=diversities.labels)


@dataclass
class Measurements:
    """Normalized intensity samples with provenance.

    ``scale`` is the pre-normalization maximum, so ``y * scale`` restores
    raw intensities.  ``meta`` records how the data were produced (form,
    dimensions, diversity labels, noise sigma, seed) for result files.
    """

    y: np.ndarray
    scale: float
    meta: dict = field(default_factory=dict)

    @property
    def n_y(self) -> int:
        return self.y.shape[0]


def simulate_measurements(U: PropagationMatrix, a_true: np.ndarray) -> Measurements:
    """Noise-free intensities ``|U a|**2``, normalized to unit maximum.

    Raises
    ------
    ValueError
        If the field maps to identically zero intensity, which would make
        the normalization undefined.
    """
    amps = U.apply(a_true)
    y_raw = np.abs(amps) ** 2
    scale = float(y_raw.max())
    if scale == 0.0:
        raise ValueError("degenerate field: all simulated intensities are zero")
    meta = {"form": U.form, "n_y": U.n_y, "n_a": U.n_a,
            "crop": list(U.crop) if U.crop else None,
            "labels": list(U.labels) if U.labels else None,
            "sigma": 0.0, "seed": None}
    return Measurements(y=y_raw / scale, scale=scale, meta=meta)


def add_noise(meas: Measurements, sigma: float, rng: np.random.Generator) -> Measurements:
    """Additive Gaussian noise on normalized intensities, clipped at zero.

    Parameters
    ----------
    meas : Measurements
    sigma : float
        Noise standard deviation (on the normalized scale), >= 0.
    rng : numpy.random.Generator
        Required so that callers own the seeding policy.
    """
    if sigma < 0:
        raise ValueError(f"noise sigma must be nonnegative, got {sigma}")
    if not isinstance(rng, np.random.Generator):
        raise ValueError("rng must be a numpy.random.Generator")
    y = meas.y + rng.normal(0.0, sigma, size=meas.y.shape) if sigma > 0 else meas.y.copy()
    y = np.clip(y, 0.0, None)
    meta = dict(meas.meta)
    meta["sigma"] = float(sigma)
    return Measurements(y=y, scale=meas.scale, meta=meta)


@dataclass(frozen=True)
class MirrorModel:
    """Synthetic deformable mirror with Gaussian influence functions.

    Attributes
    ----------
    grid : PupilGrid
    actuators : ndarray, shape (n_u, 2)
        Actuator positions in normalized pupil coordinates.
    influence : ndarray, shape (m*m, n_u)
        Flattened phase response of each actuator to unit command.
    pitch : float
        Actuator center-to-center spacing.
    """

    grid: PupilGrid
    actuators: np.ndarray
    influence: np.ndarray = field(repr=False)
    pitch: float

    @property
    def n_u(self) -> int:
        return self.actuators.shape[0]


def make_mirror(grid: PupilGrid, n_u: int, width_factor: float = 1.5) -> MirrorModel:
    """Deterministic square actuator layout clipped to the aperture disk.

    The candidate grid is refined until at least ``n_u`` actuators fall
    within (slightly beyond) the aperture; the ``n_u`` sites closest to
    the center are kept, with angle as the tie-break.  Influence
    functions are Gaussians whose full width at half maximum is
    ``width_factor`` times the actuator pitch, giving roughly 30 percent
    cross-coupling at the neighboring actuator for the default 1.5.
    """
    if n_u < 1:
        raise ValueError(f"mirror needs at least one actuator, got {n_u}")
    r = grid.radius
    k = max(1, math.isqrt(n_u))
    while True:
        pitch = 2.0 * r / k
        pts_1d = -r + (np.arange(k) + 0.5) * pitch
        ax, ay = np.meshgrid(pts_1d, pts_1d, indexing="xy")
        pts = np.column_stack([ax.ravel(), ay.ravel()])
        rad2 = (pts ** 2).sum(axis=1)
        keep = rad2 <= (r + 0.5 * pitch) ** 2
        if keep.sum() >= n_u:
            pts, rad2 = pts[keep], rad2[keep]
            break
        k += 1
    order = np.lexsort((np.arctan2(pts[:, 1], pts[:, 0]), np.round(rad2, 12)))
    actuators = pts[order[:n_u]]
    sigma = width_factor * pitch / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    dx = grid.x.reshape(-1, 1) - actuators[:, 0]
    dy = grid.y.reshape(-1, 1) - actuators[:, 1]
    influence = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
    return MirrorModel(grid=grid, actuators=actuators, influence=influence, pitch=pitch)


def mirror_phase(mirror: MirrorModel, commands: np.ndarray) -> np.ndarray:
    """Phase map produced by a command vector, one entry per actuator."""
    commands = np.asarray(commands, dtype=float)
    if commands.shape != (mirror.n_u,):
        raise ValueError(f"command vector must have shape ({mirror.n_u},), "
                         f"got {commands.shape}")
    m = mirror.grid.m
    return (mirror.influence @ commands).reshape(m, m)
