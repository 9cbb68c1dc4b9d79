"""
Periodic-grid fields: sampling, cell-volume-weighted Fourier transforms,
Fourier multipliers and resampling under linear maps.

Transform convention: u_hat(xi) = int e^{-i<x, xi>} u(x) dx, approximated by
h^n * sum_j e^{-i<x_j, xi>} u(x_j) on the centered frequency lattice.
"""

import logging
from typing import Callable, Optional, Union

import numpy as np
import scipy.fft
import scipy.ndimage

from .errors import FieldError
from .models import Domain, Field, Grid

FourierWeight = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]

# Relative boundary mass above which resampling reports a support warning.
SUPPORT_TOL = 1e-10

_workers: Optional[int] = None


def set_fft_workers(workers: Optional[int]) -> None:
    """Thread count forwarded to scipy.fft."""
    global _workers
    _workers = workers


def _phase(grid: Grid) -> np.ndarray:
    """(-1)^m over the centered frequency lattice, broadcast to the grid."""
    signs = np.ones(grid.shape)
    for axis, count in enumerate(grid.N):
        m = np.arange(-count // 2, count // 2)
        shape = [1] * grid.n
        shape[axis] = count
        signs = signs * np.where(m % 2 == 0, 1.0, -1.0).reshape(shape)
    return signs


def sample_field(grid: Grid, f: Callable[[np.ndarray], np.ndarray]) -> Field:
    """
    Sample a pointwise evaluator on the grid.

    Args:
        grid: Target grid.
        f: Vectorized evaluator taking points of shape (*N, n).

    Returns:
        Physical-domain field.
    """
    points = grid.points()
    values = np.asarray(f(points), dtype=np.complex128)
    if values.shape != grid.shape:
        values = np.broadcast_to(values, grid.shape)
    bad = ~np.isfinite(values)
    if np.any(bad):
        index = tuple(int(i) for i in np.argwhere(bad)[0])
        raise FieldError(f"Non-finite sample at x = {points[index].tolist()}")
    return Field(grid, values)


def dft(u: Field) -> Field:
    """Cell-volume-weighted DFT onto the centered frequency lattice."""
    if u.domain != Domain.PHYSICAL:
        raise FieldError("dft expects a physical-domain field")
    grid = u.grid
    spectrum = scipy.fft.fftshift(scipy.fft.fftn(u.values, workers=_workers))
    spectrum = grid.cell_volume * _phase(grid) * spectrum
    return Field(grid, spectrum, Domain.SPECTRAL, u.notes)


def idft(u_hat: Field) -> Field:
    """Exact inverse of dft."""
    if u_hat.domain != Domain.SPECTRAL:
        raise FieldError("idft expects a spectral-domain field")
    grid = u_hat.grid
    values = scipy.fft.ifftn(
        scipy.fft.ifftshift(_phase(grid) * u_hat.values), workers=_workers
    ) / grid.cell_volume
    return Field(grid, values, Domain.PHYSICAL, u_hat.notes)


def _measure(field: Field) -> float:
    if field.domain == Domain.SPECTRAL:
        return field.grid.frequency_cell_volume
    return field.grid.cell_volume


def _check_same_grid(a: Field, b: Field) -> None:
    if a.grid != b.grid or a.domain != b.domain:
        raise FieldError(f"Fields live on different grids: {a.grid} vs {b.grid}")


def l2_norm(field: Field) -> float:
    return float(np.sqrt(_measure(field) * np.sum(np.abs(field.values) ** 2)))


def l2_inner(a: Field, b: Field) -> complex:
    """<a, b>, linear in the first argument."""
    _check_same_grid(a, b)
    return complex(_measure(a) * np.sum(a.values * np.conj(b.values)))


def l2_norm_on(field: Field, indicator: np.ndarray) -> float:
    """Norm restricted to the points where indicator is true."""
    indicator = np.asarray(indicator, dtype=bool)
    if indicator.shape != field.grid.shape:
        raise FieldError(f"Indicator shape {indicator.shape} does not match {field.grid.shape}")
    return float(np.sqrt(_measure(field) * np.sum(np.abs(field.values[indicator]) ** 2)))


def evaluate_weight(grid: Grid, w: FourierWeight) -> np.ndarray:
    """Evaluate a weight on the frequency lattice and check it is finite."""
    if callable(w):
        xi = grid.frequencies()
        values = np.asarray(w(xi), dtype=np.complex128)
    else:
        xi = None
        values = np.asarray(w, dtype=np.complex128)
    values = np.broadcast_to(values, grid.shape)
    bad = ~np.isfinite(values)
    if np.any(bad):
        index = tuple(int(i) for i in np.argwhere(bad)[0])
        location = grid.frequencies()[index] if xi is None else xi[index]
        raise FieldError(f"Non-finite Fourier weight at xi = {location.tolist()}")
    return values


def apply_fourier_weight(u: Field, w: FourierWeight) -> Field:
    """idft(w * dft(u))."""
    weights = evaluate_weight(u.grid, w)
    u_hat = dft(u)
    return idft(u_hat.with_values(weights * u_hat.values))


def weighted_spectral_norm(u_hat: Field, w: FourierWeight) -> float:
    """||F^{-1}(w u_hat)|| computed on the spectral side by Plancherel."""
    weights = evaluate_weight(u_hat.grid, w)
    grid = u_hat.grid
    total = grid.frequency_cell_volume * np.sum(np.abs(weights * u_hat.values) ** 2)
    return float(np.sqrt(total / (2 * np.pi) ** grid.n))


def cube_cutoff(k: float) -> Callable[[np.ndarray], np.ndarray]:
    """Indicator of the frequency cube [-k, k]^n."""
    def weight(xi: np.ndarray) -> np.ndarray:
        return np.all(np.abs(xi) <= k, axis=-1).astype(float)
    return weight


def japanese_bracket(matrix: np.ndarray, q: float) -> Callable[[np.ndarray], np.ndarray]:
    """Weight <W xi>^q = (1 + |W xi|^2)^{q/2}."""
    def weight(xi: np.ndarray) -> np.ndarray:
        image = xi @ matrix.T
        return (1.0 + np.sum(image * image, axis=-1)) ** (q / 2)
    return weight


def boundary_mask(grid: Grid, order: int = 5) -> np.ndarray:
    """Outermost max(order+1, N_j/16) cells of every axis."""
    mask = np.zeros(grid.shape, dtype=bool)
    for axis, count in enumerate(grid.N):
        band = min(max(order + 1, count // 16), count // 2)
        index = [slice(None)] * grid.n
        index[axis] = slice(0, band)
        mask[tuple(index)] = True
        index[axis] = slice(count - band, count)
        mask[tuple(index)] = True
    return mask


def boundary_mass_fraction(u: Field, order: int = 5) -> float:
    """Share of ||u||^2 carried by the boundary band."""
    total = np.sum(np.abs(u.values) ** 2)
    if total == 0:
        return 0.0
    return float(np.sum(np.abs(u.values[boundary_mask(u.grid, order)]) ** 2) / total)


def _fractional_indices(grid: Grid, points: np.ndarray) -> np.ndarray:
    """Continuous array indices of physical points, shape (n, *N)."""
    coords = []
    for axis, (length, h) in enumerate(zip(grid.L, grid.spacing)):
        coords.append((points[..., axis] + length / 2) / h)
    return np.stack(coords, axis=0)


def resample_linear_map(u: Field, A: np.ndarray, order: int = 5) -> Field:
    """
    Samples of x -> u(Ax) by spline interpolation of the given order,
    with u extended by zero outside the box.

    Args:
        u: Physical-domain field.
        A: Invertible n x n matrix.
        order: Spline order, one of 1, 3, 5.

    Returns:
        Resampled field; notes carry the support and leaked-mass diagnostics.
    """
    if u.domain != Domain.PHYSICAL:
        raise FieldError("Resampling expects a physical-domain field")
    if order not in (1, 3, 5):
        raise FieldError(f"Interpolation order must be 1, 3 or 5, got {order}")
    grid = u.grid
    A = np.asarray(A, dtype=float)
    if A.shape != (grid.n, grid.n):
        raise FieldError(f"Map has shape {A.shape}, grid dimension is {grid.n}")
    det = np.linalg.det(A)
    if det == 0 or not np.isfinite(det) or np.linalg.cond(A) > 1e12:
        raise FieldError(f"Linear map is singular (det = {det:.3e})")
    if np.array_equal(A, np.eye(grid.n)):
        return Field(grid, u.values, Domain.PHYSICAL, u.notes)

    notes = []
    boundary = boundary_mass_fraction(u, order)
    if boundary > SUPPORT_TOL:
        leaked = leaked_mass_fraction(u, A)
        message = (f"boundary mass {boundary:.3e} exceeds {SUPPORT_TOL:.0e}; "
                   f"leaked mass {leaked:.3e}")
        logging.warning(f"Resampling: {message}")
        notes.append(message)

    coords = _fractional_indices(grid, grid.points() @ A.T)
    kwargs = dict(order=order, mode="constant", cval=0.0, prefilter=True)
    real = scipy.ndimage.map_coordinates(u.values.real, coords, **kwargs)
    if u.is_real:
        values = real.astype(np.complex128)
    else:
        values = real + 1j * scipy.ndimage.map_coordinates(u.values.imag, coords, **kwargs)
    return Field(grid, values, Domain.PHYSICAL, u.notes + tuple(notes))


def leaked_mass_fraction(u: Field, A: np.ndarray) -> float:
    """Share of ||u||^2 sitting where A^{-1}x leaves the box, lost by u o A."""
    grid = u.grid
    preimages = grid.points() @ np.linalg.inv(A).T
    outside = np.zeros(grid.shape, dtype=bool)
    for axis, length in enumerate(grid.L):
        outside |= np.abs(preimages[..., axis]) > length / 2
    total = np.sum(np.abs(u.values) ** 2)
    if total == 0:
        return 0.0
    return float(np.sum(np.abs(u.values[outside]) ** 2) / total)


def refine_field(u: Field, factor: int = 2) -> Field:
    """Band-limited interpolation onto a grid with `factor` times more points."""
    fine = u.grid.refined(factor)
    u_hat = dft(u)
    padded = np.zeros(fine.shape, dtype=np.complex128)
    index = tuple(
        slice(fine_count // 2 - count // 2, fine_count // 2 + count // 2)
        for count, fine_count in zip(u.grid.N, fine.N)
    )
    padded[index] = u_hat.values
    refined = idft(Field(fine, padded, Domain.SPECTRAL))
    if u.is_real:
        refined = Field(fine, refined.values.real)
    return refined


# Initial-data recipes

def gaussian_field(
    grid: Grid,
    center: Optional[np.ndarray] = None,
    width: float = 1.0,
    amplitude: float = 1.0,
) -> Field:
    """amplitude * exp(-|x - center|^2 / (2 width^2))."""
    center = np.zeros(grid.n) if center is None else np.asarray(center, dtype=float)

    def f(x: np.ndarray) -> np.ndarray:
        return amplitude * np.exp(-np.sum((x - center) ** 2, axis=-1) / (2 * width ** 2))
    return sample_field(grid, f)


def white_noise_field(grid: Grid, rng: np.random.Generator, taper: Optional[float] = None) -> Field:
    """Real unit-variance grid white noise, optionally tapered by a Gaussian window."""
    values = rng.standard_normal(grid.shape)
    if taper is not None:
        values = values * np.exp(-np.sum(grid.points() ** 2, axis=-1) / (2 * taper ** 2))
    return Field(grid, values)


def wavepacket_field(
    grid: Grid,
    rng: np.random.Generator,
    count: int = 4,
    k_max: float = 4.0,
    width: float = 1.0,
    spread: Optional[float] = None,
) -> Field:
    """Sum of random Gaussian wave packets: band-limited and compactly supported numerically."""
    spread = min(grid.L) / 8 if spread is None else spread
    x = grid.points()
    values = np.zeros(grid.shape)
    for _ in range(count):
        center = rng.uniform(-spread, spread, grid.n)
        wavevector = rng.uniform(-k_max, k_max, grid.n)
        phase = rng.uniform(0, 2 * np.pi)
        amplitude = rng.standard_normal()
        envelope = np.exp(-np.sum((x - center) ** 2, axis=-1) / (2 * width ** 2))
        values = values + amplitude * envelope * np.cos(x @ wavevector + phase)
    return Field(grid, values)


def band_limited_field(grid: Grid, rng: np.random.Generator, k: float) -> Field:
    """Random complex field with spectrum supported in the cube [-k, k]^n."""
    mask = cube_cutoff(k)(grid.frequencies()).astype(bool)
    spectrum = np.zeros(grid.shape, dtype=np.complex128)
    count = int(np.count_nonzero(mask))
    spectrum[mask] = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    return idft(Field(grid, spectrum, Domain.SPECTRAL))
