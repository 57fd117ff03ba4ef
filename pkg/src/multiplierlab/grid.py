"""Periodic uniform grids, continuum-normalized DFTs, and quadrature norms.

Every computation in this package lives on a torus of period ``P`` per axis,
sampled at ``points_per_axis`` equispaced points (a power of two, so dyadic
filters align with the FFT lattice).  The transform pair uses the cyclic
convention e^(-2*pi*i*x*xi) with frequencies in cycles, k/P per axis, and the
forward/inverse scalings are Riemann-sum weights so that Parseval holds
between the spatial and spectral quadrature norms.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("MULTIPLIERLAB_THREADS", "1")))
    except ValueError:
        return 1


class GridError(ValueError):
    """Structural error: mismatched grids, shapes, or domains."""


class ParameterError(ValueError):
    """Invalid numeric parameter (e.g. a nonpositive Lebesgue exponent)."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid in ``dims`` spatial dimensions.

    ``spacing * points_per_axis == period`` exactly; the frequency lattice per
    axis is {k/period : k in [-points_per_axis/2, points_per_axis/2)}.
    """

    dims: int
    points_per_axis: int
    period: float

    def __post_init__(self):
        if self.dims < 1:
            raise GridError(f"dims must be positive, got {self.dims}")
        n = self.points_per_axis
        if n < 2 or (n & (n - 1)) != 0:
            raise GridError(f"points_per_axis must be a power of two >= 2, got {n}")
        if not (self.period > 0):
            raise GridError(f"period must be positive, got {self.period}")

    @property
    def spacing(self) -> float:
        return self.period / self.points_per_axis

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dims

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dims

    @property
    def nyquist(self) -> float:
        return self.points_per_axis / (2.0 * self.period)

    def freq_axis(self) -> np.ndarray:
        """Frequencies k/P along one axis, in FFT storage order."""
        return np.fft.fftfreq(self.points_per_axis, d=self.spacing)

    def spatial_axis(self, centered: bool = True) -> np.ndarray:
        """Sample coordinates along one axis, in FFT storage order.

        With ``centered=True`` the coordinates are the wrapped representatives
        in [-P/2, P/2), which is the natural chart for sampling a decaying
        function placed at the origin of the torus.
        """
        if centered:
            return np.fft.fftfreq(self.points_per_axis, d=1.0 / self.period)
        return np.arange(self.points_per_axis) * self.spacing

    def freq_mesh(self) -> list:
        ax = self.freq_axis()
        return np.meshgrid(*([ax] * self.dims), indexing="ij", sparse=True)

    def spatial_mesh(self, centered: bool = True) -> list:
        ax = self.spatial_axis(centered=centered)
        return np.meshgrid(*([ax] * self.dims), indexing="ij", sparse=True)

    def freq_norm_sq(self, axes=None) -> np.ndarray:
        """|xi|^2 over the frequency lattice, restricted to ``axes`` if given.

        The result broadcasts against arrays of shape ``self.shape``.
        """
        return self._axis_norm_sq(self.freq_axis(), axes)

    def spatial_norm_sq(self, axes=None) -> np.ndarray:
        """|x|^2 over the centered spatial lattice, restricted to ``axes``."""
        return self._axis_norm_sq(self.spatial_axis(centered=True), axes)

    def _axis_norm_sq(self, ax: np.ndarray, axes=None) -> np.ndarray:
        if axes is None:
            axes = range(self.dims)
        out = 0.0
        for a in axes:
            sh = [1] * self.dims
            sh[a] = self.points_per_axis
            out = out + (ax**2).reshape(sh)
        return out

    def compatible(self, other: "Grid") -> bool:
        return (
            self.dims == other.dims
            and self.points_per_axis == other.points_per_axis
            and np.isclose(self.period, other.period, rtol=1e-12, atol=0.0)
        )


@dataclass
class GridFunction:
    """Complex samples of a function on a grid, tagged spatial or spectral."""

    grid: Grid
    values: np.ndarray
    domain: str = "spatial"  # "spatial" | "spectral"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != self.grid.shape:
            raise GridError(
                f"sample shape {self.values.shape} does not match grid shape {self.grid.shape}"
            )
        if self.domain not in ("spatial", "spectral"):
            raise GridError(f"unknown domain tag {self.domain!r}")

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy(), self.domain)


def transform(f: GridFunction, direction: str = "forward") -> GridFunction:
    """Continuum-normalized DFT: forward multiplies by spacing^dims.

    forward:  f_hat(k/P) = h^dims * FFT(f)    (Riemann sum of the integral)
    inverse:  f(x)       = FFT^-1(f_hat) / h^dims

    so a round trip is the identity and Parseval holds with the quadrature
    norms (cell volume h^dims in space, 1/P^dims per frequency node).
    """
    if direction == "forward":
        vals = sfft.fftn(f.values, workers=_workers()) * f.grid.cell_volume
        return GridFunction(f.grid, vals, "spectral")
    if direction == "inverse":
        vals = sfft.ifftn(f.values, workers=_workers()) / f.grid.cell_volume
        return GridFunction(f.grid, vals, "spatial")
    raise ParameterError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def to_spectral(f: GridFunction) -> GridFunction:
    return f if f.domain == "spectral" else transform(f, "forward")


def to_spatial(f: GridFunction) -> GridFunction:
    return f if f.domain == "spatial" else transform(f, "inverse")


@dataclass(frozen=True)
class NormSpec:
    """Lebesgue or weak-Lebesgue exponent; p = inf means the sup norm."""

    p: float
    kind: str = "lebesgue"  # "lebesgue" | "weak"

    def __post_init__(self):
        if not (self.p > 0):
            raise ParameterError(f"norm exponent must be positive, got {self.p}")
        if self.kind not in ("lebesgue", "weak"):
            raise ParameterError(f"unknown norm kind {self.kind!r}")


def lp_norm(f: GridFunction, spec) -> float:
    """Riemann-sum L^p norm of a spatial-domain function.

    ``spec`` may be a NormSpec or a bare exponent.  The weak norm takes the
    sup of t * measure{|f| > t}^(1/p) over the sampled magnitude levels,
    which is exact for the step-function distribution of grid data.
    """
    if not isinstance(spec, NormSpec):
        spec = NormSpec(float(spec))
    if f.domain != "spatial":
        raise GridError("lp_norm expects a spatial-domain function")
    mag = np.abs(f.values).ravel()
    vol = f.grid.cell_volume
    if spec.kind == "weak":
        if np.isinf(spec.p):
            raise ParameterError("weak norm requires finite p")
        levels = np.sort(mag)[::-1]
        counts = np.arange(1, levels.size + 1, dtype=float)
        return float(np.max(levels * (vol * counts) ** (1.0 / spec.p)))
    if np.isinf(spec.p):
        return float(mag.max(initial=0.0))
    return float((vol * np.sum(mag**spec.p)) ** (1.0 / spec.p))


def spectral_l2_norm(f_hat: GridFunction) -> float:
    """l^2 quadrature of a spectral function: (P^-dims * sum |f_hat|^2)^(1/2)."""
    if f_hat.domain != "spectral":
        raise GridError("expected a spectral-domain function")
    w = 1.0 / f_hat.grid.period**f_hat.grid.dims
    return float(np.sqrt(w * np.sum(np.abs(f_hat.values) ** 2)))


def pointwise_product(f: GridFunction, g: GridFunction) -> GridFunction:
    if not f.grid.compatible(g.grid):
        raise GridError("pointwise_product requires matching grids")
    if f.domain != "spatial" or g.domain != "spatial":
        raise GridError("pointwise_product expects spatial-domain functions")
    return GridFunction(f.grid, f.values * g.values, "spatial")


def random_band_limited(grid: Grid, band: float, rng, real: bool = False) -> GridFunction:
    """Gaussian field with spectrum supported in {0 < |k| per axis <= band}.

    Used for randomized operator-norm trials; deterministic given the caller's
    rng state.
    """
    spec = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    ax = grid.freq_axis()
    keep = np.ones(grid.shape, dtype=bool)
    for a in range(grid.dims):
        sh = [1] * grid.dims
        sh[a] = grid.points_per_axis
        keep &= (np.abs(ax).reshape(sh) <= band) * np.ones(grid.shape, dtype=bool)
    spec = np.where(keep, spec, 0.0)
    out = to_spatial(GridFunction(grid, spec, "spectral"))
    if real:
        out = GridFunction(grid, out.values.real.astype(np.complex128), "spatial")
    return out
