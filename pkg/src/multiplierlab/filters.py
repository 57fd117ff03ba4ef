"""Dyadic annular filter banks, smooth windows, and compact bump splitting.

The bank is built from a single radial profile: a C-infinity cutoff chi with
chi = 1 on |xi| <= 1 and chi = 0 on |xi| >= 2, so the annular filters
psi_hat_j(xi) = chi(2^-j |xi|) - chi(2^-j+1 |xi|) telescope exactly.  The
partition of unity sum_j psi_hat_j = 1 therefore holds to machine precision
at every grid frequency inside the covered band, and each psi_hat_j is
supported in the annulus 2^(j-1) <= |xi| <= 2^(j+1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .grid import Grid, GridError, GridFunction, to_spatial, to_spectral


class ResolutionError(GridError):
    """Requested frequency scales cannot be represented on the grid."""


def _smooth_transition(s: np.ndarray) -> np.ndarray:
    """C-infinity decreasing ramp: 1 for s <= 0, 0 for s >= 1.

    Built from f(t) = exp(-1/t); the quotient f(1-s)/(f(s)+f(1-s)) is the
    standard mollifier-based smoothstep.
    """
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)

    def f(t):
        r = np.zeros_like(t)
        pos = t > 0
        r[pos] = np.exp(-1.0 / t[pos])
        return r

    inside = (s > 0) & (s < 1)
    out[s <= 0] = 1.0
    out[s >= 1] = 0.0
    si = s[inside]
    out[inside] = f(1.0 - si) / (f(si) + f(1.0 - si))
    return out


def smooth_cutoff(r: np.ndarray, inner: float, outer: float) -> np.ndarray:
    """Radial plateau profile: 1 on [0, inner], 0 beyond outer, smooth between."""
    if not (0 < inner < outer):
        raise ValueError(f"need 0 < inner < outer, got {inner}, {outer}")
    return _smooth_transition((np.asarray(r, dtype=float) - inner) / (outer - inner))


def smooth_annulus(r: np.ndarray, lo: float, lo_plateau: float, hi_plateau: float, hi: float) -> np.ndarray:
    """Radial window: 0 outside (lo, hi), 1 on [lo_plateau, hi_plateau]."""
    if not (0 < lo < lo_plateau < hi_plateau < hi):
        raise ValueError("annulus radii must increase strictly")
    r = np.asarray(r, dtype=float)
    rise = 1.0 - _smooth_transition((r - lo) / (lo_plateau - lo))
    fall = _smooth_transition((r - hi_plateau) / (hi - hi_plateau))
    return rise * fall


@dataclass(frozen=True)
class Bump:
    """Smooth radial plateau bump around ``center``: 1 inside inner_radius,
    0 outside outer_radius."""

    center: tuple
    inner_radius: float
    outer_radius: float

    def __post_init__(self):
        if not (0 < self.inner_radius < self.outer_radius):
            raise ValueError("need 0 < inner_radius < outer_radius")

    def __call__(self, *coords) -> np.ndarray:
        if len(coords) != len(self.center):
            raise ValueError("coordinate count does not match bump center")
        r2 = 0.0
        for x, c in zip(coords, self.center):
            r2 = r2 + (np.asarray(x, dtype=float) - c) ** 2
        return smooth_cutoff(np.sqrt(r2), self.inner_radius, self.outer_radius)


def _chi(r: np.ndarray) -> np.ndarray:
    """The bank's base cutoff: 1 on |xi| <= 1, 0 on |xi| >= 2."""
    return smooth_cutoff(r, 1.0, 2.0)


def psi_hat_profile(r: np.ndarray, j: int) -> np.ndarray:
    """Annular profile at scale j: chi(2^-j r) - chi(2^-j+1 r)."""
    r = np.asarray(r, dtype=float)
    return _chi(r * 2.0 ** (-j)) - _chi(r * 2.0 ** (-j + 1))


def phi_hat_profile(r: np.ndarray, j: int, separation: int) -> np.ndarray:
    """Low-pass companion: the full telescoped sum over scales <= j - separation - 1,
    i.e. chi(2^-(j-separation-1) r).  Equals 1 for |xi| <= 2^(j-separation-1) and
    vanishes for |xi| >= 2^(j-separation)."""
    return _chi(np.asarray(r, dtype=float) * 2.0 ** (-(j - separation - 1)))


@dataclass
class FilterBank:
    """Indexed dyadic families psi_hat[j] (annular) and phi_hat[j] (low-pass).

    The covered band, where the psi partition of unity equals 1 exactly, is
    2^j_min <= |xi| <= 2^(j_max - 1).
    """

    grid: Grid
    j_min: int
    j_max: int
    separation: int
    psi_hat: dict
    phi_hat: dict

    @property
    def scales(self) -> range:
        return range(self.j_min, self.j_max + 1)

    @property
    def band_lo(self) -> float:
        return 2.0**self.j_min

    @property
    def band_hi(self) -> float:
        return 2.0 ** (self.j_max - 1)

    def band_mask(self, axes=None) -> np.ndarray:
        """Boolean mask of grid frequencies with band_lo <= |xi| <= band_hi,
        |xi| taken over the given axis group."""
        r = np.sqrt(self.grid.freq_norm_sq(axes))
        return (r >= self.band_lo) & (r <= self.band_hi)

    def to_config(self) -> dict:
        return {
            "schema": "multiplierlab.filterbank/1",
            "dims": self.grid.dims,
            "points_per_axis": self.grid.points_per_axis,
            "period": self.grid.period,
            "j_min": self.j_min,
            "j_max": self.j_max,
            "separation": self.separation,
            "profile": {"kind": "mollifier-smoothstep", "inner": 1.0, "outer": 2.0},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_config(), indent=2, sort_keys=True)

    @staticmethod
    def from_config(cfg: dict) -> "FilterBank":
        grid = Grid(cfg["dims"], cfg["points_per_axis"], cfg["period"])
        return build_dyadic_bank(grid, cfg["j_min"], cfg["j_max"], cfg["separation"])

    @staticmethod
    def from_json(text: str) -> "FilterBank":
        return FilterBank.from_config(json.loads(text))


def build_dyadic_bank(grid: Grid, j_min: int, j_max: int, separation: int = 2) -> FilterBank:
    """Construct the annular/low-pass families on a grid.

    Requires the lowest annulus to sit above the frequency spacing and the
    highest to fit under the Nyquist frequency.
    """
    if j_max - j_min < 3:
        raise ResolutionError("need at least four dyadic scales (j_max - j_min >= 3)")
    if separation < 1:
        raise ValueError("separation must be >= 1")
    df = 1.0 / grid.period
    if 2.0**j_min < df * (1 - 1e-12):
        raise ResolutionError(
            f"scale 2^{j_min} below the frequency spacing {df}; enlarge the period"
        )
    if 2.0**j_max > grid.nyquist * (1 + 1e-12):
        raise ResolutionError(
            f"scale 2^{j_max} above the Nyquist frequency {grid.nyquist}; refine the grid"
        )
    r = np.sqrt(grid.freq_norm_sq())
    psi = {}
    phi = {}
    for j in range(j_min, j_max + 1):
        psi[j] = GridFunction(grid, psi_hat_profile(r, j).astype(complex), "spectral")
        phi[j] = GridFunction(grid, phi_hat_profile(r, j, separation).astype(complex), "spectral")
    return FilterBank(grid, j_min, j_max, separation, psi, phi)


def window_theta(grid: Grid, kind: str = "annulus_window", axes=None) -> GridFunction:
    """Smooth spectral windows used to localize symbols.

    annulus_window: supported in 1/2 <= |xi| <= 2, equal to 1 on [2/3, 3/2].
    tilde_window:   supported in 1/100 <= |xi| <= 100, equal to 1 on [0.3, 8],
                    wide enough to cover products of low-pass and annular
                    supports in a pair of variables.
    wide_annulus:   supported in 1/8 <= |xi| <= 8, equal to 1 on [1/4, 4]; the
                    completion window inserted on output frequencies.
    """
    r = np.sqrt(grid.freq_norm_sq(axes))
    if kind == "annulus_window":
        if grid.nyquist < 2.0 or 1.0 / grid.period > 0.5:
            raise ResolutionError("grid does not resolve the [1/2, 2] annulus")
        vals = smooth_annulus(r, 0.5, 2.0 / 3.0, 1.5, 2.0)
    elif kind == "tilde_window":
        if grid.nyquist < 8.0:
            raise ResolutionError("grid does not resolve the tilde window")
        vals = smooth_annulus(r, 0.01, 0.3, 8.0, 100.0)
    elif kind == "wide_annulus":
        if grid.nyquist < 8.0:
            raise ResolutionError("grid does not resolve the wide annulus")
        vals = smooth_annulus(r, 0.125, 0.25, 4.0, 8.0)
    else:
        raise ValueError(f"unknown window kind {kind!r}")
    return GridFunction(grid, vals.astype(complex), "spectral")


class DecayError(ValueError):
    """Input to the bump decomposition does not decay off its cube."""


def compact_bump_decomposition(
    v: GridFunction,
    cube_halfwidth: float,
    mu_max: int,
    c_exp: float = 10.0,
    mean_zero: bool = None,
):
    """Split a rapidly decaying spatial bump into compactly supported pieces.

    Returns a list of (weight, piece) with weight = 2^(-c_exp*mu) and piece
    supported in the cube of half-width 2^mu * cube_halfwidth, such that
    sum weight*piece recovers v up to the tail of v beyond the largest cube.
    If v has mean zero (detected, or forced via ``mean_zero``), every piece
    is corrected to mean zero by telescoping a fixed unit-mass bump through
    consecutive scales.
    """
    if mu_max < 1:
        raise ValueError("mu_max must be >= 1")
    if v.domain != "spatial":
        raise GridError("decomposition expects a spatial-domain bump")
    grid = v.grid
    mesh = grid.spatial_mesh(centered=True)
    vol = grid.cell_volume
    torus_limit = grid.period / 2.0 * 0.999

    def cube_indicator_smooth(halfwidth):
        # smooth cutoff per axis: 1 inside the half-width cube, 0 beyond 2x;
        # a cube saturating the torus degenerates to the constant 1
        if halfwidth >= torus_limit:
            return np.ones(grid.shape)
        out = np.ones(grid.shape)
        for ax in mesh:
            out = out * smooth_cutoff(np.abs(ax), halfwidth, min(2 * halfwidth, torus_limit))
        return out

    total = complex(np.sum(v.values) * vol)
    vmax = float(np.max(np.abs(v.values)))
    if mean_zero is None:
        mean_zero = abs(total) < 1e-10 * max(vmax, 1e-300)

    # chi_mu = 1 on the 2^(mu-1)-cube, supported in the 2^mu-cube
    chis = [cube_indicator_smooth(cube_halfwidth * 2.0 ** (mu - 1)) for mu in range(1, mu_max + 1)]
    pieces_raw = []
    prev = np.zeros(grid.shape)
    for mu in range(1, mu_max + 1):
        cur = chis[mu - 1]
        pieces_raw.append(v.values * (cur - prev))
        prev = cur

    tail = v.values * (1.0 - prev)
    tail_mass = float(np.max(np.abs(tail)))
    budget = 2.0 ** (-c_exp * mu_max) * max(vmax, 1e-300)
    if tail_mass > max(budget, 1e-13 * max(vmax, 1e-300)):
        raise DecayError(
            f"input does not decay: tail sup {tail_mass:.3e} exceeds budget {budget:.3e}"
        )

    if mean_zero:
        # kill each piece's mass with a fixed unit-mass bump at the base
        # scale; the corrections sum to the (negligible) total tail mass
        beta = cube_indicator_smooth(cube_halfwidth / 2.0)
        beta = beta / (np.sum(beta) * vol)
        pieces_raw = [w - (complex(np.sum(w)) * vol) * beta for w in pieces_raw]

    out = []
    for mu, w in enumerate(pieces_raw, start=1):
        weight = 2.0 ** (-c_exp * mu)
        out.append((weight, GridFunction(grid, w / weight, "spatial")))
    return out


def spatial_kernel(filter_hat: GridFunction) -> GridFunction:
    """Spatial kernel of a spectral filter (inverse transform)."""
    return to_spatial(filter_hat)


def kernel_mean(f: GridFunction) -> complex:
    spatial = to_spatial(f)
    return complex(np.sum(spatial.values) * spatial.grid.cell_volume)


def filter_convolve(filter_hat: GridFunction, f: GridFunction) -> GridFunction:
    """Convolution with the filter's kernel, done spectrally (exact on grid)."""
    if not filter_hat.grid.compatible(f.grid):
        raise GridError("filter and function grids differ")
    spec = to_spectral(f)
    return to_spatial(GridFunction(f.grid, filter_hat.values * spec.values, "spectral"))
