"""Product-type Sobolev norms of symbols, the dilation-sup symbol norm, and
empirical operator-norm estimation.

The symbol norm is, per parameter group, a Bessel-weighted transform norm:
transform the windowed symbol, multiply by prod_j (1 + 4 pi^2 |w_group_j|^2)^(s_j/2),
transform back, and take the L^u quadrature norm.  The dilation sup runs over
a finite set of dyadic dilations per parameter, auto-ranged from the symbol's
declared support annulus when not given.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .grid import Grid, GridError, GridFunction, ParameterError, lp_norm, to_spatial, transform
from .multiplier import (
    LocalizedSymbol,
    MultiplierRep,
    apply_multilinear,
    localize_symbol,
    parameter_groups,
)


@dataclass(frozen=True)
class SobolevSpec:
    """Smoothness orders per parameter and the base integrability exponent.

    u is accepted in (1, inf); the sharp-rate experiments only ever assert
    sufficiency rates for u <= 2.
    """

    s: tuple
    u: float

    def __post_init__(self):
        object.__setattr__(self, "s", tuple(float(v) for v in (self.s if hasattr(self.s, "__len__") else (self.s,))))
        if any(v < 0 for v in self.s):
            raise ParameterError("smoothness orders must be nonnegative")
        if not (self.u > 1):
            raise ParameterError(f"integrability exponent must exceed 1, got {self.u}")

    @property
    def u_conj(self) -> float:
        return self.u / (self.u - 1.0)


def bessel_weight(grid: Grid, axes, s: float, lattice: str = "freq") -> np.ndarray:
    """(1 + 4 pi^2 |w|^2)^(s/2), |w| taken over the given axis group of the
    grid's frequency lattice (default) or centered spatial lattice."""
    w2 = grid.freq_norm_sq(axes) if lattice == "freq" else grid.spatial_norm_sq(axes)
    return (1.0 + 4.0 * np.pi**2 * w2) ** (s / 2.0)


def product_sobolev_norm(F: GridFunction, spec: SobolevSpec, groups) -> float:
    """Weighted-transform norm of a function on a product domain.

    ``groups`` lists, per parameter, the axes forming that parameter's
    coordinate block (dimension arity*base_dim each).
    """
    if len(groups) != len(spec.s):
        raise GridError(
            f"grouping mismatch: {len(groups)} axis groups vs {len(spec.s)} smoothness orders"
        )
    seen = [a for g in groups for a in g]
    if sorted(seen) != list(range(F.grid.dims)):
        raise GridError("axis groups must partition the domain axes")
    spec_side = transform(F, "forward") if F.domain == "spatial" else F
    weighted = spec_side.values.copy()
    for axes, s in zip(groups, spec.s):
        if s != 0.0:
            weighted = weighted * bessel_weight(F.grid, axes, s)
    back = transform(GridFunction(F.grid, weighted, "spectral"), "inverse")
    return lp_norm(back, spec.u)


def weighted_kernel_norm(loc: LocalizedSymbol, spec: SobolevSpec) -> float:
    """L^u' quadrature of the Bessel-weighted kernel of a localized symbol.

    Dominated by the symbol's Sobolev norm for u <= 2 (transform-norm
    inequality), with equality at u = 2.
    """
    kern = loc.kernel
    vals = kern.values.copy()
    for axes, s in zip(loc.groups, spec.s):
        if s != 0.0:
            # the kernel's own variables are the dual grid's spatial lattice
            vals = vals * bessel_weight(kern.grid, axes, s, lattice="spatial")
    return lp_norm(GridFunction(kern.grid, vals, "spatial"), spec.u_conj)


def auto_dilation_range(m: MultiplierRep, margin: int = 1):
    """Dilations per parameter for which the dilated support can meet the
    localization annulus [1/2, 2], from the declared support radii."""
    if not m.support_radii:
        raise ParameterError(
            "symbol declares no support annulus; pass an explicit dilation range"
        )
    ranges = []
    for lo, hi in m.support_radii:
        if not (0 < lo < hi):
            raise ParameterError("support radii must satisfy 0 < lo < hi")
        k_lo = math.floor(math.log2(lo) - 1.0) - margin
        k_hi = math.ceil(math.log2(hi) + 1.0) + margin
        ranges.append(range(k_lo, k_hi + 1))
    return ranges


def a_norm(
    m: MultiplierRep,
    spec: SobolevSpec,
    symbol_grid: Grid,
    k_ranges=None,
    window: str = "annulus_window",
    return_scan: bool = False,
):
    """Sup over per-parameter dyadic dilations of the windowed symbol's
    product Sobolev norm.

    ``k_ranges``: an iterable of dilation ranges (one per parameter), or None
    to derive them from the symbol's declared support.
    """
    if len(spec.s) != m.params:
        raise ParameterError("need one smoothness order per parameter")
    if k_ranges is None:
        k_ranges = auto_dilation_range(m)
    else:
        k_ranges = [list(r) for r in k_ranges]
        if len(k_ranges) != m.params:
            raise ParameterError("need one dilation range per parameter")
    groups = parameter_groups(m.arity, m.params, m.base_dim)
    best = 0.0
    scan = []
    from itertools import product as iproduct

    for kvec in iproduct(*k_ranges):
        loc = localize_symbol(m, kvec, symbol_grid, window=window)
        if np.abs(loc.windowed.values).max() == 0.0:
            val = 0.0
        else:
            val = product_sobolev_norm(loc.windowed, spec, groups)
        scan.append((tuple(kvec), val))
        best = max(best, val)
    if return_scan:
        return best, scan
    return best


@dataclass
class OperatorNormEstimate:
    """Best input/output norm ratio found, with the witness reproducing it."""

    value: float
    witness: tuple
    trials: int
    seed: int
    skipped: int = 0


def operator_norm_lower_bound(
    m: MultiplierRep,
    p_out: float,
    p_in,
    families=(),
    random_trials: int = 0,
    seed: int = 0,
    band: float = None,
    dealias: bool = True,
) -> OperatorNormEstimate:
    """Empirical lower bound for the operator norm: the max over supplied
    argument tuples (and seeded random band-limited fields) of

        ||T_m(f_1, ..., f_l)||_p / prod_i ||f_i||_{p_i}.

    Never an upper bound; the reported witness reproduces the value.
    """
    if len(p_in) != m.arity:
        raise ParameterError("need one input exponent per argument")
    rng = np.random.default_rng(seed)
    grid = m.grid
    if band is None:
        band = grid.nyquist / (2.0 * m.arity)
    best = 0.0
    witness = None
    skipped = 0
    trials = 0

    def consider(fs):
        nonlocal best, witness, skipped, trials
        trials += 1
        denom = 1.0
        for f, p in zip(fs, p_in):
            nf = lp_norm(f, p)
            if nf == 0.0:
                skipped += 1
                return
            denom *= nf
        out = apply_multilinear(m, list(fs), dealias=dealias)
        ratio = lp_norm(out, p_out) / denom
        if ratio > best:
            best = ratio
            witness = tuple(fs)

    for fam in families:
        consider(tuple(fam))
    from .grid import random_band_limited

    for _ in range(random_trials):
        fs = tuple(random_band_limited(grid, band, rng) for _ in range(m.arity))
        consider(fs)
    if skipped:
        warnings.warn(f"operator norm scan skipped {skipped} zero-norm tuples")
    return OperatorNormEstimate(best, witness, trials, seed, skipped)
