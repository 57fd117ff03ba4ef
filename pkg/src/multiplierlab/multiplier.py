"""Multilinear, multi-parameter Fourier multiplier application.

Symbol layout: an l-linear symbol over base dimension n with d dilation
parameters lives on the product lattice whose axes are argument-major,

    axis(i, j, r) = i*(n*d) + j*n + r

for argument i < l, parameter j < d, coordinate r < n.  Each argument block
is a copy of the common argument grid (dims = n*d).  Parameter group j
collects axes {axis(i, j, r) : i, r} across all arguments; dilations and
localization windows act per group.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .filters import FilterBank, smooth_annulus, smooth_cutoff, window_theta
from .grid import (
    Grid,
    GridError,
    GridFunction,
    ParameterError,
    to_spatial,
    to_spectral,
    transform,
)

MAX_DENSE_ENTRIES = 2**24
_SCATTER_CHUNK = 1 << 20


class BudgetError(RuntimeError):
    """Lattice too large for the direct dense/rule application path."""


class CoverageError(GridError):
    """Input frequency content escapes the filter bank's covered band."""


class AlignmentError(GridError):
    """Dense symbol cannot be dyadically resampled without interpolation."""


def product_axis(l: int, d: int, n: int, i: int, j: int, r: int = 0) -> int:
    return i * (n * d) + j * n + r


def parameter_groups(l: int, d: int, n: int) -> list:
    """Axis groups of the product lattice, one tuple of l*n axes per parameter."""
    return [
        tuple(product_axis(l, d, n, i, j, r) for i in range(l) for r in range(n))
        for j in range(d)
    ]


@dataclass
class MultiplierRep:
    """A symbol in dense, separable-sum, or callable-rule form.

    dense: complex tensor over the full product lattice (argument-major axes).
    terms: list of l-tuples of spectral GridFunctions on the argument grid;
           the symbol is the sum over terms of the tensor products.
    rule:  vectorized callable taking l*n*d broadcastable coordinate arrays
           (one per product axis) and returning the symbol values.
    support_radii: per-parameter (lo, hi) annuli bounding the support of the
           parameter-group vectors; required for dilation auto-ranging.
    """

    arity: int
    params: int
    base_dim: int
    grid: Grid
    form: str  # "dense" | "separable_sum" | "rule"
    dense: np.ndarray = None
    terms: list = None
    rule: object = None
    support_radii: list = None
    label: str = ""

    def __post_init__(self):
        if self.grid.dims != self.base_dim * self.params:
            raise GridError("argument grid dims must equal base_dim * params")
        if self.form == "dense":
            want = self.grid.shape * self.arity
            if self.dense is None or self.dense.shape != want:
                raise GridError(f"dense tensor must have shape {want}")
        elif self.form == "separable_sum":
            if not self.terms:
                raise GridError("separable_sum needs at least one term")
            for t in self.terms:
                if len(t) != self.arity:
                    raise GridError("each term needs one factor per argument")
        elif self.form == "rule":
            if self.rule is None:
                raise GridError("rule form needs a callable")
        else:
            raise GridError(f"unknown symbol form {self.form!r}")

    @property
    def lattice_axes(self) -> int:
        return self.arity * self.grid.dims

    @property
    def groups(self) -> list:
        return parameter_groups(self.arity, self.params, self.base_dim)

    def rule_callable(self):
        """A vectorized evaluator, available for rule and separable forms."""
        if self.rule is not None:
            return self.rule
        if self.form == "separable_sum":
            return None
        return None


def _check_budget(nodes: int, cap: int = None):
    cap = MAX_DENSE_ENTRIES if cap is None else cap
    if nodes > cap:
        raise BudgetError(
            f"product lattice has {nodes} nodes, over the direct-path budget {cap}; "
            "use a separable or coarser representation"
        )


def evaluate_rule_dense(m: MultiplierRep, dilations=None, cap: int = None) -> np.ndarray:
    """Materialize a rule-form symbol (optionally dilated per parameter)."""
    if m.rule is None:
        raise GridError("symbol has no callable rule")
    nodes = m.grid.points_per_axis ** (m.lattice_axes)
    _check_budget(nodes, cap)
    ax = m.grid.freq_axis()
    coords = []
    L = m.lattice_axes
    for i in range(m.arity):
        for j in range(m.params):
            scale = 1.0 if dilations is None else 2.0 ** dilations[j]
            for r in range(m.base_dim):
                a = product_axis(m.arity, m.params, m.base_dim, i, j, r)
                sh = [1] * L
                sh[a] = ax.size
                coords.append((ax * scale).reshape(sh))
    return np.asarray(m.rule(*coords), dtype=complex) + np.zeros(
        (m.grid.points_per_axis,) * L, dtype=complex
    )


def separable_to_dense(m: MultiplierRep, cap: int = None) -> MultiplierRep:
    nodes = m.grid.points_per_axis ** m.lattice_axes
    _check_budget(nodes, cap)
    out = np.zeros(m.grid.shape * m.arity, dtype=complex)
    for t in m.terms:
        term = np.ones((), dtype=complex)
        acc = None
        for i, fac in enumerate(t):
            block = fac.values
            acc = block if acc is None else np.multiply.outer(acc, block)
        out += acc
    return MultiplierRep(
        m.arity, m.params, m.base_dim, m.grid, "dense", dense=out,
        support_radii=m.support_radii, label=m.label,
    )


def apply_linear(symbol: GridFunction, f: GridFunction) -> GridFunction:
    """Linear multiplier: inverse transform of symbol * f_hat."""
    if not symbol.grid.compatible(f.grid):
        raise GridError("symbol and argument grids differ")
    spec = to_spectral(f)
    return to_spatial(GridFunction(f.grid, symbol.values * spec.values, "spectral"))


def _signed_index(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.where(k < n - n // 2, k, k - n)


def _next_pow2(x: int) -> int:
    n = 1
    while n < x:
        n *= 2
    return n


def _pad_spectrum(values: np.ndarray, n_old: int, n_new: int) -> np.ndarray:
    """Embed an FFT-ordered spectrum into a larger band (zero padding)."""
    dims = values.ndim
    out = np.zeros((n_new,) * dims, dtype=complex)
    src = _signed_index(n_old)
    idx = np.ix_(*([src % n_new] * dims))
    out[idx] = values
    return out


def _crop_spectrum(values: np.ndarray, n_new: int, n_old: int) -> np.ndarray:
    dims = values.ndim
    src = _signed_index(n_old)
    idx = np.ix_(*([src % n_new] * dims))
    return values[idx]


def _occupied_band(spec_vals: np.ndarray, tol: float = 0.0) -> int:
    """Largest |signed index| per axis carrying any mass above tol."""
    n = spec_vals.shape[0]
    signed = np.abs(_signed_index(n))
    worst = 0
    for a in range(spec_vals.ndim):
        other = tuple(x for x in range(spec_vals.ndim) if x != a)
        mass = np.abs(spec_vals).max(axis=other) if other else np.abs(spec_vals)
        hit = mass > tol
        if hit.any():
            worst = max(worst, int(signed[hit].max()))
    return worst


def _apply_separable(m: MultiplierRep, fs, dealias: bool) -> GridFunction:
    grid = m.grid
    n = grid.points_per_axis
    specs = [to_spectral(f).values for f in fs]

    # band occupancy of every filtered spectrum decides whether products of
    # l factors can alias on this grid
    bands = []
    filtered_cache = {}
    for t in m.terms:
        cur = 0
        for i, fac in enumerate(t):
            key = (i, id(fac))
            if key not in filtered_cache:
                filtered_cache[key] = fac.values * specs[i]
            cur += _occupied_band(filtered_cache[key])
        bands.append(cur)
    need = max(bands) if bands else 0
    pad = dealias and (need >= n - n // 2)

    if not pad:
        out = np.zeros(grid.shape, dtype=complex)
        spatial_cache = {}
        for t in m.terms:
            prod = None
            for i, fac in enumerate(t):
                key = (i, id(fac))
                if key not in spatial_cache:
                    spatial_cache[key] = sfft.ifftn(filtered_cache[key]) / grid.cell_volume
                g = spatial_cache[key]
                prod = g.copy() if prod is None else prod * g
            out += prod
        return GridFunction(grid, out, "spatial")

    n_pad = _next_pow2(2 * need + 2)
    fine = Grid(grid.dims, n_pad, grid.period)
    out = np.zeros(fine.shape, dtype=complex)
    spatial_cache = {}
    for t in m.terms:
        prod = None
        for i, fac in enumerate(t):
            key = (i, id(fac))
            if key not in spatial_cache:
                padded = _pad_spectrum(filtered_cache[key], n, n_pad)
                spatial_cache[key] = sfft.ifftn(padded) / fine.cell_volume
            g = spatial_cache[key]
            prod = g.copy() if prod is None else prod * g
        out += prod
    spec_fine = sfft.fftn(out) * fine.cell_volume
    spec = _crop_spectrum(spec_fine, n_pad, n)
    return to_spatial(GridFunction(grid, spec, "spectral"))


def _apply_lattice_sum(m: MultiplierRep, fs, dealias: bool, cap=None) -> GridFunction:
    """Direct lattice sum for dense or rule symbols, chunked over the lattice.

    Groups the sum by the output frequency sum(xi_i) (unwrapped when
    dealiasing, reduced mod the lattice otherwise) and finishes with one
    inverse transform.
    """
    grid = m.grid
    n = grid.points_per_axis
    nd = grid.dims
    L = m.lattice_axes
    nodes = n**L
    _check_budget(nodes, cap)

    specs = [to_spectral(f).values.ravel() for f in fs]
    dense = m.dense.ravel() if m.form == "dense" else None
    rule = m.rule if m.form == "rule" else None
    if dense is None and rule is None:
        raise GridError("lattice sum path needs a dense or rule symbol")

    signed = _signed_index(n)
    freq = grid.freq_axis()
    out_flat = np.zeros(n**nd, dtype=complex)
    # strides (in axis counts) for decoding flat lattice positions
    weight = (1.0 / grid.period**nd) ** (m.arity - 1)

    for start in range(0, nodes, _SCATTER_CHUNK):
        stop = min(start + _SCATTER_CHUNK, nodes)
        pos = np.arange(start, stop, dtype=np.int64)
        axis_idx = []
        for a in range(L):
            stride = n ** (L - 1 - a)
            axis_idx.append((pos // stride) % n)
        # symbol values on the chunk
        if dense is not None:
            w = dense[start:stop].copy()
        else:
            coords = [freq[axis_idx[a]] for a in range(L)]
            w = np.asarray(rule(*coords), dtype=complex)
            w = np.broadcast_to(w, pos.shape).copy()
        # multiply the argument spectra
        for i in range(m.arity):
            arg_flat = np.zeros(pos.shape, dtype=np.int64)
            for b in range(nd):
                arg_flat = arg_flat * n + axis_idx[i * nd + b]
            w *= specs[i][arg_flat]
        # output frequency indices per spatial axis
        keep = np.ones(pos.shape, dtype=bool)
        zeta = []
        for b in range(nd):
            s = np.zeros(pos.shape, dtype=np.int64)
            for i in range(m.arity):
                s += signed[axis_idx[i * nd + b]]
            if dealias:
                keep &= (s >= -(n // 2)) & (s < n - n // 2)
            zeta.append(s)
        if dealias and not keep.all():
            w = w[keep]
            zeta = [z[keep] for z in zeta]
        flat_out = np.zeros(w.shape, dtype=np.int64)
        for z in zeta:
            flat_out = flat_out * n + (z % n)
        out_flat += np.bincount(flat_out, weights=w.real, minlength=n**nd) + 1j * np.bincount(
            flat_out, weights=w.imag, minlength=n**nd
        )

    spec = GridFunction(grid, (out_flat * weight).reshape(grid.shape), "spectral")
    return to_spatial(spec)


def apply_multilinear(m: MultiplierRep, fs, dealias: bool = True, cap=None) -> GridFunction:
    """Apply the l-linear operator with symbol ``m`` to the argument tuple.

    With ``dealias=True`` the combination frequencies sum(xi_i) are never
    wrapped: content the output grid cannot represent is dropped rather than
    folded back into the band.
    """
    if len(fs) != m.arity:
        raise GridError(f"expected {m.arity} arguments, got {len(fs)}")
    for f in fs:
        if not f.grid.compatible(m.grid):
            raise GridError("argument grid does not match symbol grid")
    if m.arity == 1:
        if m.form == "separable_sum":
            total = np.zeros(m.grid.shape, dtype=complex)
            for (fac,) in m.terms:
                total += fac.values
            return apply_linear(GridFunction(m.grid, total, "spectral"), fs[0])
        if m.form == "dense":
            return apply_linear(GridFunction(m.grid, m.dense, "spectral"), fs[0])
        vals = evaluate_rule_dense(m, cap=cap)
        return apply_linear(GridFunction(m.grid, vals, "spectral"), fs[0])
    if m.form == "separable_sum":
        return _apply_separable(m, fs, dealias)
    return _apply_lattice_sum(m, fs, dealias, cap=cap)


# ---------------------------------------------------------------------------
# bilinear bi-parameter paraproduct pieces
# ---------------------------------------------------------------------------

PIECE_KEYS = ("12", "22", "21")


def _axis_filter_values(bank: FilterBank, which: str, j: int) -> np.ndarray:
    table = bank.psi_hat if which == "psi" else bank.phi_hat
    return table[j].values


def _diag_psi(bank: FilterBank, j: int) -> np.ndarray:
    """Annular filter widened over the near-diagonal scales |k - j| <= sep."""
    out = np.zeros(bank.grid.shape, dtype=complex)
    for k in bank.scales:
        if abs(k - j) <= bank.separation:
            out += bank.psi_hat[k].values
    return out


def _pair_cutoff(bank: FilterBank, key: str, insert_output_window: bool) -> np.ndarray:
    """Frequency-interaction cutoff on a pair (first argument's coordinate,
    second argument's coordinate) as a 2D array over the bank's 1D lattice.

    key "12": low-high, "22": comparable, "21": high-low.
    """
    n = bank.grid.points_per_axis
    freq = bank.grid.freq_axis()
    out = np.zeros((n, n), dtype=complex)
    zeta = freq[:, None] + freq[None, :]
    for j in bank.scales:
        if key == "12":
            left = _axis_filter_values(bank, "phi", j)
            right = _axis_filter_values(bank, "psi", j)
        elif key == "21":
            left = _axis_filter_values(bank, "psi", j)
            right = _axis_filter_values(bank, "phi", j)
        else:
            left = _axis_filter_values(bank, "psi", j)
            right = _diag_psi(bank, j)
        term = left[:, None] * right[None, :]
        if insert_output_window:
            scale = np.abs(zeta) * 2.0 ** (-j)
            if key == "22":
                win = smooth_cutoff(scale, 4.0, 8.0)
            else:
                win = smooth_annulus(scale, 0.125, 0.25, 4.0, 8.0)
            term = term * win
        out += term
    return out


def check_in_band(f: GridFunction, bank: FilterBank, tol: float = 1e-12, what: str = "input"):
    """Raise CoverageError when spectral mass sits outside the covered band."""
    spec = to_spectral(f)
    freq = np.abs(bank.grid.freq_axis())
    ok_axis = (freq >= bank.band_lo - 1e-12) & (freq <= bank.band_hi + 1e-12)
    mask = np.ones(f.grid.shape, dtype=bool)
    for a in range(f.grid.dims):
        sh = [1] * f.grid.dims
        sh[a] = freq.size
        mask &= ok_axis.reshape(sh)
    bad = (~mask) & (np.abs(spec.values) > tol * max(1.0, np.abs(spec.values).max()))
    if bad.any():
        fx = bank.grid.freq_axis()
        modes = [tuple(float(fx[i]) for i in row) for row in np.argwhere(bad)[:8]]
        raise CoverageError(
            f"{what} has {int(bad.sum())} spectral nodes outside the covered band "
            f"[{bank.band_lo}, {bank.band_hi}]; first offenders (cycles): {modes}"
        )


def paraproduct_pieces(
    m: MultiplierRep,
    f: GridFunction,
    g: GridFunction,
    bank: FilterBank,
    insert_output_window: bool = False,
    dealias: bool = True,
    cap=None,
) -> dict:
    """The nine frequency-interaction pieces of a bilinear bi-parameter symbol.

    Piece (a, b) multiplies the symbol by the pair cutoff a on the first
    parameter's coordinates (axes 0 and 2 of the product lattice) and b on the
    second parameter's (axes 1 and 3).  On inputs whose per-axis spectrum sits
    in the bank's covered band the pieces sum to the full operator.
    """
    if m.arity != 2 or m.params != 2 or m.base_dim != 1:
        raise GridError("paraproduct decomposition is bilinear bi-parameter (l=2, d=2, n=1)")
    if not bank.grid.compatible(Grid(1, m.grid.points_per_axis, m.grid.period)):
        raise GridError("bank must live on the 1D axis grid of the symbol lattice")
    check_in_band(f, bank, what="first argument")
    check_in_band(g, bank, what="second argument")

    if m.form == "dense":
        base = m.dense
    else:
        base = evaluate_rule_dense(m, cap=cap)

    cut = {key: _pair_cutoff(bank, key, insert_output_window) for key in PIECE_KEYS}
    pieces = {}
    for a in PIECE_KEYS:
        for b in PIECE_KEYS:
            # axes: (xi1, xi2, eta1, eta2); parameter 1 pairs (0, 2), parameter 2 (1, 3)
            sym = base * cut[a][:, None, :, None] * cut[b][None, :, None, :]
            rep = MultiplierRep(2, 2, 1, m.grid, "dense", dense=sym)
            pieces[(a, b)] = apply_multilinear(rep, [f, g], dealias=dealias, cap=cap)
    return pieces


# ---------------------------------------------------------------------------
# localization and shell decomposition
# ---------------------------------------------------------------------------


def symbol_grid_dual(grid: Grid) -> Grid:
    """Grid of the transform-side variables of a symbol lattice."""
    return Grid(grid.dims, grid.points_per_axis, grid.points_per_axis / grid.period)


@dataclass
class LocalizedSymbol:
    """A dilated symbol restricted by per-parameter windows, with its kernel."""

    dilations: tuple
    windowed: GridFunction  # on the symbol product grid, argument-major axes
    kernel: GridFunction  # on the dual lattice, same axes
    arity: int
    params: int
    base_dim: int

    @property
    def groups(self) -> list:
        return parameter_groups(self.arity, self.params, self.base_dim)


def localize_symbol(
    m: MultiplierRep,
    dilations,
    symbol_grid: Grid,
    window: str = "annulus_window",
) -> LocalizedSymbol:
    """Windowed dilate: m(2^k1 per parameter 1, ...) times the per-parameter
    window, sampled on ``symbol_grid`` raised to the product lattice."""
    dilations = tuple(int(k) for k in dilations)
    if len(dilations) != m.params:
        raise ParameterError("need one dilation per parameter")
    l, d, n = m.arity, m.params, m.base_dim
    prod_dims = l * d * n
    prod_grid = Grid(prod_dims, symbol_grid.points_per_axis, symbol_grid.period)
    nodes = prod_grid.points_per_axis**prod_dims
    _check_budget(nodes)

    if m.rule is not None:
        ax = prod_grid.freq_axis()
        coords = []
        for i in range(l):
            for j in range(d):
                for r in range(n):
                    a = product_axis(l, d, n, i, j, r)
                    sh = [1] * prod_dims
                    sh[a] = ax.size
                    coords.append((ax * 2.0 ** dilations[j]).reshape(sh))
        vals = np.asarray(m.rule(*coords), dtype=complex) + np.zeros(prod_grid.shape, complex)
    elif m.form == "dense":
        vals = _resample_dense_dyadic(m, dilations, prod_grid)
    elif m.form == "separable_sum":
        vals = _resample_dense_dyadic(separable_to_dense(m), dilations, prod_grid)
    else:
        raise GridError("symbol form cannot be localized")

    for axes in parameter_groups(l, d, n):
        vals = vals * window_theta(prod_grid, window, axes=axes).values

    windowed = GridFunction(prod_grid, vals, "spatial")
    kern_vals = transform(windowed, "forward").values
    kernel = GridFunction(symbol_grid_dual(prod_grid), kern_vals, "spatial")
    return LocalizedSymbol(dilations, windowed, kernel, l, d, n)


def _resample_dense_dyadic(m: MultiplierRep, dilations, prod_grid: Grid) -> np.ndarray:
    """Index-shift resampling of a dense symbol under dyadic dilation.

    Requires target and source lattices to coincide; a dilated node that
    falls off the source lattice raises rather than interpolates, and one
    beyond the source band reads zero.
    """
    if not (
        m.grid.points_per_axis == prod_grid.points_per_axis
        and np.isclose(m.grid.period, prod_grid.period, rtol=1e-12)
    ):
        raise AlignmentError("dense symbol lattice does not match the requested grid")
    n = m.grid.points_per_axis
    signed = _signed_index(n)
    l, d, nb = m.arity, m.params, m.base_dim
    gathered = np.zeros(prod_grid.shape, dtype=complex)
    # per-axis source index: signed index scaled by 2^k, or out-of-band
    idx_maps = []
    ok_maps = []
    for j in range(d):
        k = dilations[j]
        if k >= 0:
            src = signed * (2**k)
        else:
            step = 2 ** (-k)
            if np.any(signed % step):
                bad = signed[signed % step != 0]
                raise AlignmentError(
                    f"dilation 2^{k} sends lattice nodes {bad[:4]}... off the dense lattice"
                )
            src = signed // step
        ok = (src >= -(n // 2)) & (src < n - n // 2)
        idx_maps.append(np.where(ok, src % n, 0))
        ok_maps.append(ok)
    idx_per_axis = []
    ok_full = np.ones(prod_grid.shape, dtype=bool)
    L = l * d * nb
    for i in range(l):
        for j in range(d):
            for r in range(nb):
                a = product_axis(l, d, nb, i, j, r)
                sh = [1] * L
                sh[a] = n
                idx_per_axis.append(idx_maps[j].reshape(sh))
                ok_full &= ok_maps[j].reshape(sh) * np.ones(prod_grid.shape, dtype=bool)
    gathered = m.dense[tuple(np.broadcast_arrays(*idx_per_axis))]
    return np.where(ok_full, gathered, 0.0)


@dataclass
class ShellDecomposition:
    """Partition of a localized kernel into per-parameter radial shells.

    Shell (M_1, ..., M_d) is the restriction of the kernel to the set where
    the parameter-j transform variables have length in (2^(M_j - 1), 2^(M_j)]
    (M_j = 0 meaning the unit ball).  Sharp indicator cutoffs, so the shells
    sum to the kernel exactly on the grid.
    """

    source: LocalizedSymbol
    shells: dict

    def reconstruct(self) -> np.ndarray:
        return sum(p.values for p in self.shells.values())

    def piece_symbol(self, key) -> GridFunction:
        """Symbol whose kernel is the given shell piece (inverse map of the
        localization transform)."""
        piece = self.shells[key]
        vals = transform(
            GridFunction(self.source.windowed.grid, piece.values, "spectral"), "inverse"
        ).values
        return GridFunction(self.source.windowed.grid, vals, "spatial")


def shell_decompose(loc: LocalizedSymbol, m_max: int = None) -> ShellDecomposition:
    kern = loc.kernel
    grid = kern.grid
    groups = loc.groups
    radii = []
    for axes in groups:
        r2 = 0.0
        ax = grid.spatial_axis(centered=True)
        for a in axes:
            sh = [1] * grid.dims
            sh[a] = ax.size
            r2 = r2 + (ax**2).reshape(sh)
        radii.append(np.sqrt(r2) * np.ones(grid.shape))
    # shell index: 0 on |v| <= 1, else ceil(log2 |v|)
    def shell_index(r):
        out = np.zeros(grid.shape, dtype=np.int64)
        far = r > 1.0
        out[far] = np.ceil(np.log2(r[far]) - 1e-12).astype(np.int64)
        return out

    indices = [shell_index(r) for r in radii]
    needed = max(int(ix.max()) for ix in indices)
    if m_max is None:
        m_max = needed
    if m_max < needed:
        raise ParameterError(
            f"m_max={m_max} does not cover the kernel support (needs {needed})"
        )
    shells = {}
    from itertools import product as iproduct

    for key in iproduct(range(m_max + 1), repeat=len(groups)):
        mask = np.ones(grid.shape, dtype=bool)
        for ix, mj in zip(indices, key):
            mask &= ix == mj
        if mask.any():
            shells[key] = GridFunction(grid, np.where(mask, kern.values, 0.0), "spatial")
    return ShellDecomposition(loc, shells)
