import numpy as np
import pytest

from multiplierlab.filters import build_dyadic_bank, filter_convolve
from multiplierlab.grid import (
    Grid,
    GridFunction,
    lp_norm,
    pointwise_product,
    random_band_limited,
    to_spectral,
)
from multiplierlab.multiplier import (
    AlignmentError,
    BudgetError,
    CoverageError,
    MultiplierRep,
    apply_linear,
    apply_multilinear,
    localize_symbol,
    paraproduct_pieces,
    parameter_groups,
    separable_to_dense,
    shell_decompose,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def rand_fn(grid, band, seed):
    return random_band_limited(grid, band, rng(seed))


def test_apply_linear_identity_and_shift():
    g = Grid(dims=1, points_per_axis=32, period=2.0)
    f = rand_fn(g, 4, 1)
    one = GridFunction(g, np.ones(g.shape, dtype=complex), "spectral")
    assert np.allclose(apply_linear(one, f).values, f.values, atol=1e-12)
    # e^{-2 pi i xi a} translates by a grid multiple a
    a = 3 * g.spacing
    shift = GridFunction(g, np.exp(-2j * np.pi * g.freq_axis() * a), "spectral")
    out = apply_linear(shift, f)
    assert np.allclose(out.values, np.roll(f.values, 3), atol=1e-10)


def test_apply_linear_matches_convolution():
    g = Grid(dims=1, points_per_axis=32, period=1.0)
    bank = build_dyadic_bank(g, 1, 4, 2)
    f = rand_fn(g, 8, 2)
    assert np.allclose(
        apply_linear(bank.psi_hat[3], f).values,
        filter_convolve(bank.psi_hat[3], f).values,
        atol=1e-12,
    )


def brute_force_bilinear(m_vals, f, g, dealias):
    """Direct double lattice sum over (xi, eta), the defining formula."""
    grid = f.grid
    n = grid.points_per_axis
    fs = to_spectral(f).values
    gs = to_spectral(g).values
    freq = grid.freq_axis()
    x = grid.spatial_axis(centered=False)
    nyq_lo, nyq_hi = -(n // 2), n - n // 2
    k = np.rint(freq * grid.period).astype(int)
    out = np.zeros(n, dtype=complex)
    for a in range(n):
        for b in range(n):
            if dealias and not (nyq_lo <= k[a] + k[b] < nyq_hi):
                continue
            out += (
                m_vals[a, b]
                * fs[a]
                * gs[b]
                * np.exp(2j * np.pi * x * (freq[a] + freq[b]))
            )
    return out / grid.period**2


def test_dense_bilinear_against_direct_sum():
    g = Grid(dims=1, points_per_axis=8, period=1.0)
    f = rand_fn(g, 2, 3)
    h = rand_fn(g, 2, 4)
    m_vals = rng(5).standard_normal((8, 8)) + 1j * rng(6).standard_normal((8, 8))
    rep = MultiplierRep(2, 1, 1, g, "dense", dense=m_vals)
    for dealias in (False, True):
        got = apply_multilinear(rep, [f, h], dealias=dealias)
        want = brute_force_bilinear(m_vals, f, h, dealias)
        assert np.allclose(got.values, want, atol=1e-10)


def test_constant_symbol_is_pointwise_product():
    g = Grid(dims=1, points_per_axis=64, period=1.0)
    f = rand_fn(g, 8, 7)
    h = rand_fn(g, 8, 8)
    one = MultiplierRep(2, 1, 1, g, "rule", rule=lambda xi, eta: np.ones(np.broadcast(xi, eta).shape))
    got = apply_multilinear(one, [f, h], dealias=True)
    want = pointwise_product(f, h)
    rel = np.linalg.norm(got.values - want.values) / np.linalg.norm(want.values)
    assert rel < 1e-10
    # no spurious modes beyond the combined band
    spec = to_spectral(got)
    k = np.abs(g.freq_axis())
    assert np.all(np.abs(spec.values[k > 16.5]) < 1e-12 * np.abs(spec.values).max())


def test_arity_one_reduces_to_linear():
    g = Grid(dims=1, points_per_axis=16, period=1.0)
    f = rand_fn(g, 4, 9)
    sym = rng(10).standard_normal(16) + 1j * rng(11).standard_normal(16)
    rep = MultiplierRep(1, 1, 1, g, "dense", dense=sym)
    got = apply_multilinear(rep, [f])
    want = apply_linear(GridFunction(g, sym, "spectral"), f)
    assert np.allclose(got.values, want.values, atol=1e-12)


def _random_separable(g, n_terms, seed):
    r = rng(seed)
    terms = []
    for _ in range(n_terms):
        terms.append(
            tuple(
                GridFunction(g, r.standard_normal(g.shape) + 1j * r.standard_normal(g.shape), "spectral")
                for _ in range(2)
            )
        )
    return MultiplierRep(2, 1, 1, g, "separable_sum", terms=terms)


def test_separable_matches_dense():
    g = Grid(dims=1, points_per_axis=8, period=1.0)
    sep = _random_separable(g, 3, 12)
    dense = separable_to_dense(sep)
    f = rand_fn(g, 2, 13)
    h = rand_fn(g, 2, 14)
    for dealias in (True, False):
        a = apply_multilinear(sep, [f, h], dealias=dealias)
        b = apply_multilinear(dense, [f, h], dealias=dealias)
        rel = np.linalg.norm(a.values - b.values) / max(np.linalg.norm(b.values), 1e-300)
        assert rel < 1e-9


def test_separable_dealias_pads_full_band_inputs():
    # inputs filling the band force the padded product path; the result must
    # match the dense scatter path, which drops unrepresentable output modes
    g = Grid(dims=1, points_per_axis=16, period=1.0)
    r = rng(20)
    f = GridFunction(g, r.standard_normal(16) + 1j * r.standard_normal(16))
    h = GridFunction(g, r.standard_normal(16) + 1j * r.standard_normal(16))
    sep = _random_separable(g, 2, 21)
    dense = separable_to_dense(sep)
    a = apply_multilinear(sep, [f, h], dealias=True)
    b = apply_multilinear(dense, [f, h], dealias=True)
    assert np.allclose(a.values, b.values, atol=1e-9 * np.abs(b.values).max())


def test_multilinearity():
    g = Grid(dims=1, points_per_axis=16, period=1.0)
    rep = _random_separable(g, 2, 30)
    f1, f2, h = rand_fn(g, 4, 31), rand_fn(g, 4, 32), rand_fn(g, 4, 33)
    lhs = apply_multilinear(rep, [GridFunction(g, 2.0 * f1.values + f2.values), h])
    rhs = (
        2.0 * apply_multilinear(rep, [f1, h]).values
        + apply_multilinear(rep, [f2, h]).values
    )
    assert np.allclose(lhs.values, rhs, atol=1e-10 * np.abs(rhs).max())


def test_budget_error():
    g = Grid(dims=1, points_per_axis=64, period=1.0)
    rep = MultiplierRep(2, 1, 1, g, "rule", rule=lambda a, b: np.ones(np.broadcast(a, b).shape))
    f = rand_fn(g, 8, 40)
    with pytest.raises(BudgetError):
        apply_multilinear(rep, [f, f], cap=1000)


# ---------------------------------------------------------------------------
# paraproduct pieces
# ---------------------------------------------------------------------------


def _biparam_setup(ng=16, seed=50):
    axis = Grid(dims=1, points_per_axis=ng, period=1.0)
    bank = build_dyadic_bank(axis, 0, 3, separation=1)
    arg = Grid(dims=2, points_per_axis=ng, period=1.0)
    r = rng(seed)

    def in_band_fn(seed_):
        rr = rng(seed_)
        spec = rr.standard_normal((ng, ng)) + 1j * rr.standard_normal((ng, ng))
        k = np.abs(axis.freq_axis())
        ok = (k >= bank.band_lo) & (k <= bank.band_hi)
        mask = ok[:, None] & ok[None, :]
        return GridFunction(arg, np.where(mask, spec, 0.0), "spectral")

    return axis, bank, arg, in_band_fn


def test_paraproduct_pieces_sum_to_operator():
    axis, bank, arg, mk = _biparam_setup()
    from multiplierlab.grid import to_spatial

    f = to_spatial(mk(51))
    g = to_spatial(mk(52))
    r = rng(53)
    m_vals = r.standard_normal((16,) * 4) + 1j * r.standard_normal((16,) * 4)
    rep = MultiplierRep(2, 2, 1, arg, "dense", dense=m_vals)
    pieces = paraproduct_pieces(rep, f, g, bank)
    assert len(pieces) == 9
    total = sum(p.values for p in pieces.values())
    direct = apply_multilinear(rep, [f, g])
    rel = np.linalg.norm(total - direct.values) / np.linalg.norm(direct.values)
    assert rel < 1e-9


def test_paraproduct_support_separation():
    # f low in variable 1, g high: only the low-high interaction survives there
    axis, bank, arg, _ = _biparam_setup()
    from multiplierlab.grid import to_spatial

    ng = 16
    k = np.abs(axis.freq_axis())
    f_spec = np.zeros((ng, ng), dtype=complex)
    g_spec = np.zeros((ng, ng), dtype=complex)
    mid = (k >= 1) & (k <= 4)
    lowv = np.isclose(k, 1.0)
    high = np.isclose(k, 4.0)  # scales 0 and 2: separated by more than the gap
    f_spec[np.ix_(lowv, mid)] = 1.0
    g_spec[np.ix_(high, mid)] = 1.0
    f = to_spatial(GridFunction(arg, f_spec, "spectral"))
    g = to_spatial(GridFunction(arg, g_spec, "spectral"))
    one = MultiplierRep(
        2, 2, 1, arg, "rule", rule=lambda *c: np.ones(np.broadcast(*c).shape)
    )
    pieces = paraproduct_pieces(one, f, g, bank)
    # with |xi_1| = 2 and |eta_1| = 4, scales j(f) << j(g) in variable 1 only
    # pieces whose first-variable cutoff is low-high can be nonzero
    norm_by_key = {key: np.linalg.norm(p.values) for key, p in pieces.items()}
    top = max(norm_by_key.values())
    assert top > 0
    for (a, b), val in norm_by_key.items():
        if a != "12":
            assert val < 1e-10 * top


def test_paraproduct_output_window_insertion_is_neutral():
    axis, bank, arg, mk = _biparam_setup()
    from multiplierlab.grid import to_spatial

    f = to_spatial(mk(61))
    g = to_spatial(mk(62))
    r = rng(63)
    m_vals = r.standard_normal((16,) * 4) + 1j * r.standard_normal((16,) * 4)
    rep = MultiplierRep(2, 2, 1, arg, "dense", dense=m_vals)
    plain = paraproduct_pieces(rep, f, g, bank, insert_output_window=False)
    inserted = paraproduct_pieces(rep, f, g, bank, insert_output_window=True)
    for key in plain:
        a, b = np.linalg.norm(plain[key].values), 0.0
        diff = np.linalg.norm(plain[key].values - inserted[key].values)
        scale = max(np.linalg.norm(plain[key].values), 1e-300)
        assert diff / scale < 1e-9


def test_paraproduct_rejects_out_of_band():
    axis, bank, arg, _ = _biparam_setup()
    from multiplierlab.grid import to_spatial

    bad_spec = np.zeros((16, 16), dtype=complex)
    bad_spec[0, 3] = 1.0  # zero frequency in variable 1: below the band
    bad = to_spatial(GridFunction(arg, bad_spec, "spectral"))
    good = to_spatial(GridFunction(arg, np.roll(bad_spec, 2, axis=0), "spectral"))
    one = MultiplierRep(2, 2, 1, arg, "rule", rule=lambda *c: np.ones(np.broadcast(*c).shape))
    with pytest.raises(CoverageError):
        paraproduct_pieces(one, bad, good, bank)


# ---------------------------------------------------------------------------
# localization and shells
# ---------------------------------------------------------------------------


def _annulus_rule_symbol(grid):
    # tensor bump supported in the unit annulus of the 2D product space
    def rule(xi, eta):
        r = np.sqrt(np.broadcast_to(xi, np.broadcast(xi, eta).shape) ** 2 + eta**2)
        return np.exp(-((r - 1.0) ** 2) / 0.005) * (np.abs(r - 1.0) < 0.25)

    return MultiplierRep(
        2, 1, 1, grid, "rule", rule=rule, support_radii=[(0.75, 1.25)]
    )


def test_localize_window_plateau_identity():
    g = Grid(dims=1, points_per_axis=128, period=8.0)
    m = _annulus_rule_symbol(g)
    loc = localize_symbol(m, (0,), g, window="annulus_window")
    # the symbol's support [0.75, 1.25] sits inside the window plateau
    from multiplierlab.multiplier import evaluate_rule_dense

    bare = evaluate_rule_dense(m)
    assert np.allclose(loc.windowed.values, bare, atol=1e-12)
    # dilating by 2^4 pushes the support far below the window annulus
    loc2 = localize_symbol(m, (4,), g, window="annulus_window")
    assert np.max(np.abs(loc2.windowed.values)) < 1e-12


def test_localize_dense_alignment_error():
    g = Grid(dims=1, points_per_axis=16, period=1.0)
    r = rng(70)
    rep = MultiplierRep(2, 1, 1, g, "dense", dense=r.standard_normal((16, 16)) + 0j)
    with pytest.raises(AlignmentError):
        localize_symbol(rep, (-1,), g)


def test_shells_unit_ball_kernel():
    # a kernel supported in the unit ball: only the M=0 shell is nonzero
    g = Grid(dims=1, points_per_axis=64, period=4.0)
    m = _annulus_rule_symbol(g)
    loc = localize_symbol(m, (0,), g)
    dual = loc.kernel.grid
    ball = np.zeros(dual.shape, dtype=complex)
    ax = dual.spatial_axis(centered=True)
    rr = np.sqrt(ax[:, None] ** 2 + ax[None, :] ** 2)
    ball[rr <= 0.9] = 1.0
    loc_ball = type(loc)(loc.dilations, loc.windowed, GridFunction(dual, ball, "spatial"), 2, 1, 1)
    dec = shell_decompose(loc_ball)
    nonzero = [k for k, p in dec.shells.items() if np.abs(p.values).max() > 0]
    assert nonzero == [(0,)]


def test_shells_reconstruct_exactly_and_apply():
    g = Grid(dims=1, points_per_axis=32, period=4.0)
    m = _annulus_rule_symbol(g)
    loc = localize_symbol(m, (0,), g)
    dec = shell_decompose(loc)
    recon = dec.reconstruct()
    assert np.array_equal(recon, loc.kernel.values) or np.allclose(
        recon, loc.kernel.values, atol=0
    )
    # applying the operator with each shell-restricted kernel and summing
    # reproduces the windowed-symbol operator
    f = rand_fn(g, 2, 80)
    h = rand_fn(g, 2, 81)
    windowed_rep = MultiplierRep(2, 1, 1, g, "dense", dense=loc.windowed.values)
    want = apply_multilinear(windowed_rep, [f, h])
    got = np.zeros(g.shape, dtype=complex)
    for key in dec.shells:
        piece_rep = MultiplierRep(2, 1, 1, g, "dense", dense=dec.piece_symbol(key).values)
        got += apply_multilinear(piece_rep, [f, h]).values
    rel = np.linalg.norm(got - want.values) / np.linalg.norm(want.values)
    assert rel < 1e-9


def test_parameter_groups_layout():
    assert parameter_groups(2, 2, 1) == [(0, 2), (1, 3)]
    assert parameter_groups(3, 1, 1) == [(0, 1, 2)]
    assert parameter_groups(2, 1, 2) == [(0, 1, 2, 3)]
    assert parameter_groups(2, 2, 2) == [(0, 1, 4, 5), (2, 3, 6, 7)]
