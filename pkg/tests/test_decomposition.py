import numpy as np
import pytest

from oscnorm.decomposition import (
    DecompositionError,
    bcz_2d,
    cz_dyadic,
    rising_sun_1d,
)
from oscnorm.grid import (
    CellMeasure,
    GridDomain,
    GridFunction,
    RealInterval,
    Rect,
    build_mu_dyadic_tree,
    integrate,
    region_mass,
)
from oscnorm.verify import brute_force_maximal_dyadic, gen_weights_nondoubling


def test_cz_all_below_L_selects_nothing():
    dom = GridDomain(dim=1, cells_per_side=8)
    m = CellMeasure.uniform(dom)
    g = GridFunction(dom, np.full(8, 0.3))
    res = cz_dyadic(g, None, 0.5, m)
    assert res.selected == []
    assert res.good_mask.all()
    assert res.mass_ratio == 0.0


def test_cz_four_cell_example():
    dom = GridDomain(dim=1, cells_per_side=4)
    m = CellMeasure.uniform(dom)
    g = GridFunction(dom, np.array([1.0, 0.0, 0.0, 0.0]))
    res = cz_dyadic(g, None, 0.5, m)
    assert len(res.selected) == 1
    cube, avg = res.selected[0]
    assert (cube.level, cube.index) == (2, (0,))
    assert avg == pytest.approx(1.0)
    assert 0.5 < avg <= 2 * 0.5
    assert res.mass_ratio == pytest.approx(0.25)
    assert res.mass_ratio <= (0.25) / 0.5 + 1e-15


def test_cz_precondition():
    dom = GridDomain(dim=1, cells_per_side=4)
    m = CellMeasure.uniform(dom)
    g = GridFunction(dom, np.full(4, 2.0))
    with pytest.raises(DecompositionError):
        cz_dyadic(g, None, 1.0, m)
    with pytest.raises(DecompositionError):
        cz_dyadic(GridFunction(dom, np.array([-1.0, 0, 0, 0])), None, 1.0, m)


@pytest.mark.parametrize("dim,cells", [(1, 64), (2, 8)])
def test_cz_random_bullets_and_maximality(dim, cells):
    rng = np.random.default_rng(42 + dim)
    dom = GridDomain(dim=dim, cells_per_side=cells)
    for trial in range(25):
        w = (
            np.full(dom.shape, dom.cell_volume)
            if trial % 2 == 0
            else rng.uniform(0.05, 1.0, dom.shape)
        )
        m = CellMeasure(dom, w)
        g = GridFunction(dom, rng.uniform(0.0, 1.0, dom.shape) ** 2)
        base = Rect((0,) * dim, dom.shape)
        avg = integrate(g, base, m) / m.total
        L = avg * rng.uniform(1.2, 6.0)
        res = cz_dyadic(g, None, L, m)
        uniform = trial % 2 == 0
        sel_mass = 0.0
        for cube, a in res.selected:
            rect = cube.to_rect(dom)
            mu = region_mass(m, rect)
            a_check = integrate(g, rect, m) / mu
            assert a == pytest.approx(a_check, rel=1e-12)
            assert a > L * (1 - 1e-12)
            if uniform:
                assert a <= 2 ** dim * L * (1 + 1e-12)
            sel_mass += mu
        # good set is cell-exact for the standard engine
        good_vals = g.values[res.good_mask & (w > 0)]
        if good_vals.size:
            assert good_vals.max() <= L
        assert res.mass_ratio == pytest.approx(sel_mass / m.total, rel=1e-12)
        assert res.mass_ratio <= avg / L + 1e-12
        got = {(c.level,) + c.index for c, _ in res.selected}
        assert got == brute_force_maximal_dyadic(g, m, L)


def test_cz_mu_tree_two_L_bound():
    rng = np.random.default_rng(7)
    dom = GridDomain(dim=1, cells_per_side=64)
    for trial in range(20):
        m = CellMeasure(dom, gen_weights_nondoubling(dom, rng, 10.0 ** rng.uniform(1, 5)))
        g = GridFunction(dom, rng.uniform(0.0, 1.0, 64))
        tree = build_mu_dyadic_tree((0.0, 1.0), m, depth=6)
        avg = integrate(g, tree.root.interval, m) / tree.root.mass
        L = avg * rng.uniform(1.1, 4.0)
        res = cz_dyadic(g, None, L, m, tree=tree)
        for iv, a in res.selected:
            mu = region_mass(m, iv)
            a_check = integrate(g, iv, m) / mu
            assert a == pytest.approx(a_check, rel=1e-9)
            assert L * (1 - 1e-12) < a <= 2 * L * (1 + 1e-9)
        assert res.mass_ratio <= avg / L + 1e-9
        # selected intervals are pairwise disjoint
        ivs = sorted((iv.a, iv.b) for iv, _ in res.selected)
        for (a0, b0), (a1, b1) in zip(ivs, ivs[1:]):
            assert b0 <= a1 + 1e-12


# ---------------------------------------------------------------------------
# rising sun
# ---------------------------------------------------------------------------


def test_sun_constant_empty():
    dom = GridDomain(dim=1, cells_per_side=8)
    m = CellMeasure.uniform(dom)
    h = GridFunction(dom, np.full(8, 1.0))
    res = rising_sun_1d(h, None, 2.5, m)
    assert res.selected == []


def test_sun_two_step_example():
    dom = GridDomain(dim=1, cells_per_side=8)
    m = CellMeasure.uniform(dom)
    h = GridFunction(dom, np.where(np.arange(8) < 4, 1.0, 3.0))
    res = rising_sun_1d(h, None, 2.5, m)
    assert len(res.selected) == 1
    iv, avg = res.selected[0]
    assert iv.a == pytest.approx(1.0 / 3.0, abs=1e-9)
    assert iv.b == pytest.approx(1.0, abs=1e-9)
    assert avg == pytest.approx(2.5, abs=1e-9)
    # off the union h = 1 <= 2.5
    assert res.good_mask[:2].all()


def test_sun_level_below_mean_rejected():
    dom = GridDomain(dim=1, cells_per_side=4)
    m = CellMeasure.uniform(dom)
    h = GridFunction(dom, np.full(4, 3.0))
    with pytest.raises(DecompositionError):
        rising_sun_1d(h, None, 2.0, m)


def test_sun_interior_bump_closes_at_own_level():
    # descent, rebound, final drop: the selected interval brackets the
    # rebound at the level of its base
    dom = GridDomain(dim=1, cells_per_side=8)
    m = CellMeasure.uniform(dom)
    h = GridFunction(dom, np.array([0.0, 0.0, 3.0, 3.0, 0.0, 0.0, 0.0, 0.0]))
    lam = 2.0
    res = rising_sun_1d(h, None, lam, m)
    assert len(res.selected) == 1
    iv, avg = res.selected[0]
    assert avg == pytest.approx(lam, abs=1e-12)
    assert iv.a <= 0.25 and iv.b >= 0.5  # covers the bump


@pytest.mark.parametrize("seed", range(40))
def test_sun_random_postconditions(seed):
    rng = np.random.default_rng(seed)
    dom = GridDomain(dim=1, cells_per_side=32)
    w = rng.uniform(0.0, 1.0, 32) ** 2 + (0.0 if seed % 3 else 0.2)
    if w.sum() == 0:
        w[:] = 1.0
    m = CellMeasure(dom, w)
    h = GridFunction(dom, rng.uniform(0.0, 2.0, 32))
    mean = integrate(h, Rect((0,), (32,)), m) / m.total
    top = h.values[w > 0].max()
    if top <= mean:
        return
    lam = mean + (top - mean) * rng.uniform(0.2, 0.9)
    res = rising_sun_1d(h, None, lam, m)
    prev_b = -np.inf
    for iv, avg in sorted(res.selected, key=lambda t: t[0].a):
        assert avg == pytest.approx(lam, abs=1e-9 * max(1.0, lam))
        assert iv.a >= prev_b - 1e-12
        prev_b = iv.b
    good = h.values[res.good_mask & (w > 0)]
    if good.size:
        assert good.max() <= lam + 1e-12
    assert res.mass_ratio <= integrate(h, Rect((0,), (32,)), m) / (lam * m.total) + 1e-9


# ---------------------------------------------------------------------------
# Besicovitch-CZ
# ---------------------------------------------------------------------------


def test_bcz_all_below_L_empty():
    dom = GridDomain(dim=2, cells_per_side=4)
    m = CellMeasure.uniform(dom)
    g = GridFunction(dom, np.full((4, 4), 0.5))
    res, fams = bcz_2d(g, None, 1.0, m)
    assert res.selected == []
    assert fams.family_count == 0


def test_bcz_single_bump():
    dom = GridDomain(dim=2, cells_per_side=8)
    m = CellMeasure.uniform(dom)
    vals = np.zeros((8, 8))
    vals[3, 4] = 16.0
    g = GridFunction(dom, vals)
    L = 2.0
    res, fams = bcz_2d(g, None, L, m)
    assert res.selected
    for box, avg in res.selected:
        mu = region_mass(m, box)
        a = integrate(g, box, m) / mu
        assert a == pytest.approx(L, rel=1e-6)
        assert avg == pytest.approx(a, rel=1e-9)
    # the bump cell is covered
    assert not res.good_mask[3, 4]
    assert fams.family_count >= 1


def test_bcz_random_postconditions():
    rng = np.random.default_rng(5)
    dom = GridDomain(dim=2, cells_per_side=8)
    for trial in range(10):
        w = rng.uniform(0.2, 1.0, (8, 8))
        m = CellMeasure(dom, w)
        g = GridFunction(dom, rng.uniform(0.0, 1.0, (8, 8)) ** 2)
        base = Rect((0, 0), (8, 8))
        avg = integrate(g, base, m) / m.total
        top = g.values.max()
        if top <= avg * 1.3:
            continue
        L = avg + (top - avg) * 0.4
        res, fams = bcz_2d(g, None, L, m)
        for box, a in res.selected:
            assert a == pytest.approx(L, rel=1e-6)
        # families are internally disjoint and partition the selection
        seen = set()
        for fam in fams.families:
            for i in fam:
                seen.add(i)
            for ai in range(len(fam)):
                for bi in range(ai + 1, len(fam)):
                    b1 = res.selected[fam[ai]][0]
                    b2 = res.selected[fam[bi]][0]
                    ox = min(b1.x1, b2.x1) - max(b1.x0, b2.x0)
                    oy = min(b1.y1, b2.y1) - max(b1.y0, b2.y0)
                    assert ox <= 1e-12 or oy <= 1e-12
        assert seen == set(range(len(res.selected)))
        good = g.values[res.good_mask & (w > 0)]
        if good.size:
            assert good.max() <= L
        total_sel = sum(region_mass(m, box) for box, _ in res.selected)
        if fams.family_count:
            assert total_sel <= fams.family_count / L * integrate(g, base, m) + 1e-9


def test_bcz_precondition():
    dom = GridDomain(dim=2, cells_per_side=4)
    m = CellMeasure.uniform(dom)
    g = GridFunction(dom, np.full((4, 4), 2.0))
    with pytest.raises(DecompositionError):
        bcz_2d(g, None, 1.0, m)
