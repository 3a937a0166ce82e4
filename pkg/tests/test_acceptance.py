"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The corpora follow the
stated sizes (50 functions at 2**10 cells in 1-D and 64 per side in 2-D for
the cube criteria, 500 rising-sun and Vitali instances, and so on); the
whole module is budgeted to finish inside five minutes.
"""
import time

import numpy as np
import pytest

from oscnorm.gauge import (
    GaugeProbe,
    IdentityGauge,
    LogOnePlusGauge,
    PolygonalGauge,
    PowerGauge,
    concave_minorant,
)
from oscnorm.grid import (
    CellMeasure,
    GridDomain,
    GridFunction,
    Rect,
    build_mu_dyadic_tree,
    integrate,
    mu_dyadic_split,
    region_arrays,
    region_mass,
)
from oscnorm.oscillation import RegionFamily, lux_bisect, osc_gauge_infc
from oscnorm.sht import Ball, FiniteSHT, vitali_select
from oscnorm.verify import (
    Corpus,
    gen_weights_nondoubling,
    make_sht_instances,
    standard_corpus,
    verify_decompositions,
    verify_sht,
    verify_thm_general,
    verify_thm_main,
    verify_thm_nondoubling_1d,
    verify_thm_rect,
)

T_START = time.time()

GAUGES = {
    "id": IdentityGauge(),
    "power0.5": PowerGauge(0.5),
    "log1p": LogOnePlusGauge(1.0),
    "polygonal": PolygonalGauge(vertices=((0, 0), (1, 1), (3, 2), (7, 3)), final_slope=1 / 8),
}


def announce(num: int, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def main_corpus():
    # 42 one-dimensional functions at 2**10 cells plus 8 at 64 per side in
    # 2-D, uniform measure, plus small instances for all-cubes diagnostics
    return standard_corpus(seed=7, cells_1d=1024, cells_2d=64, n_1d=42, n_2d=8, small_diag=4)


@pytest.fixture(scope="module")
def main_reports(main_corpus):
    return {name: verify_thm_main(main_corpus, g) for name, g in GAUGES.items()}


def test_criterion_1_lower_bound_per_region(main_corpus, main_reports):
    total = len(main_corpus)
    worst = 0.0
    for name, rep in main_reports.items():
        rows = [r for r in rep.rows if r.quantity == "jensen_per_region"]
        assert len(rows) >= 50
        for r in rows:
            assert r.kind == "assert" and r.passed, (name, r.to_json())
            worst = max(worst, -r.slack)
    announce(
        1,
        worst <= 1e-8,
        f"per-region Jensen bound over {total} functions x {len(GAUGES)} gauges, "
        f"worst slack {-worst:.2e} >= -1e-8",
    )


def test_criterion_2_upper_bound_dyadic(main_reports):
    bad = []
    checked = 0
    for name, rep in main_reports.items():
        for r in rep.rows:
            if r.quantity in ("upper_dyadic_infc", "upper_dyadic_X"):
                checked += 1
                if not r.passed:
                    bad.append((name, r.to_json()))
    announce(
        2,
        not bad,
        f"dyadic upper bound with constant 2 phi^-1(4) + phi^-1(2+2^(n+2)): "
        f"{checked} assertions, {len(bad)} violations",
    )


def test_criterion_3_cz_bullets():
    # 200 seeded (g, L) instances: 25 one-dimensional and 25 two-dimensional
    # functions, four heights each, all on grids of at most 2**8 cells
    c1 = standard_corpus(seed=101, cells_1d=256, n_1d=25, n_2d=0, small_diag=0)
    c2 = standard_corpus(seed=102, cells_2d=16, n_1d=0, n_2d=25, small_diag=0)
    rep = verify_decompositions(
        c1, c2, L_multipliers=(1.5, 2.0, 4.0), sun_instances=0, bcz_instances=0, seed=103
    )
    cz_rows = [r for r in rep.asserted_rows if r.quantity.startswith("cz_")]
    brute_rows = [r for r in cz_rows if r.quantity == "cz_brute_force_agreement"]
    instances = len({r.instance for r in cz_rows})
    bad = [r for r in cz_rows if not r.passed]
    announce(
        3,
        instances >= 200 and len(brute_rows) >= 200 and not bad,
        f"CZ bullets on {instances} (g, L) instances, {len(brute_rows)} brute-force "
        f"agreements, {len(bad)} violations",
    )


def test_criterion_4_mu_dyadic_grid():
    rng = np.random.default_rng(104)
    worst_balance = 0.0
    # 50 random positive densities: every split halves mass to 1e-12 relative
    for i in range(50):
        n = int(rng.choice([128, 256, 512]))
        dom = GridDomain(dim=1, cells_per_side=n)
        m = CellMeasure(dom, gen_weights_nondoubling(dom, rng, 10.0 ** rng.uniform(1, 6)))
        tree = build_mu_dyadic_tree((0.0, 1.0), m, depth=7)
        for node in tree.all_nodes():
            if node.split is None:
                continue
            lm = region_mass(m, (node.a, node.split))
            rm = region_mass(m, (node.split, node.b))
            worst_balance = max(worst_balance, abs(lm - rm) / node.mass)
    # the 2x density splits at 1/sqrt(2); at 2**20 cells the discretization
    # error sits below 1e-12
    N = 2 ** 20
    dom20 = GridDomain(dim=1, cells_per_side=N)
    edges = np.linspace(0.0, 1.0, N + 1)
    m20 = CellMeasure(dom20, np.diff(edges ** 2))
    split_err = abs(mu_dyadic_split((0.0, 1.0), m20) - 2.0 ** -0.5)
    # mu-dyadic CZ averages stay at or below 2L
    rng2 = np.random.default_rng(105)
    from oscnorm.decomposition import cz_dyadic

    worst_avg = 0.0
    dom = GridDomain(dim=1, cells_per_side=128)
    for i in range(25):
        m = CellMeasure(dom, gen_weights_nondoubling(dom, rng2, 10.0 ** rng2.uniform(1, 6)))
        g = GridFunction(dom, rng2.uniform(0.0, 1.0, 128))
        tree = build_mu_dyadic_tree((0.0, 1.0), m, depth=7)
        avg = integrate(g, tree.root.interval, m) / tree.root.mass
        L = avg * rng2.uniform(1.2, 3.0)
        res = cz_dyadic(g, None, L, m, tree=tree)
        for _, a in res.selected:
            worst_avg = max(worst_avg, a / L)
    ok = worst_balance <= 1e-12 and split_err <= 1e-12 and worst_avg <= 2.0 + 1e-9
    announce(
        4,
        ok,
        f"mu-dyadic: split balance {worst_balance:.2e} <= 1e-12, 2x-density split "
        f"error {split_err:.2e} <= 1e-12, CZ averages <= 2L (max ratio {worst_avg:.6f})",
    )


def test_criterion_5_nondoubling_theorem():
    corpus = standard_corpus(
        seed=106, cells_1d=1024, n_1d=50, n_2d=0, small_diag=0,
        measure="nondoubling", dyn_range=1e6,
    )
    rep = verify_thm_nondoubling_1d(corpus, PowerGauge(0.5))
    upper = [r for r in rep.asserted_rows if r.quantity == "upper_mu_X"]
    bad = rep.violations
    announce(
        5,
        len(upper) == 50 and not bad,
        f"X <= (2 phi^-1(4) + phi^-1(10)) ||f|| over the mu-dyadic family on "
        f"{len(upper)} instances with weight range 1e6, {len(bad)} violations",
    )


def test_criterion_6_rising_sun():
    c_empty = Corpus([])
    rep = verify_decompositions(
        c_empty, c_empty, L_multipliers=(), sun_instances=500, bcz_instances=0, seed=107
    )
    rows = {r.quantity: r for r in rep.asserted_rows if r.instance in ("sun", "sun-hand")}
    ok = all(
        rows[q].passed
        for q in (
            "mean_equals_level",
            "pairwise_disjoint",
            "mass_bound",
            "good_set_below_level",
            "left_endpoint",
            "right_endpoint",
        )
    )
    announce(
        6,
        ok,
        f"rising sun on 500 instances: mean dev {rows['mean_equals_level'].lhs:.2e} "
        f"<= 1e-9, disjoint, good set cell-exact, mass bound; hand example endpoint "
        f"errors {rows['left_endpoint'].lhs:.1e}/{rows['right_endpoint'].lhs:.1e}",
    )


def test_criterion_7_vitali():
    rng = np.random.default_rng(108)
    families = 0
    for trial in range(500):
        n = int(rng.integers(20, 201))
        dim = int(rng.integers(1, 3))
        pts = rng.uniform(0.0, 1.0, (n, dim))
        beta = float(rng.choice([1.0, 1.0, 1.5, 2.0]))
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2) ** beta
        s = FiniteSHT(dist=d, weights=np.ones(n), kappa=2.0 ** (beta - 1.0))
        k = int(rng.integers(2, 30))
        balls = [
            Ball(int(rng.integers(0, n)), float(rng.uniform(0.02, 1.2)))
            for _ in range(k)
        ]
        sel = vitali_select(balls, s)
        masks = [s.members(balls[i].center, balls[i].radius) for i in sel.selected]
        for a in range(len(masks)):
            for b in range(a + 1, len(masks)):
                assert not (masks[a] & masks[b]).any(), "selected balls intersect"
        covered = np.zeros(n, dtype=bool)
        for i in sel.selected:
            covered |= s.members(balls[i].center, sel.dilation * balls[i].radius)
        for b in balls:
            assert not s.members(b.center, b.radius)[~covered].any(), "ball escapes"
        if beta == 1.0:
            assert sel.dilation == pytest.approx(5.0)
        families += 1
    announce(
        7,
        families == 500,
        f"Vitali on {families} random families (<= 200 points): disjointness and "
        f"kappa(4 kappa + 1)-dilation coverage; factor 5 at kappa = 1",
    )


def test_criterion_8_sht():
    instances = make_sht_instances(30, seed=109)
    rep = verify_sht(instances, PowerGauge(0.5))
    jensen = [r for r in rep.asserted_rows if r.quantity == "jensen_balls"]
    lemma = [r for r in rep.asserted_rows if r.quantity.startswith("radius_lemma")]
    ratios = [r.lhs for r in rep.rows if r.quantity == "ratio_balls"]
    ok = len(jensen) == 30 and not rep.violations and all(np.isfinite(ratios))
    announce(
        8,
        ok,
        f"SHT on 30 instances: Jensen side holds, radius lemma finds finite L with "
        f"dilated containment, max upper ratio {max(ratios):.3f} finite",
    )


def test_criterion_9_general_gauge_pipeline():
    corpus = standard_corpus(seed=110, cells_1d=128, n_1d=4, n_2d=0, small_diag=0)
    probes = [
        ("oscillating", GaugeProbe(
            lambda t: np.asarray(t, dtype=float) * (1 + 0.5 * np.sin(np.asarray(t, dtype=float))),
            t_max=40.0, sample_count=10_000), 6),
        ("step-log", GaugeProbe(
            lambda t: np.floor(np.log2(1.0 + np.asarray(t, dtype=float))),
            t_max=45.0, sample_count=10_000), 4),
        ("dipping", GaugeProbe(
            lambda t: np.asarray(t, dtype=float) + 2.0 * np.sin(np.asarray(t, dtype=float)),
            t_max=40.0, sample_count=10_000), 6),
    ]
    details = []
    ok = True
    for name, probe, n_max in probes:
        ts, vals = probe.samples()
        phi = concave_minorant(probe, n_max=n_max, delta=max(probe.t_max / 200.0, 1e-3))
        dom_gap = float((phi.eval(ts) - vals).max())
        rep = verify_thm_general(probe, corpus, n_max=n_max)
        ok &= dom_gap <= 1e-9 and rep.all_pass and len(ts) >= 10_000
        thr = rep.rows and [r for r in rep.rows if r.quantity == "upper_dyadic_X_phi"][0].constant
        details.append(f"{name}(C={thr:.1f})")
    announce(
        9,
        ok,
        "minorant domination at 10^4 samples, phi-norm <= psi-norm, and the "
        "derived dyadic bound at L = 4 for probes: " + ", ".join(details),
    )


def test_criterion_10_solver_oracles():
    rng = np.random.default_rng(111)
    worst_id = worst_pow = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        v = rng.normal(size=n) * rng.uniform(0.1, 10)
        w = rng.uniform(0.0, 1.0, n)
        if w.sum() == 0 or np.abs(v[w > 0]).max() == 0:
            continue
        lam_id, _ = lux_bisect(v, w, GAUGES["id"])
        want_id = np.dot(np.abs(v), w) / w.sum()
        worst_id = max(worst_id, abs(lam_id - want_id) / max(want_id, 1e-300))
        lam_pw, _ = lux_bisect(v, w, GAUGES["power0.5"])
        want_pw = (np.dot(np.abs(v) ** 0.5, w) / w.sum()) ** 2
        worst_pow = max(worst_pow, abs(lam_pw - want_pw) / max(want_pw, 1e-300))
    from test_oscillation import dense_cl_scan

    worst_infc = 0.0
    checked = 0
    for seed in range(100):
        rng2 = np.random.default_rng(1000 + seed)
        dom = GridDomain(dim=1, cells_per_side=8)
        m = CellMeasure(dom, rng2.uniform(0.05, 1.0, 8))
        f = GridFunction(dom, rng2.normal(size=8))
        g = GAUGES["power0.5"] if seed % 2 else GAUGES["log1p"]
        v, w = region_arrays(f, Rect((0,), (8,)), m)
        want = dense_cl_scan(v, w, g)
        got, _ = osc_gauge_infc(f, Rect((0,), (8,)), g, m)
        worst_infc = max(worst_infc, abs(got - want) / max(want, 1e-300))
        checked += 1
    ok = worst_id <= 1e-9 and worst_pow <= 1e-9 and worst_infc <= 1e-5 and checked == 100
    announce(
        10,
        ok,
        f"Luxemburg bisection vs closed forms on 1000 pairs (id {worst_id:.1e}, "
        f"power {worst_pow:.1e} rel); center search vs dense (c, lambda) scan on "
        f"{checked} instances ({worst_infc:.1e} rel)",
    )


def test_criterion_11_rectangles():
    corpus16 = standard_corpus(
        seed=112, cells_2d=16, n_1d=0, n_2d=19, small_diag=0, measure="nondoubling"
    )
    corpus32 = standard_corpus(
        seed=113, cells_2d=32, n_1d=0, n_2d=1, small_diag=0, measure="nondoubling"
    )
    corpus = Corpus(corpus16.instances + corpus32.instances)
    rep = verify_thm_rect(corpus, PowerGauge(0.5))
    jensen = [r for r in rep.asserted_rows if r.quantity == "jensen_per_region"]
    mono = [r for r in rep.asserted_rows if r.quantity.startswith("family_monotone")]
    ceil_rows = [r for r in rep.asserted_rows if r.quantity == "rect_ratio_below_ceiling"]
    ok = len(jensen) == 20 and not rep.violations
    announce(
        11,
        ok,
        f"rectangles on 20 weighted instances: Jensen exact, family monotonicity "
        f"exact ({len(mono)} rows), upper ratios below the configured ceiling "
        f"(max {max(r.lhs for r in ceil_rows):.3f} vs {ceil_rows[0].rhs:.1f})",
    )


def test_total_runtime_under_five_minutes():
    elapsed = time.time() - T_START
    print(f"acceptance suite elapsed: {elapsed:.1f}s")
    assert elapsed < 300.0, f"acceptance suite took {elapsed:.1f}s, budget is 300s"
