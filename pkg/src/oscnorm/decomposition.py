"""Stopping-time decompositions: dyadic CZ, rising sun, Besicovitch-CZ.

All three engines consume a nonnegative piecewise-constant function and a
cell measure and emit selected regions with recorded averages, a per-cell
good-set mask, and the mass ratio of the selection.  Every postcondition
is re-verifiable from raw integrals; the verification harness does exactly
that.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import (
    CellMeasure,
    DyadicCube,
    GridError,
    GridFunction,
    MuDyadicTree,
    RealBox,
    RealInterval,
    Rect,
    integrate,
    mu_dyadic_split,
    region_mass,
)

__all__ = [
    "DecompositionError",
    "CZResult",
    "BesicovitchFamilies",
    "cz_dyadic",
    "rising_sun_1d",
    "bcz_2d",
]


class DecompositionError(ValueError):
    """Raised when an engine precondition fails."""


@dataclass
class CZResult:
    """Selected regions with their recorded averages plus the good set."""

    selected: list[tuple[object, float]]
    good_mask: np.ndarray
    height: float
    base: object
    mass_ratio: float
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def enc(region):
            if hasattr(region, "to_json"):
                return region.to_json()
            return {"level": region.level, "index": list(region.index)}

        return {
            "height": self.height,
            "mass_ratio": self.mass_ratio,
            "selected": [
                {"region": enc(r), "average": avg} for r, avg in self.selected
            ],
            "good_mask": self.good_mask.astype(int).tolist(),
            "diagnostics": self.diagnostics,
        }


@dataclass
class BesicovitchFamilies:
    """Split of a quasidisjoint cube selection into disjoint families."""

    families: list[list[int]]

    @property
    def family_count(self) -> int:
        return len(self.families)

    def to_json(self) -> dict:
        return {"family_count": self.family_count, "families": self.families}


# ---------------------------------------------------------------------------
# dyadic Calderon-Zygmund (standard grid and mu-dyadic tree)
# ---------------------------------------------------------------------------


def _mark_rect(mask: np.ndarray, rect: Rect) -> None:
    mask[rect.slices()] = False


def _mark_interval(mask: np.ndarray, domain, a: float, b: float) -> None:
    # cells with positive-length overlap with [a, b]
    sa, sb = float(domain.to_units(a)), float(domain.to_units(b))
    i0 = int(np.floor(sa + 1e-12))
    i1 = int(np.ceil(sb - 1e-12))
    mask[max(i0, 0) : min(i1, mask.size)] = False


def cz_dyadic(
    g: GridFunction,
    base: DyadicCube | None,
    L: float,
    m: CellMeasure,
    tree: MuDyadicTree | None = None,
    depth_cap: int | None = None,
) -> CZResult:
    """Maximal dyadic subregions where the average of g exceeds L.

    With ``tree=None`` the standard dyadic grid of the domain is used and
    the recursion floors at single cells, so the good set is cell-exact.
    With a mu-dyadic tree, children halve mass instead of length and the
    selected averages are at most 2L; the walk extends past the stored
    depth by computing further splits on demand, flooring at nodes that
    are constant (single cell) or at ``depth_cap``.

    Requires g >= 0 and average of g over the base at most L.
    """
    if L <= 0:
        raise DecompositionError("height L must be positive")
    if np.any(g.values < 0):
        raise DecompositionError("cz decomposition needs a nonnegative function")
    if tree is None:
        return _cz_standard(g, base or DyadicCube(0, (0,) * g.domain.dim), L, m)
    return _cz_mu(g, L, m, tree, depth_cap)


def _cz_standard(g: GridFunction, base: DyadicCube, L: float, m: CellMeasure) -> CZResult:
    dom = g.domain
    base_rect = base.to_rect(dom)
    base_mass = region_mass(m, base_rect)
    if base_mass <= 0:
        raise DecompositionError("zero-mass base")
    root_avg = integrate(g, base_rect, m) / base_mass
    if root_avg > L:
        raise DecompositionError(
            f"root average {root_avg:g} exceeds height L = {L:g}"
        )
    selected: list[tuple[DyadicCube, float]] = []
    max_ratio = 0.0
    sel_mass = 0.0
    mask = np.ones(dom.shape, dtype=bool)

    def visit(cube: DyadicCube) -> None:
        nonlocal max_ratio, sel_mass
        if cube.level >= dom.levels:
            return
        for child in cube.children():
            rect = child.to_rect(dom)
            mass = region_mass(m, rect)
            if mass <= 0:
                continue
            avg = integrate(g, rect, m) / mass
            if avg > L:
                selected.append((child, avg))
                sel_mass += mass
                max_ratio = max(max_ratio, avg / L)
                _mark_rect(mask, rect)
            else:
                visit(child)

    visit(base)
    mask &= _rect_indicator(dom, base_rect)
    return CZResult(
        selected=selected,
        good_mask=mask,
        height=L,
        base=base,
        mass_ratio=sel_mass / base_mass,
        diagnostics={
            "engine": "dyadic",
            "root_average": root_avg,
            "max_average_over_L": max_ratio,
            "child_bound": float(2 ** dom.dim) if _is_uniform(m) else None,
        },
    )


def _rect_indicator(dom, rect: Rect) -> np.ndarray:
    ind = np.zeros(dom.shape, dtype=bool)
    ind[rect.slices()] = True
    return ind


def _is_uniform(m: CellMeasure) -> bool:
    w = m.weights
    return bool(np.all(np.abs(w - w.flat[0]) <= 1e-15 * abs(w.flat[0])))


def _cz_mu(
    g: GridFunction,
    L: float,
    m: CellMeasure,
    tree: MuDyadicTree,
    depth_cap: int | None,
) -> CZResult:
    dom = g.domain
    if dom.dim != 1:
        raise DecompositionError("mu-dyadic CZ is one-dimensional")
    cap = depth_cap if depth_cap is not None else tree.depth + 16
    root = tree.root
    base = RealInterval(root.a, root.b)
    base_mass = root.mass
    root_avg = integrate(g, base, m) / base_mass
    if root_avg > L:
        raise DecompositionError(
            f"root average {root_avg:g} exceeds height L = {L:g}"
        )
    selected: list[tuple[RealInterval, float]] = []
    sel_mass = 0.0
    max_ratio = 0.0
    unresolved = 0
    mask = np.ones(dom.shape, dtype=bool)

    def exceeds_somewhere(a: float, b: float) -> bool:
        sa, sb = float(dom.to_units(a)), float(dom.to_units(b))
        i0, i1 = int(sa), min(int(np.ceil(sb)), dom.cells_per_side)
        idx = np.arange(i0, i1)
        frac = np.minimum(idx + 1.0, sb) - np.maximum(idx, sa)
        overlap = m.weights[i0:i1] * frac
        return bool(np.any((overlap > 0) & (g.values[i0:i1] > L)))

    def visit(a: float, b: float, mass: float, node, depth: int) -> None:
        nonlocal sel_mass, max_ratio, unresolved
        if mass <= 0:
            return
        avg = integrate(g, (a, b), m) / mass
        if avg > L:
            selected.append((RealInterval(a, b), avg))
            sel_mass += mass
            max_ratio = max(max_ratio, avg / L)
            _mark_interval(mask, dom, a, b)
            return
        if not exceeds_somewhere(a, b):
            return
        if depth >= cap:
            unresolved += 1
            return
        if node is not None and node.split is not None:
            x, left, right = node.split, node.left, node.right
        else:
            x, left, right = mu_dyadic_split((a, b), m), None, None
        visit(a, x, 0.5 * mass, left, depth + 1)
        visit(x, b, 0.5 * mass, right, depth + 1)

    # the root satisfies avg <= L, so start from its children
    if root.split is not None:
        visit(root.a, root.split, 0.5 * base_mass, root.left, 1)
        visit(root.split, root.b, 0.5 * base_mass, root.right, 1)
    else:
        x = mu_dyadic_split((root.a, root.b), m)
        visit(root.a, x, 0.5 * base_mass, None, 1)
        visit(x, root.b, 0.5 * base_mass, None, 1)

    return CZResult(
        selected=selected,
        good_mask=mask,
        height=L,
        base=base,
        mass_ratio=sel_mass / base_mass,
        diagnostics={
            "engine": "mu-dyadic",
            "root_average": root_avg,
            "max_average_over_L": max_ratio,
            "child_bound": 2.0,
            "unresolved_nodes": unresolved,
        },
    )


# ---------------------------------------------------------------------------
# rising sun at an exact level (one dimension)
# ---------------------------------------------------------------------------


def rising_sun_1d(
    h: GridFunction,
    region,
    lam: float,
    m: CellMeasure,
) -> CZResult:
    """Disjoint maximal intervals on which the mu-mean of h equals lam.

    Works on the running primitive F(x) of (h - lam) d(mu), a piecewise
    linear function of x.  Sweeping left to right, every ascent of F opens
    an interval at its base level that closes where F next descends to
    that level; intervals swallowed by a later enclosing one are dropped,
    and ascents whose level is never revisited close against the final
    value of F by extending to the left.  Off the selected union F is
    nonincreasing, so h <= lam there cell-exactly.

    Requires lam strictly above the mu-mean of h over the region.
    """
    dom = h.domain
    if dom.dim != 1:
        raise DecompositionError("rising sun runs on one-dimensional grids")
    if region is None:
        region = Rect((0,), (dom.cells_per_side,))
    mass = region_mass(m, region)
    mean = integrate(h, region, m) / mass
    if not lam > mean:
        raise DecompositionError(
            f"level lam = {lam:g} must exceed the region mean {mean:g}"
        )

    # polyline of F at cell edges restricted to the region
    from .grid import _region_units  # local import to reuse the normalizer

    lo_u, hi_u = _region_units(dom, region)
    sa, sb = float(lo_u[0]), float(hi_u[0])
    i0, i1 = int(sa), min(int(np.ceil(sb)), dom.cells_per_side)
    idx = np.arange(i0, i1)
    frac = np.minimum(idx + 1.0, sb) - np.maximum(idx, sa)
    w = m.weights[i0:i1] * frac
    v = h.values[i0:i1]
    xs_units = np.concatenate(([sa], np.minimum(idx + 1.0, sb)))
    xs = dom.origin[0] + xs_units * dom.cell_width
    dF = (v - lam) * w
    F = np.concatenate(([0.0], np.cumsum(dF)))

    n_seg = dF.size
    pending: list[tuple[float, float]] = []  # (open_x, level)
    emitted: list[tuple[float, float]] = []  # closed [a, b], in close order

    def emit(a: float, b: float) -> None:
        while emitted and emitted[-1][0] >= a:
            emitted.pop()
        emitted.append((a, b))

    j = 0
    while j < n_seg:
        if dF[j] > 0:
            # ascent run; open at the earliest point of any flat run at the
            # base level immediately before it
            a = xs[j]
            k = j - 1
            while k >= 0 and dF[k] == 0.0:
                a = xs[k]
                k -= 1
            pending.append((a, F[j]))
            while j < n_seg and dF[j] >= 0:
                j += 1
            continue
        if dF[j] < 0:
            # descent segment: close every pending whose level it reaches
            y0, y1 = F[j], F[j + 1]
            while pending and pending[-1][1] >= y1:
                open_x, level = pending.pop()
                t = (level - y0) / (y1 - y0)
                b = xs[j] + t * (xs[j + 1] - xs[j])
                # latest right admissible: extend through a flat run at level
                if t >= 1.0 - 1e-15:
                    k = j + 1
                    while k < n_seg and dF[k] == 0.0:
                        k += 1
                        b = xs[k]
                emit(open_x, b)
        j += 1

    if pending:
        # levels never revisited: close the outermost against F(end) by
        # extending left along the good part of the polyline
        open_x, _level = pending[0]
        f_end = F[-1]
        a_ext = None
        for k in range(n_seg - 1, -1, -1):
            if xs[k] >= open_x:
                continue
            lo, hi = min(F[k], F[k + 1]), max(F[k], F[k + 1])
            if not (lo <= f_end <= hi) or F[k] == F[k + 1]:
                continue
            t = (f_end - F[k]) / (F[k + 1] - F[k])
            x_cross = xs[k] + t * (xs[k + 1] - xs[k])
            if x_cross > open_x:
                continue
            if any(a <= x_cross < b for a, b in emitted):
                continue
            a_ext = x_cross
            break
        if a_ext is None:
            raise DecompositionError("internal: no admissible left extension")
        emit(a_ext, xs[-1])

    selected = []
    sel_mass = 0.0
    mask = np.ones(dom.shape, dtype=bool)
    for a, b in emitted:
        if b <= a:
            continue
        iv = RealInterval(a, b)
        mu = region_mass(m, iv)
        avg = integrate(h, iv, m) / mu
        selected.append((iv, avg))
        sel_mass += mu
        _mark_interval(mask, dom, a, b)
    mask &= _interval_indicator(dom, sa, sb)

    return CZResult(
        selected=selected,
        good_mask=mask,
        height=lam,
        base=region,
        mass_ratio=sel_mass / mass,
        diagnostics={"engine": "rising-sun", "region_mean": mean},
    )


def _interval_indicator(dom, sa: float, sb: float) -> np.ndarray:
    ind = np.zeros(dom.shape, dtype=bool)
    i0 = int(np.floor(sa + 1e-12))
    i1 = int(np.ceil(sb - 1e-12))
    ind[max(i0, 0) : min(i1, ind.size)] = True
    return ind


# ---------------------------------------------------------------------------
# Besicovitch-Calderon-Zygmund in two dimensions
# ---------------------------------------------------------------------------


def _clipped_cube(cx: float, cy: float, s: float, bounds) -> RealBox:
    x0, x1, y0, y1 = bounds
    return RealBox(
        max(cx - 0.5 * s, x0),
        min(cx + 0.5 * s, x1),
        max(cy - 0.5 * s, y0),
        min(cy + 0.5 * s, y1),
    )


def bcz_2d(
    g: GridFunction,
    base: Rect | None,
    L: float,
    m: CellMeasure,
    b_bound: int = 20,
) -> tuple[CZResult, BesicovitchFamilies]:
    """Quasidisjoint cubes of exact average L covering the set where g > L.

    For every cell center whose centered maximal average exceeds L, the
    largest concentric cube (clipped to the base) with average exactly L
    is located by scanning side-length breakpoints and bisecting the last
    sign change.  Cubes are admitted greedily by decreasing side unless
    their center is already covered; the admitted cubes are split into
    disjoint families by greedy coloring and the family count is compared
    against ``b_bound``.

    Requires g >= 0 and average of g over the base strictly below L.
    """
    dom = g.domain
    if dom.dim != 2:
        raise DecompositionError("bcz runs on two-dimensional grids")
    if np.any(g.values < 0):
        raise DecompositionError("bcz needs a nonnegative function")
    if base is None:
        base = Rect((0, 0), dom.shape)
    base_mass = region_mass(m, base)
    if base_mass <= 0:
        raise DecompositionError("zero-mass base")
    base_avg = integrate(g, base, m) / base_mass
    if not base_avg < L:
        raise DecompositionError(
            f"base average {base_avg:g} must be strictly below L = {L:g}"
        )
    hwid = dom.cell_width
    bounds = (
        dom.origin[0] + base.lo[0] * hwid,
        dom.origin[0] + base.hi[0] * hwid,
        dom.origin[1] + base.lo[1] * hwid,
        dom.origin[1] + base.hi[1] * hwid,
    )

    def avg_at(cx: float, cy: float, s: float) -> float:
        box = _clipped_cube(cx, cy, s, bounds)
        mu = region_mass(m, box)
        if mu <= 0:
            return -np.inf
        return integrate(g, box, m) / mu

    ext = max(bounds[1] - bounds[0], bounds[3] - bounds[2])
    s_max = 2.0 * ext

    def fit_cube(cx: float, cy: float, cell_value: float) -> tuple[float, float] | None:
        """Largest s with avg = L, or None when the maximal average <= L."""
        edges_x = 2.0 * np.abs(dom.edges(0) - cx)
        edges_y = 2.0 * np.abs(dom.edges(1) - cy)
        ss = np.unique(np.concatenate((edges_x, edges_y, [s_max])))
        ss = ss[(ss > 0) & (ss <= s_max)]
        ss = np.unique(np.concatenate((ss, 0.5 * (ss[1:] + ss[:-1]))))
        vals = np.array([avg_at(cx, cy, s) for s in ss])
        # the s -> 0 limit is the cell value itself; prefix differences
        # cancel catastrophically on boxes far below cell size
        ss = np.concatenate(([hwid * 1e-6], ss))
        vals = np.concatenate(([cell_value], vals))
        above = np.nonzero(vals > L)[0]
        if above.size == 0:
            return None
        k = above[-1]
        if k + 1 >= ss.size:
            return None  # cannot happen: avg(s_max) < L
        lo_s, hi_s = ss[k], ss[k + 1]
        for _ in range(60):
            mid = 0.5 * (lo_s + hi_s)
            if avg_at(cx, cy, mid) > L:
                lo_s = mid
            else:
                hi_s = mid
            if hi_s - lo_s <= 1e-12 * hi_s:
                break
        # regula falsi on the residual: the average is smooth inside the
        # bracket but can be steep, so bisection alone may stop short
        r_lo = avg_at(cx, cy, lo_s) - L
        r_hi = avg_at(cx, cy, hi_s) - L
        for _ in range(8):
            if r_lo <= 0 or r_hi > 0 or r_lo == r_hi:
                break
            s_new = lo_s - r_lo * (hi_s - lo_s) / (r_hi - r_lo)
            if not (lo_s < s_new < hi_s):
                break
            r_new = avg_at(cx, cy, s_new) - L
            if abs(r_new) <= 1e-12 * L:
                return s_new, r_new + L
            if r_new > 0:
                lo_s, r_lo = s_new, r_new
            else:
                hi_s, r_hi = s_new, r_new
        s = hi_s if abs(r_hi) <= abs(r_lo) else lo_s
        return s, avg_at(cx, cy, s)

    cand = []
    cx_all = dom.centers(0)
    cy_all = dom.centers(1)
    for i in range(base.lo[0], base.hi[0]):
        for jj in range(base.lo[1], base.hi[1]):
            if m.weights[i, jj] <= 0:
                continue
            fit = fit_cube(cx_all[i], cy_all[jj], float(g.values[i, jj]))
            if fit is None:
                continue
            cand.append((fit[0], i, jj, fit[1]))

    cand.sort(key=lambda t: (-t[0], t[1], t[2]))
    admitted: list[tuple[RealBox, float, tuple[int, int]]] = []

    def covered(cx: float, cy: float) -> bool:
        return any(
            box.x0 <= cx <= box.x1 and box.y0 <= cy <= box.y1
            for box, _, _ in admitted
        )

    for s, i, jj, avg in cand:
        cx, cy = cx_all[i], cy_all[jj]
        if covered(cx, cy):
            continue
        admitted.append((_clipped_cube(cx, cy, s, bounds), avg, (i, jj)))

    # greedy coloring into disjoint families
    def disjoint(a: RealBox, b: RealBox) -> bool:
        return (
            min(a.x1, b.x1) <= max(a.x0, b.x0) + 1e-15
            or min(a.y1, b.y1) <= max(a.y0, b.y0) + 1e-15
        )

    families: list[list[int]] = []
    for idx, (box, _, _) in enumerate(admitted):
        placed = False
        for fam in families:
            if all(disjoint(box, admitted[k][0]) for k in fam):
                fam.append(idx)
                placed = True
                break
        if not placed:
            families.append([idx])

    mask = np.ones(dom.shape, dtype=bool)
    sel_mass = 0.0
    selected = []
    for box, avg, _ in admitted:
        selected.append((box, avg))
        sel_mass += region_mass(m, box)
        su0 = dom.to_units(box.x0, 0)
        su1 = dom.to_units(box.x1, 0)
        sv0 = dom.to_units(box.y0, 1)
        sv1 = dom.to_units(box.y1, 1)
        mask[
            int(np.floor(su0 + 1e-12)) : int(np.ceil(su1 - 1e-12)),
            int(np.floor(sv0 + 1e-12)) : int(np.ceil(sv1 - 1e-12)),
        ] = False
    mask &= _rect_indicator(dom, base)

    result = CZResult(
        selected=selected,
        good_mask=mask,
        height=L,
        base=base,
        mass_ratio=sel_mass / base_mass,
        diagnostics={
            "engine": "besicovitch",
            "base_average": base_avg,
            "candidates": len(cand),
            "family_count": len(families),
            "b_bound": b_bound,
            "b_bound_violated": len(families) > b_bound,
        },
    )
    return result, BesicovitchFamilies(families=families)
