"""Local Luxemburg averages, optimal-center oscillations, and their suprema.

The per-region quantities all reduce to computations on a pair of flat
arrays (values, weights).  Families of regions are processed in batches
grouped by region size, with the inner Luxemburg solve vectorized across
regions and candidate centers.  The public single-region operations are
the batch engine applied to one region, so library calls, family sweeps
and the CLI all agree bit for bit.

Solver routes, cross-checked against each other in the test suite:

* ``luxemburg_norm`` is always the bracket-doubling + bisection solver.
* The batch engine replaces it with the closed form for identity/power
  gauges and with a monotone Newton iteration (in u = 1/lambda, where the
  constraint average is concave) for the other concave gauges; gauges
  with a flat start fall back to vectorized bisection.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .gauge import Gauge, GaugeError
from .grid import (
    CellMeasure,
    DyadicCube,
    GridDomain,
    GridError,
    GridFunction,
    RealBox,
    RealInterval,
    Rect,
    region_arrays,
    region_mass,
)

__all__ = [
    "OscError",
    "RegionFamily",
    "NormReport",
    "luxemburg_norm",
    "osc_l1",
    "osc_gauge_infc",
    "norm_sup",
    "k_phi",
    "MODES",
]

MODES = ("at_mean", "infc", "gauge_infc", "cz_center", "k_phi")

#: scan-stage knobs for the center search
CANDIDATE_CAP = 128
FILL_POINTS = 64
REFINE_TOL = 1e-9
LUX_REL_TOL = 1e-10
_CHUNK_ELEMS = 2_000_000


class OscError(ValueError):
    """Raised on oscillation contract violations."""


# ---------------------------------------------------------------------------
# scalar Luxemburg solver (the reference route)
# ---------------------------------------------------------------------------


def _lux_average(v: np.ndarray, w: np.ndarray, wsum: float, g: Gauge, lam: float) -> float:
    return float(np.dot(w, g.eval(v / lam))) / wsum


def lux_bisect(
    values: np.ndarray,
    weights: np.ndarray,
    g: Gauge,
    rel_tol: float = LUX_REL_TOL,
) -> tuple[float, int]:
    """inf{ lam > 0 : weighted phi-average of |values|/lam is <= 1 }.

    Bracket by doubling/halving, then geometric bisection.  Returns the
    certified lower endpoint: the constraint holds at lam * (1 + rel_tol).
    """
    v = np.abs(np.asarray(values, dtype=float))
    w = np.asarray(weights, dtype=float)
    wsum = float(w.sum())
    if wsum <= 0:
        raise OscError("zero-mass region")
    vmax = float(v[w > 0].max(initial=0.0))
    if vmax == 0.0:
        return 0.0, 0
    hi = vmax / g.inv1  # phi(v/hi) <= 1 pointwise, so the average is <= 1
    lo = hi
    iters = 0
    while _lux_average(v, w, wsum, g, lo) <= 1.0:
        lo *= 0.5
        iters += 1
        if iters > 200:
            # constraint satisfied arbitrarily far down: the infimum is 0
            return 0.0, iters
    while hi / lo > 1.0 + rel_tol:
        mid = np.sqrt(lo * hi)
        if _lux_average(v, w, wsum, g, mid) <= 1.0:
            hi = mid
        else:
            lo = mid
        iters += 1
    return lo, iters


def luxemburg_norm(f: GridFunction, region, g: Gauge, m: CellMeasure) -> float:
    """Luxemburg average of |f| over the region against the cell measure."""
    v, w = region_arrays(f, region, m)
    lam, _ = lux_bisect(v, w, g)
    return lam


# ---------------------------------------------------------------------------
# batched kernels on (R, n) value/weight stacks
# ---------------------------------------------------------------------------


def _weighted_mean(V: np.ndarray, W: np.ndarray, Wsum: np.ndarray) -> np.ndarray:
    return np.einsum("rn,rn->r", V, W) / Wsum


def _weighted_median(V: np.ndarray, W: np.ndarray, Wsum: np.ndarray) -> np.ndarray:
    """Smallest value whose cumulative weight reaches half the total."""
    order = np.argsort(V, axis=1, kind="stable")
    Vs = np.take_along_axis(V, order, axis=1)
    Ws = np.take_along_axis(W, order, axis=1)
    cw = np.cumsum(Ws, axis=1)
    j = np.argmax(cw >= 0.5 * Wsum[:, None], axis=1)
    return Vs[np.arange(V.shape[0]), j]


def _abs_dev(V: np.ndarray, W: np.ndarray, Wsum: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.einsum("rn,rn->r", np.abs(V - c[:, None]), W) / Wsum


def _masked_minmax(V: np.ndarray, W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pos = W > 0
    vmin = np.where(pos, V, np.inf).min(axis=1)
    vmax = np.where(pos, V, -np.inf).max(axis=1)
    return vmin, vmax


def _lux_batch(D: np.ndarray, W: np.ndarray, Wsum: np.ndarray, g: Gauge,
               u_init: np.ndarray | None = None) -> np.ndarray:
    """Vectorized Luxemburg solve for |deviation| stacks D of shape (R, m, n).

    Identity/power gauges use their closed forms.  Concave gauges use the
    Newton iteration on u = 1/lambda: the constraint average A(u) is
    concave increasing in u, so Newton from below converges monotonically
    and every iterate certifies A <= 1, i.e. the returned lambda is an
    upper bracket within solver tolerance.  Flat-start gauges use
    geometric bisection.
    """
    R, M, n = D.shape
    wsum = Wsum[:, None]
    if g.closed_form == "identity":
        return np.einsum("rmn,rn->rm", D, W) / wsum
    if g.closed_form == "power":
        p = g.p  # type: ignore[attr-defined]
        if p == 0.5:
            return (np.einsum("rmn,rn->rm", np.sqrt(D), W) / wsum) ** 2
        return (np.einsum("rmn,rn->rm", D ** p, W) / wsum) ** (1.0 / p)

    pos = (W > 0)[:, None, :]
    dmax = np.where(pos, D, 0.0).max(axis=2)
    zero = dmax <= 0.0
    dmax_safe = np.where(zero, 1.0, dmax)

    def avg_at_u(u: np.ndarray) -> np.ndarray:
        return np.einsum("rmn,rn->rm", g.eval(D * u[:, :, None]), W) / wsum

    if g.concave:
        u = g.inv1 / dmax_safe
        if u_init is not None:
            cand = np.where(u_init > 0, u_init, u)
            ok = avg_at_u(cand) <= 1.0
            u = np.where(ok, np.maximum(cand, u), u)
        for _ in range(80):
            t = D * u[:, :, None]
            ev, dv = g.eval_and_deriv(t)
            a = np.einsum("rmn,rn->rm", ev, W) / wsum
            da = np.einsum("rmn,rn->rm", D * dv, W) / wsum
            gap = 1.0 - a
            active = (gap > 1e-13) & (da > 0)
            if not active.any():
                break
            step = np.where(active, gap / np.where(da > 0, da, 1.0), 0.0)
            u = u + step
            if np.all(step <= 1e-13 * u):
                break
        lam = 1.0 / u
        return np.where(zero, 0.0, lam)

    # flat-start / non-concave monotone gauges: geometric bisection in lambda
    def avg_at_lam(lam: np.ndarray) -> np.ndarray:
        return np.einsum("rmn,rn->rm", g.eval(D / lam[:, :, None]), W) / wsum

    hi = dmax_safe / g.inv1
    lo = hi.copy()
    for _ in range(200):
        need = ~zero & (avg_at_lam(lo) <= 1.0)
        if not need.any():
            break
        lo = np.where(need, 0.5 * lo, lo)
    for _ in range(200):
        done = (hi / lo <= 1.0 + LUX_REL_TOL) | zero
        if done.all():
            break
        mid = np.sqrt(lo * hi)
        ok = avg_at_lam(mid) <= 1.0
        hi = np.where(ok & ~done, mid, hi)
        lo = np.where(~ok & ~done, mid, lo)
    return np.where(zero, 0.0, lo)


def _lux_rows(Vd: np.ndarray, W: np.ndarray, Wsum: np.ndarray, g: Gauge,
              u_init: np.ndarray | None = None) -> np.ndarray:
    """Luxemburg solve for one deviation row per region: Vd shape (R, n)."""
    if g.closed_form == "identity":
        return np.einsum("rn,rn->r", Vd, W) / Wsum
    if g.closed_form == "power":
        p = g.p  # type: ignore[attr-defined]
        if p == 0.5:
            return (np.einsum("rn,rn->r", np.sqrt(Vd), W) / Wsum) ** 2
        return (np.einsum("rn,rn->r", Vd ** p, W) / Wsum) ** (1.0 / p)
    if not g.concave:
        return _lux_batch(Vd[:, None, :], W, Wsum, g)[:, 0]
    pos = W > 0
    dmax = np.where(pos, Vd, 0.0).max(axis=1)
    zero = dmax <= 0.0
    u = g.inv1 / np.where(zero, 1.0, dmax)
    if u_init is not None:
        cand = np.where(u_init > 0, u_init, u)
        a0 = np.einsum("rn,rn->r", g.eval(Vd * cand[:, None]), W) / Wsum
        u = np.where(a0 <= 1.0, np.maximum(cand, u), u)
    for _ in range(80):
        t = Vd * u[:, None]
        a = np.einsum("rn,rn->r", g.eval(t), W) / Wsum
        da = np.einsum("rn,rn->r", Vd * g.deriv(t), W) / Wsum
        gap = 1.0 - a
        active = (gap > 1e-13) & (da > 0)
        if not active.any():
            break
        step = np.where(active, gap / np.where(da > 0, da, 1.0), 0.0)
        u = u + step
        if np.all(step <= 1e-13 * u):
            break
    return np.where(zero, 0.0, 1.0 / u)


def _candidate_grid(V: np.ndarray, W: np.ndarray, Wsum: np.ndarray,
                    cap: int, fill: int) -> np.ndarray:
    """Sorted center candidates per region: sample values (or quantiles when
    there are more than ``cap``), uniform fill points, the weighted median
    and the mean.  The median must be present: it pins the Jensen bound."""
    R, n = V.shape
    Vs = np.sort(V, axis=1)
    if n <= cap:
        base = Vs
    else:
        qi = np.round(np.linspace(0.0, 1.0, cap) * (n - 1)).astype(int)
        base = Vs[:, qi]
    vmin, vmax = _masked_minmax(V, W)
    span = np.linspace(0.0, 1.0, fill + 2)[1:-1]
    fills = vmin[:, None] + span[None, :] * (vmax - vmin)[:, None]
    med = _weighted_median(V, W, Wsum)
    mean = _weighted_mean(V, W, Wsum)
    C = np.concatenate([base, fills, med[:, None], mean[:, None]], axis=1)
    C.sort(axis=1)
    return C


@dataclass
class _GaugeInfcResult:
    value: np.ndarray
    c_opt: np.ndarray
    lam: np.ndarray
    scan_points: int
    refine_iters: int


def _gauge_infc_chunk(V, W, Wsum, g, cap, fill, refine_tol, top) -> _GaugeInfcResult:
    R, n = V.shape
    C = _candidate_grid(V, W, Wsum, cap, fill)
    M = C.shape[1]
    D = np.abs(V[:, None, :] - C[:, :, None])
    lam = _lux_batch(D, W, Wsum, g)
    rows = np.arange(R)

    order = np.argsort(lam, axis=1, kind="stable")
    best_val = lam[rows, order[:, 0]]
    best_c = C[rows, order[:, 0]]
    best_u = np.where(best_val > 0, 1.0 / np.where(best_val > 0, best_val, 1.0), 0.0)

    vmin, vmax = _masked_minmax(V, W)
    # floor the width goal at float resolution of the endpoints, else the
    # bracket stagnates above the goal on nearly-constant regions
    width_goal = np.maximum(
        refine_tol * np.maximum(vmax - vmin, 0.0),
        4e-16 * (np.abs(vmin) + np.abs(vmax)) + 1e-300,
    )
    refine_iters = 0
    invphi = (np.sqrt(5.0) - 1.0) / 2.0

    for t in range(max(1, top)):
        k = order[:, min(t, M - 1)]
        a = C[rows, np.maximum(k - 1, 0)]
        b = C[rows, np.minimum(k + 1, M - 1)]
        x1 = b - invphi * (b - a)
        x2 = a + invphi * (b - a)
        u_ws = best_u.copy()
        f1 = _lux_rows(np.abs(V - x1[:, None]), W, Wsum, g, u_ws)
        f2 = _lux_rows(np.abs(V - x2[:, None]), W, Wsum, g, u_ws)
        for _ in range(60):
            # freeze rows individually: a row's trajectory must not depend
            # on how regions were batched together
            act = b - a > width_goal
            if not act.any():
                break
            left = f1 <= f2
            b = np.where(act & left, x2, b)
            a = np.where(act & ~left, x1, a)
            width = b - a
            x1n = b - invphi * width
            x2n = a + invphi * width
            x_new = np.where(left, x1n, x2n)
            f_new = _lux_rows(np.abs(V - x_new[:, None]), W, Wsum, g, u_ws)
            old_x1, old_f1 = x1, f1
            x1 = np.where(act, np.where(left, x1n, x2), x1)
            f1 = np.where(act, np.where(left, f_new, f2), f1)
            x2 = np.where(act, np.where(left, old_x1, x2n), x2)
            f2 = np.where(act, np.where(left, old_f1, f_new), f2)
            refine_iters += 1
            better = act & (np.minimum(f1, f2) < best_val)
            pick1 = f1 <= f2
            best_c = np.where(better, np.where(pick1, x1, x2), best_c)
            best_val = np.where(better, np.minimum(f1, f2), best_val)
    return _GaugeInfcResult(best_val, best_c, best_val.copy(), M, refine_iters)


def _gauge_infc_batch(V, W, g, cap=CANDIDATE_CAP, fill=FILL_POINTS,
                      refine_tol=REFINE_TOL, top=1) -> _GaugeInfcResult:
    R, n = V.shape
    if n == 1:
        # a single cell oscillates to zero at its own value
        zeros = np.zeros(R)
        return _GaugeInfcResult(zeros, V[:, 0].copy(), zeros.copy(), 1, 0)
    Wsum = W.sum(axis=1)
    Wsum = np.where(Wsum > 0, Wsum, 1.0)  # zero-mass rows are masked by callers
    m_est = min(n, cap) + fill + 2
    chunk = max(1, _CHUNK_ELEMS // max(1, m_est * n))
    if R <= chunk:
        return _gauge_infc_chunk(V, W, Wsum, g, cap, fill, refine_tol, top)
    parts = [
        _gauge_infc_chunk(V[i : i + chunk], W[i : i + chunk], Wsum[i : i + chunk],
                          g, cap, fill, refine_tol, top)
        for i in range(0, R, chunk)
    ]
    return _GaugeInfcResult(
        np.concatenate([p.value for p in parts]),
        np.concatenate([p.c_opt for p in parts]),
        np.concatenate([p.lam for p in parts]),
        parts[0].scan_points,
        max(p.refine_iters for p in parts),
    )


# ---------------------------------------------------------------------------
# single-region operations
# ---------------------------------------------------------------------------


def osc_l1(f: GridFunction, region, m: CellMeasure, centered: str = "infc") -> tuple[float, float]:
    """L1 oscillation over a region.

    ``at_mean`` returns the average deviation from the region mean;
    ``infc`` minimizes the average deviation over all centers, attained at
    a weighted median of the cell values.
    """
    v, w = region_arrays(f, region, m)
    wsum = float(w.sum())
    if wsum <= 0:
        raise OscError("zero-mass region")
    V, W, Wsum = v[None, :], w[None, :], np.array([wsum])
    if centered == "at_mean":
        c = _weighted_mean(V, W, Wsum)
    elif centered == "infc":
        c = _weighted_median(V, W, Wsum)
    else:
        raise OscError(f"unknown centering {centered!r}")
    val = _abs_dev(V, W, Wsum, c)
    return float(val[0]), float(c[0])


def osc_gauge_infc(
    f: GridFunction,
    region,
    g: Gauge,
    m: CellMeasure,
    refine_tol: float = REFINE_TOL,
) -> tuple[float, float]:
    """Best-center Luxemburg oscillation: min over c of ||f - c||_{phi, region}.

    Centers are scanned over the sample values of f on the region (capped
    by quantiles for very large regions) plus uniform fill points, then the
    best few brackets are refined by golden section.  The scan resolution
    bounds the error when the center objective is not unimodal.
    """
    v, w = region_arrays(f, region, m)
    if float(w.sum()) <= 0:
        raise OscError("zero-mass region")
    res = _gauge_infc_batch(v[None, :], w[None, :], g, refine_tol=refine_tol, top=3)
    return float(res.value[0]), float(res.c_opt[0])


# ---------------------------------------------------------------------------
# region families and the supremum sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegionFamily:
    """Finite family of grid regions: dyadic cubes, all cubes, all rects.

    In one dimension cubes and rectangles are both just the grid
    intervals.  ``base`` restricts the family to subregions of a rect.
    """

    kind: str
    domain: GridDomain
    base: Rect | None = None

    def __post_init__(self):
        if self.kind not in ("dyadic", "cubes", "rects"):
            raise OscError(f"unknown family kind {self.kind!r}")
        if self.kind == "dyadic" and self.base is not None:
            raise OscError("dyadic family is always rooted at the full domain")

    def region_count(self) -> int:
        N = self.domain.cells_per_side
        dim = self.domain.dim
        if self.kind == "dyadic":
            return sum((2 ** lev) ** dim for lev in range(self.domain.levels + 1))
        base = self.base or Rect((0,) * dim, (N,) * dim)
        ext = [h - l for l, h in zip(base.lo, base.hi)]
        if dim == 1 or self.kind == "cubes":
            return sum(
                int(np.prod([e - s + 1 for e in ext]))
                for s in range(1, min(ext) + 1)
            )
        return sum(
            (ext[0] - h + 1) * (ext[1] - w + 1)
            for h in range(1, ext[0] + 1)
            for w in range(1, ext[1] + 1)
        )


def _sliding(values: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view(values, shape)
    if values.ndim == 1:
        return win.reshape(win.shape[0], -1)
    return win.reshape(win.shape[0] * win.shape[1], -1)


def _family_groups(f: GridFunction, m: CellMeasure, fam: RegionFamily):
    """Yield (make_region, V, W) batches in canonical order.

    ``make_region(i)`` reconstructs the i-th region of the batch; rows are
    ordered row-major within each size class.
    """
    N = fam.domain.cells_per_side
    dim = fam.domain.dim
    if fam.kind == "dyadic":
        for lev in range(fam.domain.levels + 1):
            side = N >> lev
            k = 2 ** lev
            if dim == 1:
                V = f.values.reshape(k, side)
                W = m.weights.reshape(k, side)

                def make(i, lev=lev):
                    return DyadicCube(lev, (i,))

            else:
                V = (
                    f.values.reshape(k, side, k, side)
                    .swapaxes(1, 2)
                    .reshape(k * k, side * side)
                )
                W = (
                    m.weights.reshape(k, side, k, side)
                    .swapaxes(1, 2)
                    .reshape(k * k, side * side)
                )

                def make(i, lev=lev, k=k):
                    return DyadicCube(lev, (i // k, i % k))

            yield make, V, W
        return

    base = fam.base or Rect((0,) * dim, (N,) * dim)
    fv = f.values[base.slices()]
    mw = m.weights[base.slices()]
    ext = tuple(h - l for l, h in zip(base.lo, base.hi))
    if dim == 1:
        for s in range(ext[0], 0, -1):
            V = _sliding(fv, (s,))
            W = _sliding(mw, (s,))

            def make(i, s=s, o=base.lo[0]):
                return Rect((o + i,), (o + i + s,))

            yield make, V, W
        return
    if fam.kind == "cubes":
        shapes = [(s, s) for s in range(min(ext), 0, -1)]
    else:
        shapes = [(h, w) for h in range(ext[0], 0, -1) for w in range(ext[1], 0, -1)]
        shapes.sort(key=lambda hw: (-hw[0] * hw[1], -hw[0]))
    for h, w in shapes:
        V = _sliding(fv, (h, w))
        W = _sliding(mw, (h, w))
        cols = ext[1] - w + 1

        def make(i, h=h, w=w, cols=cols, o=base.lo):
            r, c = divmod(i, cols)
            return Rect((o[0] + r, o[1] + c), (o[0] + r + h, o[1] + c + w))

        yield make, V, W


def _groups_from_regions(f: GridFunction, m: CellMeasure, regions: Sequence):
    """Bucket explicit regions (rects or real intervals) by array length."""
    buckets: dict[int, tuple[list, list, list]] = {}
    order: list[int] = []
    for idx, region in enumerate(regions):
        v, w = region_arrays(f, region, m)
        key = v.size
        if key not in buckets:
            buckets[key] = ([], [], [])
            order.append(key)
        buckets[key][0].append(idx)
        buckets[key][1].append(v)
        buckets[key][2].append(w)
    regions = list(regions)
    for key in order:
        idxs, vs, ws = buckets[key]

        def make(i, idxs=tuple(idxs)):
            return regions[idxs[i]]

        yield make, np.stack(vs), np.stack(ws), idxs


@dataclass
class NormReport:
    """A norm value, its witness region, and solver diagnostics."""

    value: float
    witness: object
    c_opt: float | None
    lambda_opt: float | None
    mode: str
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        witness = self.witness
        if hasattr(witness, "to_json"):
            witness = witness.to_json()
        elif hasattr(witness, "index"):
            witness = {"level": witness.level, "index": list(witness.index)}
        return {
            "value": self.value,
            "witness": witness,
            "c_opt": self.c_opt,
            "lambda_opt": self.lambda_opt,
            "mode": self.mode,
            "diagnostics": self.diagnostics,
        }


def _mode_batch(V, W, g: Gauge | None, mode: str):
    """Per-region oscillation values for one batch; returns (val, c, lam)."""
    Wsum = W.sum(axis=1)
    ok = Wsum > 0
    Wsafe = np.where(ok, Wsum, 1.0)
    if mode == "at_mean":
        c = _weighted_mean(V, W, Wsafe)
        val = _abs_dev(V, W, Wsafe, c)
        lam = np.full_like(val, np.nan)
    elif mode == "infc":
        c = _weighted_median(V, W, Wsafe)
        val = _abs_dev(V, W, Wsafe, c)
        lam = np.full_like(val, np.nan)
    elif mode == "k_phi":
        if g is None:
            raise OscError("k_phi mode needs a gauge")
        c = _weighted_mean(V, W, Wsafe)
        val = np.einsum("rn,rn->r", g.eval(np.abs(V - c[:, None])), W) / Wsafe
        lam = np.full_like(val, np.nan)
    elif mode in ("gauge_infc", "cz_center"):
        if g is None:
            raise OscError(f"{mode} mode needs a gauge")
        res = _gauge_infc_batch(V, W, g)
        c, lam = res.c_opt, res.lam
        val = res.value if mode == "gauge_infc" else _abs_dev(V, W, Wsafe, c)
    else:
        raise OscError(f"unknown mode {mode!r}")
    val = np.where(ok, val, -np.inf)
    return val, c, lam


def norm_sup(
    f: GridFunction,
    family: RegionFamily | Sequence,
    g: Gauge | None,
    m: CellMeasure,
    mode: str,
) -> NormReport:
    """Supremum of the chosen per-region oscillation over a region family.

    Regions of zero mass are excluded from the supremum.  Ties are broken
    by canonical enumeration order, so any evaluation schedule returns the
    same witness.
    """
    if mode not in MODES:
        raise OscError(f"unknown mode {mode!r} (expected one of {MODES})")
    best = (-np.inf, None, None, None)  # value, make/witness, c, lam
    regions_seen = 0
    scan_points = 0
    if isinstance(family, RegionFamily):
        batches = ((mk, V, W, None) for mk, V, W in _family_groups(f, m, family))
    else:
        batches = _groups_from_regions(f, m, family)
    for make, V, W, _ in batches:
        val, c, lam = _mode_batch(V, W, g, mode)
        regions_seen += V.shape[0]
        i = int(np.argmax(val))
        if val[i] > best[0]:
            best = (float(val[i]), make(i), float(c[i]), float(lam[i]))
    if best[1] is None:
        raise OscError("family contains no positive-mass region")
    value = max(best[0], 0.0) if regions_seen else 0.0
    lam = best[3]
    return NormReport(
        value=value,
        witness=best[1],
        c_opt=best[2],
        lambda_opt=None if lam is None or np.isnan(lam) else lam,
        mode=mode,
        diagnostics={"regions": regions_seen},
    )


def k_phi(f: GridFunction, base, g: Gauge, m: CellMeasure) -> float:
    """sup over grid subcubes J of base of the phi-average of |f - f_J|."""
    if isinstance(base, DyadicCube):
        base = base.to_rect(f.domain)
    fam = RegionFamily(kind="cubes", domain=f.domain, base=base)
    return norm_sup(f, fam, g, m, mode="k_phi").value
