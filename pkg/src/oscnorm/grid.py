"""Weighted cell grids: discrete geometry, exact integration, mu-dyadic trees.

Functions are piecewise constant on the cells of a power-of-two grid and
measures are nonnegative cell masses spread uniformly inside each cell
(a piecewise-constant density).  Every rectangle boundary then carries
measure zero and all integrals reduce to prefix sums, with fractional end
cells handled exactly by linear interpolation of the prefix table.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "GridError",
    "GridDomain",
    "CellMeasure",
    "GridFunction",
    "Rect",
    "DyadicCube",
    "RealInterval",
    "RealBox",
    "integrate",
    "region_mass",
    "region_arrays",
    "mu_dyadic_split",
    "build_mu_dyadic_tree",
    "MuDyadicNode",
    "MuDyadicTree",
    "load_cell_array",
]


class GridError(ValueError):
    """Raised on grid and measure contract violations."""


def _is_pow2(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridDomain:
    """An n-dimensional cell grid over a cube, n in {1, 2}.

    ``cells_per_side`` must be a power of two so dyadic subdivision reaches
    single cells exactly.
    """

    dim: int
    cells_per_side: int
    origin: tuple[float, ...] = None  # type: ignore[assignment]
    side: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GridError(f"dim must be 1 or 2, got {self.dim}")
        if not _is_pow2(self.cells_per_side):
            raise GridError(
                f"cells_per_side must be a power of two >= 2, got {self.cells_per_side}"
            )
        if self.side <= 0:
            raise GridError("domain side must be positive")
        if self.origin is None:
            object.__setattr__(self, "origin", (0.0,) * self.dim)
        elif len(self.origin) != self.dim:
            raise GridError("origin length must match dim")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells_per_side,) * self.dim

    @property
    def levels(self) -> int:
        """Number of dyadic generations down to single cells."""
        return int(self.cells_per_side).bit_length() - 1

    @property
    def cell_width(self) -> float:
        return self.side / self.cells_per_side

    @property
    def cell_volume(self) -> float:
        return self.cell_width ** self.dim

    def edges(self, axis: int = 0) -> np.ndarray:
        return self.origin[axis] + self.cell_width * np.arange(self.cells_per_side + 1)

    def centers(self, axis: int = 0) -> np.ndarray:
        return self.origin[axis] + self.cell_width * (np.arange(self.cells_per_side) + 0.5)

    def to_units(self, x, axis: int = 0) -> np.ndarray:
        """Map real coordinates to grid units in [0, cells_per_side]."""
        s = (np.asarray(x, dtype=float) - self.origin[axis]) / self.cell_width
        eps = 1e-9
        if np.any(s < -eps) or np.any(s > self.cells_per_side + eps):
            raise GridError("coordinate outside domain")
        return np.clip(s, 0.0, float(self.cells_per_side))


@dataclass(frozen=True)
class Rect:
    """Axis-aligned cell-index region: per-axis half-open ranges [lo, hi)."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise GridError("rect lo/hi must have equal length")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise GridError(f"empty rect {self.lo}..{self.hi}")
        if any(l < 0 for l in self.lo):
            raise GridError("rect outside domain")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def ncells(self) -> int:
        n = 1
        for l, h in zip(self.lo, self.hi):
            n *= h - l
        return n

    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(l, h) for l, h in zip(self.lo, self.hi))

    def address(self) -> tuple:
        return tuple(self.lo) + tuple(self.hi)

    def contains(self, other: "Rect") -> bool:
        return all(
            sl <= ol and oh <= sh
            for sl, sh, ol, oh in zip(self.lo, self.hi, other.lo, other.hi)
        )

    def to_json(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class DyadicCube:
    """Dyadic address: level ell, integer index per axis in [0, 2**ell)."""

    level: int
    index: tuple[int, ...]

    def __post_init__(self):
        if self.level < 0:
            raise GridError("level must be nonnegative")
        if any(not (0 <= i < 2 ** self.level) for i in self.index):
            raise GridError("dyadic index out of range")

    @property
    def dim(self) -> int:
        return len(self.index)

    def children(self) -> list["DyadicCube"]:
        out = []
        for off in np.ndindex(*(2,) * self.dim):
            out.append(
                DyadicCube(
                    self.level + 1,
                    tuple(2 * i + o for i, o in zip(self.index, off)),
                )
            )
        return out

    def to_rect(self, domain: GridDomain) -> Rect:
        if self.level > domain.levels:
            raise GridError("dyadic level below single-cell resolution")
        w = domain.cells_per_side >> self.level
        lo = tuple(i * w for i in self.index)
        return Rect(lo=lo, hi=tuple(l + w for l in lo))


@dataclass(frozen=True)
class RealInterval:
    """Closed interval with real endpoints (1-D regions of the mu-dyadic grid)."""

    a: float
    b: float

    def __post_init__(self):
        if not self.b > self.a:
            raise GridError(f"empty interval [{self.a}, {self.b}]")

    def address(self) -> tuple:
        return (self.a, self.b)

    def to_json(self) -> dict:
        return {"a": self.a, "b": self.b}


@dataclass(frozen=True)
class RealBox:
    """Axis-aligned box with real bounds (2-D regions from ball/cube fits)."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise GridError("empty box")

    def address(self) -> tuple:
        return (self.x0, self.y0, self.x1, self.y1)

    def to_json(self) -> dict:
        return {"x0": self.x0, "x1": self.x1, "y0": self.y0, "y1": self.y1}


def _prefix(values: np.ndarray) -> np.ndarray:
    """Prefix table with a zero border; block sums become differences."""
    if values.ndim == 1:
        out = np.zeros(values.size + 1)
        np.cumsum(values, out=out[1:])
        return out
    out = np.zeros((values.shape[0] + 1, values.shape[1] + 1))
    out[1:, 1:] = values.cumsum(axis=0).cumsum(axis=1)
    return out


def _prefix_at(pref: np.ndarray, cells: np.ndarray, s):
    """Evaluate the continuous prefix integral at grid-unit coordinates.

    Linear (1-D) or bilinear (2-D) interpolation of the prefix table is
    exact for piecewise-constant densities.
    """
    if pref.ndim == 1:
        n = pref.size - 1
        s = np.asarray(s, dtype=float)
        i = np.clip(s.astype(int), 0, n - 1)
        f = s - i
        return pref[i] + f * cells[i]
    n = pref.shape[0] - 1
    sx, sy = (np.asarray(v, dtype=float) for v in s)
    ix = np.clip(sx.astype(int), 0, n - 1)
    iy = np.clip(sy.astype(int), 0, n - 1)
    fx, fy = sx - ix, sy - iy
    return (
        pref[ix, iy]
        + fx * (pref[ix + 1, iy] - pref[ix, iy])
        + fy * (pref[ix, iy + 1] - pref[ix, iy])
        + fx * fy * cells[ix, iy]
    )


@dataclass(frozen=True, eq=False)
class CellMeasure:
    """Nonnegative mass per cell, spread uniformly within each cell."""

    domain: GridDomain
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != self.domain.shape:
            raise GridError(f"weights shape {w.shape} != domain shape {self.domain.shape}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise GridError("weights must be finite and nonnegative")
        if w.sum() <= 0:
            raise GridError("total mass must be positive")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_pref", _prefix(w))
        object.__setattr__(self, "_tables", {})

    @classmethod
    def uniform(cls, domain: GridDomain) -> "CellMeasure":
        """Lebesgue measure: each cell carries its own volume."""
        return cls(domain, np.full(domain.shape, domain.cell_volume))

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def _fw_tables(self, f: "GridFunction") -> tuple[np.ndarray, np.ndarray]:
        # keyed by id(f); the cached entry keeps f alive so ids stay valid
        key = id(f)
        hit = self._tables.get(key)
        if hit is None:
            fw = f.values * self.weights
            hit = (f, fw, _prefix(fw))
            self._tables[key] = hit
        return hit[1], hit[2]


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real sampled function, one value per grid cell."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.domain.shape:
            raise GridError(f"values shape {v.shape} != domain shape {self.domain.shape}")
        if not np.all(np.isfinite(v)):
            raise GridError("values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_csv(cls, path: str | Path, domain: GridDomain | None = None) -> "GridFunction":
        vals = load_cell_array(path)
        if domain is None:
            dim = vals.ndim
            domain = GridDomain(dim=dim, cells_per_side=vals.shape[0])
        return cls(domain, vals)

    def map(self, fn) -> "GridFunction":
        return GridFunction(self.domain, fn(self.values))


def load_cell_array(source: str | Path) -> np.ndarray:
    """Read cell values from CSV (row-major) or an inline JSON array."""
    text = None
    s = str(source)
    if s.lstrip().startswith("["):
        text = s
    if text is not None:
        arr = np.asarray(json.loads(text), dtype=float)
    else:
        arr = np.loadtxt(source, delimiter=",", dtype=float, ndmin=1)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim not in (1, 2):
        raise GridError(f"expected 1-D or 2-D cell data, got shape {arr.shape}")
    if arr.ndim == 2 and arr.shape[0] != arr.shape[1]:
        raise GridError(f"2-D grids must be square, got shape {arr.shape}")
    return arr


def _region_units(domain: GridDomain, region) -> tuple[np.ndarray, np.ndarray]:
    """Normalize any region type to per-axis grid-unit bounds (lo, hi)."""
    if isinstance(region, DyadicCube):
        region = region.to_rect(domain)
    if isinstance(region, Rect):
        if any(h > domain.cells_per_side for h in region.hi):
            raise GridError("rect outside domain")
        return np.array(region.lo, dtype=float), np.array(region.hi, dtype=float)
    if isinstance(region, RealInterval):
        if domain.dim != 1:
            raise GridError("interval region on a 2-D domain")
        return np.atleast_1d(domain.to_units(region.a)), np.atleast_1d(domain.to_units(region.b))
    if isinstance(region, tuple) and len(region) == 2 and domain.dim == 1:
        return np.atleast_1d(domain.to_units(region[0])), np.atleast_1d(domain.to_units(region[1]))
    if isinstance(region, RealBox):
        if domain.dim != 2:
            raise GridError("box region on a 1-D domain")
        lo = np.array([domain.to_units(region.x0, 0), domain.to_units(region.y0, 1)])
        hi = np.array([domain.to_units(region.x1, 0), domain.to_units(region.y1, 1)])
        return lo, hi
    raise GridError(f"unsupported region type: {type(region).__name__}")


def _box_integral(pref: np.ndarray, cells: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    if pref.ndim == 1:
        d = _prefix_at(pref, cells, hi) - _prefix_at(pref, cells, lo)
        return float(np.asarray(d).reshape(-1)[0])
    x0, y0 = lo
    x1, y1 = hi
    g = _prefix_at(pref, cells, (np.array([x1, x0, x1, x0]), np.array([y1, y1, y0, y0])))
    return float(g[0] - g[1] - g[2] + g[3])


def region_mass(m: CellMeasure, region) -> float:
    """mu(region), exact under the piecewise-constant density model."""
    lo, hi = _region_units(m.domain, region)
    if np.any(hi <= lo):
        raise GridError("empty region")
    return _box_integral(m._pref, m.weights, lo, hi)


def integrate(f: GridFunction, region, m: CellMeasure) -> float:
    """Exact integral of f over the region against the cell measure."""
    if f.domain.shape != m.domain.shape:
        raise GridError("function and measure live on different grids")
    lo, hi = _region_units(f.domain, region)
    if np.any(hi <= lo):
        raise GridError("empty region")
    fw, pref = m._fw_tables(f)
    return _box_integral(pref, fw, lo, hi)


def region_arrays(f: GridFunction, region, m: CellMeasure) -> tuple[np.ndarray, np.ndarray]:
    """Cell values and their masses inside a region (fractional ends scaled).

    The pair (values, weights) is all the oscillation kernels need; the
    returned weights sum to mu(region).
    """
    lo, hi = _region_units(f.domain, region)
    if f.domain.dim == 1:
        i0 = int(lo[0])
        i1 = min(int(np.ceil(hi[0])), f.domain.cells_per_side)
        idx = np.arange(i0, i1)
        frac = np.minimum(idx + 1.0, hi[0]) - np.maximum(idx, lo[0])
        return f.values[i0:i1], m.weights[i0:i1] * frac
    (x0, y0), (x1, y1) = lo, hi
    i0, i1 = int(x0), min(int(np.ceil(x1)), f.domain.cells_per_side)
    j0, j1 = int(y0), min(int(np.ceil(y1)), f.domain.cells_per_side)
    fx = np.minimum(np.arange(i0, i1) + 1.0, x1) - np.maximum(np.arange(i0, i1), x0)
    fy = np.minimum(np.arange(j0, j1) + 1.0, y1) - np.maximum(np.arange(j0, j1), y0)
    w = m.weights[i0:i1, j0:j1] * np.outer(fx, fy)
    return f.values[i0:i1, j0:j1].ravel(), w.ravel()


# ---------------------------------------------------------------------------
# mu-dyadic grid: split intervals by mass, not by length
# ---------------------------------------------------------------------------


def mu_dyadic_split(interval, m: CellMeasure) -> float:
    """Split point x with mu([a, x]) = mu([x, b]) = mu([a, b]) / 2.

    When the half-mass level sits on a flat stretch of the cumulative mass
    (zero-density cells) the split is non-unique; the rightmost admissible
    point is returned, which maximizes the length of the left child.
    """
    if m.domain.dim != 1:
        raise GridError("mu-dyadic splits are one-dimensional")
    a, b = (interval.a, interval.b) if isinstance(interval, RealInterval) else interval
    sa, sb = float(m.domain.to_units(a)), float(m.domain.to_units(b))
    if sb <= sa:
        raise GridError("empty interval")
    pref, w = m._pref, m.weights
    ga = float(_prefix_at(pref, w, sa))
    gb = float(_prefix_at(pref, w, sb))
    if gb - ga <= 0:
        raise GridError("zero-mass interval cannot be split")
    target = 0.5 * (ga + gb)

    # knots of the cumulative mass restricted to [a, b]
    first = int(np.floor(sa)) + 1
    last = int(np.ceil(sb)) - 1
    ss = np.concatenate(([sa], np.arange(first, last + 1, dtype=float), [sb]))
    gs = _prefix_at(pref, w, ss)
    j = int(np.searchsorted(gs, target, side="right"))
    j = min(j, len(ss) - 1)
    g_left = gs[j - 1]
    if target <= g_left:
        x_units = ss[j - 1]  # rightmost knot of the flat stretch
    else:
        slope = (gs[j] - g_left) / (ss[j] - ss[j - 1])
        x_units = ss[j - 1] + (target - g_left) / slope
    return m.domain.origin[0] + x_units * m.domain.cell_width


@dataclass
class MuDyadicNode:
    a: float
    b: float
    mass: float
    split: float | None = None
    left: "MuDyadicNode | None" = None
    right: "MuDyadicNode | None" = None

    @property
    def interval(self) -> RealInterval:
        return RealInterval(self.a, self.b)

    def to_json(self) -> dict:
        if self.split is None:
            return {"a": self.a, "b": self.b}
        return {
            "a": self.a,
            "b": self.b,
            "split": self.split,
            "left": self.left.to_json(),
            "right": self.right.to_json(),
        }


@dataclass
class MuDyadicTree:
    """Binary interval hierarchy with equal-mass children at every node."""

    root: MuDyadicNode
    depth: int
    measure: CellMeasure

    def generation(self, level: int) -> list[MuDyadicNode]:
        nodes = [self.root]
        for _ in range(level):
            nxt = []
            for n in nodes:
                if n.left is None:
                    raise GridError("generation deeper than built tree")
                nxt.extend((n.left, n.right))
            nodes = nxt
        return nodes

    def all_nodes(self) -> Iterator[MuDyadicNode]:
        stack = [self.root]
        while stack:
            n = stack.pop()
            yield n
            if n.left is not None:
                stack.extend((n.right, n.left))

    def intervals(self) -> list[RealInterval]:
        return [n.interval for n in self.all_nodes()]

    def to_json(self) -> dict:
        return {"depth": self.depth, "root": self.root.to_json()}


MAX_TREE_DEPTH = 20


def build_mu_dyadic_tree(
    interval, m: CellMeasure, depth: int, max_depth: int = MAX_TREE_DEPTH
) -> MuDyadicTree:
    """Recursively halve mass down to the requested generation."""
    if depth < 1:
        raise GridError("depth must be >= 1")
    if depth > max_depth:
        raise GridError(f"depth {depth} exceeds configured maximum {max_depth}")
    a, b = (interval.a, interval.b) if isinstance(interval, RealInterval) else interval

    def make(a: float, b: float, mass: float, level: int) -> MuDyadicNode:
        node = MuDyadicNode(a=a, b=b, mass=mass)
        if level < depth:
            if mass <= 0:
                raise GridError("zero-mass node before target depth")
            x = mu_dyadic_split((a, b), m)
            node.split = x
            node.left = make(a, x, 0.5 * mass, level + 1)
            node.right = make(x, b, 0.5 * mass, level + 1)
        return node

    total = region_mass(m, (a, b))
    if total <= 0:
        raise GridError("zero-mass interval")
    return MuDyadicTree(root=make(float(a), float(b), total, 0), depth=depth, measure=m)
