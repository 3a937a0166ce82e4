"""Finite spaces of homogeneous type: quasi-metric balls, Vitali covering,
the small-ball radius lemma, and ball-based oscillation norms.

Points carry positive masses (atoms are fine here); balls are open sets
{y : d(x, y) < r}.  Distinct balls only appear at realized distances, so
every enumeration below is finite and exhaustive.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .gauge import Gauge
from .oscillation import NormReport, OscError, _mode_batch

__all__ = [
    "SHTError",
    "FiniteSHT",
    "Ball",
    "SHTValidation",
    "VitaliSelection",
    "validate_sht",
    "vitali_select",
    "check_radius_lemma",
    "bmo_sht",
    "doubling_stats",
]


class SHTError(ValueError):
    """Raised on malformed quasi-metric data."""


@dataclass(frozen=True)
class SHTValidation:
    ok: bool
    kappa_min: float
    failures: tuple[str, ...]

    def __bool__(self) -> bool:
        return self.ok


def _kappa_min(dist: np.ndarray) -> float:
    """Smallest admissible quasi-triangle constant, by exhaustive triples."""
    n = dist.shape[0]
    worst = 0.0
    for z in range(n):
        denom = dist[:, z][:, None] + dist[z, :][None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(denom > 0, dist / denom, 0.0)
        worst = max(worst, float(ratio.max()))
    return worst


def validate_sht(
    dist: np.ndarray,
    kappa: float,
    weights: np.ndarray | None = None,
) -> SHTValidation:
    """Structural checks plus the minimal admissible kappa.

    Accepts iff the matrix is a quasi-metric and the declared kappa is at
    least the exhaustive maximum of d(x,y) / (d(x,z) + d(z,y)).
    """
    dist = np.asarray(dist, dtype=float)
    failures: list[str] = []
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        return SHTValidation(False, np.nan, ("matrix is not square",))
    if not np.all(np.isfinite(dist)):
        failures.append("non-finite entries")
    if np.any(dist < 0):
        failures.append("negative entries")
    if np.any(np.abs(np.diag(dist)) > 0):
        failures.append("nonzero diagonal")
    if not np.allclose(dist, dist.T, rtol=0, atol=0):
        failures.append("asymmetric matrix")
    off = dist[~np.eye(dist.shape[0], dtype=bool)]
    if off.size and np.any(off <= 0):
        failures.append("zero distance between distinct points")
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        if w.shape != (dist.shape[0],) or np.any(w <= 0):
            failures.append("weights must be positive, one per point")
    if failures:
        return SHTValidation(False, np.nan, tuple(failures))
    k_min = _kappa_min(dist)
    if kappa < k_min - 1e-12:
        failures.append(f"declared kappa {kappa:g} below minimal {k_min:g}")
    return SHTValidation(not failures, k_min, tuple(failures))


@dataclass(frozen=True, eq=False)
class FiniteSHT:
    """Finite quasi-metric measure space."""

    dist: np.ndarray
    weights: np.ndarray
    kappa: float
    gamma: float | None = None

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        report = validate_sht(d, self.kappa, w)
        if not report.ok:
            raise SHTError("invalid SHT: " + "; ".join(report.failures))
        d = d.copy()
        d.setflags(write=False)
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "weights", w)
        if self.gamma is None:
            object.__setattr__(self, "gamma", 2.0 * self.kappa)
        if self.gamma <= self.kappa:
            raise SHTError("gamma must exceed kappa")

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def members(self, center: int, radius: float) -> np.ndarray:
        return self.dist[center] < radius

    def mass(self, mask: np.ndarray) -> float:
        return float(self.weights[mask].sum())

    def ball_radii(self, center: int) -> np.ndarray:
        """Radii producing all distinct balls at this center, smallest first.

        Realized distances plus one value past the maximum (so the full
        space appears); open-ball membership only changes at realized
        distances, so this family is exhaustive.
        """
        ds = np.unique(self.dist[center])
        ds = ds[ds > 0]
        top = ds[-1] * (1 + 1e-9) if ds.size else 1.0
        return np.concatenate((ds, [top]))

    @classmethod
    def from_json(cls, source: str | dict) -> "FiniteSHT":
        if isinstance(source, str):
            with open(source) as fh:
                source = json.load(fh)
        d = np.asarray(source["dist"], dtype=float)
        n = int(source.get("points", d.shape[0]))
        if d.shape != (n, n):
            raise SHTError("dist shape does not match point count")
        return cls(
            dist=d,
            weights=np.asarray(source["weights"], dtype=float),
            kappa=float(source["kappa"]),
            gamma=float(source["gamma"]) if "gamma" in source else None,
        )

    def to_json(self) -> dict:
        return {
            "points": self.n,
            "dist": self.dist.tolist(),
            "weights": self.weights.tolist(),
            "kappa": self.kappa,
            "gamma": self.gamma,
        }


@dataclass(frozen=True)
class Ball:
    center: int
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise SHTError("ball radius must be positive")

    def dilate(self, factor: float) -> "Ball":
        return Ball(self.center, factor * self.radius)

    def to_json(self) -> dict:
        return {"center": self.center, "radius": self.radius}


@dataclass
class VitaliSelection:
    """Disjoint subfamily whose dilations cover the whole input family."""

    selected: list[int]
    dilation: float

    def to_json(self) -> dict:
        return {"selected": self.selected, "dilation": self.dilation}


def vitali_select(balls: Sequence[Ball], s: FiniteSHT) -> VitaliSelection:
    """Greedy Vitali covering: admit by nonincreasing radius when disjoint.

    Every input ball then meets an admitted ball of radius at least its
    own, hence lies inside that ball's kappa(4 kappa + 1) dilation by the
    quasi-triangle inequality; the dilation factor is recorded and the
    containment is directly checkable on the finite point set.
    """
    order = sorted(range(len(balls)), key=lambda i: (-balls[i].radius, i))
    admitted: list[int] = []
    masks: list[np.ndarray] = []
    for i in order:
        mask = s.members(balls[i].center, balls[i].radius)
        if not any((mask & mm).any() for mm in masks):
            admitted.append(i)
            masks.append(mask)
    admitted.sort()
    return VitaliSelection(selected=admitted, dilation=s.kappa * (4 * s.kappa + 1))


@dataclass(frozen=True)
class RadiusLemmaReport:
    L: float
    eps: float
    dilated_containment: bool
    small_ball_count: int

    def to_json(self) -> dict:
        return {
            "L": self.L,
            "eps": self.eps,
            "dilated_containment": self.dilated_containment,
            "small_ball_count": self.small_ball_count,
        }


def check_radius_lemma(s: FiniteSHT, B: Ball, eps: float) -> RadiusLemmaReport:
    """Smallest L with: mu(P) <= mu(gamma B)/L forces r(P) <= eps r(B).

    Scans every ball P centered inside B.  Also reports whether the
    dilations P* = kappa(4 kappa + 1) P of all small balls stay inside
    gamma B.  The reported L is an infimum: the implication holds for
    every L strictly above it, and L = 1 means it is vacuously sharp.
    """
    if eps <= 0:
        raise SHTError("eps must be positive")
    inside = np.nonzero(s.members(B.center, B.radius))[0]
    tilde_mass = s.mass(s.members(B.center, s.gamma * B.radius))
    star = s.kappa * (4 * s.kappa + 1)
    tilde_mask = s.members(B.center, s.gamma * B.radius)
    worst = 0.0
    containment = True
    small = 0
    for c in inside:
        for r in s.ball_radii(c):
            if r > eps * B.radius:
                mu = s.mass(s.members(c, r))
                if mu > 0:
                    worst = max(worst, tilde_mass / mu)
            else:
                small += 1
                star_mask = s.members(c, star * r)
                if not bool(np.all(tilde_mask[star_mask])):
                    containment = False
    return RadiusLemmaReport(
        L=max(worst, 1.0),
        eps=eps,
        dilated_containment=containment,
        small_ball_count=small,
    )


def _ball_family(s: FiniteSHT) -> list[tuple[Ball, np.ndarray]]:
    """All distinct balls in canonical order (center asc, radius asc)."""
    seen: set[bytes] = set()
    out = []
    for c in range(s.n):
        for r in s.ball_radii(c):
            mask = s.members(c, float(r))
            key = mask.tobytes()
            if key in seen:
                continue
            seen.add(key)
            out.append((Ball(c, float(r)), mask))
    return out


def bmo_sht(
    f: np.ndarray,
    s: FiniteSHT,
    g: Gauge | None,
    mode: str = "infc",
) -> NormReport:
    """Oscillation norm over all distinct balls of the space.

    Point masses act as the weights; the per-ball kernels are shared with
    the grid module, so a lattice SHT reproduces the 1-D grid computation
    on matching intervals.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (s.n,):
        raise SHTError("value vector length must match point count")
    fam = _ball_family(s)
    buckets: dict[int, tuple[list[int], list[np.ndarray], list[np.ndarray]]] = {}
    order: list[int] = []
    for idx, (_, mask) in enumerate(fam):
        k = int(mask.sum())
        if k == 0:
            continue
        if k not in buckets:
            buckets[k] = ([], [], [])
            order.append(k)
        buckets[k][0].append(idx)
        buckets[k][1].append(f[mask])
        buckets[k][2].append(s.weights[mask])
    best = (-np.inf, -1, np.nan, np.nan)
    for k in order:
        idxs, vs, ws = buckets[k]
        val, c, lam = _mode_batch(np.stack(vs), np.stack(ws), g, mode)
        j = int(np.argmax(val))
        if val[j] > best[0]:
            best = (float(val[j]), idxs[j], float(c[j]), float(lam[j]))
    if best[1] < 0:
        raise OscError("no positive-mass ball")
    lam = best[3]
    return NormReport(
        value=max(best[0], 0.0),
        witness=fam[best[1]][0],
        c_opt=best[2],
        lambda_opt=None if np.isnan(lam) else lam,
        mode=mode,
        diagnostics={"balls": len(fam)},
    )


def doubling_stats(s: FiniteSHT) -> dict:
    """Observed doubling constant and order over realized radii."""
    c_mu = 1.0
    for c in range(s.n):
        radii = s.ball_radii(c)
        for r in radii:
            small = s.mass(s.members(c, r))
            if small <= 0:
                continue
            big = s.mass(s.members(c, 2.0 * r))
            c_mu = max(c_mu, big / small)
    return {"c_mu": c_mu, "doubling_order": float(np.log2(c_mu))}
