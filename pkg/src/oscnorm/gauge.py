"""Gauge functions: the nonlinearities driving Luxemburg-type averages.

A gauge is a nondecreasing function phi on [0, oo) with phi(0) = 0 and
phi(t) -> oo.  The concave variants (identity, fractional power, log(1+t),
concave polygonals) admit Jensen-type bounds; the eventually-concave
polygonal is flat on an initial segment [0, t0] and concave beyond, which
is what the minorant construction for rough gauges produces.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "GaugeError",
    "Gauge",
    "IdentityGauge",
    "PowerGauge",
    "LogOnePlusGauge",
    "PolygonalGauge",
    "EventuallyConcaveGauge",
    "GaugeProbe",
    "GaugeValidation",
    "validate_gauge",
    "concave_minorant",
    "gauge_from_spec",
]


class GaugeError(ValueError):
    """Raised on gauge contract violations (bad parameters, bad inputs)."""


def _check_nonneg(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise GaugeError("gauge arguments must be nonnegative")
    return t


class Gauge:
    """Common interface of all gauge variants.

    ``eval`` and ``inverse`` are vectorized over numpy arrays.  ``inverse``
    returns the least t with phi(t) >= y (inf semantics on flat stretches).
    ``deriv`` is the a.e. derivative, used by the solver fast paths.
    """

    #: True when phi is concave on all of [0, oo).
    concave: bool = True
    #: "identity" | "power" | None; closed-form Luxemburg solves exist
    #: for the first two.
    closed_form: str | None = None

    def eval(self, t):
        raise NotImplementedError

    def inverse(self, y):
        raise NotImplementedError

    def deriv(self, t):
        raise NotImplementedError

    def eval_and_deriv(self, t):
        """Fused evaluation for solver inner loops."""
        return self.eval(t), self.deriv(t)

    def __call__(self, t):
        return self.eval(t)

    @property
    def inv1(self) -> float:
        """phi^{-1}(1), the constant entering every Jensen bound."""
        return float(self.inverse(1.0))

    def to_spec(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class IdentityGauge(Gauge):
    """phi(t) = t."""

    concave = True
    closed_form = "identity"

    def eval(self, t):
        return _check_nonneg(t)

    def inverse(self, y):
        return _check_nonneg(y)

    def deriv(self, t):
        return np.ones_like(np.asarray(t, dtype=float))

    def to_spec(self) -> dict:
        return {"kind": "identity"}


@dataclass(frozen=True)
class PowerGauge(Gauge):
    """phi(t) = t**p with p in (0, 1]."""

    p: float = 0.5

    concave = True
    closed_form = "power"

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0):
            raise GaugeError(f"power exponent must be in (0, 1], got {self.p}")

    def eval(self, t):
        return _check_nonneg(t) ** self.p

    def inverse(self, y):
        return _check_nonneg(y) ** (1.0 / self.p)

    def deriv(self, t):
        t = _check_nonneg(t)
        with np.errstate(divide="ignore"):
            return np.where(t > 0, self.p * t ** (self.p - 1.0), np.inf)

    def to_spec(self) -> dict:
        return {"kind": "power", "p": self.p}


@dataclass(frozen=True)
class LogOnePlusGauge(Gauge):
    """phi(t) = a * log(1 + t) with a > 0."""

    a: float = 1.0

    concave = True
    closed_form = None

    def __post_init__(self):
        if self.a <= 0:
            raise GaugeError(f"log1p scale must be positive, got {self.a}")

    def eval(self, t):
        return self.a * np.log1p(_check_nonneg(t))

    def inverse(self, y):
        return np.expm1(_check_nonneg(y) / self.a)

    def deriv(self, t):
        return self.a / (1.0 + _check_nonneg(t))

    def to_spec(self) -> dict:
        return {"kind": "log1p", "a": self.a}


def _polygonal_eval(t, ts, ys, final_slope):
    t = _check_nonneg(t)
    out = np.interp(t, ts, ys)
    last_t, last_y = ts[-1], ys[-1]
    return np.where(t > last_t, last_y + final_slope * (t - last_t), out)


def _polygonal_inverse(y, ts, ys, final_slope):
    # least t with phi(t) >= y; ys must be nondecreasing.  Flat stretches
    # in y map to their left endpoint via the left-to-right interp on the
    # strictly increasing knot subsequence.
    y = _check_nonneg(y)
    out = np.interp(y, ys, ts)
    last_t, last_y = ts[-1], ys[-1]
    if final_slope > 0:
        out = np.where(y > last_y, last_t + (y - last_y) / final_slope, out)
    elif np.any(y > last_y):
        raise GaugeError("value above gauge range and final slope is zero")
    return out


@dataclass(frozen=True)
class PolygonalGauge(Gauge):
    """Piecewise-linear gauge through increasing vertices, first at (0, 0).

    Beyond the last vertex the graph continues with ``final_slope``; the
    slope sequence (segments then final) must be nonincreasing and the
    final slope positive for a valid concave gauge, but the constructor
    only checks structural sanity so that invalid candidates can be built
    and fed to :func:`validate_gauge`.
    """

    vertices: tuple[tuple[float, float], ...] = ((0.0, 0.0), (1.0, 1.0))
    final_slope: float = 1.0

    concave = True  # refined in __post_init__
    closed_form = None

    def __post_init__(self):
        vs = tuple((float(t), float(y)) for t, y in self.vertices)
        if len(vs) < 2:
            raise GaugeError("polygonal gauge needs at least two vertices")
        ts = [t for t, _ in vs]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise GaugeError("polygonal vertex abscissae must be strictly increasing")
        object.__setattr__(self, "vertices", vs)
        object.__setattr__(self, "_ts", np.array(ts))
        object.__setattr__(self, "_ys", np.array([y for _, y in vs]))
        slopes = self._segment_slopes()
        object.__setattr__(
            self, "concave", bool(np.all(np.diff(slopes) <= 1e-12))
        )

    def _segment_slopes(self) -> np.ndarray:
        ts, ys = self._ts, self._ys
        return np.append(np.diff(ys) / np.diff(ts), self.final_slope)

    def eval(self, t):
        return _polygonal_eval(t, self._ts, self._ys, self.final_slope)

    def inverse(self, y):
        return _polygonal_inverse(y, self._ts, self._ys, self.final_slope)

    def deriv(self, t):
        t = _check_nonneg(t)
        slopes = self._segment_slopes()
        idx = np.clip(np.searchsorted(self._ts, t, side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx]

    def eval_and_deriv(self, t):
        # one segment lookup serves both values
        t = _check_nonneg(t)
        slopes = self._segment_slopes()
        idx = np.clip(np.searchsorted(self._ts, t, side="right") - 1, 0, len(slopes) - 1)
        s = slopes[idx]
        return self._ys[idx] + s * (t - self._ts[idx]), s

    def to_spec(self) -> dict:
        return {
            "kind": "polygonal",
            "vertices": [list(v) for v in self.vertices],
            "final_slope": self.final_slope,
        }


@dataclass(frozen=True)
class EventuallyConcaveGauge(Gauge):
    """Polygonal gauge that is 0 on [0, t0] and concave beyond.

    The vertices are (t_n, n) for n = 0..N; gaps t_{n+1} - t_n must be
    nondecreasing.  ``final_slope`` extends past the last vertex (at most
    the last segment slope, so concavity on [t0, oo) is preserved).
    The inverse is the inverse of the restriction to [t0, oo), hence
    inverse(0) = t0.
    """

    vertices: tuple[tuple[float, float], ...] = ((0.0, 0.0), (1.0, 1.0))
    final_slope: float | None = None

    concave = False
    closed_form = None

    def __post_init__(self):
        vs = tuple((float(t), float(y)) for t, y in self.vertices)
        if len(vs) < 2:
            raise GaugeError("eventually-concave gauge needs at least two vertices")
        ts = np.array([t for t, _ in vs])
        ys = np.array([y for _, y in vs])
        if np.any(np.diff(ts) <= 0):
            raise GaugeError("vertex abscissae must be strictly increasing")
        if np.any(np.diff(ys) <= 0):
            raise GaugeError("vertex levels must be strictly increasing")
        gaps = np.diff(ts)
        if np.any(np.diff(gaps) < -1e-12 * gaps[:-1]):
            raise GaugeError("vertex gaps must be nondecreasing (concavity)")
        fs = self.final_slope
        last = (ys[-1] - ys[-2]) / (ts[-1] - ts[-2])
        if fs is None:
            fs = last
        if not (0.0 < fs <= last * (1 + 1e-12)):
            raise GaugeError("final slope must be in (0, last segment slope]")
        object.__setattr__(self, "vertices", vs)
        object.__setattr__(self, "final_slope", float(fs))
        object.__setattr__(self, "_ts", ts)
        object.__setattr__(self, "_ys", ys)

    @property
    def t0(self) -> float:
        """Right end of the flat initial segment."""
        return float(self._ts[0])

    def eval(self, t):
        t = _check_nonneg(t)
        out = _polygonal_eval(t, self._ts, self._ys, self.final_slope)
        return np.where(t <= self._ts[0], 0.0, out)

    def inverse(self, y):
        return _polygonal_inverse(y, self._ts, self._ys, self.final_slope)

    def deriv(self, t):
        t = _check_nonneg(t)
        ts = self._ts
        slopes = np.append(np.diff(self._ys) / np.diff(ts), self.final_slope)
        idx = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(slopes) - 1)
        d = slopes[idx]
        return np.where(t < ts[0], 0.0, d)

    def eval_and_deriv(self, t):
        t = _check_nonneg(t)
        ts, ys = self._ts, self._ys
        slopes = np.append(np.diff(ys) / np.diff(ts), self.final_slope)
        idx = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(slopes) - 1)
        s = slopes[idx]
        flat = t <= ts[0]
        val = np.where(flat, 0.0, ys[idx] + s * (t - ts[idx]))
        return val, np.where(flat, 0.0, s)

    def to_spec(self) -> dict:
        return {
            "kind": "eventually_concave",
            "vertices": [list(v) for v in self.vertices],
            "final_slope": self.final_slope,
        }


@dataclass(frozen=True)
class GaugeProbe:
    """Sampled access to a rough gauge candidate psi on [0, t_max].

    psi only needs to be evaluable pointwise; everything downstream works
    from ``sample_count`` uniform samples plus local bisection refinement.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    t_max: float
    sample_count: int = 10_000

    def __post_init__(self):
        if self.t_max <= 0:
            raise GaugeError("probe horizon must be positive")
        if self.sample_count < 16:
            raise GaugeError("probe needs at least 16 samples")

    def samples(self) -> tuple[np.ndarray, np.ndarray]:
        ts = np.linspace(0.0, self.t_max, self.sample_count)
        vals = np.asarray(self.evaluator(ts), dtype=float)
        if vals.shape != ts.shape:
            vals = np.array([float(self.evaluator(t)) for t in ts])
        if abs(vals[0]) > 1e-12:
            raise GaugeError("probe must satisfy psi(0) = 0")
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise GaugeError("probe values must be finite and nonnegative")
        return ts, vals


@dataclass(frozen=True)
class GaugeValidation:
    """Outcome of :func:`validate_gauge`."""

    ok: bool
    failures: tuple[str, ...]
    subadditivity_ok: bool

    def __bool__(self) -> bool:
        return self.ok


def _subadditivity_ok(g: Gauge, t_hi: float = 100.0, steps: int = 40) -> bool:
    # sampled triangle t1 + t2 <= t_hi; implied by concavity + phi(0) = 0
    grid = np.linspace(0.0, t_hi, steps)
    t1, t2 = np.meshgrid(grid, grid)
    lhs = g.eval(t1 + t2)
    rhs = g.eval(t1) + g.eval(t2)
    return bool(np.all(lhs <= rhs + 1e-12 * (1.0 + np.abs(rhs))))


def validate_gauge(g: Gauge) -> GaugeValidation:
    """Check the gauge hypotheses: phi(0)=0, nondecreasing, concave, -> oo.

    Returns a structured report; never raises on a well-formed object.
    """
    failures: list[str] = []
    if float(g.eval(0.0)) != 0.0:
        failures.append("phi(0) != 0")
    if isinstance(g, (PolygonalGauge, EventuallyConcaveGauge)):
        ts = g._ts
        slopes = np.append(np.diff(g._ys) / np.diff(ts), g.final_slope)
        if np.any(slopes < -1e-15):
            failures.append("not nondecreasing")
        if np.any(np.diff(slopes) > 1e-12 * (1.0 + np.abs(slopes[:-1]))):
            failures.append("not concave: segment slopes increase")
        if g.final_slope <= 0:
            failures.append("does not tend to infinity: final slope is 0")
        if isinstance(g, EventuallyConcaveGauge) and g.t0 > 0:
            failures.append("not concave: flat initial segment before t0")
    elif isinstance(g, (IdentityGauge, PowerGauge, LogOnePlusGauge)):
        pass  # concave by construction, parameters checked at build time
    else:
        failures.append("unknown gauge variant")
    sub_ok = _subadditivity_ok(g)
    if not sub_ok and not failures:
        failures.append("subadditivity failed on sampled triangle")
    return GaugeValidation(ok=not failures, failures=tuple(failures), subadditivity_ok=sub_ok)


def _refine_level_crossing(evaluator, lo: float, hi: float, level: float, iters: int = 60) -> float:
    """Bisect [lo, hi] with psi(lo) < level <= psi(hi); returns the upper end."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if float(evaluator(mid)) < level:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    return hi


def concave_minorant(probe: GaugeProbe, n_max: int, delta: float = 1.0) -> EventuallyConcaveGauge:
    """Build the eventually-concave polygonal minorant of a rough gauge.

    Vertices (t_n, n) for n = 0..n_max are chosen so that t_n sits at or
    beyond the last sampled excursion of psi below level n+1; gaps are
    forced nondecreasing, which makes the polygonal concave past t_0 and
    dominated by psi at every probe sample.  The extension slope beyond the
    last vertex is flattened, if necessary, so domination also holds at
    samples past t_{n_max}.

    Raises GaugeError naming the first level psi does not reach within the
    probe horizon.
    """
    if n_max < 1:
        raise GaugeError("n_max must be >= 1")
    if delta <= 0:
        raise GaugeError("delta must be positive")
    ts, vals = probe.samples()

    def tau(level: int) -> float:
        below = np.nonzero(vals < level)[0]
        if below.size == 0:
            # psi >= level everywhere sampled, so the crossing is at 0
            return 0.0
        i = int(below[-1])
        if i == len(ts) - 1:
            raise GaugeError(
                f"probe horizon too short: psi stays below level {level} "
                f"at the last sample t = {ts[-1]:g}"
            )
        return _refine_level_crossing(probe.evaluator, ts[i], ts[i + 1], float(level))

    taus = [tau(k) for k in range(1, n_max + 2)]

    verts = [taus[0]]
    verts.append(max(taus[1], verts[0] + delta))
    for n in range(1, n_max):
        verts.append(max(taus[n + 1], 2.0 * verts[n] - verts[n - 1]))

    t_arr = np.array(verts)
    last_gap = t_arr[-1] - t_arr[-2]
    slope = 1.0 / last_gap
    beyond = ts > t_arr[-1]
    if np.any(beyond):
        ratios = (vals[beyond] - float(n_max)) / (ts[beyond] - t_arr[-1])
        cap = float(np.min(ratios))
        if cap <= 0:
            raise GaugeError("probe dips below the top level past the last vertex")
        slope = min(slope, cap * (1.0 - 1e-12))

    vertices = tuple((float(t), float(n)) for n, t in enumerate(verts))
    return EventuallyConcaveGauge(vertices=vertices, final_slope=slope)


def gauge_from_spec(spec: dict | str) -> Gauge:
    """Build a gauge from its tagged-record configuration form.

    Accepts a dict, a JSON string, or the CLI shorthands ``id``,
    ``power:P`` and ``log1p:A``.
    """
    if isinstance(spec, str):
        s = spec.strip()
        if s.startswith("{"):
            spec = json.loads(s)
        elif s in ("id", "identity"):
            return IdentityGauge()
        elif s.startswith("power:"):
            return PowerGauge(p=float(s.split(":", 1)[1]))
        elif s.startswith("log1p:"):
            return LogOnePlusGauge(a=float(s.split(":", 1)[1]))
        elif s == "log1p":
            return LogOnePlusGauge()
        else:
            raise GaugeError(f"unknown gauge shorthand: {spec!r}")
    kind = spec.get("kind")
    if kind == "identity":
        return IdentityGauge()
    if kind == "power":
        return PowerGauge(p=float(spec["p"]))
    if kind == "log1p":
        return LogOnePlusGauge(a=float(spec["a"]))
    if kind == "polygonal":
        return PolygonalGauge(
            vertices=tuple((float(t), float(y)) for t, y in spec["vertices"]),
            final_slope=float(spec["final_slope"]),
        )
    if kind == "eventually_concave":
        return EventuallyConcaveGauge(
            vertices=tuple((float(t), float(y)) for t, y in spec["vertices"]),
            final_slope=float(spec["final_slope"]),
        )
    raise GaugeError(f"unknown gauge kind: {kind!r}")
