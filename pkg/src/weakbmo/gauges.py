"""Oscillation gauges h: built-in families, property audits and regularization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import FlagMissingError, FormatError, HorizonTooSmallError, PreconditionError

FLAGS = frozenset(
    {
        "vanishes_at_zero",
        "increasing",
        "concave",
        "third_derivative_positive",
        "tends_to_infinity",
        "continuous",
    }
)
ADMISSIBLE = frozenset(FLAGS)


@dataclass(frozen=True, eq=False)
class OscillationGauge:
    """A non-negative function on [0, inf) with declared analytic properties.

    ``func`` must accept numpy arrays.  Derivatives, when given, are used by
    the Bellman machinery instead of finite differences.
    """

    name: str
    func: Callable
    flags: frozenset = frozenset()
    d1: Optional[Callable] = None
    d2: Optional[Callable] = None
    d3: Optional[Callable] = None
    inverse: Optional[Callable] = None

    def __post_init__(self):
        unknown = set(self.flags) - FLAGS
        if unknown:
            raise ValueError(f"unknown gauge flags {sorted(unknown)}")
        object.__setattr__(self, "flags", frozenset(self.flags))

    def __call__(self, t):
        if np.ndim(t) == 0:
            return float(self.func(np.float64(t)))
        return self.func(np.asarray(t, dtype=float))

    def has(self, *flags) -> bool:
        return all(f in self.flags for f in flags)

    def require(self, *flags, what="this operation"):
        missing = [f for f in flags if f not in self.flags]
        if missing:
            raise FlagMissingError(
                f"gauge {self.name!r} lacks {', '.join(missing)} required by {what}"
            )

    @property
    def admissible(self) -> bool:
        return self.flags >= ADMISSIBLE

    def derivative(self, t):
        """h'(t), from the closed form if available, else a centered difference."""
        if self.d1 is not None:
            return self.d1(t)
        return centered_difference(self, t)

    def shifted(self, c: float) -> "OscillationGauge":
        """h + c; keeps monotonicity and curvature flags."""
        keep = self.flags - {"vanishes_at_zero"}
        return OscillationGauge(
            name=f"{self.name}+{c:g}",
            func=lambda t, f=self.func: f(t) + c,
            flags=keep,
            d1=self.d1,
            d2=self.d2,
            d3=self.d3,
        )


def centered_difference(h: Callable, t, order: int = 1):
    """Centered finite difference with step max(1e-6, 1e-6 t)."""
    t = np.asarray(t, dtype=float)
    step = np.maximum(1e-6, 1e-6 * np.abs(t))
    f = h.func if isinstance(h, OscillationGauge) else h
    if order == 1:
        out = (f(t + step) - f(t - step)) / (2 * step)
    elif order == 2:
        out = (f(t + step) - 2 * f(t) + f(t - step)) / step**2
    elif order == 3:
        out = (
            f(t + 2 * step) - 2 * f(t + step) + 2 * f(t - step) - f(t - 2 * step)
        ) / (2 * step**3)
    else:
        raise ValueError("order must be 1, 2 or 3")
    return float(out) if out.ndim == 0 else out


# built-in families -----------------------------------------------------------


def gauge_power(p: float) -> OscillationGauge:
    """h(t) = t**p for 0 < p <= 1."""
    if not (0 < p <= 1):
        raise PreconditionError(f"power gauge needs 0 < p <= 1, got {p}")
    flags = set(FLAGS)
    if p == 1:
        flags.discard("third_derivative_positive")

    def d1(t):
        t = np.asarray(t, dtype=float)
        return p * t ** (p - 1) if p != 1 else np.ones_like(t)

    return OscillationGauge(
        name=f"power:p={p:g}",
        func=lambda t: np.power(t, p),
        flags=frozenset(flags),
        d1=d1,
        d2=lambda t: p * (p - 1) * np.asarray(t, dtype=float) ** (p - 2),
        d3=lambda t: p * (p - 1) * (p - 2) * np.asarray(t, dtype=float) ** (p - 3),
        inverse=lambda y: np.power(y, 1.0 / p),
    )


def gauge_log() -> OscillationGauge:
    """h(t) = log(1 + t)."""
    return OscillationGauge(
        name="log1p",
        func=np.log1p,
        flags=FLAGS,
        d1=lambda t: 1.0 / (1.0 + np.asarray(t, dtype=float)),
        d2=lambda t: -1.0 / (1.0 + np.asarray(t, dtype=float)) ** 2,
        d3=lambda t: 2.0 / (1.0 + np.asarray(t, dtype=float)) ** 3,
        inverse=np.expm1,
    )


def gauge_table(t_values, h_values, name="table") -> OscillationGauge:
    """Piecewise-linear gauge through the given knots, extended linearly past the last one.

    No derivatives are attached, so Bellman code falls back to finite
    differences.  Flags are inferred from the knots.
    """
    t = np.asarray(t_values, dtype=float)
    y = np.asarray(h_values, dtype=float)
    if t.ndim != 1 or t.size < 2 or t.size != y.size:
        raise FormatError("gauge table needs at least two (t, h) pairs")
    if t[0] != 0.0:
        raise FormatError("gauge table must start at t = 0")
    if np.any(np.diff(t) <= 0):
        raise FormatError("gauge table t values must be strictly increasing")
    if np.any(y < 0) or not np.all(np.isfinite(y)):
        raise FormatError("gauge table values must be finite and non-negative")
    slope_end = (y[-1] - y[-2]) / (t[-1] - t[-2])

    def func(s):
        s = np.asarray(s, dtype=float)
        out = np.interp(s, t, y)
        beyond = s > t[-1]
        if np.any(beyond):
            out = np.where(beyond, y[-1] + slope_end * (s - t[-1]), out)
        return out

    slopes = np.diff(y) / np.diff(t)
    flags = {"continuous"}
    if y[0] == 0:
        flags.add("vanishes_at_zero")
    if np.all(slopes > 0):
        flags.add("increasing")
        if slope_end > 0:
            flags.add("tends_to_infinity")
    if np.all(np.diff(slopes) <= 0):
        flags.add("concave")
    return OscillationGauge(name=name, func=func, flags=frozenset(flags))


def load_gauge_table(path) -> OscillationGauge:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected two columns, got {len(parts)}")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric entry") from None
    arr = np.array(rows)
    return gauge_table(arr[:, 0], arr[:, 1], name=f"table:{path}")


def parse_gauge(spec: str) -> OscillationGauge:
    """Resolve a CLI gauge string: ``power:p=0.5``, ``log1p``, ``table:<path>``, ``section6``."""
    spec = spec.strip()
    if spec == "log1p":
        return gauge_log()
    if spec == "section6":
        from .counterexamples import section6_gauge

        return section6_gauge()
    if spec == "dyadic_dips":
        from .counterexamples import dyadic_dip_gauge

        return dyadic_dip_gauge()
    if spec.startswith("power:"):
        body = spec[len("power:"):]
        key, _, value = body.partition("=")
        if key.strip() != "p" or not value:
            raise FormatError(f"bad power gauge spec {spec!r}; expected power:p=<value>")
        try:
            p = float(value)
        except ValueError:
            raise FormatError(f"bad exponent in {spec!r}") from None
        return gauge_power(p)
    if spec.startswith("table:"):
        return load_gauge_table(spec[len("table:"):])
    raise FormatError(f"unknown gauge spec {spec!r}")


# inverse and audits -----------------------------------------------------------


def gauge_inverse(h: OscillationGauge, y: float, rtol: float = 1e-12) -> float:
    """The t >= 0 with h(t) = y; +inf when y is beyond the range of h."""
    h.require("increasing", "continuous", "vanishes_at_zero", what="gauge_inverse")
    if y < 0:
        raise PreconditionError("gauge_inverse needs y >= 0")
    if y == 0:
        return 0.0
    hi = 1.0
    while h(hi) < y:
        hi *= 2.0
        if hi > 1e300:
            return math.inf
    lo = 0.0 if hi == 1.0 else hi / 2.0
    if h(hi) == y:
        return hi
    return brentq(lambda s: h(s) - y, lo, hi, xtol=1e-300, rtol=max(rtol, 4 * np.finfo(float).eps), maxiter=500)


@dataclass
class GaugeAudit:
    name: str
    checks: dict = field(default_factory=dict)  # flag -> worst signed margin

    @property
    def passed(self) -> bool:
        return all(m >= 0 for m in self.checks.values())


def audit_gauge(h: OscillationGauge, points: int = 10_000, seed: int = 0,
                t_min: float = 1e-3, t_max: float = 1e6) -> GaugeAudit:
    """Sampling audit of every declared flag (and supplied derivatives).

    Margins are signed: negative means the declared property was violated
    beyond its tolerance.
    """
    rng = np.random.default_rng(seed)
    grid = np.geomspace(t_min, t_max, points)
    vals = h(grid)
    audit = GaugeAudit(h.name)
    audit.checks["non_negative"] = float(np.min(vals))
    if "vanishes_at_zero" in h.flags:
        audit.checks["vanishes_at_zero"] = -abs(h(0.0))
    if "increasing" in h.flags:
        audit.checks["increasing"] = float(np.min(np.diff(vals)))
    if "concave" in h.flags:
        a = rng.uniform(0, t_max, points) * rng.uniform(0, 1, points) ** 4
        b = rng.uniform(0, t_max, points) * rng.uniform(0, 1, points) ** 4
        mid = h(0.5 * (a + b))
        slack = mid - 0.5 * (h(a) + h(b))
        tol = 1e-12 * np.maximum(1.0, np.abs(mid))
        audit.checks["concave"] = float(np.min(slack + tol))
    if "third_derivative_positive" in h.flags:
        # third divided difference rescaled to a plain third difference
        x0, x1, x2, x3 = grid[:-3], grid[1:-2], grid[2:-1], grid[3:]
        f0, f1, f2, f3 = vals[:-3], vals[1:-2], vals[2:-1], vals[3:]
        d01 = (f1 - f0) / (x1 - x0)
        d12 = (f2 - f1) / (x2 - x1)
        d23 = (f3 - f2) / (x3 - x2)
        d012 = (d12 - d01) / (x2 - x0)
        d123 = (d23 - d12) / (x3 - x1)
        d0123 = (d123 - d012) / (x3 - x0)
        third = d0123 * (x3 - x0) ** 3 / 6.0
        audit.checks["third_derivative_positive"] = float(np.min(third + 1e-9))
    if "tends_to_infinity" in h.flags:
        audit.checks["tends_to_infinity"] = float(vals[-1] - vals[0])
    for order, fn in ((1, h.d1), (2, h.d2), (3, h.d3)):
        if fn is None:
            continue
        sample = np.geomspace(max(t_min, 1e-2), min(t_max, 1e4), 200)
        exact = np.asarray(fn(sample), dtype=float)
        approx = np.asarray(_stable_difference(h, sample, order), dtype=float)
        rel = np.abs(exact - approx) / np.maximum(np.abs(exact), 1e-300)
        audit.checks[f"derivative_{order}"] = float(np.min(1e-5 - rel))
    return audit


def _stable_difference(h: OscillationGauge, t, order):
    # first derivative: the documented centered difference; higher orders use the
    # closed form of the next-lower derivative when available, which keeps the
    # 1e-5 relative agreement meaningful
    if order == 1:
        return centered_difference(h, t, 1)
    lower = h.d1 if order == 2 else h.d2
    if lower is None:
        return centered_difference(h, t, order)
    step = np.maximum(1e-6, 1e-6 * np.abs(t))
    return (lower(t + step) - lower(t - step)) / (2 * step)


def triangle_inequality_audit(h: OscillationGauge, samples: int = 10_000, seed: int = 0,
                              bound: float = 1e6) -> float:
    """Worst margin of h(|s+t|) <= h(|s|) + h(|t|) over random pairs."""
    h.require("increasing", "concave", "vanishes_at_zero", what="triangle_inequality_audit")
    rng = np.random.default_rng(seed)
    # mix of full-range and small-magnitude pairs so that both regimes are exercised
    scale = bound * rng.uniform(0, 1, samples) ** 6
    s = rng.uniform(-1, 1, samples) * scale
    t = rng.uniform(-1, 1, samples) * scale[::-1]
    rhs = h(np.abs(s)) + h(np.abs(t))
    lhs = h(np.abs(s + t))
    return float(np.min(rhs - lhs))


# regularization -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RegularizedGauge:
    """Partial sum  sum_{m=3}^{M} (1 - exp(-t / t_m))  dominated by a base gauge.

    ``all_thresholds[m]`` is t_m for m = 0..M; ``thresholds`` holds t_3..t_M.
    ``scan_levels[m]`` is the scanned level crossing sup{t <= horizon: f(t) < m}.
    """

    base: OscillationGauge
    horizon: float
    all_thresholds: tuple
    scan_levels: tuple
    term_count: int
    tail_bound: float
    truncated: bool
    gauge: OscillationGauge

    @property
    def thresholds(self) -> tuple:
        return self.all_thresholds[3:]

    def __call__(self, t):
        return self.gauge(t)


def _scan_threshold(f_grid, grid, f, level, horizon, truncate):
    below = np.nonzero(f_grid < level)[0]
    if below.size == 0:
        return 0.0
    i = below[-1]
    if i == grid.size - 1:
        if truncate:
            return float(horizon)
        raise HorizonTooSmallError(
            f"f stays below {level} at the horizon {horizon:g}; threshold not bracketed"
        )
    lo, hi = grid[i], grid[i + 1]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) < level:
            lo = mid
        else:
            hi = mid
    return float(hi)


def regularize(f: OscillationGauge, horizon: float, eps: float = 1e-6,
               truncate: bool = False, scan_points: int = 100_000) -> RegularizedGauge:
    """Smooth, increasing, concave minorant of f with positive third derivative.

    Thresholds come from a geometric scan of (0, horizon] refined by
    bisection.  With ``truncate=True`` a level not reached by the horizon is
    placed at the horizon itself, i.e. the construction is certified on
    [0, horizon] only.
    """
    if horizon <= 0 or eps <= 0:
        raise PreconditionError("horizon and eps must be positive")
    if not truncate:
        f.require("tends_to_infinity", what="regularize without truncation")
    grid = np.concatenate(([0.0], np.geomspace(min(1e-6, horizon * 1e-6), horizon, scan_points)))
    f_grid = np.asarray(f(grid), dtype=float)
    if np.min(f_grid) < 3 - 1e-12:
        raise PreconditionError("regularize needs f >= 3 on [0, horizon]; shift the gauge by 3 first")
    M = max(3, math.ceil(math.log2(horizon / eps)))
    thr = [0.0] * (M + 1)
    t_seq = [1.0] + [0.0] * M
    for m in range(1, M + 1):
        thr[m] = _scan_threshold(f_grid, grid, f, m, horizon, truncate)
        t_seq[m] = max(2.0 * t_seq[m - 1], thr[m])
    t_arr = np.array(t_seq[3:])
    tail = horizon / t_seq[M]

    def func(t):
        t = np.asarray(t, dtype=float)
        return np.sum(-np.expm1(-np.multiply.outer(t, 1.0 / t_arr)), axis=-1)

    def deriv(order):
        sign = 1.0 if order % 2 == 1 else -1.0

        def d(t):
            t = np.asarray(t, dtype=float)
            e = np.exp(-np.multiply.outer(t, 1.0 / t_arr))
            return sign * np.sum(e / t_arr**order, axis=-1)

        return d

    flags = {"vanishes_at_zero", "increasing", "concave", "third_derivative_positive", "continuous"}
    gauge = OscillationGauge(
        name=f"regularized({f.name})",
        func=func,
        flags=frozenset(flags),
        d1=deriv(1),
        d2=deriv(2),
        d3=deriv(3),
    )
    return RegularizedGauge(
        base=f,
        horizon=float(horizon),
        all_thresholds=tuple(t_seq),
        scan_levels=tuple(thr),
        term_count=M,
        tail_bound=tail,
        truncated=truncate,
        gauge=gauge,
    )
