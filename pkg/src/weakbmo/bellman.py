"""The parabolic strip, the explicit locally convex minorant G_t and its checks.

Omega_t = {(x1, x2): x1^2 <= x2 <= x1^2 + t^2}.  For x1 >= 0,

    G_t = (x1^2 / x2) h(x2 / x1)          if x2 < 2 t x1
        = x2 h(2t) / (4 t^2)              if x1 <= t, x2 >= 2 t x1
        = h(u) + (x1 - u) m(u)            if x1 >= t, x2 >= 2 t x1

with u = x1 + t - sqrt(t^2 - x2 + x1^2), and G_t is extended evenly in x1.
The slope m solves t m' + m = h' on [2t, inf) with m(2t) = h(2t) / (2t).
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .dyadic import DyadicSimpleFunction
from .errors import (
    DepthMismatchError,
    DomainError,
    InfeasibleStartError,
    NormExceedsError,
    PreconditionError,
)
from .functionals import bmo_dyadic
from .gauges import OscillationGauge, centered_difference

DOMAIN_TOL = 1e-12


@dataclass(frozen=True)
class BellmanPoint:
    x1: float
    x2: float
    t: float

    def __post_init__(self):
        if not omega_contains(self.x1, self.x2, self.t):
            raise DomainError(f"({self.x1:g}, {self.x2:g}) is not in Omega_{self.t:g}")


def omega_contains(x1, x2, t, tol: float = DOMAIN_TOL):
    """Membership in Omega_t; works elementwise on arrays."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    slack = tol * (1.0 + np.abs(x2))
    gap = x2 - x1 * x1
    ok = (gap >= -slack) & (gap <= t * t + slack)
    return bool(ok) if ok.ndim == 0 else ok


# slope function m ----------------------------------------------------------------


class SlopeFunction:
    """m(u) for u >= 2t, via the integrating factor

        m(u) = e^{(2t-u)/t} h(2t)/(2t) + (1/t) int_{2t}^u e^{(s-u)/t} h'(s) ds.

    Values are chained through a cache of anchor points u_k = 2t + k t/4 so
    that each quadrature runs over a short interval.  The anchor list only
    grows; growth is serialized by a lock.
    """

    ANCHOR_STEP = 0.25
    MAX_ANCHORS = 4096
    FAR_WINDOW = 40.0

    def __init__(self, t: float, gauge: OscillationGauge, tol: float = 1e-12):
        if t <= 0:
            raise PreconditionError("slope function needs t > 0")
        self.t = float(t)
        self.gauge = gauge
        self.tol = tol
        self.used_fd = gauge.d1 is None
        self._step = self.ANCHOR_STEP * self.t
        self._anchors = [gauge(2 * self.t) / (2 * self.t)]
        self._lock = threading.Lock()

    def hprime(self, s):
        if self.gauge.d1 is not None:
            return float(self.gauge.d1(s))
        return float(centered_difference(self.gauge, s))

    def _carry(self, a: float, b: float) -> float:
        """(1/t) int_a^b e^{(s-b)/t} h'(s) ds."""
        if b <= a:
            return 0.0
        t = self.t
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            val, _ = quad(
                lambda s: math.exp((s - b) / t) * self.hprime(s),
                a, b, epsabs=self.tol, epsrel=self.tol, limit=200,
            )
        return val / t

    def _anchor(self, k: int) -> float:
        if k < len(self._anchors):
            return self._anchors[k]
        with self._lock:
            decay = math.exp(-self.ANCHOR_STEP)
            base = 2 * self.t
            while len(self._anchors) <= k:
                j = len(self._anchors)
                a = base + (j - 1) * self._step
                b = base + j * self._step
                self._anchors.append(decay * self._anchors[-1] + self._carry(a, b))
            return self._anchors[k]

    def __call__(self, u: float) -> float:
        t = self.t
        if u < 2 * t * (1 - 1e-12):
            raise PreconditionError(f"m is only evaluated on [2t, inf); got u={u:g} < {2 * t:g}")
        u = max(float(u), 2 * t)
        k = int((u - 2 * t) // self._step)
        if k >= self.MAX_ANCHORS:
            # contributions older than FAR_WINDOW * t are below e^-40 relative
            a = u - self.FAR_WINDOW * t
            return math.exp(-self.FAR_WINDOW) * self.hprime(a) + self._carry(a, u)
        a = 2 * t + k * self._step
        return math.exp(-(u - a) / t) * self._anchor(k) + self._carry(a, u)

    def derivative(self, u: float) -> float:
        """m'(u) from the differential equation itself."""
        return (self.hprime(u) - self(u)) / self.t


@lru_cache(maxsize=256)
def slope_function(t: float, gauge: OscillationGauge) -> SlopeFunction:
    return SlopeFunction(t, gauge)


def slope_m(u: float, ctx: SlopeFunction) -> float:
    return ctx(u)


# G_t -------------------------------------------------------------------------------


def g_branch(x1: float, x2: float, t: float) -> int:
    """0 at the origin, else the formula (1, 2, 3) that applies at (|x1|, x2)."""
    a = abs(x1)
    if x2 == 0 and a == 0:
        return 0
    if a == 0:
        return 2
    if x2 < 2 * t * a:
        return 1
    if a <= t:
        return 2
    return 3


def _branch_value(branch, a, x2, t, h, slope=None):
    if branch == 0:
        return 0.0
    if branch == 1:
        if x2 == 0:  # a^2 underflowed: the point sits on the parabola
            return float(h(a))
        return (a * a / x2) * h(x2 / a)
    if branch == 2:
        return x2 * h(2 * t) / (4 * t * t)
    slope = slope or slope_function(float(t), h)
    s = math.sqrt(max(t * t - x2 + a * a, 0.0))
    u = max(a + t - s, 2 * t)
    return h(u) + (a - u) * slope(u)


def g_eval(x1: float, x2: float, t: float, h: OscillationGauge, slope: SlopeFunction | None = None) -> float:
    """G_t(x1, x2) for a point of Omega_t."""
    x1 = float(x1)
    x2 = float(x2)
    t = float(t)
    if t < 0:
        raise PreconditionError("t must be non-negative")
    if not omega_contains(x1, x2, t):
        raise DomainError(f"({x1!r}, {x2!r}) is not in Omega_{t!r}")
    a = abs(x1)
    x2 = min(max(x2, a * a), a * a + t * t)
    if t == 0:
        return h(a)
    return _branch_value(g_branch(a, x2, t), a, x2, t, h, slope)


def g_eval_array(x1, x2, t: float, h: OscillationGauge, slope: SlopeFunction | None = None):
    """Vectorised G_t; returns (values, branch ids)."""
    x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
    shape = x1.shape
    x1, x2 = x1.ravel(), x2.ravel()
    inside = omega_contains(x1, x2, t)
    if not np.all(inside):
        bad = np.nonzero(~inside)[0][0]
        raise DomainError(f"({x1[bad]!r}, {x2[bad]!r}) is not in Omega_{t!r}")
    a = np.abs(x1)
    x2 = np.clip(x2, a * a, a * a + t * t)
    branch = np.where(a <= t, 2, 3)
    branch = np.where(x2 < 2 * t * a, 1, branch)
    branch = np.where(a == 0, np.where(x2 == 0, 0, 2), branch)
    out = np.zeros_like(a)
    b1 = branch == 1
    if np.any(b1):
        a1, q1 = a[b1], x2[b1]
        on_parabola = q1 == 0  # a^2 underflowed
        safe = np.where(on_parabola, 1.0, q1)
        out[b1] = np.where(on_parabola, h(a1), (a1 * a1 / safe) * h(safe / a1))
    b2 = branch == 2
    if np.any(b2):
        out[b2] = x2[b2] * h(2 * t) / (4 * t * t)
    b3 = np.nonzero(branch == 3)[0]
    if b3.size:
        slope = slope or slope_function(float(t), h)
        s = np.sqrt(np.maximum(t * t - x2[b3] + a[b3] ** 2, 0.0))
        u = np.maximum(a[b3] + t - s, 2 * t)
        m = np.array([slope(ui) for ui in u])
        out[b3] = h(u) + (a[b3] - u) * m
    return out.reshape(shape), branch.reshape(shape)


def lower_bound_A(t: float, h: OscillationGauge, n: int) -> float:
    """2^-(n+2) h(2^((n+2)/2) t), the lower bound for A(t)."""
    if t < 0:
        raise PreconditionError("t must be non-negative")
    return 2.0 ** (-(n + 2)) * h(2.0 ** ((n + 2) / 2) * t)


# checks -------------------------------------------------------------------------------


def boundary_condition_gap(t: float, h: OscillationGauge, points: int = 1000) -> float:
    """max |G_t(x1, x1^2) - h(|x1|)| over x1 in [-10t, 10t]."""
    x1 = np.linspace(-10 * t, 10 * t, points)
    vals, _ = g_eval_array(x1, x1 * x1, t, h)
    return float(np.max(np.abs(vals - h(np.abs(x1)))))


def seam_continuity_check(t: float, h: OscillationGauge, samples: int = 1000) -> float:
    """Worst gap between neighbouring formulas of G_t on their common seams."""
    slope = slope_function(float(t), h)
    worst = 0.0
    # seam x2 = 2 t x1 shared by formulas 1 and 2 (x1 <= t) or 1 and 3 (t <= x1 <= 2t)
    for x1 in np.linspace(0, t, samples + 1)[1:]:
        x2 = 2 * t * x1
        worst = max(worst, abs(_branch_value(1, x1, x2, t, h) - _branch_value(2, x1, x2, t, h)))
    for x1 in np.linspace(t, 2 * t, samples):
        x2 = min(2 * t * x1, x1 * x1 + t * t)
        gap = abs(_branch_value(1, x1, x2, t, h) - _branch_value(3, x1, x2, t, h, slope))
        worst = max(worst, gap)
    # reflection x1 -> -x1
    for x2 in np.linspace(0, t * t, samples):
        worst = max(worst, abs(g_eval(1e-12, x2, t, h) - g_eval(-1e-12, x2, t, h)))
    return worst


def _strip_points(rng, size, t, span):
    x1 = rng.uniform(-span, span, size)
    s = rng.uniform(0, 1, size)
    pick = rng.uniform(0, 1, size)
    s = np.where(pick < 0.1, 0.0, np.where(pick < 0.2, 1.0, s))
    return x1, x1 * x1 + s * t * t


def _segment_inside(u1, u2, v1, v2, t, samples=1024):
    lam = np.linspace(0, 1, samples + 2)
    p1 = u1[:, None] + lam * (v1 - u1)[:, None]
    p2 = u2[:, None] + lam * (v2 - u2)[:, None]
    return np.all(omega_contains(p1, p2, t), axis=1)


@dataclass
class ConvexityFuzzResult:
    worst_margin: float
    worst_segment: tuple
    trials: int
    rejected: int


def local_convexity_fuzz(t: float, h: OscillationGauge, trials: int, seed: int,
                         span: float = 4.0, batch: int = 2000) -> ConvexityFuzzResult:
    """Midpoint convexity of G_t along random segments contained in Omega_t.

    margin = (G(U) + G(V)) / 2 - G((U + V) / 2); local convexity means every
    margin is non-negative.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    slope = slope_function(float(t), h)
    worst, worst_seg = math.inf, None
    done = rejected = 0
    while done < trials:
        m = min(batch, trials - done)
        u1, u2 = _strip_points(rng, 3 * m, t, span * t)
        length = t * 10 ** rng.uniform(-3, 0.5, 3 * m)
        dx = length * rng.choice([-1.0, 1.0], 3 * m) * rng.uniform(0, 1, 3 * m)
        v1 = u1 + dx
        v2 = v1 * v1 + rng.uniform(0, 1, 3 * m) * t * t
        # some segments run straight up and down in x2
        vert = rng.uniform(0, 1, 3 * m) < 0.1
        v1 = np.where(vert, u1, v1)
        v2 = np.where(vert, u1 * u1 + rng.uniform(0, 1, 3 * m) * t * t, v2)
        mid1, mid2 = 0.5 * (u1 + v1), 0.5 * (u2 + v2)
        keep = omega_contains(mid1, mid2, t)
        keep[keep] = _segment_inside(u1[keep], u2[keep], v1[keep], v2[keep], t)
        rejected += int(np.sum(~keep))
        idx = np.nonzero(keep)[0][:m]
        gu, _ = g_eval_array(u1[idx], u2[idx], t, h, slope)
        gv, _ = g_eval_array(v1[idx], v2[idx], t, h, slope)
        gm, _ = g_eval_array(mid1[idx], mid2[idx], t, h, slope)
        margin = 0.5 * (gu + gv) - gm
        if margin.size:
            j = int(np.argmin(margin))
            if margin[j] < worst:
                worst = float(margin[j])
                i = idx[j]
                worst_seg = ((u1[i], u2[i]), (v1[i], v2[i]))
        done += idx.size
    return ConvexityFuzzResult(worst, worst_seg, done, rejected)


def segment_domain_check(U, V, t: float, samples: int = 1024) -> bool:
    """Whether the whole segment [U, V] lies in Omega_{sqrt(2) t}.

    U and V must lie above the parabola and their midpoint in Omega_t.
    """
    u1, u2 = map(float, U)
    v1, v2 = map(float, V)
    if u2 < u1 * u1 - DOMAIN_TOL or v2 < v1 * v1 - DOMAIN_TOL:
        raise PreconditionError("segment endpoints must lie above the parabola x2 = x1^2")
    if not omega_contains(0.5 * (u1 + v1), 0.5 * (u2 + v2), t):
        raise PreconditionError("segment midpoint is not in Omega_t")
    ok = _segment_inside(np.array([u1]), np.array([u2]), np.array([v1]), np.array([v2]),
                         math.sqrt(2) * t, samples)
    return bool(ok[0])


def segment_domain_fuzz(trials: int, seed: int, t_range=(0.1, 10.0), chunk: int = 2000) -> int:
    """Count of random admissible (U, V, t) whose segment leaves Omega_{sqrt(2) t}."""
    rng = np.random.Generator(np.random.Philox(seed))
    failures = 0
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        t = np.exp(rng.uniform(*np.log(t_range), m))
        p1 = rng.uniform(-5, 5, m) * t
        gap = rng.uniform(0, 1, m) * t * t
        p2 = p1 * p1 + gap
        d1 = rng.uniform(-1, 1, m) * np.sqrt(gap)
        lo = 2 * p1 * d1 + d1 * d1 - gap
        hi = gap + 2 * p1 * d1 - d1 * d1
        d2 = lo + rng.uniform(0, 1, m) * (hi - lo)
        u1, u2, v1, v2 = p1 - d1, p2 - d2, p1 + d1, p2 + d2
        # endpoints on or above the parabola up to rounding
        u2 = np.maximum(u2, u1 * u1)
        v2 = np.maximum(v2, v1 * v1)
        lam = np.linspace(0, 1, 1026)
        q1 = u1[:, None] + lam * (v1 - u1)[:, None]
        q2 = u2[:, None] + lam * (v2 - u2)[:, None]
        inside = np.all(omega_contains(q1, q2, (math.sqrt(2) * t)[:, None]), axis=1)
        failures += int(np.sum(~inside))
        done += m
    return failures


@dataclass
class InductionMargin:
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def bellman_induction_check(phi: DyadicSimpleFunction, t: float, h: OscillationGauge, k: int) -> InductionMargin:
    """G(<phi>_Q, <phi^2>_Q) versus the depth-k average of G(<phi>_J, <phi^2>_J),
    with G the minorant of parameter 2^(n/2) t."""
    if k > phi.depth or k < 0:
        raise DepthMismatchError(f"level {k} outside [0, {phi.depth}]")
    norm = bmo_dyadic(phi).value
    if norm > t * (1 + 1e-12) + 1e-15:
        raise NormExceedsError(f"dyadic BMO norm {norm:g} exceeds t = {t:g}")
    T = 2.0 ** (phi.n / 2) * t
    mean0, sq0 = phi.level(0)
    lhs = g_eval(float(mean0.flat[0]), float(sq0.flat[0]), T, h)
    means, sqs = phi.level(k)
    vals, _ = g_eval_array(means.reshape(-1), sqs.reshape(-1), T, h)
    # pairwise mean of the cell values
    rhs = float(np.mean(vals)) if vals.size else lhs
    return InductionMargin(lhs, rhs)


def ode_residual(t: float, h: OscillationGauge, points: int = 1000, u_max: float = 20.0) -> float:
    """max |t m'(u) + m(u) - h'(u)| on [2t, u_max t], m' by centered differences of m."""
    slope = slope_function(float(t), h)
    step = 1e-4 * t
    worst = 0.0
    for u in np.linspace(2 * t + step, u_max * t, points):
        dm = (slope(u + step) - slope(u - step)) / (2 * step)
        worst = max(worst, abs(t * dm + slope(u) - slope.hprime(u)))
    return worst


# brute-force oracle for the extremal problem ---------------------------------------


@dataclass
class OracleResult:
    value: float
    witness: DyadicSimpleFunction
    evaluations: int
    restarts: int


def _batch_max_variance(v):
    """Largest dyadic-interval variance of each row of v (rows are n=1 leaf vectors)."""
    worst = np.zeros(v.shape[0])
    m, s = v, v * v
    while True:
        var = np.max(s - m * m, axis=1)
        worst = np.maximum(worst, var)
        if m.shape[1] == 1:
            return worst
        m = 0.5 * (m[:, 0::2] + m[:, 1::2])
        s = 0.5 * (s[:, 0::2] + s[:, 1::2])


def _project(v, x1, radius):
    """Move rows of v onto {mean = x1, sum of squared deviations = radius^2}."""
    d = v - v.mean(axis=1, keepdims=True)
    norm = np.linalg.norm(d, axis=1, keepdims=True)
    flat = norm[:, 0] < 1e-300
    if np.any(flat):
        # a constant row has no direction to scale; use the two-level profile
        half = v.shape[1] // 2
        d[flat] = np.concatenate([-np.ones(half), np.ones(half)])
        norm[flat] = math.sqrt(v.shape[1])
    return x1 + d * (radius / norm) if radius > 0 else np.full_like(v, x1)


def oracle_seed_leaves(x1: float, x2: float, depth: int) -> list:
    """Deterministic feasible starting points: constant / two-level / end-spike profiles."""
    N = 2 ** depth
    s = math.sqrt(max(x2 - x1 * x1, 0.0))
    seeds = []
    if s == 0:
        return [np.full(N, x1)]
    if N >= 2:
        seeds.append(np.concatenate([np.full(N // 2, x1 - s), np.full(N // 2, x1 + s)]))
    if N >= 8:
        spike = np.zeros(N)
        spike[: N // 8] = -2 * s
        spike[N - N // 8:] = 2 * s
        seeds.append(x1 + spike)
    return seeds


def bellman_oracle(x1: float, x2: float, t: float, h: OscillationGauge, depth: int,
                   budget: int, seed: int, extra_seeds=(), batch: int = 64) -> OracleResult:
    """Upper estimate of inf <h(|phi|)> over depth-`depth` dyadic-simple phi on [0, 1]
    with <phi> = x1, <phi^2> = x2 and dyadic BMO norm at most t.

    Randomised coordinate search with projection onto the two moment
    constraints and a penalty for the norm constraint.  Only points passing
    the strict norm filter are ever reported, so the value is a genuine upper
    bound for the infimum over this depth class.
    """
    if not omega_contains(x1, x2, t):
        raise DomainError(f"({x1!r}, {x2!r}) is not in Omega_{t!r}")
    if not 0 <= depth <= 4:
        raise PreconditionError("oracle supports n = 1 and depth <= 4 only")
    N = 2 ** depth
    x2 = max(x2, x1 * x1)
    radius = math.sqrt(N * (x2 - x1 * x1))
    limit = t * t * (1 + 1e-12)
    rng = np.random.Generator(np.random.Philox(seed))

    def objective(v):
        return np.mean(h(np.abs(v)), axis=1)

    def penalised(v):
        excess = np.maximum(_batch_max_variance(v) - t * t, 0.0)
        return objective(v) + 1e3 * excess / max(t * t, 1e-300)

    best_val, best_v = math.inf, None
    evals = 0

    def consider(v):
        nonlocal best_val, best_v
        feas = _batch_max_variance(v) <= limit
        if np.any(feas):
            vals = np.where(feas, objective(v), np.inf)
            j = int(np.argmin(vals))
            if vals[j] < best_val:
                best_val, best_v = float(vals[j]), v[j].copy()

    starts = [np.asarray(s, dtype=float) for s in oracle_seed_leaves(x1, x2, depth)]
    starts += [np.asarray(s, dtype=float) for s in extra_seeds]
    starts = [_project(s[None, :], x1, radius)[0] for s in starts]
    if starts:
        consider(np.array(starts))
        evals += len(starts)
    restarts = 0
    while evals < budget:
        if restarts < len(starts):
            cur = starts[restarts]
        else:
            cur = _project(x1 + rng.normal(0, max(t, 1e-12), (1, N)), x1, radius)[0]
        restarts += 1
        cur_val = float(penalised(cur[None, :])[0])
        step = max(t, 1e-12)
        while evals < budget and step > 1e-10 * max(t, 1e-12):
            m = min(batch, budget - evals)
            props = np.repeat(cur[None, :], m, axis=0)
            idx = rng.integers(0, N, m)
            props[np.arange(m), idx] += step * rng.normal(0, 1, m)
            props = _project(props, x1, radius)
            vals = penalised(props)
            evals += m
            consider(props)
            j = int(np.argmin(vals))
            if vals[j] < cur_val:
                cur, cur_val = props[j], float(vals[j])
                step *= 1.5
            else:
                step *= 0.7
    if best_v is None:
        raise InfeasibleStartError("oracle found no point satisfying the norm constraint")
    return OracleResult(best_val, DyadicSimpleFunction(1, depth, best_v), evals, restarts)
