"""Two constructions around the limit condition h(t) -> infinity.

* A continuous gauge equal to t^2 on [0, 1] and on every [k + 1/4, k + 3/4],
  with dips to zero at the integers k >= 2.  For it K_h < M still forces
  ||phi||_BMO <= sqrt(10 M) on intervals.
* Lacunary Haar sums sum_j t_j h_{n_j} with h(t_j) < M, for which K^d_h is
  bounded by max(h(0), M) while the variance grows without bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .dyadic import DyadicSimpleFunction, check_caps, expand
from .errors import NotEnoughLowPointsError, PreconditionError
from .functionals import dyadic_k_locals, rising_sun_steps
from .gauges import OscillationGauge

# gauges ------------------------------------------------------------------------


def _section6(t):
    t = np.asarray(t, dtype=float)
    j = np.rint(t)
    d = t - j
    out = t * t
    dip = (j >= 2) & (np.abs(d) < 0.25)
    left = dip & (d < 0)
    right = dip & (d >= 0)
    out = np.where(left, (-d / 0.25) * (j - 0.25) ** 2, out)
    out = np.where(right, (d / 0.25) * (j + 0.25) ** 2, out)
    return out


def section6_gauge() -> OscillationGauge:
    """t^2 except for linear dips to 0 on [k - 1/4, k + 1/4], k >= 2.

    h(k) = 0 at every integer k >= 2, so h does not tend to infinity.
    """
    return OscillationGauge(
        name="section6",
        func=_section6,
        flags=frozenset({"continuous", "vanishes_at_zero"}),
    )


def _dyadic_dips(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.log2(t)
        out = 2.0 * t * t * np.abs(lg - np.rint(lg))
    return np.where(t > 0, out, 0.0)


def dyadic_dip_gauge() -> OscillationGauge:
    """2 t^2 |log2 t - round(log2 t)|: continuous, zero exactly at every power of two."""
    return OscillationGauge(
        name="dyadic_dips",
        func=_dyadic_dips,
        flags=frozenset({"continuous", "vanishes_at_zero"}),
    )


# grid intervals of a 1-D step function ---------------------------------------------


@lru_cache(maxsize=32)
def interval_weights(depth: int, g: int):
    """Overlap lengths of every interval with corners on the 2^-g grid with the
    2^depth leaf cells.

    Returns (W, lengths, bounds) with W[i, k] = |J_i cap cell_k|.  Rows are
    ordered by decreasing length, then by left end, so the first maximiser of
    any per-interval quantity follows the usual witness convention.
    """
    G = 1 << g
    N = 1 << depth
    rows = []
    for s in range(G, 0, -1):
        for i in range(G - s + 1):
            rows.append((i, i + s))
    bounds = np.array(rows, dtype=float) / G
    edges = np.arange(N + 1) / N
    lo = np.maximum(bounds[:, :1], edges[None, :-1])
    hi = np.minimum(bounds[:, 1:], edges[None, 1:])
    W = np.clip(hi - lo, 0.0, None)
    W.setflags(write=False)
    lengths = bounds[:, 1] - bounds[:, 0]
    return W, lengths, bounds


def grid_oscillations(leaves, h: OscillationGauge, g: int):
    """Per-interval (variance, <h(|phi - <phi>_J|)>_J) over the 2^-g grid intervals."""
    v = np.asarray(leaves, dtype=float)
    depth = int(round(math.log2(v.size)))
    W, lengths, bounds = interval_weights(depth, g)
    means = W @ v / lengths
    var = np.maximum(W @ (v * v) / lengths - means**2, 0.0)
    k_loc = np.einsum("ik,ik->i", W, h(np.abs(v[None, :] - means[:, None]))) / lengths
    return var, k_loc, bounds


# sqrt(10 M) lemma ------------------------------------------------------------------


@dataclass
class Sqrt10MReport:
    M: float
    k_grid: float
    norm: float
    margin: float  # sqrt(10 M) - norm
    witness: tuple
    rising_sun: list = field(default_factory=list)
    outside_margin: float = math.inf  # M - <h(|psi|) 1_{J \ A}>_J
    interval_margin: float = math.inf  # min_k M |L_k| - int_{L_k cap A+} (psi - 1/2)^2, over both signs
    total_margin: float = math.inf  # M |J| - int_{A+} (psi - 1/2)^2, over both signs
    fractional_margin: float = math.inf  # 1/4 - max distance to an integer on A+ / A-
    in_A: float = 0.0  # measure fraction of the exceptional set A

    @property
    def margins(self) -> dict:
        return {
            "sqrt10M": self.margin,
            "outside_A": self.outside_margin,
            "rising_sun_intervals": self.interval_margin,
            "A_total": self.total_margin,
            "fractional": self.fractional_margin,
        }


def _proof_margins(report, edges, psi, h, M):
    """Intermediate inequalities of the lemma's argument on the (rescaled) witness interval."""
    widths = np.diff(edges)
    L = edges[-1] - edges[0]
    hv = h(np.abs(psi))
    in_A = np.abs(hv - psi * psi) > 1e-12 * np.maximum(1.0, psi * psi)
    report.in_A = float(widths[in_A].sum() / L)
    report.outside_margin = M - float(np.dot(widths[~in_A], hv[~in_A]) / L)
    interval_margin = total_margin = math.inf
    frac = math.inf
    for sign in (1.0, -1.0):
        f = sign * psi
        a_plus = in_A & (f > 1)
        if np.any(a_plus):
            dist = np.abs(f[a_plus] - np.rint(f[a_plus]))
            frac = min(frac, 0.25 - float(dist.max()))
        suns = rising_sun_steps(edges, f, 0.5)
        if sign > 0:
            report.rising_sun = suns
        sq = np.where(a_plus, (f - 0.5) ** 2, 0.0)
        total_margin = min(total_margin, M * L - float(np.dot(widths, sq)))
        for lo, hi in suns:
            w = np.clip(np.minimum(hi, edges[1:]) - np.maximum(lo, edges[:-1]), 0.0, None)
            interval_margin = min(interval_margin, M * (hi - lo) - float(np.dot(w, sq)))
    report.interval_margin = interval_margin
    report.total_margin = total_margin / L
    report.fractional_margin = frac


def verify_sqrt10M(phi: DyadicSimpleFunction, M: float, h: OscillationGauge | None = None,
                   g: int | None = None) -> Sqrt10MReport:
    """Check ||phi||_BMO <= sqrt(10 M) on the 2^-g grid, given K_h < M on the same grid.

    Also evaluates the steps of the argument on the interval J where the
    grid norm is attained: the exceptional set A = {h(|psi|) != psi^2} for
    psi = phi - <phi>_J, the rising-sun intervals of psi at level 1/2, and
    the resulting integral bounds.
    """
    if phi.n != 1:
        raise PreconditionError("the sqrt(10 M) check is one-dimensional")
    h = h or section6_gauge()
    g = phi.depth + 2 if g is None else g
    if g < phi.depth:
        raise PreconditionError("grid must be at least as fine as the leaves")
    var, k_loc, bounds = grid_oscillations(phi.leaves, h, g)
    K = float(k_loc.max())
    if not K < M:
        raise PreconditionError(f"K_h on the grid is {K:g}, not below M = {M:g}")
    i = int(np.argmax(var))
    norm = float(math.sqrt(var[i]))
    a, b = float(bounds[i, 0]), float(bounds[i, 1])
    report = Sqrt10MReport(M=M, k_grid=K, norm=norm, margin=math.sqrt(10 * M) - norm, witness=(a, b))
    # restrict phi to the witness interval on the common refinement
    fine = expand(phi.leaves, 1, 1 << (g - phi.depth))
    G = 1 << g
    lo, hi = int(round(a * G)), int(round(b * G))
    vals = fine[lo:hi]
    edges = np.arange(lo, hi + 1) / G
    psi = vals - vals.mean()
    _proof_margins(report, edges, psi, h, M)
    return report


def random_step_family(rng, depth: int) -> np.ndarray:
    """Leaves of a random mixture of scaled Haar atoms and linear ramps."""
    if depth < 2:
        raise PreconditionError("the random family needs depth >= 2")
    N = 1 << depth
    v = np.zeros(N)
    for _ in range(rng.integers(1, 4)):
        k = int(rng.integers(1, depth))
        v += rng.uniform(-4, 4) * haar_series_leaves([1.0], [k], depth)
    if rng.uniform() < 0.5:
        lo, hi = sorted(rng.integers(0, N + 1, 2))
        ramp = np.zeros(N)
        ramp[lo:hi] = np.linspace(0, 1, hi - lo) if hi > lo else 0
        v += rng.uniform(-5, 5) * ramp
    return v + rng.uniform(-1, 1)


@dataclass
class AnnealResult:
    best_ratio: float
    best_leaves: np.ndarray
    depth: int
    steps: int
    ratios: dict  # best ratio per depth


def adversarial_ratio_search(steps: int, seed: int, depths=(2, 3, 4), h: OscillationGauge | None = None,
                             extra: int = 3, max_grid: int = 6, span: float = 8.0) -> AnnealResult:
    """Simulated annealing for large ||phi||^2_grid / K_h,grid over leaf vectors.

    The steps are split evenly between the listed depths; the grid for both
    quantities is 2^-g with g = min(depth + extra, max_grid).  A falsification attempt for the
    constant 10, not a proof of anything.
    """
    h = h or section6_gauge()
    rng = np.random.Generator(np.random.Philox(seed))
    best = (-math.inf, None, None)
    per_depth = {}
    shares = [steps // len(depths) + (i < steps % len(depths)) for i in range(len(depths))]
    for d, share in zip(depths, shares):
        if d > 8:
            raise PreconditionError("annealing depth is limited to 8")
        g = max(d, min(d + extra, max_grid))

        def ratio(v):
            var, k_loc, _ = grid_oscillations(v, h, g)
            k = float(k_loc.max())
            return float(var.max()) / k if k > 0 else 0.0

        cur = rng.uniform(-span / 2, span / 2, 1 << d)
        cur_r = ratio(cur)
        d_best = (cur_r, cur.copy())
        for step in range(share):
            temp = 0.5 * (1e-4 / 0.5) ** (step / max(share - 1, 1))
            prop = cur.copy()
            prop[rng.integers(0, prop.size)] += rng.normal(0, 0.5)
            np.clip(prop, -span, span, out=prop)
            r = ratio(prop)
            if r >= cur_r or rng.uniform() < math.exp((r - cur_r) / temp):
                cur, cur_r = prop, r
                if r > d_best[0]:
                    d_best = (r, prop.copy())
        per_depth[d] = d_best[0]
        if d_best[0] > best[0]:
            best = (d_best[0], d_best[1], d)
    return AnnealResult(best[0], best[1], best[2], sum(shares), per_depth)


# lacunary Haar series ------------------------------------------------------------------


@dataclass
class HaarSeriesSpec:
    thresholds: tuple  # t_j
    orders: tuple  # n_j
    M: float

    @property
    def terms(self) -> int:
        return len(self.thresholds)

    @property
    def depth(self) -> int:
        return max(self.orders) + 1


def _haar_order(t: float) -> int:
    """The n with 2^n <= t^2 < 2^(n+1)."""
    _, e = math.frexp(t * t)
    return e - 1


def haar_series_leaves(thresholds, orders, depth: int) -> np.ndarray:
    """Leaves of sum_j t_j h_{n_j} at the given depth."""
    N = 1 << depth
    v = np.zeros(N)
    for t, k in zip(thresholds, orders):
        block = N >> k
        if block < 2:
            raise PreconditionError(f"depth {depth} cannot resolve h_{k}")
        v[block:block + block // 2] -= t
        v[block + block // 2:2 * block] += t
    return v


def haar_series_build(h: OscillationGauge, M: float, J_max: int, scan_horizon: float,
                      points_per_block: int = 10_000):
    """Pick t_j (the first point of [2^k, 2^(k+1)) with h < M, k = 1, 2, ...) and build
    the truncated lacunary sum as a dyadic-simple function."""
    thresholds, orders = [], []
    k = 1
    while len(thresholds) < J_max:
        lo = 2.0**k
        if lo > scan_horizon:
            raise NotEnoughLowPointsError(
                f"found {len(thresholds)} of {J_max} points with h < {M:g} below {scan_horizon:g}"
            )
        pts = lo + lo * np.arange(points_per_block) / points_per_block
        hits = np.nonzero(h(pts) < M)[0]
        if hits.size:
            t = float(pts[hits[0]])
            thresholds.append(t)
            orders.append(_haar_order(t))
        k += 1
    spec = HaarSeriesSpec(tuple(thresholds), tuple(orders), M)
    check_caps(1, spec.depth)
    phi = DyadicSimpleFunction(1, spec.depth, haar_series_leaves(thresholds, orders, spec.depth))
    return spec, phi


@dataclass
class HaarAuditRow:
    terms: int
    variance: float
    k_d: float
    l1: float
    l1_bound: float


@dataclass
class HaarAudit:
    k_d: float
    bound: float
    value_set_ok: bool
    mean_zero_ok: bool
    worst_nonconstant_mean: float
    rows: list

    @property
    def k_margin(self) -> float:
        return self.bound - self.k_d


def haar_series_audit(spec: HaarSeriesSpec, phi: DyadicSimpleFunction, h: OscillationGauge) -> HaarAudit:
    """Exhaustive dyadic scan of the lacunary sum, plus the growth table of partial sums."""
    v = phi.leaves
    allowed = np.array((0.0,) + tuple(spec.thresholds))
    value_set_ok = bool(np.all(np.isin(np.abs(v), allowed)))
    worst_mean = 0.0
    for k in range(phi.depth + 1):
        blocks = v.reshape(1 << k, -1)
        nonconst = blocks.max(axis=1) != blocks.min(axis=1)
        if np.any(nonconst):
            worst_mean = max(worst_mean, float(np.abs(blocks[nonconst].mean(axis=1)).max()))
    k_d = max(float(np.max(loc)) for loc in dyadic_k_locals(phi, h))
    rows = []
    for J in range(1, spec.terms + 1):
        ts, ns = spec.thresholds[:J], spec.orders[:J]
        depth = max(ns) + 1
        part = DyadicSimpleFunction(1, depth, haar_series_leaves(ts, ns, depth))
        leaves = part.leaves
        var = float(np.mean(leaves * leaves) - np.mean(leaves) ** 2)
        kd = max(float(np.max(loc)) for loc in dyadic_k_locals(part, h))
        l1 = float(np.mean(np.abs(leaves)))
        bound = sum(2.0 ** ((n + 1) / 2 - n) for n in ns)
        rows.append(HaarAuditRow(J, var, kd, l1, bound))
    return HaarAudit(
        k_d=k_d,
        bound=max(h(0.0), spec.M),
        value_set_ok=value_set_ok,
        mean_zero_ok=worst_mean <= 1e-12,
        worst_nonconstant_mean=worst_mean,
        rows=rows,
    )


def write_growth_csv(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write("terms,variance,k_d,l1,l1_bound\n")
        for r in rows:
            nums = ",".join(repr(float(x)) for x in (r.variance, r.k_d, r.l1, r.l1_bound))
            fh.write(f"{r.terms},{nums}\n")
