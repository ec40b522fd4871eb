"""Oscillation functionals: dyadic and grid BMO norms, K_h, truncation margins, rising sun.

The continuous suprema over all subcubes are approximated from below by
cubes whose corners lie on the 2^-g grid.  In dimension one the exact
supremum of the variance over arbitrary subintervals of a step function is
also available through :func:`interval_variance_sup`.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dyadic import DyadicCube, DyadicSimpleFunction, expand, reduce_to_depth, truncate
from .errors import CapExceededError, PreconditionError
from .gauges import OscillationGauge

GRID_CAPS = {1: 12, 2: 6, 3: 4}
REFINE_MAX_DEPTH = 10


@dataclass(frozen=True)
class GridCube:
    """Axis-parallel cube with corners on the 2^-g grid: [lower, lower + side) * 2^-g."""

    n: int
    g: int
    lower: tuple
    side: int

    @property
    def bounds(self) -> list:
        h = 2.0 ** -self.g
        return [(lo * h, (lo + self.side) * h) for lo in self.lower]

    def label(self) -> str:
        return ";".join(f"[{a:.10g},{b:.10g}]" for a, b in self.bounds)


@dataclass
class OscillationReport:
    value: float
    witness: object
    per_cube: Optional[list] = None
    refined: Optional[float] = None  # exact 1-D interval supremum, when computed
    refined_witness: Optional[tuple] = None

    @property
    def best(self) -> float:
        return self.value if self.refined is None else max(self.value, self.refined)


# dyadic suprema ---------------------------------------------------------------


def _first_argmax(levels) -> tuple:
    """(depth, flat storage index) of the first maximum: smallest depth first."""
    vmax = max(float(np.max(a)) for a in levels)
    for k, a in enumerate(levels):
        flat = a.reshape(-1, order="F")
        hits = np.nonzero(flat == vmax)[0]
        if hits.size:
            return vmax, k, int(hits[0])
    raise AssertionError("unreachable")


def _cube_from_flat(n, k, flat) -> DyadicCube:
    side = 1 << k
    idx = []
    for _ in range(n):
        flat, r = divmod(flat, side)
        idx.append(r)
    return DyadicCube(n, k, tuple(idx))


def dyadic_variances(phi: DyadicSimpleFunction) -> list:
    """Variance over every dyadic cube, one n-dimensional array per depth."""
    out = []
    for k in range(phi.depth + 1):
        mean, sq = phi.level(k)
        out.append(np.maximum(sq - mean * mean, 0.0))
    return out


def dyadic_k_locals(phi: DyadicSimpleFunction, h: OscillationGauge) -> list:
    """Mean of h(|phi - <phi>_J|) over every dyadic cube J, per depth."""
    grid = phi.grid()
    n, m = phi.n, phi.depth
    out = []
    for k in range(m + 1):
        mean, _ = phi.level(k)
        dev = np.abs(grid - expand(mean, n, 1 << (m - k)))
        out.append(reduce_to_depth(h(dev), n, m - k))
    return out


def _cube_rows(phi, variances, k_locals):
    rows = []
    for k in range(phi.depth + 1):
        mean, _ = phi.level(k)
        flat_mean = mean.reshape(-1, order="F")
        flat_var = variances[k].reshape(-1, order="F")
        flat_k = None if k_locals is None else k_locals[k].reshape(-1, order="F")
        for i in range(flat_mean.size):
            cube = _cube_from_flat(phi.n, k, i)
            rows.append(
                (cube, float(flat_mean[i]), float(flat_var[i]),
                 None if flat_k is None else float(flat_k[i]))
            )
    return rows


def bmo_dyadic(phi: DyadicSimpleFunction, table: bool = False) -> OscillationReport:
    """Dyadic BMO norm: sup over dyadic J of sqrt(<phi^2>_J - <phi>_J^2)."""
    var = dyadic_variances(phi)
    vmax, k, flat = _first_argmax(var)
    rows = _cube_rows(phi, var, None) if table else None
    return OscillationReport(float(np.sqrt(vmax)), _cube_from_flat(phi.n, k, flat), rows)


def k_h_dyadic(phi: DyadicSimpleFunction, h: OscillationGauge, table: bool = False) -> OscillationReport:
    """K^d_h: sup over dyadic J of <h(|phi - <phi>_J|)>_J."""
    loc = dyadic_k_locals(phi, h)
    vmax, k, flat = _first_argmax(loc)
    rows = _cube_rows(phi, dyadic_variances(phi), loc) if table else None
    return OscillationReport(vmax, _cube_from_flat(phi.n, k, flat), rows)


def cube_table(phi: DyadicSimpleFunction, h: OscillationGauge) -> list:
    """Rows (cube, mean, variance, k_h_local) for every dyadic cube."""
    return _cube_rows(phi, dyadic_variances(phi), dyadic_k_locals(phi, h))


def write_cube_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["depth", "index", "mean", "variance", "k_h_local"])
        for cube, mean, var, kl in rows:
            w.writerow([cube.depth, cube.label(), repr(float(mean)), repr(float(var)), "" if kl is None else repr(float(kl))])


# grid suprema -----------------------------------------------------------------


def _grid_setup(phi: DyadicSimpleFunction, g: int):
    if g < 0 or phi.n not in GRID_CAPS or g > GRID_CAPS[phi.n]:
        raise CapExceededError(
            f"grid resolution g={g} outside [0, {GRID_CAPS.get(phi.n)}] for n={phi.n}"
        )
    R = max(g, phi.depth)
    fine = expand(phi.grid(), phi.n, 1 << (R - phi.depth))
    return fine, 1 << (R - g), 1 << g


def _pick_witness(values, sides, lowers):
    """Maximum with ties broken by larger side, then storage order of the corner."""
    vmax = float(np.max(values))
    hits = np.nonzero(values == vmax)[0]
    best = min(hits, key=lambda i: (-sides[i], lowers[i][::-1]))
    return vmax, best


def _variance_sups(phi, g):
    fine, r, G = _grid_setup(phi, g)
    n = phi.n
    centred = fine - float(np.mean(fine))
    vals, sides, lowers = [], [], []
    if n == 1:
        s1 = np.concatenate(([0.0], np.cumsum(centred)))[::r]
        s2 = np.concatenate(([0.0], np.cumsum(centred**2)))[::r]
        for s in range(1, G + 1):
            w = s * r
            m1 = (s1[s:] - s1[:-s]) / w
            m2 = (s2[s:] - s2[:-s]) / w
            v = np.maximum(m2 - m1 * m1, 0.0)
            i = int(np.argmax(v))
            vals.append(v[i])
            sides.append(s)
            lowers.append((i,))
    else:
        sats = []
        for arr in (centred, centred**2):
            sat = np.pad(arr, [(1, 0)] * n)
            for ax in range(n):
                sat = np.cumsum(sat, axis=ax)
            sats.append(sat[(slice(None, None, r),) * n])
        corners = list(itertools.product((0, 1), repeat=n))
        for s in range(1, G + 1):
            P = G - s + 1
            box = []
            for sat in sats:
                tot = np.zeros((P,) * n)
                for c in corners:
                    sl = tuple(slice(s * ci, s * ci + P) for ci in c)
                    sign = (-1) ** (n - sum(c))
                    tot = tot + sign * sat[sl]
                box.append(tot / (s * r) ** n)
            v = np.maximum(box[1] - box[0] ** 2, 0.0)
            flat = v.reshape(-1, order="F")
            i = int(np.argmax(flat))
            vals.append(flat[i])
            sides.append(s)
            lowers.append(tuple(np.unravel_index(i, v.shape, order="F")))
    return np.array(vals), sides, lowers


def bmo_grid(phi: DyadicSimpleFunction, g: int, refine: bool = True) -> OscillationReport:
    """sup of the standard deviation over cubes with corners on the 2^-g grid.

    A lower bound for the BMO norm over all subcubes.  For n = 1 and
    ``refine`` the exact supremum over arbitrary subintervals is attached as
    ``refined`` (depth <= 10 only).
    """
    vals, sides, lowers = _variance_sups(phi, g)
    vmax, i = _pick_witness(vals, sides, lowers)
    report = OscillationReport(float(np.sqrt(vmax)), GridCube(phi.n, g, lowers[i], sides[i]))
    if refine and phi.n == 1 and phi.depth <= REFINE_MAX_DEPTH:
        var, ab = interval_variance_sup(phi.leaves)
        report.refined = float(np.sqrt(max(var, vmax)))
        report.refined_witness = ab
    return report


def grid_k_locals(phi: DyadicSimpleFunction, h: OscillationGauge, g: int):
    """Yield (side, local K array over positions) for every cube side on the grid."""
    fine, r, G = _grid_setup(phi, g)
    n = phi.n
    for s in range(1, G + 1):
        w = s * r
        win = sliding_window_view(fine, (w,) * n)[(slice(None, None, r),) * n]
        axes = tuple(range(n, 2 * n))
        mean = win.mean(axis=axes, keepdims=True)
        loc = h(np.abs(win - mean)).mean(axis=axes)
        yield s, loc


def k_h_grid(phi: DyadicSimpleFunction, h: OscillationGauge, g: int) -> OscillationReport:
    """sup of <h(|phi - <phi>_J|)>_J over cubes J with corners on the 2^-g grid."""
    vals, sides, lowers = [], [], []
    for s, loc in grid_k_locals(phi, h, g):
        flat = loc.reshape(-1, order="F")
        i = int(np.argmax(flat))
        vals.append(flat[i])
        sides.append(s)
        lowers.append(tuple(np.unravel_index(i, loc.shape, order="F")))
    vmax, i = _pick_witness(np.array(vals), sides, lowers)
    return OscillationReport(vmax, GridCube(phi.n, g, lowers[i], sides[i]))


# exact 1-D interval supremum ---------------------------------------------------


def interval_variance_sup(leaves, sweeps: int = 40) -> tuple:
    """Supremum of the variance over all subintervals of [0, 1] of a step function.

    ``leaves`` are the values on 2^m equal cells.  For each pair of cells
    (i, j), i < j, the interval covers cells i+1..j-1 fully plus fractions of
    cells i and j.  Adding mass p (as a fraction of the new total) at value v
    to a distribution with variance s and mean mu gives variance
    (1-p) s + p (1-p) (v-mu)^2, which is concave in p, so each endpoint has a
    closed-form optimum; the two endpoints are updated alternately.

    Returns (variance, (a, b)).
    """
    v = np.asarray(leaves, dtype=float)
    v = v - v.mean()
    N = v.size
    if N < 2:
        return 0.0, (0.0, 1.0)
    d = 1.0 / N
    c1 = np.concatenate(([0.0], np.cumsum(v)))
    c2 = np.concatenate(([0.0], np.cumsum(v * v)))
    I, J = np.triu_indices(N, k=1)
    W0 = (J - I - 1) * d
    S1 = (c1[J] - c1[I + 1]) * d
    S2 = (c2[J] - c2[I + 1]) * d
    vi, vj = v[I], v[J]
    alpha = np.full(I.shape, d)
    beta = np.full(I.shape, d)

    def best_add(W, s1, s2, val, cap):
        with np.errstate(divide="ignore", invalid="ignore"):
            mu = np.where(W > 0, s1 / W, val)
            var = np.where(W > 0, np.maximum(s2 / W - mu * mu, 0.0), 0.0)
            D = (val - mu) ** 2
            p = np.where(D > 0, (D - var) / (2 * D), 0.0)
            pmax = cap / (W + cap)
            p = np.clip(p, 0.0, pmax)
            add = np.where(p < 1, p * W / (1 - p), cap)
        add = np.where(W > 0, np.minimum(add, cap), cap)
        return add

    for _ in range(sweeps):
        alpha = best_add(W0 + beta, S1 + beta * vj, S2 + beta * vj * vj, vi, d)
        beta = best_add(W0 + alpha, S1 + alpha * vi, S2 + alpha * vi * vi, vj, d)
    W = W0 + alpha + beta
    m1 = (S1 + alpha * vi + beta * vj) / W
    m2 = (S2 + alpha * vi * vi + beta * vj * vj) / W
    var = np.maximum(m2 - m1 * m1, 0.0)
    k = int(np.argmax(var))
    a = (I[k] + 1) * d - alpha[k]
    b = J[k] * d + beta[k]
    return float(var[k]), (float(a), float(b))


def step_interval_stats(leaves, a: float, b: float, h: OscillationGauge | None = None, shift=None):
    """Mean, variance and (optionally) <h(|phi - c|)> of a step function over [a, b].

    ``c`` is the interval mean unless ``shift`` is given.
    """
    v = np.asarray(leaves, dtype=float)
    N = v.size
    edges = np.arange(N + 1) / N
    w = np.clip(np.minimum(b, edges[1:]) - np.maximum(a, edges[:-1]), 0.0, None)
    tot = w.sum()
    if tot <= 0:
        raise PreconditionError("interval has zero length")
    mean = float(np.dot(w, v) / tot)
    var = float(max(np.dot(w, (v - mean) ** 2) / tot, 0.0))
    if h is None:
        return mean, var
    c = mean if shift is None else shift
    return mean, var, float(np.dot(w, h(np.abs(v - c))) / tot)


# truncation lemmas ------------------------------------------------------------


@dataclass
class TruncationMargins:
    m: int
    k_truncated: float
    k_full: float
    bmo_gap: float
    doubling_margin: float  # 2 K(phi) - K(phi_m)
    additive_margin: float  # K(phi) + h(|phi - phi_m|) - K(phi_m)

    @property
    def worst(self) -> float:
        return min(self.doubling_margin, self.additive_margin)


def truncation_gap_check(phi: DyadicSimpleFunction, h: OscillationGauge, m: int) -> TruncationMargins:
    """Both truncation comparisons K^d(phi_m) <= 2 K^d(phi) and
    K^d(phi_m) <= K^d(phi) + h(||phi - phi_m||_BMO^d), as signed margins."""
    h.require("vanishes_at_zero", "increasing", "concave", what="truncation_gap_check")
    phi_m = truncate(phi, m)
    k_m = k_h_dyadic(phi_m, h).value
    k = k_h_dyadic(phi, h).value
    gap = bmo_dyadic(phi - phi_m).value
    return TruncationMargins(
        m=m,
        k_truncated=k_m,
        k_full=k,
        bmo_gap=gap,
        doubling_margin=2 * k - k_m,
        additive_margin=k + h(gap) - k_m,
    )


def lipschitz_margin(f: DyadicSimpleFunction, g: DyadicSimpleFunction, h: OscillationGauge) -> float:
    """h(||f - g||_BMO^d) - |K^d(f) - K^d(g)|."""
    h.require("vanishes_at_zero", "increasing", "concave", what="lipschitz_margin")
    gap = bmo_dyadic(f - g).value
    return h(gap) - abs(k_h_dyadic(f, h).value - k_h_dyadic(g, h).value)


# rising sun -----------------------------------------------------------------------


def rising_sun_steps(edges, values, lam: float, tol: float = 1e-13) -> list:
    """Disjoint intervals with mean ``lam`` outside of which phi <= lam.

    ``edges`` (increasing, length k+1) and ``values`` (length k) describe a
    step function on [edges[0], edges[-1]] whose mean is at most ``lam``.
    With F the primitive of (phi - lam) from the left end, the intervals are
    the components of {F != min(max_{y >= x} F(y), F(left end))}; the running
    maximum is formed from right to left.
    """
    e = np.asarray(edges, dtype=float)
    v = np.asarray(values, dtype=float)
    F = np.concatenate(([0.0], np.cumsum((v - lam) * np.diff(e))))
    M = np.maximum.accumulate(F[::-1])[::-1]
    pieces = []
    for k in range(v.size):
        x0, x1 = e[k], e[k + 1]
        f0, f1 = F[k], F[k + 1]
        c1 = M[k + 1]
        slope = (f1 - f0) / (x1 - x0)

        def where(level, x0=x0, f0=f0, slope=slope):
            return x0 + (level - f0) / slope

        if c1 <= 0:
            if slope == 0:
                if c1 <= f0 <= 0:
                    pieces.append((x0, x1))
            else:
                lo, hi = sorted((where(c1), where(0.0)))
                lo, hi = max(lo, x0), min(hi, x1)
                if lo <= hi:
                    pieces.append((lo, hi))
        else:
            # only the zero crossings of F belong to the complement here
            if slope == 0:
                if f0 == 0:
                    pieces.append((x0, x1))
            else:
                z = where(0.0)
                if x0 <= z <= x1:
                    pieces.append((z, z))
    pieces.append((e[0], e[0]))
    pieces.append((e[-1], e[-1]))
    pieces.sort()
    tol = tol * (e[-1] - e[0])
    out = []
    reach = e[0]
    for lo, hi in pieces:
        if lo > reach + tol:
            out.append((float(reach), float(lo)))
        reach = max(reach, hi)
    if reach < e[-1] - tol:
        out.append((float(reach), float(e[-1])))
    return out


def rising_sun(phi: DyadicSimpleFunction, lam: float) -> list:
    """Rising-sun intervals of a 1-D dyadic-simple function at level ``lam``."""
    if phi.n != 1:
        raise PreconditionError("rising_sun is one-dimensional")
    mean = float(phi.level(0)[0][0])
    if mean > lam + 1e-12:
        raise PreconditionError(f"mean {mean:g} exceeds the level {lam:g}")
    edges = np.arange(phi.size + 1) / phi.size
    return rising_sun_steps(edges, phi.leaves, lam)


def sharp_interval_margin(phi: DyadicSimpleFunction, h: OscillationGauge, g: int | None = None):
    """min over grid intervals J of <h(|phi - <phi>_J|)>_J - var_J h(2s) / (4 s^2),
    s the BMO norm (exact for n = 1 up to depth 10, else the grid value).

    Since h(2s)/(4s^2) decreases in s for concave h, using the exact norm
    instead of a grid lower bound keeps the check honest.  Returns
    (margin, interval bounds of the minimiser, s).
    """
    if phi.n != 1:
        raise PreconditionError("sharp interval bound is one-dimensional")
    g = phi.depth if g is None else g
    s = bmo_grid(phi, g).best
    if s == 0:
        return 0.0, (0.0, 1.0), 0.0
    factor = h(2 * s) / (4 * s * s)
    fine, r, G = _grid_setup(phi, g)
    centred = fine - float(np.mean(fine))
    s1 = np.concatenate(([0.0], np.cumsum(centred)))[::r]
    s2 = np.concatenate(([0.0], np.cumsum(centred**2)))[::r]
    worst, where = np.inf, None
    for side, loc in grid_k_locals(phi, h, g):
        w = side * r
        m1 = (s1[side:] - s1[:-side]) / w
        var = np.maximum((s2[side:] - s2[:-side]) / w - m1 * m1, 0.0)
        margin = loc - var * factor
        i = int(np.argmin(margin))
        if margin[i] < worst:
            worst, where = float(margin[i]), (i / G, (i + side) / G)
    return worst, where, s
