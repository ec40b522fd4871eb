"""Verification suites.  Each suite expands into independent tasks; each task
returns a list of named signed margins.  Tasks are plain top-level functions
with picklable arguments so they can be shipped to worker processes."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from . import bellman, counterexamples
from .config import ScenarioConfig
from .dyadic import DyadicSimpleFunction, truncate
from .functionals import (
    bmo_dyadic,
    k_h_dyadic,
    lipschitz_margin,
    sharp_interval_margin,
    truncation_gap_check,
)
from .gauges import gauge_inverse, parse_gauge, regularize

DEFAULT_TOL = {
    "inverse_bound": 1e-9,
    "dyadic_lower_bound": 1e-9,
    "sharp_interval_bound": 1e-9,
    "boundary_condition": 1e-9,
    "closing_formula": 1e-10,
    "seam_gap": 1e-6,
    "midpoint_convexity": 1e-8,
    "ode_residual": 1e-7,
    "branch2_monotone": 0.0,
    "segment_containment": 0.0,
    "truncation_doubling": 1e-10,
    "truncation_additive": 1e-10,
    "lipschitz": 1e-10,
    "dominated": 0.0,
    "first_derivative": 0.0,
    "second_derivative": 0.0,
    "third_derivative": 0.0,
    "threshold_growth": 0.0,
    "sqrt10M": 0.0,
    "proof_steps": 0.0,
    "fractional_part": 0.0,
    "anneal_ratio": 0.0,
    "liminf_zero": 0.0,
    "haar_k_bound": 1e-12,
    "haar_structure": 0.0,
    "variance_growth": 0.0,
    "l1_bounded": 1e-12,
}


@dataclass
class Check:
    suite: str
    name: str
    margin: float
    tolerance: float
    flags: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.margin >= -self.tolerance)


@dataclass(frozen=True)
class Task:
    suite: str
    index: int
    func: str
    kwargs: tuple  # sorted (key, value) pairs
    label: str = ""

    def run(self, seed: int, scenario: str, tolerances: dict) -> list:
        key = np.random.SeedSequence([seed, zlib.crc32(scenario.encode()), zlib.crc32(self.suite.encode()), self.index])
        rng = np.random.Generator(np.random.Philox(key))
        results = TASKS[self.func](rng=rng, **dict(self.kwargs))
        out = []
        for name, kind, margin, flags in results:
            tol = tolerances.get(kind, DEFAULT_TOL[kind])
            if self.label:
                name = f"{name} ({self.label})"
            out.append(Check(self.suite, name, float(margin) + 0.0, tol, flags))
        return out


# random test functions -----------------------------------------------------------


def random_dyadic_function(rng, n: int, depth: int) -> DyadicSimpleFunction:
    """Leaves drawn from a mixture: Gaussian, heavy-tailed, sparse spikes, or a few levels."""
    size = 1 << (n * depth)
    kind = rng.integers(0, 4)
    scale = 10 ** rng.uniform(-2, 1.5)
    if kind == 0:
        v = rng.normal(0, 1, size)
    elif kind == 1:
        v = rng.standard_cauchy(size).clip(-50, 50)
    elif kind == 2:
        v = np.where(rng.uniform(size=size) < 0.1, rng.normal(0, 5, size), 0.0)
    else:
        v = rng.choice(rng.normal(0, 2, 3), size)
    return DyadicSimpleFunction(n, depth, scale * v + rng.normal(0, scale))


# theorem chain ---------------------------------------------------------------------


def theorem_chain_task(rng, gauge, n, trials, max_depth):
    h = parse_gauge(gauge)
    worst = {"inverse_bound": math.inf, "dyadic_lower_bound": math.inf, "sharp_interval_bound": math.inf}
    for _ in range(trials):
        depth = int(rng.integers(1, max_depth + 1))
        phi = random_dyadic_function(rng, n, depth)
        norm = bmo_dyadic(phi).value
        K = k_h_dyadic(phi, h).value
        worst["inverse_bound"] = min(worst["inverse_bound"], norm - gauge_inverse(h, K))
        lower = 2.0 ** (-(n + 2)) * h(2.0 ** ((n + 2) / 2) * norm)
        worst["dyadic_lower_bound"] = min(worst["dyadic_lower_bound"], K - lower)
        if n == 1:
            worst["sharp_interval_bound"] = min(worst["sharp_interval_bound"], sharp_interval_margin(phi, h)[0])
    tag = f"{gauge} n={n}"
    return [(f"{kind} [{tag}]", kind, m, "") for kind, m in worst.items() if n == 1 or kind != "sharp_interval_bound"]


# Bellman geometry ---------------------------------------------------------------------


def bellman_pointwise_task(rng, gauge, t, dims, points, samples):
    h = parse_gauge(gauge)
    slope = bellman.slope_function(float(t), h)
    flag = "fd-derivative" if slope.used_fd else ""
    tag = f"{gauge} t={t:g}"
    out = [
        (f"boundary_condition [{tag}]", "boundary_condition", -bellman.boundary_condition_gap(t, h, points), flag),
        (f"seam_gap [{tag}]", "seam_gap", -bellman.seam_continuity_check(t, h, samples), flag),
        (f"ode_residual [{tag}]", "ode_residual", -bellman.ode_residual(t, h, points), flag),
    ]
    for n in dims:
        gap = abs(bellman.lower_bound_A(t, h, n) - bellman.g_eval(0.0, t * t, 2.0 ** (n / 2) * t, h))
        out.append((f"closing_formula [{tag} n={n}]", "closing_formula", -gap, flag))
    # branch 2 is linear increasing in x2 for fixed |x1| <= t
    x1 = rng.uniform(-t, t, points)
    lo = np.maximum(x1 * x1, 2 * t * np.abs(x1))
    hi = x1 * x1 + t * t
    a = lo + rng.uniform(0, 1, points) * (hi - lo)
    b = a + rng.uniform(0, 1, points) * (hi - a)
    ga, _ = bellman.g_eval_array(x1, a, t, h, slope)
    gb, _ = bellman.g_eval_array(x1, b, t, h, slope)
    out.append((f"branch2_monotone [{tag}]", "branch2_monotone", float(np.min(gb - ga)), flag))
    return out


def bellman_convexity_task(rng, gauge, t, trials):
    h = parse_gauge(gauge)
    seed = int(rng.integers(0, 2**63))
    res = bellman.local_convexity_fuzz(t, h, trials, seed)
    return [(f"midpoint_convexity [{gauge} t={t:g}]", "midpoint_convexity", res.worst_margin, "")]


def segment_task(rng, trials):
    failures = bellman.segment_domain_fuzz(trials, int(rng.integers(0, 2**63)))
    return [("segment_containment", "segment_containment", -float(failures), "")]


# truncation lemmas ------------------------------------------------------------------


def truncation_task(rng, gauge, n, trials, max_depth):
    h = parse_gauge(gauge)
    dbl = add = lip = math.inf
    for _ in range(trials):
        depth = int(rng.integers(1, max_depth + 1))
        phi = random_dyadic_function(rng, n, depth)
        m = int(rng.integers(0, depth + 1))
        r = truncation_gap_check(phi, h, m)
        dbl = min(dbl, r.doubling_margin)
        add = min(add, r.additive_margin)
        other = random_dyadic_function(rng, n, depth)
        lip = min(lip, lipschitz_margin(phi, truncate(phi, m) + other * 0.1, h))
    tag = f"{gauge} n={n}"
    return [
        (f"truncation_doubling [{tag}]", "truncation_doubling", dbl, ""),
        (f"truncation_additive [{tag}]", "truncation_additive", add, ""),
        (f"lipschitz [{tag}]", "lipschitz", lip, ""),
    ]


# regularizer ---------------------------------------------------------------------------


def regularizer_task(rng, gauge, horizon, shift, truncated):
    f = parse_gauge(gauge).shifted(shift)
    reg = regularize(f, horizon, truncate=truncated)
    grid = np.concatenate(([0.0], np.geomspace(1e-6 * horizon, horizon, 100_000)))
    wide = np.geomspace(1e-6, 10 * horizon, 10_000)
    g = reg.gauge
    tags = f"{gauge}+{shift:g} horizon={horizon:g}"
    growth = min(t - 2.0**m for m, t in enumerate(reg.all_thresholds))
    return [
        (f"dominated [{tags}]", "dominated", float(np.min(f(grid) - g(grid))), ""),
        (f"first_derivative [{tags}]", "first_derivative", float(np.min(g.d1(wide))), ""),
        (f"second_derivative [{tags}]", "second_derivative", float(np.min(-g.d2(wide))), ""),
        (f"third_derivative [{tags}]", "third_derivative", float(np.min(g.d3(wide))), ""),
        (f"threshold_growth [{tags}]", "threshold_growth", growth, ""),
    ]


# counterexamples ----------------------------------------------------------------------


def sqrt10m_task(rng, trials, max_depth):
    worst = {"sqrt10M": math.inf, "proof_steps": math.inf, "fractional_part": math.inf}
    h = counterexamples.section6_gauge()
    for _ in range(trials):
        depth = int(rng.integers(2, max_depth + 1))
        v = counterexamples.random_step_family(rng, depth)
        phi = DyadicSimpleFunction(1, depth, v)
        _, k_loc, _ = counterexamples.grid_oscillations(v, h, depth + 2)
        M = float(k_loc.max()) * (1 + rng.uniform(1e-9, 0.5)) + 1e-12
        r = counterexamples.verify_sqrt10M(phi, M, h)
        worst["sqrt10M"] = min(worst["sqrt10M"], r.margin)
        worst["proof_steps"] = min(worst["proof_steps"], r.outside_margin, r.interval_margin, r.total_margin)
        worst["fractional_part"] = min(worst["fractional_part"], r.fractional_margin)
    return [(kind, kind, m, "") for kind, m in worst.items()]


def anneal_task(rng, steps):
    res = counterexamples.adversarial_ratio_search(steps, int(rng.integers(0, 2**63)))
    return [(f"anneal_ratio [max {res.best_ratio:.6g}]", "anneal_ratio", 10.0 - res.best_ratio, "")]


def liminf_task(rng, upto):
    h = counterexamples.section6_gauge()
    k = np.arange(2, upto + 1, dtype=float)
    return [("liminf_zero", "liminf_zero", -float(np.max(h(k))), "")]


def haar_task(rng, terms, M, horizon):
    h = counterexamples.dyadic_dip_gauge()
    spec, phi = counterexamples.haar_series_build(h, M, terms, horizon)
    audit = counterexamples.haar_series_audit(spec, phi, h)
    var_margin = min(r.variance - r.terms for r in audit.rows)
    l1 = [r.l1 for r in audit.rows]
    l1_margin = min(min(r.l1_bound - r.l1 for r in audit.rows), min(np.diff(l1), default=0.0))
    structure = 0.0 if audit.value_set_ok and audit.mean_zero_ok else -1.0
    return [
        ("haar_k_bound", "haar_k_bound", audit.k_margin, ""),
        ("haar_structure", "haar_structure", structure, ""),
        ("variance_growth", "variance_growth", var_margin, ""),
        ("l1_bounded", "l1_bounded", l1_margin, ""),
    ]


TASKS = {
    "theorem_chain": theorem_chain_task,
    "bellman_pointwise": bellman_pointwise_task,
    "bellman_convexity": bellman_convexity_task,
    "segment": segment_task,
    "truncation": truncation_task,
    "regularizer": regularizer_task,
    "sqrt10m": sqrt10m_task,
    "anneal": anneal_task,
    "liminf": liminf_task,
    "haar": haar_task,
}

MAX_DEPTH = {1: 8, 2: 4, 3: 2}


def _chunks(total, size):
    while total > 0:
        yield min(size, total)
        total -= size


def build_tasks(cfg: ScenarioConfig) -> list:
    """Expand the selected suites into tasks, in a fixed order."""
    tasks = []

    def add(suite, func, label="", **kw):
        index = sum(t.suite == suite for t in tasks)
        tasks.append(Task(suite, index, func, tuple(sorted(kw.items())), label))

    def parts(total, size):
        sizes = list(_chunks(total, size))
        return [(c, f"part {i + 1}/{len(sizes)}" if len(sizes) > 1 else "") for i, c in enumerate(sizes)]

    for suite in cfg.suites:
        sec = cfg.section(suite)
        if suite == "theorem-chain":
            trials = sec.get_int("trials", 1000, minimum=1)
            chunk = sec.get_int("chunk", 250, minimum=1)
            for g in cfg.gauges:
                for n in cfg.dims:
                    depth = sec.get_int(f"max_depth_{n}", MAX_DEPTH[n], minimum=1)
                    for c, lab in parts(trials, chunk):
                        add(suite, "theorem_chain", label=lab, gauge=g, n=n, trials=c, max_depth=depth)
        elif suite == "bellman-geometry":
            points = sec.get_int("points", 1000, minimum=2)
            samples = sec.get_int("samples", 1000, minimum=1)
            trials = sec.get_int("trials", 10_000, minimum=1)
            for g in cfg.gauges:
                for t in cfg.t_values:
                    add(suite, "bellman_pointwise", gauge=g, t=t, dims=tuple(cfg.dims), points=points, samples=samples)
                    add(suite, "bellman_convexity", gauge=g, t=t, trials=trials)
            add(suite, "segment", trials=sec.get_int("segment_trials", 100_000, minimum=1))
        elif suite == "truncation-lemmas":
            trials = sec.get_int("trials", 1000, minimum=1)
            chunk = sec.get_int("chunk", 250, minimum=1)
            for g in cfg.gauges:
                for n in cfg.dims:
                    depth = sec.get_int(f"max_depth_{n}", min(MAX_DEPTH[n], 6), minimum=1)
                    for c, lab in parts(trials, chunk):
                        add(suite, "truncation", label=lab, gauge=g, n=n, trials=c, max_depth=depth)
        elif suite == "regularizer":
            add(suite, "regularizer", gauge=sec.get_str("gauge", "section6"),
                horizon=sec.get_float("horizon", 1000.0, positive=True),
                shift=sec.get_float("shift", 3.0), truncated=sec.get_str("truncate", "true") == "true")
        elif suite == "counterexamples":
            trials = sec.get_int("trials", 1000, minimum=1)
            for c, lab in parts(trials, sec.get_int("chunk", 250, minimum=1)):
                add(suite, "sqrt10m", label=lab, trials=c, max_depth=sec.get_int("max_depth", 5, minimum=2))
            add(suite, "anneal", steps=sec.get_int("anneal_steps", 100_000, minimum=1))
            add(suite, "liminf", upto=sec.get_int("liminf_upto", 1000, minimum=2))
            add(suite, "haar", terms=sec.get_int("terms", 10, minimum=1), M=sec.get_float("M", 1.0, positive=True),
                horizon=sec.get_float("scan_horizon", 1e7, positive=True))
    return tasks
