"""One test per acceptance criterion.  Each prints a single PASS/FAIL line."""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from weakbmo import bellman, counterexamples
from weakbmo.cli import main
from weakbmo.dyadic import DyadicSimpleFunction, truncate
from weakbmo.functionals import (
    bmo_dyadic,
    bmo_grid,
    k_h_dyadic,
    sharp_interval_margin,
    step_interval_stats,
)
from weakbmo.gauges import gauge_inverse, parse_gauge, regularize
from weakbmo.suites import random_dyadic_function, regularizer_task, sqrt10m_task

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
SQRT = parse_gauge("power:p=0.5")
CUBE = parse_gauge("power:p=0.3333333333333333")
LOG = parse_gauge("log1p")
T_VALUES = (0.5, 1.0, 2.0)


def announce(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} [{number:>2}] {title}: {detail}")


def rng_for(number):
    return np.random.Generator(np.random.Philox(1000 + number))


def test_01_boundary_condition(capsys):
    start = time.perf_counter()
    worst = 0.0
    x1 = np.linspace(-10, 10, 1000)
    for h in (SQRT, LOG):
        for t in T_VALUES:
            for n in (1, 2):
                T = 2.0 ** (n / 2) * t  # the parameter used at dimension n
                for param in (t, T):
                    vals, _ = bellman.g_eval_array(x1 * param, (x1 * param) ** 2, param, h)
                    worst = max(worst, float(np.max(np.abs(vals - h(np.abs(x1 * param))))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 5
    announce(capsys, 1, "boundary condition", ok, f"max gap {worst:.2e}, {elapsed:.2f} s")
    assert worst <= 1e-9
    assert elapsed < 5


def test_02_closing_formula(capsys):
    worst = 0.0
    for h in (SQRT, LOG):
        for t in T_VALUES:
            for n in (1, 2):
                a = bellman.lower_bound_A(t, h, n)
                g = bellman.g_eval(0.0, t * t, 2.0 ** (n / 2) * t, h)
                worst = max(worst, abs(a - g))
    ok = worst <= 1e-10
    announce(capsys, 2, "closing formula", ok, f"max gap {worst:.2e}")
    assert ok


def test_03_convexity_fuzz(capsys):
    start = time.perf_counter()
    worst_margin, worst_seam = math.inf, 0.0
    for k, h in enumerate((SQRT, LOG)):
        for j, t in enumerate(T_VALUES):
            res = bellman.local_convexity_fuzz(t, h, 10_000, seed=300 + 10 * k + j)
            assert res.trials == 10_000
            worst_margin = min(worst_margin, res.worst_margin)
            worst_seam = max(worst_seam, bellman.seam_continuity_check(t, h, 1000))
    elapsed = time.perf_counter() - start
    ok = worst_margin >= -1e-8 and worst_seam <= 1e-6 and elapsed < 60
    announce(capsys, 3, "convexity fuzz", ok,
             f"min midpoint margin {worst_margin:.2e}, max seam gap {worst_seam:.2e}, {elapsed:.1f} s")
    assert worst_margin >= -1e-8
    assert worst_seam <= 1e-6
    assert elapsed < 60


def test_04_theorem_chain(capsys):
    rng = rng_for(4)
    start = time.perf_counter()
    worst = {"a": math.inf, "b": math.inf, "c": math.inf}
    for n, max_depth in ((1, 8), (2, 4)):
        for _ in range(1000):
            phi = random_dyadic_function(rng, n, int(rng.integers(1, max_depth + 1)))
            norm = bmo_dyadic(phi).value
            for h in (SQRT, CUBE, LOG):
                K = k_h_dyadic(phi, h).value
                worst["a"] = min(worst["a"], norm + 1e-9 - gauge_inverse(h, K))
                lower = 2.0 ** (-(n + 2)) * h(2.0 ** ((n + 2) / 2) * norm)
                worst["b"] = min(worst["b"], K + 1e-9 - lower)
                if n == 1:
                    worst["c"] = min(worst["c"], sharp_interval_margin(phi, h)[0] + 1e-9)
    elapsed = time.perf_counter() - start
    ok = min(worst.values()) >= 0 and elapsed < 120
    announce(capsys, 4, "theorem chain", ok,
             ", ".join(f"({k}) {v:.2e}" for k, v in worst.items()) + f", {elapsed:.1f} s")
    assert min(worst.values()) >= 0
    assert elapsed < 120


def test_05_sharpness_witness(capsys):
    t = 1.0
    phi = DyadicSimpleFunction(1, 3, [-2 * t, 0, 0, 0, 0, 0, 0, 2 * t])
    norms = [bmo_grid(phi, g).best for g in range(3, 8)]
    mean = float(phi.leaves.mean())
    gaps = []
    for h in (SQRT, CUBE, LOG):
        avg = float(np.mean(h(np.abs(phi.leaves))))
        gaps.append(abs(avg - h(2 * t) / 4))
        _, var = step_interval_stats(phi.leaves, 0.0, 1.0)
        s = norms[0]
        gaps.append(abs(avg - var * h(2 * s) / (4 * s * s)))
    norm_gap = max(abs(v - 1.0) for v in norms)
    ok = norm_gap <= 1e-9 and mean == 0.0 and max(gaps) <= 1e-9
    announce(capsys, 5, "sharpness witness", ok,
             f"norm {norms[0]!r}, mean {mean}, max equality gap {max(gaps):.2e}")
    assert norm_gap <= 1e-9
    assert mean == 0.0
    assert max(gaps) <= 1e-9


def test_06_truncation_lemmas(capsys):
    rng = rng_for(6)
    gauges = (SQRT, CUBE, LOG)
    dbl = add = math.inf
    for _ in range(1000):
        n = int(rng.integers(1, 3))
        phi = random_dyadic_function(rng, n, int(rng.integers(1, 7 if n == 1 else 4)))
        m = int(rng.integers(0, phi.depth + 1))
        h = gauges[int(rng.integers(0, 3))]
        phi_m = truncate(phi, m)
        k_m = k_h_dyadic(phi_m, h).value
        k = k_h_dyadic(phi, h).value
        dbl = min(dbl, 2 * k + 1e-10 - k_m)
        add = min(add, k + h(bmo_dyadic(phi - phi_m).value) + 1e-10 - k_m)
    ok = dbl >= 0 and add >= 0
    announce(capsys, 6, "truncation lemmas", ok, f"doubling margin {dbl:.2e}, additive margin {add:.2e}")
    assert ok


def test_07_oracle_sandwich(capsys):
    start = time.perf_counter()
    lower = bellman.lower_bound_A(1.0, SQRT, 1)
    witness = np.array([-2.0, 0, 0, 0, 0, 0, 0, 2.0])
    res = bellman.bellman_oracle(0.0, 1.0, 1.0, SQRT, 3, 1_000_000, seed=7, extra_seeds=[witness])
    elapsed = time.perf_counter() - start
    upper = SQRT(2.0) / 4
    ok = (0.21022 - 1e-6 <= res.value <= 0.35356 and res.value <= upper + 1e-9
          and res.evaluations >= 1_000_000 and elapsed < 300)
    announce(capsys, 7, "oracle sandwich", ok,
             f"{lower:.6f} <= {res.value!r} <= {upper:.6f}, {res.evaluations} evaluations, {elapsed:.1f} s")
    assert 0.21022 - 1e-6 <= res.value <= 0.35356
    assert res.value <= upper + 1e-9
    assert bmo_dyadic(res.witness).value <= 1.0 + 1e-9
    assert elapsed < 300


def test_08_regularizer(capsys):
    f = parse_gauge("section6").shifted(3.0)
    reg = regularize(f, 1000.0, truncate=True)
    scan = np.concatenate(([0.0], np.geomspace(1e-6, 1000.0, 200_001)))
    dominated = float(np.min(f(scan) - reg.gauge(scan)))
    results = {name.split(" [")[0]: m for name, _, m, _ in regularizer_task(None, "section6", 1000.0, 3.0, True)}
    growth = min(t - 2.0**m for m, t in enumerate(reg.all_thresholds))
    strict = [results["first_derivative"], results["second_derivative"], results["third_derivative"]]
    ok = dominated >= 0 and results["dominated"] >= 0 and all(v > 0 for v in strict) and growth >= 0
    announce(capsys, 8, "regularizer", ok,
             f"min f - f~ {dominated:.3g}, min f~' {strict[0]:.3g}, min -f~'' {strict[1]:.3g}, "
             f"min f~''' {strict[2]:.3g}, {len(reg.all_thresholds)} thresholds")
    assert ok


def test_09_sqrt10M_suite(capsys):
    rng = rng_for(9)
    margins = dict((kind, m) for _, kind, m, _ in sqrt10m_task(rng, 1000, 5))
    res = counterexamples.adversarial_ratio_search(100_000, seed=9)
    ok = margins["sqrt10M"] >= 0 and res.best_ratio <= 10 and max(res.ratios) <= 8
    announce(capsys, 9, "sqrt(10M) suite", ok,
             f"min sqrt(10M) - norm {margins['sqrt10M']:.3g}, max annealed ratio {res.best_ratio:.4f} "
             f"over {res.steps} steps")
    assert margins["sqrt10M"] >= 0
    assert res.steps == 100_000
    assert res.best_ratio <= 10


def test_10_haar_series(capsys):
    h = counterexamples.dyadic_dip_gauge()
    spec, phi = counterexamples.haar_series_build(h, 1.0, 10, 1e7)
    audit = counterexamples.haar_series_audit(spec, phi, h)
    growth = all(r.variance >= r.terms for r in audit.rows)
    l1 = all(r.l1 <= r.l1_bound for r in audit.rows)
    ok = phi.depth == 21 and audit.k_d <= 1.0 and growth and l1 and audit.value_set_ok and audit.mean_zero_ok
    announce(capsys, 10, "Haar series", ok,
             f"depth {phi.depth}, K^d = {audit.k_d!r}, variances {[r.variance for r in audit.rows]}")
    assert phi.depth == 21
    assert audit.k_d <= spec.M
    assert growth and l1
    assert audit.value_set_ok and audit.mean_zero_ok


def test_11_determinism(capsys, tmp_path):
    cfg = SCENARIOS / "verify_quick.cfg"
    out1, out8 = tmp_path / "jobs1", tmp_path / "jobs8"
    assert main(["verify", "--config", str(cfg), "--out", str(out1), "--jobs", "1"]) == 0
    assert main(["verify", "--config", str(cfg), "--out", str(out8), "--jobs", "8"]) == 0
    a = (out1 / "margins.csv").read_bytes()
    b = (out8 / "margins.csv").read_bytes()
    suites = {line.split(",")[0] for line in a.decode().splitlines()[1:]}
    ok = a == b and len(suites) == 5
    announce(capsys, 11, "determinism", ok,
             f"{len(a.splitlines()) - 1} checks over {len(suites)} suites, identical: {a == b}")
    assert a == b
    assert len(suites) == 5
