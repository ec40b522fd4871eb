"""Command-line front end.

    weakbmo verify --config scenario.cfg --out results/ --jobs 4
    weakbmo surface --config surface.cfg
    weakbmo oracle --config oracle.cfg
    weakbmo counterexample --config haar.cfg
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bellman, counterexamples, plotting
from .config import ScenarioConfig, read_config
from .dyadic import write_dsf
from .errors import CapExceededError, ConfigError, DomainError, WeakBMOError
from .gauges import parse_gauge
from .suites import Check, build_tasks


@dataclass
class Report:
    config: ScenarioConfig
    checks: list = field(default_factory=list)
    wall_time: float = 0.0
    files: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def first_failure(self):
        return next((c for c in self.checks if not c.passed), None)

    def render(self) -> str:
        cfg = self.config
        lines = [
            f"scenario: {cfg.name} ({cfg.kind}) from {cfg.source}",
            f"seed: {cfg.seed}  gauges: {', '.join(cfg.gauges)}  n: {cfg.dims}  t: {cfg.t_values}",
        ]
        if cfg.suites:
            lines.append(f"suites: {', '.join(cfg.suites)}")
        lines.append("")
        width = max((len(c.suite) + len(c.name) for c in self.checks), default=0) + 3
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            label = f"{c.suite} / {c.name}"
            flag = f"  [{c.flags}]" if c.flags else ""
            lines.append(f"{status}  {label:<{width}} margin={c.margin: .6e}  tol={c.tolerance:.1e}{flag}")
        lines += [""] + self.notes
        npass = sum(c.passed for c in self.checks)
        lines.append(f"{npass}/{len(self.checks)} checks passed")
        lines.append(f"wall time: {self.wall_time:.2f} s")
        lines.append("files: " + ", ".join(str(Path(f).name) for f in self.files + ["report.txt"]))
        return "\n".join(lines) + "\n"


def _run_task(args):
    task, seed, scenario, tolerances = args
    return task.run(seed, scenario, tolerances)


def _num(x) -> str:
    """Shortest round-tripping text for a float, numpy scalar or not."""
    return repr(float(x))


def write_margins_csv(checks, path) -> None:
    with open(path, "w") as fh:
        fh.write("suite,check,margin,tolerance,passed,flags\n")
        for c in checks:
            name = c.name.replace('"', "'")
            fh.write(f'{c.suite},"{name}",{_num(c.margin)},{_num(c.tolerance)},{int(c.passed)},{c.flags}\n')


def run_verify(cfg: ScenarioConfig, out: Path, jobs: int = 1) -> Report:
    seed = cfg.require_seed("verify")
    tasks = build_tasks(cfg)
    start = time.perf_counter()
    payload = [(t, seed, cfg.name, cfg.tolerances) for t in tasks]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, payload))
    else:
        results = [_run_task(p) for p in payload]
    order = {s: i for i, s in enumerate(cfg.suites)}
    pairs = sorted(zip(tasks, results), key=lambda p: (order[p[0].suite], p[0].index))
    checks = [c for _, res in pairs for c in res]
    report = Report(cfg, checks, time.perf_counter() - start)
    out.mkdir(parents=True, exist_ok=True)
    write_margins_csv(checks, out / "margins.csv")
    plotting.margins_svg(checks, out / "margins.svg")
    report.files += [str(out / "margins.csv"), str(out / "margins.svg")]
    return report


def surface_grid(t: float, h, resolution: int, span: float = 3.0):
    """Strip coordinates: x1 on [-span t, span t], x2 = x1^2 + t^2 j / resolution."""
    half = resolution // 2
    x1 = np.linspace(-span * t, span * t, 2 * half + 1)
    levels = np.arange(resolution + 1) / resolution
    X1 = np.repeat(x1[:, None], levels.size, axis=1)
    X2 = X1 * X1 + t * t * levels[None, :]
    X2[:, -1] = x1 * x1 + t * t  # keep the upper boundary exact
    G, B = bellman.g_eval_array(X1, X2, t, h)
    return X1, X2, G, B


def run_surface(cfg: ScenarioConfig, out: Path) -> Report:
    sec = cfg.section("surface")
    res = sec.get_int("resolution", 200)
    if res is None or res < 2:
        raise ConfigError("surface.resolution must be at least 2", sec.lineno_of("resolution"))
    span = sec.get_float("span", 3.0, positive=True)
    t = cfg.t_values[0]
    h = parse_gauge(cfg.gauges[0])
    start = time.perf_counter()
    X1, X2, G, B = surface_grid(t, h, res, span)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "surface.csv", "w") as fh:
        fh.write("x1,x2,t,branch,G\n")
        for a, b, br, g in zip(X1.ravel(), X2.ravel(), B.ravel(), G.ravel()):
            fh.write(f"{_num(a)},{_num(b)},{_num(t)},{int(br)},{_num(g)}\n")
    plotting.surface_svg(X1, X2, G, t, f"G_t for {h.name}, t={t:g}", out / "surface.svg")
    # the cell at (0, t^2) must equal h(2t)/4
    i0 = X1.shape[0] // 2
    gap = abs(G[i0, -1] - h(2 * t) / 4)
    checks = [Check("surface", "top_of_axis", -gap, 1e-12)]
    report = Report(cfg, checks, time.perf_counter() - start)
    report.notes.append(f"G_t(0, t^2) = {_num(G[i0, -1])}, h(2t)/4 = {_num(h(2 * t) / 4)}")
    report.files += [str(out / "surface.csv"), str(out / "surface.svg")]
    return report


def run_oracle(cfg: ScenarioConfig, out: Path) -> Report:
    seed = cfg.require_seed("oracle")
    sec = cfg.section("oracle")
    xs1 = sec.get_list("x1", default=[0.0], convert=float)
    xs2 = sec.get_list("x2", default=None, convert=float) if sec.has("x2") else None
    depth = sec.get_int("depth", 3, minimum=0)
    budget = sec.get_int("budget", 100_000, minimum=1)
    t = cfg.t_values[0]
    h = parse_gauge(cfg.gauges[0])
    if xs2 is None:
        xs2 = [x * x + t * t for x in xs1]
    if len(xs2) != len(xs1):
        raise ConfigError("oracle.x1 and oracle.x2 must have the same length", sec.lineno_of("x2"))
    if depth > 4:
        raise CapExceededError("oracle depth is capped at 4", sec.lineno_of("depth"))
    start = time.perf_counter()
    out.mkdir(parents=True, exist_ok=True)
    checks, files = [], []
    lines = ["x1,x2,t,lower_bound,oracle_value,witness_upper"]
    for i, (a, b) in enumerate(zip(xs1, xs2)):
        if not bellman.omega_contains(a, b, t):
            raise DomainError(f"oracle point {i} ({a!r}, {b!r}) is not in Omega_{t!r}")
        lower = bellman.g_eval(a, b, math.sqrt(2) * t, h)
        res = bellman.bellman_oracle(a, b, t, h, depth, budget, seed + i)
        upper = h(2 * math.sqrt(b - a * a)) / 4 if a == 0 and depth >= 3 else math.nan
        upper_txt = "" if math.isnan(upper) else _num(upper)
        lines.append(f"{_num(a)},{_num(b)},{_num(t)},{_num(lower)},{_num(res.value)},{upper_txt}")
        path = out / f"witness_{i:03d}.dsf"
        write_dsf(res.witness, path)
        files.append(str(path))
        checks.append(Check("oracle", f"sandwich_lower [{i}]", res.value - lower, 1e-6))
        if not math.isnan(upper):
            checks.append(Check("oracle", f"witness_upper [{i}]", upper - res.value, 1e-9))
    (out / "oracle.csv").write_text("\n".join(lines) + "\n")
    report = Report(cfg, checks, time.perf_counter() - start)
    report.files += [str(out / "oracle.csv")] + files
    return report


def run_counterexample(cfg: ScenarioConfig, out: Path) -> Report:
    sec = cfg.section("counterexample")
    terms = sec.get_int("terms", 10, minimum=1)
    M = sec.get_float("M", 1.0, positive=True)
    horizon = sec.get_float("scan_horizon", 1e7, positive=True)
    gauge = sec.get_str("gauge", "dyadic_dips")
    h = parse_gauge(gauge)
    start = time.perf_counter()
    spec, phi = counterexamples.haar_series_build(h, M, terms, horizon)
    audit = counterexamples.haar_series_audit(spec, phi, h)
    out.mkdir(parents=True, exist_ok=True)
    counterexamples.write_growth_csv(audit.rows, out / "growth.csv")
    plotting.growth_svg(audit.rows, out / "growth.svg")
    checks = [
        Check("counterexample", "haar_k_bound", audit.k_margin, 1e-12),
        Check("counterexample", "haar_structure", 0.0 if audit.value_set_ok and audit.mean_zero_ok else -1.0, 0.0),
        Check("counterexample", "variance_growth", min(r.variance - r.terms for r in audit.rows), 0.0),
    ]
    report = Report(cfg, checks, time.perf_counter() - start)
    report.notes.append("t_j = " + ", ".join(f"{t:g}" for t in spec.thresholds))
    report.notes.append("n_j = " + ", ".join(str(n) for n in spec.orders))
    report.files += [str(out / "growth.csv"), str(out / "growth.svg")]
    return report


RUNNERS = {
    "verify": run_verify,
    "surface": run_surface,
    "oracle": run_oracle,
    "counterexample": run_counterexample,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weakbmo", description="Desk-scale checks of weak BMO-type conditions.")
    p.add_argument("command", choices=sorted(RUNNERS))
    p.add_argument("--config", required=True, help="scenario file (sectioned key = value)")
    p.add_argument("--out", help="output directory (default: scenario.out or ./weakbmo-out)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for verify")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = read_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if cfg.kind != args.command:
            print(f"warning: scenario kind is {cfg.kind!r}, running {args.command!r}", file=sys.stderr)
        out = Path(args.out or cfg.out or "weakbmo-out")
        runner = RUNNERS[args.command]
        if args.command == "verify":
            report = runner(cfg, out, max(1, args.jobs))
        else:
            report = runner(cfg, out)
    except WeakBMOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    (out / "report.txt").write_text(report.render())
    failure = report.first_failure()
    if failure is not None:
        print(f"FAILED: {failure.suite} / {failure.name}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
