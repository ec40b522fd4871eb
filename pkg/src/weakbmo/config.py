"""Scenario files: sectioned ``key = value`` text.

    [scenario]
    kind = verify
    suites = theorem-chain, bellman-geometry
    gauges = power:p=0.5, log1p
    seed = 7

    [theorem-chain]
    trials = 1000

Comments start with ``#``.  Every error carries the offending line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

KINDS = ("verify", "surface", "oracle", "counterexample")
SUITES = ("theorem-chain", "bellman-geometry", "truncation-lemmas", "regularizer", "counterexamples")


@dataclass
class Entry:
    value: str
    lineno: int


@dataclass
class Section:
    name: str
    lineno: int
    entries: dict = field(default_factory=dict)

    def _entry(self, key):
        return self.entries.get(key)

    def has(self, key) -> bool:
        return key in self.entries

    def lineno_of(self, key) -> int:
        e = self._entry(key)
        return e.lineno if e else self.lineno

    def get_str(self, key, default=None):
        e = self._entry(key)
        return default if e is None else e.value

    def _convert(self, key, default, kind, convert):
        e = self._entry(key)
        if e is None:
            return default
        try:
            return convert(e.value)
        except ValueError:
            raise ConfigError(f"{self.name}.{key}: expected {kind}, got {e.value!r}", e.lineno) from None

    def get_int(self, key, default=None, minimum=None):
        val = self._convert(key, default, "an integer", int)
        if val is not None and minimum is not None and val < minimum:
            raise ConfigError(f"{self.name}.{key} must be >= {minimum}", self.lineno_of(key))
        return val

    def get_float(self, key, default=None, positive=False):
        val = self._convert(key, default, "a number", float)
        if val is not None and positive and not val > 0:
            raise ConfigError(f"{self.name}.{key} must be positive", self.lineno_of(key))
        return val

    def get_list(self, key, default=(), convert=str):
        e = self._entry(key)
        if e is None:
            return list(default)
        items = [s.strip() for s in e.value.split(",") if s.strip()]
        try:
            return [convert(s) for s in items]
        except ValueError:
            raise ConfigError(f"{self.name}.{key}: bad list entry in {e.value!r}", e.lineno) from None


def parse_config_text(text: str) -> dict:
    sections: dict[str, Section] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            name = line[1:-1].strip()
            if name in sections:
                raise ConfigError(f"duplicate section [{name}]", lineno)
            current = sections[name] = Section(name, lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {raw.strip()!r}", lineno)
        if current is None:
            raise ConfigError("key outside of any section", lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError("empty key", lineno)
        if key in current.entries:
            raise ConfigError(f"duplicate key {key!r} in [{current.name}]", lineno)
        current.entries[key] = Entry(value.strip(), lineno)
    return sections


@dataclass
class ScenarioConfig:
    kind: str
    name: str
    seed: int | None
    gauges: list
    dims: list
    t_values: list
    suites: list
    sections: dict
    tolerances: dict
    out: str | None = None
    source: str = "<string>"

    def section(self, name) -> Section:
        return self.sections.get(name) or Section(name, 0)

    def require_seed(self, what):
        if self.seed is None:
            line = self.section("scenario").lineno
            raise ConfigError(f"{what} is randomised and needs a seed", line)
        return self.seed


def load_config(text: str, source: str = "<string>") -> ScenarioConfig:
    sections = parse_config_text(text)
    if "scenario" not in sections:
        raise ConfigError("missing [scenario] section", 1)
    sc = sections["scenario"]
    kind = sc.get_str("kind")
    if kind is None:
        raise ConfigError("scenario.kind is required", sc.lineno)
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; choose from {', '.join(KINDS)}", sc.lineno_of("kind"))
    suites = sc.get_list("suites")
    for s in suites:
        if s not in SUITES:
            raise ConfigError(f"unknown suite {s!r}", sc.lineno_of("suites"))
    if kind == "verify" and not suites:
        raise ConfigError("no suites selected", sc.lineno_of("suites"))
    dims = sc.get_list("n", default=[1], convert=int)
    for n in dims:
        if n not in (1, 2, 3):
            raise ConfigError(f"dimension {n} outside 1..3", sc.lineno_of("n"))
    t_values = sc.get_list("t", default=[1.0], convert=float)
    if any(not t > 0 for t in t_values):
        raise ConfigError("t values must be positive", sc.lineno_of("t"))
    tol = {}
    if "tolerances" in sections:
        for key in sections["tolerances"].entries:
            tol[key] = sections["tolerances"].get_float(key)
    return ScenarioConfig(
        kind=kind,
        name=sc.get_str("name", kind),
        seed=sc.get_int("seed"),
        gauges=sc.get_list("gauges", default=["power:p=0.5"]),
        dims=dims,
        t_values=t_values,
        suites=suites,
        sections=sections,
        tolerances=tol,
        out=sc.get_str("out"),
        source=source,
    )


def read_config(path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from None
    return load_config(text, source=str(p))
