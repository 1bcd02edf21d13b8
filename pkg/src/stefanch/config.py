"""Run configuration: a sectioned ``key = value`` text format.

Example::

    [mesh]
    N = 33

    [graph]
    kind = stefan
    k_s = 2
    k_l = 1
    L = 1

    [solver]
    problem = ch
    epsilon = 0.125
    lambda = 0
    dt = 0.001
    T = 0.2

Unknown sections or keys and malformed values raise
:class:`~stefanch.errors.ConfigError` naming the key and its line.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .monotone import GraphKind, GraphSpec, PerturbationKind, PerturbationSpec
from .stepper import Problem, SolveConfig

SOURCES = ("zero", "bump", "mms")
INITIALS = ("cosine", "constant", "mms")

# (section, key) -> (field name, type)
_SCHEMA: dict[tuple[str, str], tuple[str, type]] = {
    ("mesh", "N"): ("N", int),
    ("graph", "kind"): ("graph_kind", str),
    ("graph", "k_s"): ("k_s", float),
    ("graph", "k_l"): ("k_l", float),
    ("graph", "L"): ("L", float),
    ("perturbation", "kind"): ("perturbation", str),
    ("solver", "problem"): ("problem", str),
    ("solver", "epsilon"): ("epsilon", float),
    ("solver", "lambda"): ("lam", float),
    ("solver", "dt"): ("dt", float),
    ("solver", "T"): ("T", float),
    ("solver", "newton_tol"): ("newton_tol", float),
    ("solver", "newton_max_iter"): ("newton_max_iter", int),
    ("data", "initial"): ("initial", str),
    ("data", "m0"): ("m0", float),
    ("data", "amplitude"): ("amplitude", float),
    ("data", "source"): ("source", str),
    ("data", "source_amplitude"): ("source_amplitude", float),
    ("data", "mms_expr"): ("mms_expr", str),
    ("output", "dir"): ("out", str),
    ("output", "stride"): ("stride", int),
    ("output", "experiment"): ("experiment", str),
}
_FIELD_KEY = {v[0]: k for k, v in _SCHEMA.items()}


@dataclass(frozen=True)
class RunConfig:
    N: int = 33
    graph_kind: str = "stefan"
    k_s: float = 2.0
    k_l: float = 1.0
    L: float = 1.0
    perturbation: str = "stefan_plateau"
    problem: str = "ch"
    epsilon: float = 0.125
    lam: float = 0.0
    dt: float = 1e-3
    T: float = 0.2
    newton_tol: float = 1e-11
    newton_max_iter: int = 40
    initial: str = "cosine"
    m0: float = 0.5
    amplitude: float = 1.5
    source: str = "bump"
    source_amplitude: float = 2.0
    mms_expr: str = "2 + (1 + t)/2*cos(pi*x)*cos(pi*y)"
    out: str = "run_out"
    stride: int = 0
    experiment: str = "run"

    def validate(self, lines: dict[str, int] | None = None) -> None:
        lines = lines or {}

        def fail(name, msg):
            sec, key = _FIELD_KEY[name]
            raise ConfigError(msg, key=f"{sec}.{key}", line=lines.get(name))

        if self.N < 2:
            fail("N", "must be at least 2")
        if self.graph_kind not in {k.value for k in GraphKind}:
            fail("graph_kind", f"unknown graph {self.graph_kind!r}")
        for name in ("k_s", "k_l", "L"):
            if not getattr(self, name) > 0:
                fail(name, "must be positive")
        if self.perturbation not in {k.value for k in PerturbationKind}:
            fail("perturbation", f"unknown perturbation {self.perturbation!r}")
        if self.problem not in {p.value for p in Problem}:
            fail("problem", f"unknown problem {self.problem!r}")
        if self.initial not in INITIALS:
            fail("initial", f"must be one of {', '.join(INITIALS)}")
        if self.source not in SOURCES:
            fail("source", f"must be one of {', '.join(SOURCES)}")
        if self.stride < 0:
            fail("stride", "must be non-negative")
        try:
            self.solve_config()
        except ConfigError as exc:
            name = {"epsilon": "epsilon", "lambda": "lam", "graph": "graph_kind", "dt": "dt",
                    "newton_tol": "newton_tol"}.get(exc.key or "", "problem")
            fail(name, str(exc).split(": ", 1)[-1])

    # -- builders ---------------------------------------------------------
    def graph(self) -> GraphSpec:
        kind = GraphKind(self.graph_kind)
        if kind is GraphKind.STEFAN:
            return GraphSpec.stefan(self.k_s, self.k_l, self.L)
        return GraphSpec.cubic() if kind is GraphKind.CUBIC else GraphSpec.indicator()

    def perturbation_spec(self) -> PerturbationSpec:
        if PerturbationKind(self.perturbation) is PerturbationKind.ZERO:
            return PerturbationSpec.zero()
        return PerturbationSpec.stefan_plateau(self.L)

    def solve_config(self) -> SolveConfig:
        return SolveConfig(epsilon=self.epsilon, lam=self.lam, dt=self.dt, T=self.T,
                           newton_tol=self.newton_tol, newton_max_iter=self.newton_max_iter,
                           graph=self.graph(), perturbation=self.perturbation_spec(),
                           problem=Problem(self.problem))

    # -- text form --------------------------------------------------------
    def to_text(self) -> str:
        out, current = [], None
        for (sec, key), (name, _) in _SCHEMA.items():
            if sec != current:
                if current is not None:
                    out.append("")
                out.append(f"[{sec}]")
                current = sec
            val = getattr(self, name)
            out.append(f"{key} = {val!r}" if isinstance(val, float) else f"{key} = {val}")
        return "\n".join(out) + "\n"


def _line_numbers(text: str) -> dict[tuple[str, str], int]:
    found, section = {}, None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            found.setdefault((section, None), i)
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            found.setdefault((section, m.group(1).strip()), i)
    return found


def parse(text: str) -> RunConfig:
    """Parse configuration text; missing keys keep their defaults."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError("duplicate key", key=f"{exc.section}.{exc.option}", line=exc.lineno) from exc
    except configparser.Error as exc:
        raise ConfigError(f"unreadable configuration: {exc.message}",
                          line=getattr(exc, "lineno", None)) from exc
    lines = _line_numbers(text)
    known_sections = {s for s, _ in _SCHEMA}
    values, where = {}, {}
    for sec in cp.sections():
        if sec not in known_sections:
            raise ConfigError("unknown section", key=sec, line=lines.get((sec, None)))
        for key, raw in cp.items(sec):
            line = lines.get((sec, key))
            if (sec, key) not in _SCHEMA:
                raise ConfigError("unknown key", key=f"{sec}.{key}", line=line)
            name, typ = _SCHEMA[(sec, key)]
            try:
                values[name] = typ(raw.strip())
            except ValueError as exc:
                raise ConfigError(f"cannot read {raw!r} as {typ.__name__}",
                                  key=f"{sec}.{key}", line=line) from exc
            where[name] = line
    cfg = RunConfig(**values)
    cfg.validate(where)
    return cfg


def load(path: str | Path) -> RunConfig:
    return parse(Path(path).read_text())


def semantically_equal(a: RunConfig, b: RunConfig) -> bool:
    return all(getattr(a, f.name) == getattr(b, f.name) for f in fields(RunConfig))
