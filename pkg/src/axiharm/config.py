"""Run configuration: a small TOML file with a fixed schema.

Example::

    command = "solve"
    output = "out/schwarzschild"

    [rods]
    gaps = [[-1.0, 1.0]]

    [constants]
    v = [0.0, 0.0]
    psi = [[], []]

    [grid]
    h = 0.25

    [solver]
    R_schedule = [16.0, 32.0, 64.0]

Unknown keys, wrong types and violated invariants raise
:class:`ConfigError` with the line of the offending entry.
"""

from __future__ import annotations

import logging
import re
import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import GaugeIsometry, TargetPoint, gauge_normalize
from .rods import RodConfig, SingularMapSpec
from .seed import SeedConfig
from .solver import SolveParams
from .spacetime import TWIST_CONVENTIONS

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

COMMANDS = ("solve", "validate", "reconstruct", "report")

# section -> key -> (type tag, default, help)
SCHEMA = {
    "": {
        "command": ("str", "solve", "pipeline to run: solve | validate | reconstruct | report"),
        "output": ("str", "axiharm-out", "output directory"),
    },
    "rods": {
        "gaps": ("gaps", None, "list of [a, b] axis intervals (the horizons), sorted and disjoint"),
    },
    "constants": {
        "v": ("vector", None, "v_j on each of the N+1 Sigma components, bottom to top"),
        "psi": ("matrix", None, "psi_j rows (length k each); default: k = 0"),
        "chi": ("matrix", None, "chi_j rows; must be zero unless allow_chi"),
        "allow_chi": ("bool", False, "accept nonzero chi_j"),
        "normalize_gauge": ("bool", True, "move (v, psi) of the bottom component to 0 before solving"),
    },
    "seed": {
        "R_star": ("float+", None, "outer radius of the seed transition (default from the rods)"),
        "theta_margin": ("float+", float(np.pi / 8), "angular margin of the transition"),
        "bump_width": ("float+", None, "width of the tubes around Sigma (default min length / 4)"),
    },
    "grid": {
        "h": ("float+", 0.25, "core grid spacing"),
        "grading": ("float+", 1.1, "nominal growth factor of far-field cells"),
        "refine": ("int0", 0, "nested refinements on top of h"),
        "min_gap_cells": ("int+", 8, "coarsest allowed resolution of a gap"),
    },
    "solver": {
        "method": ("str", "newton", "newton | gauss-seidel"),
        "tol": ("float+", 1e-8, "stop when max ||tension|| <= tol"),
        "max_iters": ("int+", 80, "Newton iterations per ball"),
        "R_schedule": ("vector", None, "ball radii (default 8, 16, 32 times the rod diameter)"),
    },
    "reconstruct": {
        "twist_convention": ("str", "reduction", "reduction | converse"),
        "tube": ("float+", None, "closedness region excludes this distance to Sigma"),
        "warn_above": ("float+", None, "warn when a closedness residual exceeds this"),
    },
    "diagnostics": {
        "n_rays": ("int+", 7, "rays for the decay-at-infinity samples"),
        "decay_radii": ("int+", 24, "radii per decay fit of the seed tension"),
    },
}


REQUIRED = {("rods", "gaps"), ("constants", "v")}


@dataclass
class RunConfig:
    command: str
    output: str
    rods: RodConfig
    spec: SingularMapSpec                 # constants as written
    solve_spec: SingularMapSpec           # constants actually solved (normalized gauge)
    gauge: GaugeIsometry                  # maps written constants to solved ones
    seed: SeedConfig
    params: SolveParams
    twist_convention: str = "reduction"
    tube: float | None = None
    warn_above: float | None = None
    n_rays: int = 7
    decay_radii: int = 24
    raw: dict = field(default_factory=dict)
    text: str = ""                        # source, kept so checkpoints can be re-parsed
    overrides: dict = field(default_factory=dict)

    @property
    def k(self):
        return self.spec.k

    @property
    def N(self):
        return self.rods.N

    @property
    def n_free_parameters(self):
        """``N (k + 1)``: the constants left after fixing one component by the gauge group."""
        return self.N * (self.k + 1)

    def resolved(self) -> dict:
        """Echo of the configuration with defaults filled in."""
        out = {}
        for sec, keys in SCHEMA.items():
            d = self.raw.get(sec, {}) if sec else {k: v for k, v in self.raw.items() if k in keys}
            out_sec = {}
            for key, (_, default, _) in keys.items():
                out_sec[key] = d.get(key, default)
            if sec:
                out[sec] = out_sec
            else:
                out.update(out_sec)
        out["solver"]["R_schedule"] = list(self.params.schedule(self.rods))
        out["constants"]["k"] = self.k
        out["seed"].update(R_star=self.seed.R_star, theta_margin=self.seed.theta_margin,
                           bump_width=self.seed.bump_width)
        return out


def help_text() -> str:
    lines = ["Configuration keys (TOML):"]
    for sec, keys in SCHEMA.items():
        lines.append(f"  [{sec}]" if sec else "  (top level)")
        for key, (tag, default, doc) in keys.items():
            d = "required" if (sec, key) in REQUIRED else f"default {default!r}"
            lines.append(f"    {key:<18} {doc} ({d})")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# line lookup


def _line_index(text: str):
    """Map ``(section, key)`` to the 1-based line where the key is written."""
    where = {}
    section = ""
    header = re.compile(r"^\s*\[\s*([A-Za-z0-9_.\-]+)\s*\]\s*(#.*)?$")
    keyline = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")
    for n, line in enumerate(text.splitlines(), start=1):
        m = header.match(line)
        if m:
            section = m.group(1)
            where.setdefault((section, None), n)
            continue
        m = keyline.match(line)
        if m:
            where.setdefault((section, m.group(1)), n)
    return where


def _at(where, section, key=None):
    n = where.get((section, key)) or where.get((section, None))
    return f"line {n}: " if n else ""


# ---------------------------------------------------------------------------
# typed access


def _coerce(tag, value, name):
    def bad(what):
        raise ConfigError(f"'{name}' must be {what}, got {value!r}")

    if tag == "str":
        if not isinstance(value, str):
            bad("a string")
        return value
    if tag == "bool":
        if not isinstance(value, bool):
            bad("true or false")
        return value
    if tag in ("int0", "int+"):
        if isinstance(value, bool) or not isinstance(value, int):
            bad("an integer")
        if value < (0 if tag == "int0" else 1):
            bad("non-negative" if tag == "int0" else "positive")
        return value
    if tag == "float+":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            bad("a number")
        if not value > 0:
            bad("positive")
        return float(value)
    if tag == "vector":
        if not isinstance(value, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                                  for x in value):
            bad("a list of numbers")
        return [float(x) for x in value]
    if tag == "matrix":
        if not isinstance(value, list) or not all(isinstance(r, list) for r in value):
            bad("a list of lists of numbers")
        lengths = {len(r) for r in value}
        if len(lengths) > 1:
            raise ConfigError(f"'{name}' rows have different lengths {sorted(lengths)}: every row must have "
                              f"length k")
        for r in value:
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in r):
                bad("a list of lists of numbers")
        return [[float(x) for x in r] for r in value]
    if tag == "gaps":
        if not isinstance(value, list) or not all(isinstance(r, list) and len(r) == 2 for r in value):
            bad("a list of [a, b] pairs")
        return [(float(a), float(b)) for a, b in value]
    raise AssertionError(tag)


def parse_config(text: str, overrides: dict | None = None, announce: bool = True) -> RunConfig:
    """Parse and validate a configuration.

    ``overrides`` maps ``"section.key"`` (or a top-level key) to values that
    replace the file's entries, e.g. from command-line flags.  With
    ``announce`` the gauge normalization and parameter count are logged.
    """
    say = log.info if announce else log.debug
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error: {exc}") from None
    where = _line_index(text)

    for key, value in data.items():
        if isinstance(value, dict):
            if key not in SCHEMA or key == "":
                raise ConfigError(f"{_at(where, key)}unknown section [{key}]")
            for sub in value:
                if sub not in SCHEMA[key]:
                    raise ConfigError(f"{_at(where, key, sub)}unknown key '{sub}' in [{key}]; "
                                      f"known: {', '.join(SCHEMA[key])}")
        elif key not in SCHEMA[""]:
            raise ConfigError(f"{_at(where, '', key)}unknown key '{key}'")

    for dotted, value in (overrides or {}).items():
        sec, _, key = dotted.rpartition(".")
        if key not in SCHEMA.get(sec, {}):
            raise ConfigError(f"unknown override '{dotted}'")
        if sec:
            data.setdefault(sec, {})[key] = value
        else:
            data[key] = value

    def get(sec, key):
        tag, default, _ = SCHEMA[sec][key]
        src = data.get(sec, {}) if sec else data
        if key not in src:
            return default
        try:
            return _coerce(tag, src[key], f"{sec}.{key}" if sec else key)
        except ConfigError as exc:
            raise ConfigError(f"{_at(where, sec, key)}{exc}") from None

    command = get("", "command")
    if command not in COMMANDS:
        raise ConfigError(f"{_at(where, '', 'command')}command must be one of {', '.join(COMMANDS)}")

    if command == "validate" and "rods" not in data:
        data["rods"] = {"gaps": [[-1.0, 1.0]]}
        data.setdefault("constants", {"v": [0.0, 0.0]})

    gaps = get("rods", "gaps")
    if gaps is None:
        raise ConfigError(f"{_at(where, 'rods')}[rods] gaps is required")
    try:
        rods = RodConfig(tuple(gaps))
    except ValueError as exc:
        raise ConfigError(f"{_at(where, 'rods', 'gaps')}invalid gap list: {exc}") from None

    v = get("constants", "v")
    if v is None:
        raise ConfigError(f"{_at(where, 'constants')}[constants] v is required")
    n_comp = rods.N + 1
    if len(v) != n_comp:
        raise ConfigError(f"{_at(where, 'constants', 'v')}v has {len(v)} entries but {rods.N} gap(s) give "
                          f"{n_comp} Sigma components")
    psi = get("constants", "psi")
    chi = get("constants", "chi")
    if psi is None:
        psi = [[] for _ in range(n_comp)]
    if len(psi) != n_comp:
        raise ConfigError(f"{_at(where, 'constants', 'psi')}psi has {len(psi)} rows, need {n_comp}")
    k = len(psi[0])
    if chi is not None and (len(chi) != n_comp or any(len(r) != k for r in chi)):
        raise ConfigError(f"{_at(where, 'constants', 'chi')}chi must have {n_comp} rows of length k = {k}")
    allow_chi = get("constants", "allow_chi")
    try:
        spec = SingularMapSpec(np.array(v), np.array(psi, dtype=float).reshape(n_comp, k),
                               None if chi is None else np.array(chi, dtype=float).reshape(n_comp, k),
                               allow_chi=allow_chi)
    except ValueError as exc:
        key = next((name for name in ("chi", "psi", "v") if name in str(exc)), None)
        raise ConfigError(f"{_at(where, 'constants', key)}{exc}") from None

    if get("constants", "normalize_gauge"):
        pts = [TargetPoint.from_packed(np.concatenate([[0.0], spec.constants(j)[:1], spec.chi[j], spec.psi[j]]))
               for j in range(n_comp)]
        iso, _ = gauge_normalize(pts)
        solve_spec = spec.transformed(iso)
        if iso.is_identity():
            say("gauge normalization: constants already normalized")
        else:
            say("gauge normalization: b = %s, c = %.17g moves (v, psi) of component 0 to zero",
                     np.array2string(iso.b, precision=17), iso.c)
    else:
        iso = GaugeIsometry.identity(k)
        solve_spec = spec
    say("%d free parameters (N k charges and N angular momenta) for N = %d, k = %d",
             rods.N * (k + 1), rods.N, k)

    try:
        seed = SeedConfig(R_star=get("seed", "R_star"), theta_margin=get("seed", "theta_margin"),
                          bump_width=get("seed", "bump_width")).resolved(rods)
    except ValueError as exc:
        raise ConfigError(f"{_at(where, 'seed')}{exc}") from None

    sched = get("solver", "R_schedule")
    try:
        params = SolveParams(tol=get("solver", "tol"), max_iters=get("solver", "max_iters"),
                             method=get("solver", "method"), R_schedule=tuple(sched or ()),
                             h=get("grid", "h"), grading=get("grid", "grading"), refine=get("grid", "refine"),
                             min_gap_cells=get("grid", "min_gap_cells"))
    except ValueError as exc:
        raise ConfigError(f"{_at(where, 'solver')}{exc}") from None
    if sched is not None and min(sched) <= rods.outer_extent:
        raise ConfigError(f"{_at(where, 'solver', 'R_schedule')}every radius must enclose the rods "
                          f"(> {rods.outer_extent})")

    twist = get("reconstruct", "twist_convention")
    if twist not in TWIST_CONVENTIONS:
        raise ConfigError(f"{_at(where, 'reconstruct', 'twist_convention')}twist_convention must be one of "
                          f"{', '.join(TWIST_CONVENTIONS)}")

    return RunConfig(command, get("", "output"), rods, spec, solve_spec, iso, seed, params, twist,
                     get("reconstruct", "tube"), get("reconstruct", "warn_above"),
                     get("diagnostics", "n_rays"), get("diagnostics", "decay_radii"), data, text,
                     dict(overrides or {}))


def load_config(path, overrides: dict | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_config(text, overrides)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
