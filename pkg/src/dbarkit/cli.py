"""Command-line front end: config loading, dispatch, refinement
studies, CSV and summary emission.

Subcommands
-----------
domains    rasterize the configured domain over the level ladder; report
           node and component counts per level
cauchy     round-trip deviation ladder for the integral solver
bezout     polynomial / partition-of-unity solutions of sum x_j f_j = 1
corona     holomorphic-correction pipeline with residual and deviation
           ladders
divide     smoothness-class certificate for a quotient f^N / g
sharpness  counterexample battery: every item must FAIL one power below
           its certified class and PASS at the power
faa        composite-derivative coefficient tables and the oracle battery
lconn      interior path-length probe (bounded / growing / inconclusive)
taylor     remainder-order fits for holomorphic expressions

Exit codes: 0 success; 1 configuration errors, including malformed
expressions (reported with character positions); 2 module preconditions
violated at run time (common zeros, domination, disconnection, poles,
fit failures); 3 declared acceptance checks failed.

Configs are INI files.  ``[run]`` holds command, out, levels (grid
spacings, e.g. ``1/64 1/128 1/256``), seed, threads.  ``[domain]``
selects the region: ``kind`` is one of disk, annulus_sector,
sector_chain, disk_chain, comb, inner_spiral, half_ring_spiral, polygon,
with the constructor's keyword arguments as further keys (complex values
like ``0.5+0.25j``; ``vertices`` space-separated).  A section named
after the subcommand holds its parameters.  Expressions use the prefix
grammar of the expression module, e.g. ``sub(1, z)``, ``pow(z, 3)``,
``mul(conj(z), S)``.  Command-line flags override file values; without
--config every parameter falls back to its default (unit disk, default
ladder).

CSV schemas (one file per run; the first line is a generation-stamp
comment, and bodies below it are byte-identical across reruns of the
same config):
  domains:    level, h, nx, ny, inside, interior, boundary, exterior, components
  cauchy:     level, h, margin_cells, max_dev
  bezout:     route, residual, delta
  corona:     level, h, residual_sup, dbar_sup, margin_cells
  divide:     probe, verdict, measured, scale
  sharpness:  item, claimed, domain, power, verdict_at_power,
              verdict_below, measured_at_power, measured_below
  faa (table):  n, partition, coefficient
  faa (verify): trial, n, rel_err
  lconn:      scale, max_ratio, verdict
  taylor:     j, slope
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .bezout import (BezoutProblem, CommonZeroError, CoveringError,
                     FitRankError, FitToleranceError, VanishingError,
                     bezout_poly, bezout_pou)
from .cauchy import dbar_convergence, sample_field, verify_dbar_solution
from .corona import corona_convergence, corona_solve
from .division import FAIL, PASS, DominationError, certify_class
from .domains import (AnnulusSector, Comb, CompactDomain, Disk, DiskChain,
                      HalfRingSpiral, InnerSpiral, MaskResolutionError,
                      Polygon, SectorChain, build_mask, connected_components,
                      dump_mask)
from .expr import (Const, ExprParseError, PoleError, S, Z, add, as_callable,
                   conj, intpow, mul, parse_expr, sub)
from .faa import (MAX_ORDER, coefficient, compose_derivative,
                  enumerate_multi_indices, taylor_oracle)
from .geometry import (DisconnectedError, l_probe, spiral_growth_probe,
                       taylor_remainder_fit)

__all__ = [
    "EXIT_OK", "EXIT_CONFIG", "EXIT_PRECONDITION", "EXIT_ACCEPTANCE",
    "ConfigError", "ExperimentConfig", "RunReport", "run",
    "refinement_study", "sharpness_battery", "main",
]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PRECONDITION = 2
EXIT_ACCEPTANCE = 3

DEFAULT_LADDER = (1 / 64, 1 / 128, 1 / 256)

COMMANDS = ("domains", "cauchy", "bezout", "corona", "divide",
            "sharpness", "faa", "lconn", "taylor")

# errors that mean "the requested computation is not admissible on this
# input", as opposed to config mistakes (exit 1) or failed checks (exit 3)
PRECONDITION_ERRORS = (CommonZeroError, CoveringError, FitRankError,
                       FitToleranceError, VanishingError, DominationError,
                       DisconnectedError, PoleError, MaskResolutionError)

# metrics at or below this sup are floating-point roundoff of an identity
# that holds exactly; a log-log fit through them is meaningless
EXACT_FLOOR = 1e-13


class ConfigError(ValueError):
    """Bad config file, bad flag value, or malformed expression."""


@dataclass
class ExperimentConfig:
    command: str
    domain: Optional[CompactDomain]
    params: dict
    h_list: tuple
    out: Optional[Path]
    seed: int = 20260817
    threads: int = 1


@dataclass
class RunReport:
    command: str
    columns: tuple
    rows: list
    slopes: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def exit_status(self) -> int:
        if all(ok for _, ok, _ in self.checks):
            return EXIT_OK
        return EXIT_ACCEPTANCE

    def render(self) -> str:
        state = "ok" if self.exit_status == EXIT_OK else "FAILED"
        lines = [f"{self.command}: {state}"]
        for name, info in self.slopes.items():
            val = "exact" if info["exact"] else f"{info['slope']:.4f}"
            lines.append(f"  slope[{name}] = {val}")
        for name, ok, detail in self.checks:
            word = "PASS" if ok else "FAIL"
            lines.append(f"  [{word}] {name}: {detail}")
        for note in self.notes:
            lines.append(f"  note: {note}")
        return "\n".join(lines)


# --------------------------------------------------------------- parsing


def _number(text: str) -> float:
    text = text.strip()
    try:
        if "/" in text:
            num, den = text.split("/", 1)
            return float(num) / float(den)
        return float(text)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot parse number {text!r}") from None


def _int(raw, key) -> int:
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be an integer, got {raw!r}") from None


def _complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", ""))
    except ValueError:
        raise ConfigError(f"cannot parse complex value {text!r}") from None


def _split_top(text: str) -> list:
    """Split on commas at parenthesis depth zero."""
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    return [p.strip() for p in parts if p.strip()]


def _expr(text: str):
    try:
        return parse_expr(text)
    except ExprParseError as err:
        raise ConfigError(f"in expression {text!r}: {err}") from None


def _expr_list(text: str) -> list:
    exprs = [_expr(p) for p in _split_top(text)]
    if not exprs:
        raise ConfigError("expression list is empty")
    return exprs


def _positive(section, key, default) -> float:
    raw = section.get(key)
    value = default if raw is None else _number(raw)
    if not value > 0:
        raise ConfigError(f"{key} must be positive, got {value}")
    return float(value)


def _h_ladder(section, levels_flag) -> tuple:
    raw = section.get("levels")
    if raw is None:
        hs = list(DEFAULT_LADDER)
    else:
        hs = [_number(tok) for tok in raw.split()]
    if levels_flag is not None:
        if levels_flag < 1:
            raise ConfigError("--levels must be at least 1")
        while len(hs) < levels_flag:
            hs.append(hs[-1] / 2)
        hs = hs[:levels_flag]
    if any(h <= 0 for h in hs):
        raise ConfigError("grid spacings must be positive")
    if any(a <= b for a, b in zip(hs, hs[1:])):
        raise ConfigError("grid spacings must be strictly decreasing")
    return tuple(hs)


_DOMAIN_KINDS = {
    "disk": (Disk, {"center": ("center", _complex, 0j),
                    "radius": ("radius", _number, 1.0)}),
    "annulus_sector": (AnnulusSector, {"r_in": ("r_in", _number, None),
                                       "r_out": ("r_out", _number, None),
                                       "half_angle": ("half_angle", _number, None),
                                       "center": ("center", _complex, 0j)}),
    "sector_chain": (SectorChain, {"count": ("count", int, 8)}),
    "disk_chain": (DiskChain, {"count": ("count", int, 8)}),
    "comb": (Comb, {"teeth": ("teeth", int, 8),
                    "base_height": ("base_height", _number, 0.25),
                    "tooth_height": ("tooth_height", _number, 1.0)}),
    "inner_spiral": (InnerSpiral, {"theta_max": ("theta_max", _number,
                                                 16 * math.pi)}),
    "half_ring_spiral": (HalfRingSpiral, {"rings": ("rings", int, 6),
                                          "thickness": ("thickness", _number, 0.6)}),
}


def _parse_domain(section) -> CompactDomain:
    kind = section.get("kind", "disk").strip()
    if kind == "polygon":
        raw = section.get("vertices")
        if raw is None:
            raise ConfigError("polygon needs a vertices key")
        return Polygon(tuple(_complex(tok) for tok in raw.split()))
    if kind not in _DOMAIN_KINDS:
        known = ", ".join(sorted(_DOMAIN_KINDS) + ["polygon"])
        raise ConfigError(f"unknown domain kind {kind!r} (known: {known})")
    cls, spec = _DOMAIN_KINDS[kind]
    kwargs = {}
    for arg, (key, cast, default) in spec.items():
        raw = section.get(key)
        if raw is None:
            if default is None:
                raise ConfigError(f"domain kind {kind!r} needs key {key!r}")
            kwargs[arg] = default
        else:
            try:
                kwargs[arg] = cast(raw)
            except ConfigError:
                raise
            except ValueError:
                raise ConfigError(f"bad value for domain key {key!r}: "
                                  f"{raw!r}") from None
    try:
        return cls(**kwargs)
    except ValueError as err:
        raise ConfigError(f"domain: {err}") from None


# ------------------------------------------------ per-command parameters


def _load_domains(section):
    comp = section.get("components")
    return {"components": None if comp is None else _int(comp, "components"),
            "dump": section.get("dump")}


def _load_cauchy(section):
    return {"f": _expr(section.get("f", "1")),
            "tol": None if "tol" not in section else _positive(section, "tol", None),
            "slope_min": _number(section.get("slope_min", "0.9")),
            "physical_margin": _positive(section, "physical_margin", 0.15)}


def _load_bezout(section):
    if "f" not in section:
        raise ConfigError("bezout needs f = <expressions>")
    route = section.get("route", "both").strip()
    if route not in ("poly", "pou", "both"):
        raise ConfigError(f"bezout route must be poly, pou, or both, got {route!r}")
    return {"f": _expr_list(section["f"]),
            "route": route,
            "residual_tol": _positive(section, "residual_tol", 1e-10),
            "max_degree": _int(section.get("max_degree", "16"), "max_degree")}


def _load_corona(section):
    if "f" not in section:
        raise ConfigError("corona needs f = <expressions>")
    route = section.get("route", "poly").strip()
    if route not in ("poly", "pou"):
        raise ConfigError(f"corona route must be poly or pou, got {route!r}")
    return {"f": _expr_list(section["f"]),
            "route": route,
            "residual_tol": _positive(section, "residual_tol", 1e-6),
            "dbar_tol": _positive(section, "dbar_tol", 1e-3),
            "slope_min": _number(section.get("slope_min", "0.9")),
            "max_degree": _int(section.get("max_degree", "16"), "max_degree"),
            "physical_margin": _positive(section, "physical_margin", 0.15)}


_CLASSES = ("C0", "C1", "A0", "A1", "Dbar1")


def _load_divide(section):
    for key in ("f", "g", "power", "class"):
        if key not in section:
            raise ConfigError(f"divide needs key {key!r}")
    claimed = section["class"].strip()
    if claimed not in _CLASSES:
        raise ConfigError(f"unknown class {claimed!r} (known: {', '.join(_CLASSES)})")
    power = _int(section["power"], "power")
    if power < 1:
        raise ConfigError("power must be at least 1")
    expect = section.get("expect", "pass").strip()
    if expect not in ("pass", "fail"):
        raise ConfigError(f"expect must be pass or fail, got {expect!r}")
    # derivative-layer probes need ring room around the divisor zeros;
    # 1/512 keeps every shipped class decidable out of the box
    return {"f": _expr(section["f"]), "g": _expr(section["g"]),
            "power": power, "claimed": claimed,
            "h": _positive(section, "h", 1 / 512),
            "expect": PASS if expect == "pass" else FAIL}


def _load_sharpness(section):
    return {"h_fine": _positive(section, "h_fine", 1 / 512),
            "h_chain": _positive(section, "h_chain", 1 / 256)}


def _load_faa(section):
    n = section.get("n")
    verify = section.get("verify", "").strip().lower() in ("1", "true", "yes", "on")
    if n is None and not verify:
        verify = True
    n = None if n is None else _int(n, "n")
    if n is not None and not 1 <= n <= MAX_ORDER:
        raise ConfigError(f"n must lie in 1..{MAX_ORDER}")
    return {"n": n, "verify": verify,
            "trials": _int(section.get("trials", "200"), "trials"),
            "max_n": _int(section.get("max_n", "12"), "max_n"),
            "tol": _positive(section, "tol", 1e-10)}


_VERDICTS = ("bounded", "growing", "inconclusive")


def _load_lconn(section):
    preset = section.get("preset", "").strip()
    if preset not in ("", "spiral"):
        raise ConfigError(f"unknown lconn preset {preset!r}")
    expect = section.get("expect", "").strip()
    if expect and expect not in _VERDICTS:
        raise ConfigError(f"expect must be one of {', '.join(_VERDICTS)}")
    default_samples = "256" if preset == "spiral" else "64"
    params = {"preset": preset, "expect": expect or None,
              "samples": _int(section.get("samples", default_samples), "samples")}
    if preset == "spiral":
        params["nodes"] = _int(section.get("nodes", "256"), "nodes")
        params["depth"] = _positive(section, "depth", 1.45)
        params["scales"] = tuple(_number(t) for t in
                                 section.get("scales", "0.3 0.15 0.075").split())
    else:
        params["z0"] = _complex(section.get("z0", "0+0j"))
        params["scales"] = tuple(_number(t) for t in
                                 section.get("scales", "0.2 0.1 0.05").split())
        params["h"] = _positive(section, "h", 1 / 128)
    return params


def _load_taylor(section):
    for key in ("f", "z0", "m"):
        if key not in section:
            raise ConfigError(f"taylor needs key {key!r}")
    m = _int(section["m"], "m")
    if m < 0:
        raise ConfigError("m must be at least 0")
    coeffs = section.get("coeffs")
    expect = section.get("expect", "pass").strip()
    if expect not in ("pass", "fail", "none"):
        raise ConfigError(f"expect must be pass, fail, or none, got {expect!r}")
    return {"f": _expr(section["f"]), "z0": _complex(section["z0"]), "m": m,
            "radii": tuple(_number(t) for t in
                           section.get("radii", "0.2 0.1 0.05 0.025 0.0125").split()),
            "samples": _int(section.get("samples", "48"), "samples"),
            "coeffs": None if coeffs is None else
                      [_complex(t) for t in _split_top(coeffs)],
            "expect": expect}


_PARAM_LOADERS = {
    "domains": _load_domains, "cauchy": _load_cauchy, "bezout": _load_bezout,
    "corona": _load_corona, "divide": _load_divide, "sharpness": _load_sharpness,
    "faa": _load_faa, "lconn": _load_lconn, "taylor": _load_taylor,
}


def load_config(command: str, config_path=None, overrides=None,
                out=None, levels=None, threads=None) -> ExperimentConfig:
    """Assemble an ExperimentConfig from an INI file plus flag overrides."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            cp.read(path)
        except configparser.Error as err:
            raise ConfigError(f"cannot parse {path}: {err}") from None
    run_sec = cp["run"] if cp.has_section("run") else {}
    declared = run_sec.get("command")
    if declared is not None and declared.strip() != command:
        raise ConfigError(f"config declares command {declared.strip()!r}, "
                          f"but {command!r} was requested")
    h_list = _h_ladder(run_sec, levels)
    seed = _int(run_sec.get("seed", "20260817"), "seed")
    threads = _int(run_sec.get("threads", "1"), "threads") if threads is None else threads
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    out_val = out if out is not None else run_sec.get("out")
    section = dict(cp[command]) if cp.has_section(command) else {}
    if overrides:
        section.update({k: v for k, v in overrides.items() if v is not None})
    domain = _parse_domain(dict(cp["domain"]) if cp.has_section("domain") else {})
    params = _PARAM_LOADERS[command](section)
    return ExperimentConfig(command=command, domain=domain, params=params,
                            h_list=h_list,
                            out=None if out_val is None else Path(out_val),
                            seed=seed, threads=threads)


# -------------------------------------------------------------- metrics


def _slopes(h_list, series: dict) -> dict:
    out = {}
    logs_h = np.log(h_list)
    for name, values in series.items():
        vals = [float(v) for v in values]
        if max(vals) <= EXACT_FLOOR:
            out[name] = {"slope": None, "exact": True, "values": vals}
        else:
            fit = np.polyfit(logs_h, np.log(np.maximum(vals, 1e-300)), 1)
            out[name] = {"slope": float(fit[0]), "exact": False, "values": vals}
    return out


def _slope_check(checks, slopes, name, minimum):
    info = slopes[name]
    if info["exact"]:
        checks.append((f"slope[{name}]", True, "metric vanishes at every level"))
    else:
        checks.append((f"slope[{name}] >= {minimum}",
                       info["slope"] >= minimum, f"slope = {info['slope']:.4f}"))


# -------------------------------------------------------------- runners


def _run_domains(cfg: ExperimentConfig) -> RunReport:
    rows, last_mask = [], None
    for i, h in enumerate(cfg.h_list):
        mask = build_mask(cfg.domain, h=h)
        _, count = connected_components(mask)
        c = mask.counts()
        rows.append((i, h, mask.grid.nx, mask.grid.ny, c["inside"],
                     c["interior"], c["boundary"], c["exterior"], count))
        last_mask = mask
    checks, notes = [], []
    want = cfg.params["components"]
    if want is not None:
        got = sorted({r[-1] for r in rows})
        checks.append(("components", got == [want],
                       f"expected {want} at every level, got {got}"))
    if cfg.params["dump"]:
        target = Path(cfg.params["dump"])
        if cfg.out is not None and not target.is_absolute():
            cfg.out.mkdir(parents=True, exist_ok=True)
            target = cfg.out / target
        dump_mask(last_mask, target)
        notes.append(f"finest mask dumped to {target}")
    return RunReport("domains",
                     ("level", "h", "nx", "ny", "inside", "interior",
                      "boundary", "exterior", "components"),
                     rows, checks=checks, notes=notes)


def _run_cauchy(cfg: ExperimentConfig) -> RunReport:
    p = cfg.params
    if len(cfg.h_list) >= 2:
        ladder = dbar_convergence(p["f"], cfg.domain, hs=cfg.h_list,
                                  physical_margin=p["physical_margin"])
        rows = [(i, h, m, d) for i, (h, m, d) in
                enumerate(zip(ladder["h"], ladder["margins"], ladder["max_dev"]))]
        slopes = _slopes(ladder["h"], {"max_dev": ladder["max_dev"]})
    else:
        h = cfg.h_list[0]
        mask = build_mask(cfg.domain, h=h)
        margin = max(3, int(round(p["physical_margin"] / h)))
        rep = verify_dbar_solution(sample_field(p["f"], mask), margin=margin)
        rows = [(0, h, margin, rep["max_dev"])]
        slopes = {}
    checks = []
    if slopes:
        _slope_check(checks, slopes, "max_dev", p["slope_min"])
    if p["tol"] is not None:
        dev = rows[-1][3]
        checks.append((f"max_dev <= {p['tol']:g}", dev <= p["tol"],
                       f"finest-level deviation = {dev:.3e}"))
    return RunReport("cauchy", ("level", "h", "margin_cells", "max_dev"),
                     rows, slopes=slopes, checks=checks)


def _route_residual(xs, problem) -> float:
    mask = problem.mask
    zin = mask.coords(mask.inside)
    total = np.zeros(zin.shape, dtype=complex)
    for x, g in zip(xs, problem.f_fields):
        if hasattr(x, "values"):
            total += x.values[mask.inside] * g.values[mask.inside]
        else:
            total += as_callable(x)(zin) * g.values[mask.inside]
    return float(np.abs(total - 1.0).max())


def _run_bezout(cfg: ExperimentConfig) -> RunReport:
    p = cfg.params
    problem = BezoutProblem.build(cfg.domain, p["f"], h=cfg.h_list[-1])
    routes = ("poly", "pou") if p["route"] == "both" else (p["route"],)
    rows, checks = [], []
    for route in routes:
        if route == "poly":
            xs = bezout_poly(problem, max_degree=p["max_degree"])
        else:
            xs = bezout_pou(problem)
        res = _route_residual(xs, problem)
        rows.append((route, res, problem.delta))
        checks.append((f"{route} residual <= {p['residual_tol']:g}",
                       res <= p["residual_tol"], f"residual = {res:.3e}"))
    return RunReport("bezout", ("route", "residual", "delta"), rows,
                     checks=checks)


def _run_corona(cfg: ExperimentConfig) -> RunReport:
    p = cfg.params
    if len(cfg.h_list) >= 2:
        ladder = corona_convergence(p["f"], cfg.domain, hs=cfg.h_list,
                                    physical_margin=p["physical_margin"],
                                    route=p["route"], max_degree=p["max_degree"])
        rows = [(i, h, r, d, m) for i, (h, r, d, m) in
                enumerate(zip(ladder["h"], ladder["residual_sup"],
                              ladder["dbar_sup"], ladder["margins"]))]
        slopes = _slopes(ladder["h"], {"dbar_sup": ladder["dbar_sup"],
                                       "residual_sup": ladder["residual_sup"]})
    else:
        h = cfg.h_list[0]
        sol = corona_solve(p["f"], cfg.domain, h=h, route=p["route"],
                           max_degree=p["max_degree"],
                           margin=max(3, int(round(p["physical_margin"] / h))))
        rows = [(0, h, sol.residual_sup, sol.dbar_sup, sol.margin)]
        slopes = {}
    checks = []
    res, dbar = rows[-1][2], rows[-1][3]
    checks.append((f"residual_sup <= {p['residual_tol']:g}",
                   res <= p["residual_tol"], f"finest residual = {res:.3e}"))
    checks.append((f"dbar_sup <= {p['dbar_tol']:g}",
                   dbar <= p["dbar_tol"], f"finest deviation = {dbar:.3e}"))
    if slopes:
        _slope_check(checks, slopes, "dbar_sup", p["slope_min"])
    return RunReport("corona",
                     ("level", "h", "residual_sup", "dbar_sup", "margin_cells"),
                     rows, slopes=slopes, checks=checks)


def _run_divide(cfg: ExperimentConfig) -> RunReport:
    p = cfg.params
    cert = certify_class(p["f"], p["g"], p["power"], cfg.domain, p["claimed"],
                         h=p["h"])
    rows = [(pr.name, pr.verdict, pr.measured, pr.scale)
            for pr in cert.probes]
    checks = [(f"class {p['claimed']} at power {p['power']}: "
               f"expected {p['expect']}", cert.verdict == p["expect"],
               f"verdict = {cert.verdict}")]
    notes = [f"certificate: claimed={cert.claimed} power={cert.power} "
             f"h={cert.grid_h:g} verdict={cert.verdict}"]
    notes.extend(f"probe {pr.name}: {pr.verdict}" +
                 ("" if pr.measured is None else f" (measured {pr.measured:.6g})")
                 for pr in cert.probes)
    return RunReport("divide", ("probe", "verdict", "measured", "scale"),
                     rows, checks=checks, notes=notes)


# ------------------------------------------------- sharpness battery


def _inner_factor(z):
    z = np.asarray(z, dtype=complex)
    den = 1 - z
    safe = den != 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        w = np.exp(-(1 + z) / np.where(safe, den, 1.0))
    return np.where(safe, w, 0.0)


def _vanishing_inner_pair():
    f = lambda z: (1 - np.asarray(z, dtype=complex)) * _inner_factor(z)
    g = lambda z: 1 - np.asarray(z, dtype=complex)
    return f, g


def _radial_circle_families(count=8):
    # radial approach to 1, and along-circle approach through the points
    # where the inner factor equals 1 exactly
    ks = np.arange(1, count + 1, dtype=float)
    theta = 2.0 * np.arctan(1.0 / (2 * np.pi * 2.0 ** ks))
    return {"radial": [1.0 - 2.0 ** -k for k in ks],
            "circle": list(np.exp(1j * theta))}


def _chain_divisor(chain):
    corners = np.array([chain.corner(n) for n in range(1, chain.count + 1)])

    def g(z):
        z = np.asarray(z, dtype=complex)
        idx = np.clip(chain.sector_index(z) - 1, 0, len(corners) - 1)
        return np.where(chain.sector_index(z) > 0, np.conj(corners[idx]), 1.0)

    return g


def _chain_families(chain):
    corners = [chain.corner(n) for n in range(1, chain.count + 1)]
    return {"corner": corners, "conj_corner": [np.conj(c) for c in corners]}


def _worst_measure(cert) -> float:
    vals = [pr.measured for pr in cert.probes
            if pr.measured is not None and math.isfinite(pr.measured)]
    return max(vals) if vals else float("nan")


def sharpness_battery(h_fine: float = 1 / 512,
                      h_chain: float = 1 / 256) -> list:
    """Run every counterexample at its certified power and one below.

    Returns one dict per item with both verdicts and the largest probe
    measurement of each run.  A correct implementation yields PASS at
    the power and FAIL below for all six items.
    """
    disk = Disk(0j, 1.0)
    chain = SectorChain(8)
    one_minus = sub(Const(1.0), Z)
    fv, gv = _vanishing_inner_pair()
    fams = _radial_circle_families()
    items = [
        ("boundary values", "C0", "disk", 2, fv, gv,
         dict(families=fams), dict(families=fams)),
        ("first derivatives", "C1", "disk", 3, Z, conj(Z),
         dict(h=h_fine), dict(h=h_fine)),
        ("holomorphic values", "A0", "disk", 2, fv, gv,
         dict(), dict(families=fams)),
        ("holomorphic derivatives, chain", "A1", "sector_chain", 3,
         Z, _chain_divisor(chain),
         dict(h=h_chain, families=_chain_families(chain), g_locally_constant=True),
         dict(h=h_chain, families=_chain_families(chain), g_locally_constant=True)),
        ("holomorphic derivatives", "A1", "disk", 2,
         mul(intpow(one_minus, 3), S), intpow(one_minus, 3), dict(), dict()),
        ("dbar derivatives", "Dbar1", "disk", 4, Z, conj(Z),
         dict(h=h_fine), dict(h=h_fine)),
    ]
    out = []
    for name, claimed, dom_label, power, f, g, kw_at, kw_below in items:
        dom = chain if dom_label == "sector_chain" else disk
        at = certify_class(f, g, power, dom, claimed, **kw_at)
        below = certify_class(f, g, power - 1, dom, claimed, **kw_below)
        out.append({"item": name, "claimed": claimed, "domain": dom_label,
                    "power": power,
                    "verdict_at_power": at.verdict,
                    "verdict_below": below.verdict,
                    "measured_at_power": _worst_measure(at),
                    "measured_below": _worst_measure(below)})
    return out


def _run_sharpness(cfg: ExperimentConfig) -> RunReport:
    battery = sharpness_battery(h_fine=cfg.params["h_fine"],
                                h_chain=cfg.params["h_chain"])
    rows, checks = [], []
    for item in battery:
        rows.append((item["item"], item["claimed"], item["domain"],
                     item["power"], item["verdict_at_power"],
                     item["verdict_below"], item["measured_at_power"],
                     item["measured_below"]))
        checks.append((f"{item['item']}: PASS at {item['power']}",
                       item["verdict_at_power"] == PASS,
                       f"verdict = {item['verdict_at_power']}"))
        checks.append((f"{item['item']}: FAIL at {item['power'] - 1}",
                       item["verdict_below"] == FAIL,
                       f"verdict = {item['verdict_below']}"))
    return RunReport("sharpness",
                     ("item", "claimed", "domain", "power",
                      "verdict_at_power", "verdict_below",
                      "measured_at_power", "measured_below"),
                     rows, checks=checks)


# ------------------------------------------------------- faa runners


def _bell_numbers(n: int) -> list:
    bell = [1]
    for m in range(n):
        bell.append(sum(math.comb(m, k) * bell[k] for k in range(m + 1)))
    return bell


def _partition_counts(n: int) -> list:
    p = [1] + [0] * n
    for part in range(1, n + 1):
        for s in range(part, n + 1):
            p[s] += p[s - part]
    return p


def _poly_eval_deriv(coeffs, j, t):
    """j-th derivative of sum_k coeffs[k] t^k at t."""
    acc = 0j
    for k in range(j, len(coeffs)):
        acc += coeffs[k] * math.perm(k, j) * t ** (k - j)
    return acc


def _poly_expr(coeffs):
    out = Const(coeffs[0])
    for k in range(1, len(coeffs)):
        out = add(out, mul(Const(coeffs[k]), intpow(Z, k)))
    return out


def _run_faa(cfg: ExperimentConfig) -> RunReport:
    p = cfg.params
    if p["n"] is not None:
        n = p["n"]
        rows = [(n, "+".join(str(part) for part in k), coefficient(n, k))
                for k in enumerate_multi_indices(n)]
        total = sum(r[2] for r in rows)
        bell = _bell_numbers(n)[n]
        checks = [(f"sum of coefficients = Bell({n})", total == bell,
                   f"{total} vs {bell}"),
                  (f"table rows = p({n})",
                   len(rows) == _partition_counts(n)[n],
                   f"{len(rows)} vs {_partition_counts(n)[n]}")]
        return RunReport("faa", ("n", "partition", "coefficient"), rows,
                         checks=checks)

    rng = np.random.default_rng(cfg.seed)
    max_n, tol = p["max_n"], p["tol"]
    rows, worst = [], 0.0
    for trial in range(p["trials"]):
        n = int(rng.integers(1, max_n + 1))
        fc = rng.uniform(-1, 1, size=(max_n + 1, 2)) @ np.array([1, 1j])
        gc = rng.uniform(-1, 1, size=(max_n + 1, 2)) @ np.array([1, 1j])
        x = complex(*rng.uniform(-1, 1, size=2))
        gx = _poly_eval_deriv(gc, 0, x)
        f_derivs = [_poly_eval_deriv(fc, j, gx) for j in range(1, n + 1)]
        g_derivs = [_poly_eval_deriv(gc, j, x) for j in range(1, n + 1)]
        lhs = compose_derivative(f_derivs, g_derivs, n)
        rhs = taylor_oracle(_poly_expr(fc), _poly_expr(gc), x, n)
        rel = abs(lhs - rhs) / max(1.0, abs(rhs))
        worst = max(worst, rel)
        rows.append((trial, n, rel))
    checks = [(f"coefficient route matches series route to {tol:g} relative",
               worst <= tol, f"worst of {p['trials']} trials = {worst:.3e}")]
    bell = _bell_numbers(max_n)
    ok_bell = all(
        complex(compose_derivative([1] * n, [1] * n, n)) == bell[n]
        for n in range(1, max_n + 1))
    checks.append(("all-ones sums follow the Bell recurrence", ok_bell,
                   f"checked n = 1..{max_n}; B4 = {bell[4]}, B5 = {bell[5]}"))
    pc = _partition_counts(max_n)
    ok_p = all(len(enumerate_multi_indices(n)) == pc[n]
               for n in range(1, max_n + 1))
    checks.append(("table sizes are the partition counts", ok_p,
                   f"checked n = 1..{max_n}"))
    return RunReport("faa", ("trial", "n", "rel_err"), rows, checks=checks)


# --------------------------------------------------- geometry runners


def _run_lconn(cfg: ExperimentConfig) -> RunReport:
    p = cfg.params
    if p["preset"] == "spiral":
        rep = spiral_growth_probe(scales=p["scales"], depth=p["depth"],
                                  nodes=p["nodes"],
                                  samples_per_scale=p["samples"])
    else:
        rep = l_probe(cfg.domain, p["z0"], scales=p["scales"],
                      samples_per_scale=p["samples"], h=p["h"])
    rows = [(s, r, rep.verdict) for s, r in zip(rep.scales, rep.max_ratios)]
    checks = []
    if p["expect"] is not None:
        checks.append((f"verdict = {p['expect']}",
                       rep.verdict == p["expect"],
                       f"verdict = {rep.verdict}"))
    return RunReport("lconn", ("scale", "max_ratio", "verdict"), rows,
                     checks=checks, notes=list(rep.annotations))


def _run_taylor(cfg: ExperimentConfig) -> RunReport:
    p = cfg.params
    rep = taylor_remainder_fit(p["f"], p["z0"], p["m"], cfg.domain,
                               radii=p["radii"],
                               samples_per_radius=p["samples"],
                               coeffs=p["coeffs"])
    rows = list(zip(range(p["m"] + 1), [float(s) for s in rep["slope"]]))
    checks = []
    if p["expect"] == "pass":
        checks.append(("remainder orders hold for every j",
                       bool(all(rep["passes"])),
                       f"passes = {[bool(b) for b in rep['passes']]}"))
    elif p["expect"] == "fail":
        checks.append(("at least one remainder order fails",
                       not all(rep["passes"]),
                       f"passes = {[bool(b) for b in rep['passes']]}"))
    notes = [f"j = {j}: exact zero remainder" for j in range(p["m"] + 1)
             if rep["exact_zero"][j]]
    return RunReport("taylor", ("j", "slope"), rows, checks=checks,
                     notes=notes)


_RUNNERS = {
    "domains": _run_domains, "cauchy": _run_cauchy, "bezout": _run_bezout,
    "corona": _run_corona, "divide": _run_divide, "sharpness": _run_sharpness,
    "faa": _run_faa, "lconn": _run_lconn, "taylor": _run_taylor,
}


def run(config: ExperimentConfig) -> RunReport:
    """Dispatch to the configured command's pipeline."""
    return _RUNNERS[config.command](config)


def refinement_study(config: ExperimentConfig) -> dict:
    """Slopes per ladder metric; requires at least three levels.

    A metric that vanishes (to roundoff) at every level carries no order
    information and is flagged exact instead of fitted.
    """
    if len(config.h_list) < 3:
        raise ConfigError("refinement study needs at least three levels")
    report = run(config)
    if not report.slopes:
        raise ConfigError(f"{config.command} produces no refinement metrics")
    return report.slopes


# ---------------------------------------------------------------- main


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _write_csv(path: Path, report: RunReport) -> None:
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(
        timespec="seconds")
    with open(path, "w", newline="") as fh:
        fh.write(f"# {report.command} generated {stamp}\n")
        writer = csv.writer(fh)
        writer.writerow(report.columns)
        for row in report.rows:
            writer.writerow([_csv_cell(v) for v in row])


def _emit(report: RunReport, config: ExperimentConfig) -> None:
    text = report.render()
    if config.out is not None:
        config.out.mkdir(parents=True, exist_ok=True)
        csv_path = config.out / f"{config.command}.csv"
        _write_csv(csv_path, report)
        (config.out / "summary.txt").write_text(text + "\n")
        text += f"\n  wrote {csv_path}"
    print(text)


class _ArgumentParser(argparse.ArgumentParser):
    # argparse exits with its own status 2 on bad usage, which collides
    # with the precondition exit class; route usage errors to exit 1
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="dbarkit",
                             description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI config file")
        p.add_argument("--out", help="output directory for CSVs and summary")
        p.add_argument("--levels", type=int,
                       help="number of ladder levels (truncates or extends)")
        p.add_argument("--threads", type=int,
                       help="worker cap; orchestration itself is serial")
        if name == "divide":
            p.add_argument("--f")
            p.add_argument("--g")
            p.add_argument("--power")
            p.add_argument("--class", dest="claimed")
            p.add_argument("--domain", dest="domain_kind",
                           choices=sorted(_DOMAIN_KINDS) + ["polygon"])
        if name == "faa":
            p.add_argument("--n")
            p.add_argument("--verify", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        overrides = {}
        if args.command == "divide":
            overrides = {"f": args.f, "g": args.g, "power": args.power,
                         "class": args.claimed}
        elif args.command == "faa":
            overrides = {"n": args.n,
                         "verify": "true" if args.verify else None}
        config = load_config(args.command, config_path=args.config,
                             overrides=overrides, out=args.out,
                             levels=args.levels, threads=args.threads)
        if getattr(args, "domain_kind", None):
            config.domain = _parse_domain({"kind": args.domain_kind})
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run(config)
    except PRECONDITION_ERRORS as err:
        print(f"precondition failed: {err}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ValueError, TypeError) as err:
        print(f"precondition failed: {err}", file=sys.stderr)
        return EXIT_PRECONDITION
    _emit(report, config)
    return report.exit_status


if __name__ == "__main__":
    sys.exit(main())
