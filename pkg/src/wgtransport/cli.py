"""Command-line front end: config parsing, scenario runners and CSV/JSON output.

Config files are INI style (``[section]`` headers, ``key = value`` lines, ``#``
comments).  Every scenario writes one CSV per curve and a ``metadata.json``
record next to them.  Exit codes: 0 success, 1 selftest failure, 2 config
error, 3 numerical tolerance failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import re
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, asymptotics, bidirectional, chiral_exact, observables, oracle
from .params import SystemParams
from .specfun import SeriesConvergenceError

SCENARIOS = ("g2-curve", "g2-collapse", "spectrum", "power-scan", "bidir-ensemble", "experiment-rates")

EXIT_OK, EXIT_SELFTEST, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4

NUMERIC_ERRORS = (
    oracle.ToleranceError,
    chiral_exact.PrecisionLossError,
    SeriesConvergenceError,
    bidirectional.SingularSystemError,
    FloatingPointError,
)


class ConfigError(ValueError):
    """All problems found in one config, each tagged with its line number."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class GridSpec:
    x_min: float = -10.0
    x_max: float = 10.0
    x_count: int = 201
    delta_min: float = -6.0
    delta_max: float = 6.0
    delta_count: int = 241
    n_min: int = 1
    n_max: int = 1000
    n_count: int = 40
    collapse_betas: tuple[float, ...] = (0.02, 0.05, 0.1)
    linear_transmission: float = 1e-6

    def x_values(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.x_count)

    def delta_values(self) -> np.ndarray:
        return np.linspace(self.delta_min, self.delta_max, self.delta_count)

    def n_values(self) -> list[int]:
        return sorted({int(round(v)) for v in np.geomspace(self.n_min, self.n_max, self.n_count)})


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    params: SystemParams
    grids: GridSpec = field(default_factory=GridSpec)
    tolerances: oracle.QuadratureSpec = field(default_factory=lambda: oracle.QuadratureSpec(abs_tol=1e-11, rel_tol=1e-8))
    seed: int = 0
    realizations: int = 100
    gamma_tot_hz: float | None = None
    output: Path = Path("out")
    threads: int = 1

    def with_output(self, path: Path) -> "ScenarioConfig":
        return replace(self, output=Path(path))

    def snapshot(self) -> dict:
        d = asdict(self)
        d["output"] = str(self.output)
        d["grids"]["collapse_betas"] = list(self.grids.collapse_betas)
        return d


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


# section -> key -> (target, converter)
_SCHEMA: dict[str, dict[str, tuple[str, type | object]]] = {
    "scenario": {"name": ("scenario", str)},
    "system": {
        "n_emitters": ("params.n_emitters", int),
        "beta": ("params.beta", float),
        "beta_l": ("params.beta_l", float),
        "k0": ("params.k0", float),
        "drive": ("params.drive", float),
    },
    "grid": {
        "x_min": ("grids.x_min", float),
        "x_max": ("grids.x_max", float),
        "x_count": ("grids.x_count", int),
        "delta_min": ("grids.delta_min", float),
        "delta_max": ("grids.delta_max", float),
        "delta_count": ("grids.delta_count", int),
        "n_min": ("grids.n_min", int),
        "n_max": ("grids.n_max", int),
        "n_count": ("grids.n_count", int),
        "collapse_betas": ("grids.collapse_betas", _float_list),
        "linear_transmission": ("grids.linear_transmission", float),
    },
    "tolerance": {
        "abs_tol": ("tol.abs_tol", float),
        "rel_tol": ("tol.rel_tol", float),
        "max_subdivisions": ("tol.max_subdivisions", int),
        "tail_cutoff_delta": ("tol.tail_cutoff_delta", float),
    },
    "ensemble": {"realizations": ("realizations", int), "seed": ("seed", int)},
    "units": {"gamma_tot_hz": ("gamma_tot_hz", float)},
    "output": {"directory": ("output", Path)},
}

_TYPE_NAMES = {int: "an integer", float: "a number", str: "text", Path: "a path"}

_RANGES = {
    "params.n_emitters": lambda v: v >= 1,
    "params.beta": lambda v: 0.0 <= v <= 1.0,
    "params.beta_l": lambda v: 0.0 <= v <= 1.0,
    "params.drive": lambda v: v >= 0.0,
    "grids.x_count": lambda v: v >= 1,
    "grids.delta_count": lambda v: v >= 1,
    "grids.n_min": lambda v: v >= 1,
    "grids.n_count": lambda v: v >= 1,
    "grids.collapse_betas": lambda v: len(v) > 0 and all(0 < b < 0.5 for b in v),
    "grids.linear_transmission": lambda v: 0 < v < 1,
    "tol.abs_tol": lambda v: v > 0,
    "tol.rel_tol": lambda v: v > 0,
    "tol.max_subdivisions": lambda v: v >= 1,
    "tol.tail_cutoff_delta": lambda v: v > 0,
    "realizations": lambda v: v >= 1,
    "gamma_tot_hz": lambda v: v > 0,
}


def _line_numbers(text: str) -> dict[tuple[str, str], int]:
    """Map ``(section, key)`` to its 1-based line; configparser does not keep them."""
    out, section = {}, None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            out.setdefault((section, ""), i)
        elif section and s and s[0] not in "#;" and "=" in s:
            out.setdefault((section, s.split("=", 1)[0].strip().lower()), i)
    return out


def parse_config(text: str) -> ScenarioConfig:
    """Parse and fully validate a config; raises :class:`ConfigError` listing every problem."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",), strict=True)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([str(exc).replace("\n", " ")]) from None
    lines = _line_numbers(text)
    problems: list[str] = []
    values: dict[str, object] = {}
    seen: set[str] = set()
    for section in cp.sections():
        schema = _SCHEMA.get(section.lower())
        if schema is None:
            problems.append(f"line {lines.get((section.lower(), ''), '?')}: unknown section [{section}]")
            continue
        for key, raw in cp.items(section):
            where = f"line {lines.get((section.lower(), key), '?')}"
            if key not in schema:
                problems.append(f"{where}: unknown key '{key}' in [{section}]")
                continue
            target, conv = schema[key]
            seen.add(target)
            try:
                value = conv(raw)
            except (TypeError, ValueError):
                problems.append(f"{where}: '{key}' expects {_TYPE_NAMES.get(conv, 'a list of numbers')}, got {raw!r}")
                continue
            ok = _RANGES.get(target, lambda v: True)
            if not ok(value):
                problems.append(f"{where}: '{key}' = {raw} is out of range")
                continue
            values[target] = value
    scenario = values.get("scenario")
    if scenario is None:
        problems.append("missing [scenario] name")
    elif scenario not in SCENARIOS:
        problems.append(f"line {lines.get(('scenario', 'name'), '?')}: unknown scenario '{scenario}' (choose from {', '.join(SCENARIOS)})")
    needs_system = scenario not in ("g2-collapse", "experiment-rates")
    for key in ("n_emitters", "beta"):
        if needs_system and f"params.{key}" not in seen:
            problems.append(f"missing [system] {key}")

    def pick(prefix):
        return {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith(prefix + ".")}

    params = None
    if not any(m.startswith("missing [system]") for m in problems) and not any(
        t.startswith("params.") and t not in values for t in seen
    ):
        defaults = {"n_emitters": 30, "beta": 0.05, "drive": 0.05 if scenario == "experiment-rates" else 0.0}
        try:
            params = SystemParams(**{**defaults, **pick("params")})
        except ValueError as exc:
            problems.append(f"[system]: {exc}")
    grids = GridSpec(**pick("grids"))
    if grids.x_count > 1 and grids.x_max <= grids.x_min:
        problems.append(f"line {lines.get(('grid', 'x_max'), '?')}: x_max must exceed x_min")
    if grids.n_max < grids.n_min:
        problems.append(f"line {lines.get(('grid', 'n_max'), '?')}: n_max must be at least n_min")
    if params is not None and scenario in ("power-scan", "experiment-rates", "bidir-ensemble") and params.drive <= 0:
        problems.append(f"line {lines.get(('system', 'drive'), '?')}: scenario '{scenario}' needs drive > 0")
    if params is not None and scenario in ("power-scan", "experiment-rates") and not 0 < params.beta < 1:
        problems.append(f"line {lines.get(('system', 'beta'), '?')}: power needs 0 < beta < 1")
    if params is not None and scenario != "bidir-ensemble" and params.beta_l != 0:
        problems.append(f"line {lines.get(('system', 'beta_l'), '?')}: beta_l is only used by bidir-ensemble")
    if scenario == "experiment-rates" and "gamma_tot_hz" not in values:
        values["gamma_tot_hz"] = 2 * math.pi * 5e6
    if problems:
        raise ConfigError(problems)
    tol = oracle.QuadratureSpec(**{"abs_tol": 1e-11, "rel_tol": 1e-8, **pick("tol")})
    return ScenarioConfig(
        scenario=scenario,
        params=params,
        grids=grids,
        tolerances=tol,
        seed=values.get("seed", 0),
        realizations=values.get("realizations", 100),
        gamma_tot_hz=values.get("gamma_tot_hz"),
        output=values.get("output", Path("out")),
    )


# -- output -------------------------------------------------------------------


def _fmt(v) -> str:
    return "%.17g" % v


def write_csv(path: Path, header: list[str], columns: list) -> None:
    rows = zip(*[np.asarray(c).tolist() for c in columns])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


# -- scenarios ---------------------------------------------------------------


def _g2_curve(cfg: ScenarioConfig) -> dict:
    x = cfg.grids.x_values()
    p = cfg.params
    write_csv(cfg.output / "g2.csv", ["x_gamma_tot", "g2"], [x, observables.g2(p, x, cfg.tolerances)])
    meta = {"files": ["g2.csv"], "g2_zero": float(observables.g2(p, [0.0], cfg.tolerances)[0])}
    if asymptotics.xi(p) > 0 and p.beta != 0.5:
        write_csv(cfg.output / "g2_asymp.csv", ["x_gamma_tot", "g2"], [x, asymptotics.g2_asymp(p, x)])
        meta["files"].append("g2_asymp.csv")
    meta["xi_squared"] = asymptotics.xi(p) ** 2
    return meta


def n_for_linear_transmission(beta: float, target: float) -> int:
    return max(1, round(math.log(target) / (2 * math.log(1 - 2 * beta))))


def _g2_collapse(cfg: ScenarioConfig) -> dict:
    u = cfg.grids.x_values()
    files, curves = [], []
    for b in cfg.grids.collapse_betas:
        n = n_for_linear_transmission(b, cfg.grids.linear_transmission)
        p = SystemParams(n, b)
        s = asymptotics.xi(p)
        scaled = observables.g2_tilde(p, u / s, cfg.tolerances) * 4 * math.pi * s**2 / b**2
        name = f"collapse_beta{b:g}_n{n}.csv"
        write_csv(cfg.output / name, ["xi_x", "gtilde2_scaled"], [u, scaled])
        files.append(name)
        curves.append(scaled)
    c = np.array(curves)
    return {"files": files, "max_relative_spread": float(np.max(c.max(0) - c.min(0)) / np.max(c))}


def _spectrum(cfg: ScenarioConfig) -> dict:
    d = cfg.grids.delta_values()
    p = cfg.params
    phi = chiral_exact.phi_k_exact(p, d)
    write_csv(cfg.output / "spectrum.csv", ["delta_k", "phi_abs2"], [d, np.abs(phi) ** 2])
    write_csv(cfg.output / "spectrum_asymp.csv", ["delta_k", "phi_abs2"], [d, asymptotics.phi_asymp_k(p, d) ** 2])
    return {"files": ["spectrum.csv", "spectrum_asymp.csv"], "peak_delta_asymp": asymptotics.xi(p)}


def _power_scan(cfg: ScenarioConfig) -> dict:
    p = cfg.params
    ns = cfg.grids.n_values()
    res = oracle.power_sweep(p.beta, p.drive, ns, cfg.tolerances)
    cols = [ns, [r.linear for r in res], [r.pair for r in res], [r.mixed for r in res], [r.total for r in res]]
    header = ["n", "linear", "pair", "mixed", "total"]
    write_csv(cfg.output / "power.csv", header, cols)
    asym = [asymptotics.power_asymp(p.with_(n_emitters=n)) for n in ns]
    write_csv(
        cfg.output / "power_asymp.csv",
        header,
        [ns, [a.linear for a in asym], [a.pair for a in asym], [a.mixed for a in asym], [a.total for a in asym]],
    )
    return {"files": ["power.csv", "power_asymp.csv"], "max_error_estimate": max(r.error_estimate for r in res)}


def _bidir(cfg: ScenarioConfig) -> dict:
    x = cfg.grids.x_values()
    p = cfg.params
    ens = bidirectional.ensemble_run(p, cfg.realizations, cfg.seed, x, workers=cfg.threads)
    cols = [x, ens.mean.g2, ens.std.g2]
    header = ["x_gamma_tot", "g2_mean", "g2_std"]
    if p.beta != 0.5:
        cols.append(observables.g2(p.with_(beta_l=0.0), x, cfg.tolerances))
        header.append("g2_chiral")
    write_csv(cfg.output / "bidir_g2.csv", header, cols)
    return {
        "files": ["bidir_g2.csv"],
        "power_mean_per_pin": ens.mean.power / p.p_in,
        "power_std_per_pin": ens.std.power / p.p_in,
        "realizations": ens.n_realizations,
        "failed_realizations": [list(f) for f in ens.failures],
    }


def experiment_rates(params: SystemParams, gamma_tot_hz: float, spec: oracle.QuadratureSpec | None = None) -> dict:
    power = observables.transmitted_power(params, spec, gamma_tot_hz=gamma_tot_hz)
    return {
        "power_hz": power.physical_rate,
        "linear_over_nonlinear": power.linear / power.nonlinear,
        "coincidence_hz": observables.coincidence_rate(params, gamma_tot_hz=gamma_tot_hz, spec=spec),
        "g2_zero": float(observables.g2(params, [0.0], spec)[0]),
        "g2_corrected": observables.g2_corrected(params, spec),
        "power_error_estimate": power.error_estimate,
    }


def _experiment(cfg: ScenarioConfig) -> dict:
    rates = experiment_rates(cfg.params, cfg.gamma_tot_hz, cfg.tolerances)
    keys = ["power_hz", "linear_over_nonlinear", "coincidence_hz", "g2_zero", "g2_corrected"]
    with open(cfg.output / "rates.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "value"])
        for k in keys:
            w.writerow([k, _fmt(rates[k])])
    return {"files": ["rates.csv"], **rates}


_RUNNERS = {
    "g2-curve": _g2_curve,
    "g2-collapse": _g2_collapse,
    "spectrum": _spectrum,
    "power-scan": _power_scan,
    "bidir-ensemble": _bidir,
    "experiment-rates": _experiment,
}


def run_scenario(cfg: ScenarioConfig) -> dict:
    """Run one scenario, write its CSVs plus ``metadata.json``, and return the metadata."""
    cfg.output.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = _RUNNERS[cfg.scenario](cfg)
    meta = {
        "scenario": cfg.scenario,
        "version": __version__,
        "config": cfg.snapshot(),
        "seed": cfg.seed,
        "wall_time_s": time.perf_counter() - t0,
        **result,
    }
    with open(cfg.output / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return meta


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wgtransport", description="Correlated two-photon transport through emitter chains.")
    ap.add_argument("--config", type=Path, help="scenario config file")
    ap.add_argument("--out", type=Path, help="output directory (overrides [output] directory)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads, 0 = all cores")
    ap.add_argument("--seed", type=int, help="override the master seed")
    ap.add_argument("--selftest", action="store_true", help="run the property suite and exit")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.selftest:
        from .selftest import run_selftest

        return EXIT_OK if all(r.passed for r in run_selftest()) else EXIT_SELFTEST
    if args.config is None:
        print("error: --config is required unless --selftest is given", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 0:
        print("error: --threads must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    cfg = replace(cfg, threads=args.threads or os.cpu_count() or 1)
    if args.out is not None:
        cfg = cfg.with_output(args.out)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    try:
        meta = run_scenario(cfg)
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {', '.join(meta['files'])} and metadata.json to {cfg.output}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
