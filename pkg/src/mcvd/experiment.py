"""Experiment configuration, parameter sweeps and CSV output.

Config files are YAML with lengths in micrometres, times in milliseconds
and molecule counts as plain numbers. Everything is converted to SI on
load, and every CSV column carries its SI unit in the header.
"""

from __future__ import annotations

import copy
import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Optional

import numpy as np
import yaml

from mcvd.channel import ChannelParams, MediumScenario, NetworkLayout
from mcvd.errors import ConfigError, DomainError, McvdError
from mcvd.optimizer import Bounds, LinkModel, SchemeKind, SolverConfig, solve_all
from mcvd.simulator import SimConfig, simulate_frames
from mcvd.stats import Allocation, MomentMode, Schedule

SCHEMA = "mcvd-results/1"
UM = 1e-6
MS = 1e-3

SWEEP_UNITS = {"T_max": "s", "Q": "molecules", "U": "frames", "psi_A": "molecules"}

_TOP_KEYS = {
    "scenario", "omega_m2_s", "drift_um_s", "transmitters_um", "receiver", "bounds", "U",
    "scheme", "schemes", "moment_mode", "sweep", "solver", "sim",
}
_BOUND_KEYS = {"psi_t_ms", "T_max_ms", "psi_A", "Psi_A", "Q"}
_SIM_KEYS = {"n_frames", "U_warmup", "leak_model", "empirical_threshold", "sampling", "dt_ms", "n_particles"}


def preset_names() -> list[str]:
    files = resources.files("mcvd") / "presets"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".yaml") and p.name != "base.yaml")


def _read_preset(name):
    path = resources.files("mcvd") / "presets" / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return yaml.safe_load(path.read_text()) or {}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_raw(path: Optional[str] = None, preset: Optional[str] = None) -> dict:
    """Base reference config, then the preset, then the file, merged in that order."""
    raw = _read_preset("base")
    if preset:
        raw = _merge(raw, _read_preset(preset))
    if path:
        try:
            with open(path) as fh:
                doc = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if doc is not None and not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        raw = _merge(raw, doc)
    return raw


@dataclass(frozen=True)
class Sweep:
    variable: str
    grid: tuple  # SI values (T_max in s)


@dataclass(frozen=True)
class Experiment:
    channel: ChannelParams
    layout: NetworkLayout
    bounds: Bounds
    U: int
    schemes: tuple
    moment_mode: MomentMode
    sweep: Sweep
    scenario: Optional[MediumScenario] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    sim: Optional[SimConfig] = None

    def point(self, value):
        """(bounds, U) with the sweep variable set to ``value``."""
        var = self.sweep.variable
        if var == "U":
            return self.bounds, int(value)
        key = {"T_max": "T_max", "Q": "Q", "psi_A": "psi_A"}[var]
        return replace(self.bounds, **{key: float(value)}), self.U


def _unknown(d, allowed, where):
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")


def _num(d, key, where):
    try:
        v = float(d[key])
    except KeyError:
        raise ConfigError(f"missing {where}.{key}") from None
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key} must be a number, got {d[key]!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{where}.{key} must be finite")
    return v


def _sweep(raw, bounds, U):
    sw = raw.get("sweep")
    if not sw:
        return Sweep("T_max", (bounds.T_max,))
    if not isinstance(sw, dict):
        raise ConfigError("sweep must be a mapping")
    _unknown(sw, {"variable", "grid", "logspace", "linspace"}, "sweep")
    var = sw.get("variable", "T_max")
    if var not in SWEEP_UNITS:
        raise ConfigError(f"sweep.variable must be one of {', '.join(SWEEP_UNITS)}, got {var!r}")
    given = [k for k in ("grid", "logspace", "linspace") if k in sw]
    if len(given) > 1:
        raise ConfigError("sweep takes exactly one of grid, logspace, linspace")
    if not given:
        values = []
    elif given[0] == "grid":
        values = list(sw["grid"] or [])
    else:
        spec = sw[given[0]]
        if not (isinstance(spec, list) and len(spec) == 3):
            raise ConfigError(f"sweep.{given[0]} must be [start, stop, num]")
        lo, hi, n = float(spec[0]), float(spec[1]), int(spec[2])
        if given[0] == "logspace":
            if not (lo > 0 and hi > 0):
                raise ConfigError("logspace endpoints must be positive")
            values = np.geomspace(lo, hi, n).tolist()
        else:
            values = np.linspace(lo, hi, n).tolist()
    if not values:
        # degenerate sweep: one row at the configured value
        base = {"T_max": bounds.T_max, "Q": bounds.Q, "U": U, "psi_A": bounds.psi_A}[var]
        return Sweep(var, (base,))
    try:
        values = [float(v) for v in values]
    except (TypeError, ValueError):
        raise ConfigError("sweep grid values must be numbers") from None
    if var == "T_max":
        values = [v * MS for v in values]
    if var == "U" and any(v != int(v) or v < 0 for v in values):
        raise ConfigError("U sweep values must be non-negative integers")
    return Sweep(var, tuple(values))


def _sim(raw):
    sim = raw.get("sim")
    if sim is None:
        return None
    if not isinstance(sim, dict):
        raise ConfigError("sim must be a mapping")
    _unknown(sim, _SIM_KEYS, "sim")
    kw = {}
    for key in ("n_frames", "U_warmup", "n_particles"):
        if sim.get(key) is not None:
            kw[key] = int(sim[key])
    if "leak_model" in sim:
        kw["leak_model"] = str(sim["leak_model"])
    if "sampling" in sim:
        kw["sampling"] = str(sim["sampling"])
    if sim.get("dt_ms") is not None:
        kw["dt"] = float(sim["dt_ms"]) * MS
    kw["empirical_threshold"] = bool(sim.get("empirical_threshold", False))
    try:
        return SimConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from exc


def build_experiment(raw: dict) -> Experiment:
    """Validate a merged raw config and convert it to SI."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    _unknown(raw, _TOP_KEYS, "config")
    try:
        scenario = None
        if raw.get("omega_m2_s") is not None:
            omega = _num(raw, "omega_m2_s", "config")
        else:
            scenario = MediumScenario.parse(str(raw.get("scenario", "MODE")))
            omega = scenario.diffusion_coefficient
        rec = raw.get("receiver") or {}
        _unknown(rec, {"center_um", "radius_um"}, "receiver")
        channel = ChannelParams(
            omega,
            np.asarray(raw.get("drift_um_s"), dtype=float) * UM,
            np.asarray(rec.get("center_um"), dtype=float) * UM,
            _num(rec, "radius_um", "receiver") * UM,
        )
        layout = NetworkLayout(np.asarray(raw.get("transmitters_um"), dtype=float) * UM)
        b = raw.get("bounds") or {}
        _unknown(b, _BOUND_KEYS, "bounds")
        bounds = Bounds(
            psi_t=_num(b, "psi_t_ms", "bounds") * MS,
            T_max=_num(b, "T_max_ms", "bounds") * MS,
            psi_A=_num(b, "psi_A", "bounds"),
            Psi_A=_num(b, "Psi_A", "bounds"),
            Q=_num(b, "Q", "bounds"),
        )
        U = raw.get("U", 3)
        if not isinstance(U, int) or U < 0:
            raise ConfigError(f"U must be a non-negative integer, got {U!r}")
        names = raw.get("schemes") if raw.get("scheme") is None else [raw["scheme"]]
        if not names:
            raise ConfigError("no schemes selected")
        schemes = tuple(dict.fromkeys(SchemeKind.parse(s) for s in names))
        mode = MomentMode.parse(raw.get("moment_mode", "paper"))
        sweep = _sweep(raw, bounds, U)
        solver = SolverConfig(**(raw.get("solver") or {}))
        exp = Experiment(channel, layout, bounds, U, schemes, mode, sweep, scenario, solver, _sim(raw))
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    except McvdError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    for v in exp.sweep.grid:
        b, _ = exp.point(v)
        try:
            b.check(layout.r)
        except McvdError as exc:
            raise ConfigError(f"sweep value {v!r} infeasible: {exc}") from exc
    return exp


def load_experiment(path=None, preset=None, overrides=None) -> Experiment:
    raw = load_raw(path, preset)
    if overrides:
        raw = _merge(raw, overrides)
    return build_experiment(raw)


# CSV layout ---------------------------------------------------------------


def columns(exp: Experiment) -> list[str]:
    r = exp.layout.r
    cols = ["sweep_variable", "sweep_unit", "sweep_value"]
    for s in exp.schemes:
        p = s.value
        cols.append(f"{p}_G")
        cols += [f"{p}_ber_tx{k}" for k in range(1, r + 1)]
        cols += [f"{p}_t{k}_s" for k in range(1, r + 1)]
        cols += [f"{p}_A{k}_molecules" for k in range(1, r + 1)]
        cols += [f"{p}_A{k}_int_molecules" for k in range(1, r + 1)]
        cols += [f"{p}_G_int", f"{p}_alpha", f"{p}_beta", f"{p}_gamma", f"{p}_complexity", f"{p}_evaluations"]
        if exp.sim is not None:
            cols += [f"{p}_sim_G", f"{p}_sim_G_se"]
            cols += [f"{p}_sim_ber_tx{k}" for k in range(1, r + 1)]
            cols += [f"{p}_sim_ber_se_tx{k}" for k in range(1, r + 1)]
    return cols


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _point_seed(seed, index, scheme_index):
    ss = np.random.SeedSequence(int(seed), spawn_key=(index, scheme_index))
    return int(ss.generate_state(1, np.uint64)[0])


def run_point(exp: Experiment, index: int, seed: Optional[int] = None) -> dict:
    value = exp.sweep.grid[index]
    bounds, U = exp.point(value)
    model = LinkModel(exp.channel, exp.layout, U, exp.moment_mode)
    sols = solve_all(bounds, model, exp.solver, exp.schemes)
    sv = value if exp.sweep.variable != "U" else int(value)
    row = {"sweep_variable": exp.sweep.variable, "sweep_unit": SWEEP_UNITS[exp.sweep.variable], "sweep_value": sv}
    for k, s in enumerate(exp.schemes):
        sol = sols[s]
        p = s.value
        row[f"{p}_G"] = sol.objective
        a_int = sol.allocation_int if sol.allocation_int is not None else np.rint(sol.allocation)
        for i in range(exp.layout.r):
            row[f"{p}_ber_tx{i + 1}"] = sol.per_tx_ber[i]
            row[f"{p}_t{i + 1}_s"] = sol.schedule[i]
            row[f"{p}_A{i + 1}_molecules"] = sol.allocation[i]
            row[f"{p}_A{i + 1}_int_molecules"] = int(a_int[i])
        row[f"{p}_G_int"] = sol.objective_int if sol.objective_int is not None else None
        for name in ("alpha", "beta", "gamma"):
            row[f"{p}_{name}"] = sol.iterations.get(name)
        row[f"{p}_complexity"] = sol.complexity_estimate
        row[f"{p}_evaluations"] = sol.measured_cost
        if exp.sim is not None:
            if seed is None:
                raise ConfigError("--seed is required for simulation runs")
            cfg = replace(exp.sim, seed=_point_seed(seed, index, k), U=U)
            rep = simulate_frames(
                Schedule(sol.schedule), Allocation(a_int), exp.channel, exp.layout, cfg, mode=exp.moment_mode
            )
            row[f"{p}_sim_G"] = float(rep.ber.mean())
            row[f"{p}_sim_G_se"] = float(math.sqrt(np.sum(rep.ber_se**2)) / exp.layout.r)
            for i in range(exp.layout.r):
                row[f"{p}_sim_ber_tx{i + 1}"] = rep.ber[i]
                row[f"{p}_sim_ber_se_tx{i + 1}"] = rep.ber_se[i]
    return row


def run(exp: Experiment, threads: int = 1, seed: Optional[int] = None) -> list[dict]:
    """Solve every sweep point; rows come back in sweep order."""
    if exp.sim is not None and seed is None:
        raise ConfigError("--seed is required for simulation runs")
    idx = range(len(exp.sweep.grid))
    if threads > 1 and len(idx) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda i: run_point(exp, i, seed), idx))
    return [run_point(exp, i, seed) for i in idx]


def write_csv(exp: Experiment, rows, stream) -> None:
    cols = columns(exp)
    stream.write(f"# schema={SCHEMA}\n")
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in cols])


def read_csv(path_or_text, is_text=False):
    """Parse a results CSV; returns (columns, rows of floats or str)."""
    if is_text:
        text = path_or_text
    else:
        try:
            with open(path_or_text) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read {path_or_text}: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# schema={SCHEMA}":
        raise ConfigError(f"line 1: expected '# schema={SCHEMA}'")
    reader = csv.reader(io.StringIO("\n".join(lines[1:])))
    try:
        header = next(reader)
    except StopIteration:
        raise ConfigError("line 2: missing header") from None
    if header[:3] != ["sweep_variable", "sweep_unit", "sweep_value"]:
        raise ConfigError("line 2: header must start with sweep_variable,sweep_unit,sweep_value")
    rows = []
    for lineno, rec in enumerate(reader, start=3):
        if len(rec) != len(header):
            raise ConfigError(f"line {lineno}: expected {len(header)} fields, got {len(rec)}")
        row = {}
        for name, cell in zip(header, rec):
            if name in ("sweep_variable", "sweep_unit"):
                row[name] = cell
            elif cell == "":
                row[name] = None
            else:
                try:
                    row[name] = float(cell)
                except ValueError:
                    raise ConfigError(f"line {lineno}: column {name!r} is not numeric: {cell!r}") from None
        rows.append(row)
    return header, rows


def plot_script(csv_path: str) -> str:
    """Gnuplot script with the data inlined: scalarized BER of each scheme vs the sweep value."""
    header, rows = read_csv(csv_path)
    schemes = [c[: -len("_G")] for c in header if c.endswith("_G") and not c.endswith("_sim_G")]
    var = rows[0]["sweep_variable"] if rows else "T_max"
    unit = rows[0]["sweep_unit"] if rows else "s"
    out = [
        f"# generated from {csv_path}",
        "set terminal pngcairo size 800,600",
        f"set output '{csv_path}.png'",
        "set logscale y",
        "set format y '10^{%L}'",
        f"set xlabel '{var} ({unit})'",
        "set ylabel 'BER'",
        "set key outside right",
        "set grid",
    ]
    plots = []
    for s in schemes:
        sim = f"{s}_sim_G" in header
        out.append(f"$data_{s} << EOD")
        for row in rows:
            g = row.get(f"{s}_G")
            if g is None:
                continue
            # log axes cannot show exact zeros
            line = f"{row['sweep_value']!r} {max(g, 1e-300)!r}"
            if sim:
                line += f" {max(row[f'{s}_sim_G'] or 0.0, 1e-300)!r} {row[f'{s}_sim_G_se'] or 0.0!r}"
            out.append(line)
        out.append("EOD")
        plots.append(f"$data_{s} using 1:2 with linespoints title '{s}'")
        if sim:
            plots.append(f"$data_{s} using 1:3:4 with yerrorbars title '{s} (simulated)'")
    if plots:
        out.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(out) + "\n"
