"""Command-line front end.

    biphoton simulate --model {linear,meanfield} --config run.json --out DIR
    biphoton sweep --config run.json --out DIR
    biphoton kernels --op {chi,chib,fjl,u,v} --config kernels.json --out DIR

A config is a single JSON object.  Dynamics runs take exactly one of a
``rates`` block (decay times, normalised so that tau_b = 1) or a
``physical`` block (frequencies and dipole moments, converted to rates).
Every default that was filled in is written back into the ``config`` entry
of the JSON summary, which is itself a loadable config.  All times are in
units of tau_b.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import kernels, lindyn, mfdyn, params
from .errors import BiphotonError, ConfigError

WORKERS_ENV = "BIPHOTON_WORKERS"

DEFAULT_T_END = 10.0
DEFAULT_SAMPLES = 401
DEFAULT_TOL = {"linear": 1e-9, "meanfield": 1e-8}
DEFAULT_OUTPUT = {
    "trajectory": "trajectory.csv",
    "summary": "summary.json",
    "sweep": "sweep.csv",
    "kernel": "kernel.csv",
}
KERNEL_DEFAULTS = {
    "omega": 1.0,
    "omega_s": 1.0,
    "cos_xi": 0.0,
    "cos_xi_s": 0.0,
    "x_from": 0.001,
    "x_to": 20.0,
    "steps": 200,
    "ml_over_mj": 1.0,
    "jl_over_mj": 1.0,
    "mode": "simplified",
    "nodes": 16,
}
MODELS = ("linear", "meanfield")
KERNEL_OPS = ("chi", "chib", "fjl", "u", "v")
TOP_LEVEL_KEYS = {"model", "rates", "physical", "sizes", "drive_enabled", "t_end",
                  "sample_count", "tolerances", "sweep", "kernel", "output"}


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    start: float
    stop: float
    steps: int

    def grid(self) -> list:
        return [float(v) for v in np.linspace(self.start, self.stop, self.steps)]


@dataclass
class RunConfig:
    """A validated run configuration with every default resolved."""

    model: Optional[str] = None
    rates_block: Optional[dict] = None
    physical: Optional[params.PhysicalSystem] = None
    sizes: tuple = (1, 1, 1)
    drive_enabled: bool = True
    t_end: float = DEFAULT_T_END
    sample_count: int = DEFAULT_SAMPLES
    rel_tol: Optional[float] = None
    sweep: Optional[SweepSpec] = None
    kernel: dict = field(default_factory=dict)
    output: dict = field(default_factory=lambda: dict(DEFAULT_OUTPUT))

    @property
    def has_rates(self) -> bool:
        return self.rates_block is not None or self.physical is not None

    def rate_set(self) -> params.RateSet:
        """Decay times in units of tau_b."""
        if self.physical is not None:
            return params.rates_from_system(self.physical).in_units_of_tau_b()
        if self.rates_block is None:
            raise ConfigError("this command needs a 'rates' or 'physical' block")
        b = self.rates_block
        tau_b = b["tau_b"]
        rs = params.RateSet(tau_r=b["tau_r"] / tau_b, tau_s=b["tau_s"] / tau_b, tau_b=1.0)
        if "tau3" in b:
            return params.RateSet(rs.tau_r, rs.tau_s, 1.0, b["tau3"] / tau_b)
        return rs.with_coupling(b["coupling"])

    def tolerance(self, model: str) -> float:
        return self.rel_tol if self.rel_tol is not None else DEFAULT_TOL[model]

    def echo(self, model: Optional[str] = None) -> dict:
        """The resolved configuration as a loadable JSON object."""
        model = model or self.model
        out = {
            "drive_enabled": self.drive_enabled,
            "t_end": self.t_end,
            "sample_count": self.sample_count,
            "output": dict(self.output),
        }
        if model is not None:
            out["model"] = model
            out["tolerances"] = {"rel_tol": self.tolerance(model)}
        elif self.rel_tol is not None:
            out["tolerances"] = {"rel_tol": self.rel_tol}
        if self.physical is not None:
            out["physical"] = asdict(self.physical)
        else:
            out["sizes"] = dict(zip(("N_r", "N_s", "N"), self.sizes))
            if self.rates_block is not None:
                out["rates"] = dict(self.rates_block)
        if self.sweep is not None:
            out["sweep"] = {"parameter": self.sweep.parameter, "from": self.sweep.start,
                            "to": self.sweep.stop, "steps": self.sweep.steps}
        if self.kernel:
            out["kernel"] = dict(self.kernel)
        return _jsonable(out)


# -- loading -----------------------------------------------------------------

def _number(value, key: str, positive: bool = False, allow_inf: bool = False) -> float:
    if isinstance(value, str) and allow_inf and value.strip().lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value) and not (allow_inf and value == math.inf):
        raise ConfigError(f"{key}: must be finite, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{key}: must be > 0, got {value!r}")
    return value


def _integer(value, key: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{key}: must be >= {minimum}, got {value!r}")
    return value


def _block(raw: dict, key: str, allowed: set) -> Optional[dict]:
    block = raw.get(key)
    if block is None:
        return None
    if not isinstance(block, dict):
        raise ConfigError(f"{key}: expected an object")
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"{key}.{unknown[0]}: unknown key (allowed: {', '.join(sorted(allowed))})")
    return block


def _parse_rates(block: dict) -> dict:
    out = {"tau_b": _number(block.get("tau_b", 1.0), "rates.tau_b", positive=True)}
    for sub in ("r", "s"):
        tau_key, ratio_key = f"tau_{sub}", f"tau_b_over_tau_{sub}"
        if (tau_key in block) == (ratio_key in block):
            raise ConfigError(f"rates: give exactly one of {tau_key} or {ratio_key}")
        if tau_key in block:
            out[tau_key] = _number(block[tau_key], f"rates.{tau_key}", positive=True, allow_inf=True)
        else:
            ratio = _number(block[ratio_key], f"rates.{ratio_key}", positive=True)
            out[tau_key] = out["tau_b"] / ratio
    if "coupling" in block and "tau3" in block:
        raise ConfigError("rates: give at most one of coupling or tau3")
    if "tau3" in block:
        out["tau3"] = _number(block["tau3"], "rates.tau3", positive=True, allow_inf=True)
    else:
        coupling = _number(block.get("coupling", 0.0), "rates.coupling")
        if coupling < 0:
            raise ConfigError(f"rates.coupling: must be >= 0, got {coupling!r}")
        out["coupling"] = coupling
    return out


def _parse_physical(block: dict) -> params.PhysicalSystem:
    kwargs = {}
    for f in fields(params.PhysicalSystem):
        if f.name not in block:
            if f.default is MISSING:
                raise ConfigError(f"physical.{f.name}: required key missing")
            continue
        value = block[f.name]
        if f.name in ("N_r", "N_s", "N"):
            kwargs[f.name] = _integer(value, f"physical.{f.name}", 1)
        else:
            kwargs[f.name] = _number(value, f"physical.{f.name}")
    try:
        return params.PhysicalSystem(**kwargs)
    except BiphotonError as exc:
        raise ConfigError(f"physical: {exc}") from exc


def _parse_kernel(block: dict) -> dict:
    out = dict(KERNEL_DEFAULTS)
    out.update(block)
    for key in ("omega", "omega_s", "x_from", "x_to", "ml_over_mj", "jl_over_mj"):
        out[key] = _number(out[key], f"kernel.{key}", positive=True)
    for key in ("cos_xi", "cos_xi_s"):
        out[key] = _number(out[key], f"kernel.{key}")
        if abs(out[key]) > 1:
            raise ConfigError(f"kernel.{key}: must lie in [-1, 1], got {out[key]!r}")
    out["steps"] = _integer(out["steps"], "kernel.steps", 1)
    out["nodes"] = _integer(out["nodes"], "kernel.nodes", 16)
    if out["mode"] not in ("simplified", "full"):
        raise ConfigError(f"kernel.mode: expected 'simplified' or 'full', got {out['mode']!r}")
    if out["x_from"] > out["x_to"]:
        raise ConfigError("kernel: x_from must not exceed x_to")
    if "c" in out:
        out["c"] = _number(out["c"], "kernel.c", positive=True)
    return out


def parse_config(raw) -> RunConfig:
    """Validate a decoded JSON config object."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - TOP_LEVEL_KEYS)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown top-level key")
    cfg = RunConfig()

    model = raw.get("model")
    if model is not None and model not in MODELS:
        raise ConfigError(f"model: expected one of {MODELS}, got {model!r}")
    cfg.model = model

    if "rates" in raw and "physical" in raw:
        raise ConfigError("give exactly one of 'rates' or 'physical', not both")
    rates = _block(raw, "rates", {"tau_b", "tau_r", "tau_s", "tau_b_over_tau_r",
                                  "tau_b_over_tau_s", "coupling", "tau3"})
    if rates is not None:
        cfg.rates_block = _parse_rates(rates)
    physical = _block(raw, "physical", {f.name for f in fields(params.PhysicalSystem)})
    if physical is not None:
        cfg.physical = _parse_physical(physical)

    sizes = _block(raw, "sizes", {"N_r", "N_s", "N"})
    if sizes is not None and cfg.physical is not None:
        raise ConfigError("sizes: ensemble sizes come from the 'physical' block when it is given")
    if cfg.physical is not None:
        cfg.sizes = (cfg.physical.N_r, cfg.physical.N_s, cfg.physical.N)
    elif sizes is not None:
        cfg.sizes = tuple(_integer(sizes.get(k, 1), f"sizes.{k}", 1) for k in ("N_r", "N_s", "N"))

    if "drive_enabled" in raw:
        if not isinstance(raw["drive_enabled"], bool):
            raise ConfigError("drive_enabled: expected true or false")
        cfg.drive_enabled = raw["drive_enabled"]
    if "t_end" in raw:
        cfg.t_end = _number(raw["t_end"], "t_end", positive=True)
    if "sample_count" in raw:
        cfg.sample_count = _integer(raw["sample_count"], "sample_count", 2)

    tols = _block(raw, "tolerances", {"rel_tol"})
    if tols is not None and "rel_tol" in tols:
        tol = _number(tols["rel_tol"], "tolerances.rel_tol", positive=True)
        if tol > 1e-3:
            raise ConfigError(f"tolerances.rel_tol: must be <= 1e-3, got {tol!r}")
        cfg.rel_tol = tol

    sweep = _block(raw, "sweep", {"parameter", "from", "to", "steps"})
    if sweep is not None:
        if sweep.get("parameter", "coupling") != "coupling":
            raise ConfigError(f"sweep.parameter: only 'coupling' can be swept, got {sweep['parameter']!r}")
        for key in ("from", "to", "steps"):
            if key not in sweep:
                raise ConfigError(f"sweep.{key}: required key missing")
        start = _number(sweep["from"], "sweep.from")
        stop = _number(sweep["to"], "sweep.to")
        if start < 0:
            raise ConfigError("sweep.from: coupling must be >= 0")
        if stop < start:
            raise ConfigError("sweep: bounds must be ordered (from <= to)")
        cfg.sweep = SweepSpec("coupling", start, stop, _integer(sweep["steps"], "sweep.steps", 1))

    kernel = _block(raw, "kernel", set(KERNEL_DEFAULTS) | {"c"})
    if kernel is not None:
        cfg.kernel = _parse_kernel(kernel)

    output = _block(raw, "output", set(DEFAULT_OUTPUT))
    if output is not None:
        for key, name in output.items():
            if not isinstance(name, str) or not name or os.sep in name:
                raise ConfigError(f"output.{key}: expected a plain file name, got {name!r}")
        cfg.output.update(output)
    return cfg


def load_config(path) -> RunConfig:
    """Read and validate a JSON run configuration."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return parse_config(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# -- output ------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isfinite(value):
            return value
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return obj


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_json(path: Path, obj) -> None:
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text + "\n")


# -- commands ----------------------------------------------------------------

def _peak_dict(peak: mfdyn.EmissionPeak) -> dict:
    return {"t_peak": peak.t_peak, "value": peak.value, "sample_index": peak.index}


def _rates_summary(cfg: RunConfig, rates: params.RateSet) -> dict:
    out = {"rates_tau_b_units": rates.as_dict()}
    if cfg.physical is not None:
        raw = params.rates_from_system(cfg.physical)
        check = params.validate_resonance(cfg.physical)
        out["rates_physical_units"] = raw.as_dict()
        out["resonance"] = {"passed": check.passed, "residual": check.residual}
    return out


def _simulate_linear(cfg: RunConfig, out: Path) -> dict:
    rates = cfg.rate_set()
    tol = cfg.tolerance("linear")
    traj = lindyn.integrate_linear(rates, cfg.t_end, tol, samples=cfg.sample_count)
    write_csv(out / cfg.output["trajectory"], ("t",) + lindyn.LINEAR_COLUMNS,
              (np.concatenate(([t], y)) for t, y in zip(traj.times, traj.values)))
    _, peak = mfdyn.emission_rate(traj)
    exact = lindyn.closed_form_trajectory(traj.times, rates).values
    scale = np.max(np.abs(exact), axis=1)
    final = traj.final
    return {
        "peak_emission_rate": _peak_dict(peak),
        "final_state": asdict(final),
        "final_d_z": final.d_z,
        "integrator": traj.stats,
        "closed_form_max_rel_error": float(np.max(np.max(np.abs(traj.values - exact), axis=1) / scale)),
        "reference_f_max_abs_deviation": lindyn.reference_f_discrepancy(rates, traj.times),
    }


def _mf_params(cfg: RunConfig) -> mfdyn.MeanFieldParams:
    n_r, n_s, n = cfg.sizes
    return mfdyn.MeanFieldParams(n_r, n_s, n, cfg.rate_set(), cfg.drive_enabled)


def _simulate_meanfield(cfg: RunConfig, out: Path) -> dict:
    p = _mf_params(cfg)
    tol = cfg.tolerance("meanfield")
    traj = mfdyn.integrate_meanfield(p, cfg.t_end, tol, samples=cfg.sample_count)
    rate, peak = mfdyn.emission_rate(traj)
    write_csv(out / cfg.output["trajectory"], ("t",) + mfdyn.MF_COLUMNS + ("emission_rate",),
              (np.concatenate(([t], y, [r])) for t, y, r in zip(traj.times, traj.values, rate)))
    df = np.array([traj.rhs(t, y)[3] for t, y in zip(traj.times, traj.values)])
    final = traj.final
    return {
        "peak_emission_rate": _peak_dict(peak),
        "final_state": asdict(final),
        "integrator": traj.stats,
        "df_sign_changes": mfdyn.sign_changes(df),
        "max_bound_excess": mfdyn.bound_excess(traj, p),
    }


def cmd_simulate(cfg: RunConfig, model: str, out: Path) -> int:
    if cfg.model is not None and cfg.model != model:
        raise ConfigError(f"--model {model} conflicts with model {cfg.model!r} in the config")
    runner = _simulate_linear if model == "linear" else _simulate_meanfield
    results = runner(cfg, out)
    summary = {"command": "simulate", "config": cfg.echo(model),
               "derived": _rates_summary(cfg, cfg.rate_set()), "results": results}
    write_json(out / cfg.output["summary"], summary)
    return 0


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV}: expected an integer, got {raw!r}") from exc
    return max(1, value)


SWEEP_COLUMNS = ("coupling", "peak_rate", "peak_time", "final_dz", "df_sign_changes",
                 "max_bound_excess", "n_steps", "ok", "error")


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    if cfg.model not in (None, "meanfield"):
        raise ConfigError("sweep runs the mean-field model; set model to 'meanfield' or omit it")
    if cfg.sweep is None:
        raise ConfigError("sweep: the config has no 'sweep' block")
    p = _mf_params(cfg)
    tol = cfg.tolerance("meanfield")
    rows = mfdyn.coupling_sweep(p, cfg.sweep.grid(), cfg.t_end, tol, workers=_workers())
    write_csv(out / cfg.output["sweep"], SWEEP_COLUMNS,
              ([getattr(r, c) for c in SWEEP_COLUMNS] for r in rows))
    ok_rows = [r for r in rows if r.ok]
    results = {"rows": [asdict(r) for r in rows], "failed_rows": len(rows) - len(ok_rows)}
    if len(ok_rows) >= 2:
        results["peak_rate_last_exceeds_first"] = ok_rows[-1].peak_rate > ok_rows[0].peak_rate
    summary = {"command": "sweep", "config": cfg.echo("meanfield"),
               "derived": _rates_summary(cfg, p.rates), "results": results}
    write_json(out / cfg.output["summary"], summary)
    for r in rows:
        if not r.ok:
            print(f"sweep: coupling {r.coupling!r} failed: {r.error}", file=sys.stderr)
    return 0 if len(ok_rows) == len(rows) else 1


def _kernel_values(op: str, cfg: RunConfig):
    k = cfg.kernel or _parse_kernel({})
    phys = cfg.physical
    c = k.get("c", phys.c if phys is not None else 1.0)
    if phys is not None and c != phys.c:
        raise ConfigError("kernel.c disagrees with physical.c")
    xs = np.linspace(k["x_from"], k["x_to"], k["steps"])
    rows = []
    if op == "chi":
        w = k["omega"]
        for x in xs:
            v = kernels.chi_single(w, kernels.PairGeometry(r=x * c / w, cos_xi=k["cos_xi"]), c)
            rows.append((x, v.real, v.imag))
    elif op == "chib":
        w0 = phys.omega_0 if phys is not None else k["omega"]
        for x in xs:
            v = kernels.chi_two_photon_compact(w0, kernels.PairGeometry(r=x * c / w0, cos_xi=k["cos_xi"]), c)
            rows.append((x, v.real, v.imag))
    elif op == "fjl":
        if phys is None:
            raise ConfigError("kernels --op fjl needs a 'physical' block")
        w0 = phys.omega_0
        for x in xs:
            v = kernels.f_two_photon_quadrature(
                phys, kernels.PairGeometry(r=x * c / w0, cos_xi=k["cos_xi"]), nodes=k["nodes"])
            rows.append((x, v, 0.0))
    else:
        w_r, w_s = k["omega"], k["omega_s"]
        for x in xs:
            r_mj = x * c / w_r
            geom = kernels.TripletGeometry(r_mj=r_mj, r_ml=k["ml_over_mj"] * r_mj,
                                           r_jl=k["jl_over_mj"] * r_mj,
                                           cos_xi_r=k["cos_xi"], cos_xi_s=k["cos_xi_s"])
            if op == "u":
                v = kernels.exchange_u(w_r, w_s, geom, c)
            else:
                v = kernels.exchange_v(w_r, w_s, geom, c, mode=k["mode"])
            rows.append((x, v.real, v.imag))
    return k, rows


def cmd_kernels(cfg: RunConfig, op: str, out: Path) -> int:
    k, rows = _kernel_values(op, cfg)
    cfg.kernel = k
    write_csv(out / cfg.output["kernel"], ("x", "value_re", "value_im"), rows)
    summary = {"command": "kernels", "op": op, "config": cfg.echo(), "rows": len(rows)}
    write_json(out / cfg.output["summary"], summary)
    return 0


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biphoton",
        description="Exchange kernels and collective two-photon decay dynamics.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate the linear or mean-field model")
    sim.add_argument("--model", choices=MODELS, required=True)
    sim.add_argument("--config", required=True, help="JSON run configuration")
    sim.add_argument("--out", required=True, help="output directory")

    sw = sub.add_parser("sweep", help="mean-field coupling sweep")
    sw.add_argument("--config", required=True)
    sw.add_argument("--out", required=True)

    ker = sub.add_parser("kernels", help="tabulate an exchange kernel against x = omega r / c")
    ker.add_argument("--op", choices=KERNEL_OPS, required=True)
    ker.add_argument("--config", required=True)
    ker.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        print(f"biphoton {args.command}: t_end={cfg.t_end!r} sample_count={cfg.sample_count} "
              f"-> {out}", file=sys.stderr)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.model, out)
        if args.command == "sweep":
            return cmd_sweep(cfg, out)
        return cmd_kernels(cfg, args.op, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BiphotonError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
