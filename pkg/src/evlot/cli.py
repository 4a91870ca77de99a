"""Command-line front end.

Subcommands evaluate a scenario with any mix of methods, rebuild the
benchmark error tables, sweep the charger count for plot data, run the
event simulator, and run the scaled convergence experiments.  Output is
CSV or JSON with fixed 6-significant-digit formatting so identical
inputs produce identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field

from . import closed_form, ctmc, diffusion, fluid
from .model import INFINITE_SPACES, ModelParams, NumericalError, ValidationError
from .simulate import ScalingRegime, SimConfig, SimMode, simulate_full_lot, simulate_model

METHODS = (
    "exact",
    "bounds",
    "fluid",
    "fluid_modified",
    "diffusion_overloaded",
    "diffusion_smallnu",
    "simulate",
)
FORMATS = ("csv", "json")
OUTPUT_DIR_VAR = "EVLOT_OUTPUT_DIR"

_TABLE_KS = (10, 20, 30, 40, 50)
_TABLE_MULTS = {1: (1.0, 1.2), 2: (0.8, 1.0, 1.2), 3: (0.8, 1.0, 1.2), 4: (0.8, 1.0, 1.2)}

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


@dataclass(frozen=True)
class Scenario:
    """A parameter point plus the methods to evaluate and where to write."""

    params: ModelParams
    methods: tuple[str, ...]
    output: str | None = None
    fmt: str = "csv"
    sim: SimConfig = field(default_factory=lambda: SimConfig(horizon=1000.0, burn_in=100.0, n_reps=10))

    def __post_init__(self):
        if not self.methods:
            raise ValidationError("select at least one method")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValidationError(f"unknown methods {unknown}; choose from {METHODS}")
        # Canonical order makes output files independent of flag order.
        ordered = tuple(m for m in METHODS if m in self.methods)
        object.__setattr__(self, "methods", ordered)
        if self.fmt not in FORMATS:
            raise ValidationError(f"format must be one of {FORMATS}, got {self.fmt!r}")


def _blank_row(method: str) -> dict:
    return {
        "method": method,
        "e_z": None,
        "e_q": None,
        "p_success": None,
        "p_block": None,
        "re_e_z": None,
        "error": "",
        "_kind": "",
    }


def _eval_method(method: str, scenario: Scenario) -> list[dict]:
    params = scenario.params
    if method == "exact":
        m = ctmc.exact_metrics(params)
        row = _blank_row(method)
        row.update(e_z=m.e_z, e_q=m.e_q, p_success=m.p_success, p_block=m.p_block)
        return [row]
    if method == "bounds":
        b = closed_form.success_bounds(params)
        rows = []
        for name in ("upper", "lower_erlang_a", "lower_full_lot", "modified_lower"):
            row = _blank_row(f"bounds_{name}")
            row["p_success"] = getattr(b, name)
            rows.append(row)
        return rows
    if method == "fluid":
        res = fluid.fluid_fixed_point(params)
        row = _blank_row(method)
        e_q = params.lam / params.nu
        if not params.unbounded:
            e_q = min(e_q, float(params.K))
        row.update(e_z=res.z_star, e_q=e_q, p_success=fluid.fluid_success_prob(res, params))
        return [row]
    if method == "fluid_modified":
        res = fluid.modified_fluid_fixed_point(params)
        row = _blank_row(method)
        row.update(
            e_z=res.z_star,
            e_q=closed_form.expected_occupancy(params),
            p_success=fluid.fluid_success_prob(res, params),
            p_block=closed_form.erlang_b(params.lam / params.nu, params.K),
        )
        return [row]
    if method == "diffusion_overloaded":
        e_z = diffusion.overloaded_mean_approx(params)
        e_q = closed_form.expected_occupancy(params)
        row = _blank_row(method)
        p_s = min(max(1.0 - e_z / e_q, 0.0), 1.0) if e_q > 0 else None
        row.update(
            e_z=e_z,
            e_q=e_q,
            p_success=p_s,
            p_block=closed_form.erlang_b(params.lam / params.nu, params.K),
        )
        return [row]
    if method == "diffusion_smallnu":
        e_z, e_q, _ = diffusion.smallnu_approx(params)
        row = _blank_row(method)
        p_s = min(max(1.0 - e_z / e_q, 0.0), 1.0) if e_q > 0 else None
        row.update(e_z=e_z, e_q=e_q, p_success=p_s)
        return [row]
    est = simulate_model(params, scenario.sim)
    row = _blank_row(method)
    row.update(e_z=est.e_z, e_q=est.e_q, p_success=est.p_success, p_block=est.p_block)
    return [row]


def cmd_eval(scenario: Scenario) -> list[dict]:
    """One report row per method (four for the bounds family).

    Method failures are captured per row; the caller decides the exit
    code from the ``_kind`` annotations (dropped on output).
    """
    rows: list[dict] = []
    for method in scenario.methods:
        try:
            rows.extend(_eval_method(method, scenario))
        except ValidationError as exc:
            row = _blank_row(method)
            row.update(error=str(exc), _kind="validation")
            rows.append(row)
        except NumericalError as exc:
            row = _blank_row(method)
            row.update(error=str(exc), _kind="numerical")
            rows.append(row)
    if "exact" in scenario.methods:
        exact_rows = [r for r in rows if r["method"] == "exact" and r["e_z"] is not None]
        if exact_rows:
            exact_e_z = exact_rows[0]["e_z"]
            for row in rows:
                if row["method"] != "exact" and row["e_z"] is not None and exact_e_z > 0:
                    row["re_e_z"] = ctmc.relative_error(exact_e_z, row["e_z"])
    return rows


def _table_approx(table_id: int, params: ModelParams) -> float:
    if table_id == 1:
        return fluid.fluid_fixed_point(params).z_star
    if table_id == 2:
        return fluid.modified_fluid_fixed_point(params).z_star
    if table_id == 3:
        k_eff = closed_form.expected_occupancy(params)
        return closed_form.full_lot_pmf(params.nu, params.mu, k_eff, params.M).mean()
    return diffusion.overloaded_mean_approx(params)


def cmd_tables(table_id: int) -> list[dict]:
    """Worst-case relative error of one approximation family.

    Rows are arrival multipliers (lambda = mult * K), columns the lot
    sizes 10..50, each cell the max over the charger grid
    M/K = 0.1, 0.2, ..., 1.0 of the percent error in E[Z] versus the
    linear-solve value, at nu = mu = 1.
    """
    if table_id not in _TABLE_MULTS:
        raise ValidationError(f"table id must be in {sorted(_TABLE_MULTS)}, got {table_id}")
    rows = []
    for mult in _TABLE_MULTS[table_id]:
        row: dict = {"lambda_mult": mult}
        for K in _TABLE_KS:
            worst = 0.0
            for M in (j * K // 10 for j in range(1, 11)):
                params = ModelParams(lam=mult * K, mu=1.0, nu=1.0, K=K, M=M)
                exact_e_z = ctmc.exact_metrics(params).e_z
                approx = _table_approx(table_id, params)
                worst = max(worst, ctmc.relative_error(exact_e_z, approx))
            row[f"K={K}"] = worst
        rows.append(row)
    return rows


def cmd_sweep(K: int, lambda_mult: float) -> list[dict]:
    """Success probability against M/K for every method, at nu = mu = 1.

    One row per integer charger count M in 1..K, columns exact value,
    the four bounds, the modified fluid point and the modified
    overloaded-diffusion estimate; intended for external plotting.
    """
    if K < 1:
        raise ValidationError(f"K must be a positive integer, got {K}")
    if lambda_mult <= 0:
        raise ValidationError(f"lambda multiplier must be positive, got {lambda_mult}")
    rows = []
    for M in range(1, K + 1):
        params = ModelParams(lam=lambda_mult * K, mu=1.0, nu=1.0, K=K, M=M)
        exact = ctmc.exact_metrics(params)
        bounds = closed_form.success_bounds(params)
        fm = fluid.modified_fluid_fixed_point(params)
        e_q = closed_form.expected_occupancy(params)
        do_e_z = diffusion.overloaded_mean_approx(params)
        rows.append(
            {
                "M": M,
                "m_over_k": M / K,
                "exact": exact.p_success,
                "upper": bounds.upper,
                "lower_erlang_a": bounds.lower_erlang_a,
                "lower_full_lot": bounds.lower_full_lot,
                "modified_lower": bounds.modified_lower,
                "fluid_modified": fluid.fluid_success_prob(fm, params),
                "diffusion_overloaded": min(max(1.0 - do_e_z / e_q, 0.0), 1.0),
            }
        )
    return rows


def cmd_simulate(params: ModelParams, config: SimConfig) -> list[dict]:
    """Single-row report from the event simulator."""
    if config.mode is SimMode.FULL_LOT:
        est = simulate_full_lot(params, config)
    else:
        est = simulate_model(params, config)
    hw = est.half_widths
    return [
        {
            "mode": config.mode.value,
            "e_q": est.e_q,
            "hw_e_q": hw.get("e_q"),
            "e_z": est.e_z,
            "hw_e_z": hw.get("e_z"),
            "p_success": est.p_success,
            "hw_p_success": hw.get("p_success"),
            "p_block": est.p_block,
            "hw_p_block": hw.get("p_block"),
            "reps": est.reps_used,
        }
    ]


def cmd_converge(
    params: ModelParams, scaling: ScalingRegime, n_list: list[int], config: SimConfig
) -> list[dict]:
    """Rows of (n, statistic, limit, error) for one scaling family."""
    from .simulate import convergence_experiment

    return convergence_experiment(params, scaling, n_list, config)


def _fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


def _round_floats(value):
    if isinstance(value, float):
        return float(format(value, ".6g"))
    return value


def write_rows(rows: list[dict], path: str, fmt: str) -> None:
    """Write report rows as CSV or JSON with stable formatting.

    Keys starting with an underscore are internal annotations and are
    dropped.
    """
    cleaned = [{k: v for k, v in row.items() if not k.startswith("_")} for row in rows]
    if not cleaned:
        raise ValidationError("no rows to write")
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    fieldnames = list(cleaned[0].keys())
    if fmt == "csv":
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(fieldnames)
            for row in cleaned:
                writer.writerow([_fmt_cell(row.get(name)) for name in fieldnames])
    else:
        payload = [{k: _round_floats(v) for k, v in row.items()} for row in cleaned]
        with open(path, "w") as handle:
            json.dump(payload, handle, indent=2)
            handle.write("\n")


def _default_output(filename: str) -> str:
    return os.path.join(os.environ.get(OUTPUT_DIR_VAR, "."), filename)


def _parse_spaces(text: str):
    if text.lower() in ("inf", "infinite", "infinity"):
        return INFINITE_SPACES
    return int(text)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as handle:
        doc = json.load(handle)
    if not isinstance(doc, dict):
        raise ValidationError("config file must hold a JSON object")
    return doc


def _setting(args, name: str, config: dict, default=None):
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    return config.get(name, default)


def _build_params(args, config: dict) -> ModelParams:
    lam = _setting(args, "lambda", config)
    mu = _setting(args, "mu", config, 1.0)
    nu = _setting(args, "nu", config, 1.0)
    spaces = _setting(args, "K", config)
    chargers = _setting(args, "M", config)
    if lam is None or spaces is None or chargers is None:
        raise ValidationError("lambda, K and M are required (flags or config file)")
    if isinstance(spaces, str):
        spaces = _parse_spaces(spaces)
    return ModelParams(lam=float(lam), mu=float(mu), nu=float(nu), K=spaces, M=float(chargers))


def _build_sim(args, config: dict) -> SimConfig:
    sim_cfg = config.get("sim", {})
    if not isinstance(sim_cfg, dict):
        raise ValidationError("config key 'sim' must hold an object")

    def pick(name, default):
        value = getattr(args, name, None)
        if value is not None:
            return value
        return sim_cfg.get(name, default)

    mode = pick("mode", SimMode.FULL_MODEL.value)
    try:
        mode = SimMode(mode)
    except ValueError:
        raise ValidationError(f"unknown simulation mode {mode!r}") from None
    return SimConfig(
        horizon=float(pick("horizon", 1000.0)),
        burn_in=float(pick("burn_in", 100.0)),
        n_reps=int(pick("n_reps", 10)),
        seed=int(pick("seed", 0)),
        mode=mode,
    )


def _add_param_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda", dest="lambda_", type=float, default=None, help="arrival rate")
    parser.add_argument("--mu", type=float, default=None, help="charging rate per charger")
    parser.add_argument("--nu", type=float, default=None, help="parking-time rate")
    parser.add_argument("--K", type=str, default=None, help="parking spaces (integer or 'inf')")
    parser.add_argument("--M", type=float, default=None, help="number of chargers")
    parser.add_argument("--config", default=None, help="JSON scenario file; flags override")


def _add_sim_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--horizon", type=float, default=None, help="simulated time per replication")
    parser.add_argument("--burn-in", dest="burn_in", type=float, default=None)
    parser.add_argument("--reps", dest="n_reps", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)


def _add_output_flags(parser: argparse.ArgumentParser, default_name: str) -> None:
    parser.add_argument("--output", default=None, help=f"output path (default {default_name})")
    parser.add_argument("--format", dest="fmt", choices=FORMATS, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evlot",
        description="Charging-lot performance: exact, bound, fluid, diffusion and simulated metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="evaluate one parameter point with chosen methods")
    _add_param_flags(p_eval)
    p_eval.add_argument(
        "--methods", default=None, help="comma-separated subset of " + ",".join(METHODS)
    )
    _add_sim_flags(p_eval)
    _add_output_flags(p_eval, "eval.csv")

    p_tab = sub.add_parser("tables", help="rebuild a benchmark error table")
    p_tab.add_argument("--id", type=int, required=True, help="table number 1..4")
    _add_output_flags(p_tab, "tableN.csv")

    p_sweep = sub.add_parser("sweep", help="success probability against M/K")
    p_sweep.add_argument("--K", type=int, required=True)
    p_sweep.add_argument("--lambda-mult", dest="lambda_mult", type=float, required=True)
    _add_output_flags(p_sweep, "sweep_K<k>_lam<m>.csv")

    p_sim = sub.add_parser("simulate", help="run the event simulator")
    _add_param_flags(p_sim)
    p_sim.add_argument("--mode", choices=[m.value for m in SimMode], default=None)
    _add_sim_flags(p_sim)
    _add_output_flags(p_sim, "simulate.csv")

    p_conv = sub.add_parser("converge", help="scaled-system convergence experiment")
    _add_param_flags(p_conv)
    p_conv.add_argument(
        "--scaling", required=True, choices=[r.value for r in ScalingRegime]
    )
    p_conv.add_argument("--n-list", dest="n_list", required=True, help="comma-separated sizes")
    _add_sim_flags(p_conv)
    _add_output_flags(p_conv, "converge.csv")

    return parser


def _run(args) -> int:
    config = _load_config(getattr(args, "config", None))
    fmt = args.fmt or config.get("format", "csv")
    if fmt not in FORMATS:
        raise ValidationError(f"format must be one of {FORMATS}, got {fmt!r}")

    if args.command == "eval":
        # argparse stores --lambda under lambda_; mirror it for _setting.
        args.__dict__["lambda"] = args.lambda_
        params = _build_params(args, config)
        methods_text = args.methods or config.get("methods")
        if methods_text is None:
            methods = ("exact",)
        elif isinstance(methods_text, str):
            methods = tuple(m.strip() for m in methods_text.split(",") if m.strip())
        else:
            methods = tuple(methods_text)
        scenario = Scenario(
            params=params,
            methods=methods,
            output=args.output or config.get("output"),
            fmt=fmt,
            sim=_build_sim(args, config),
        )
        rows = cmd_eval(scenario)
        out = scenario.output or _default_output("eval.csv" if fmt == "csv" else "eval.json")
        write_rows(rows, out, fmt)
        kinds = [row["_kind"] for row in rows]
        if all(kinds):
            return EXIT_NUMERICAL if "numerical" in kinds else EXIT_VALIDATION
        return EXIT_OK

    if args.command == "tables":
        rows = cmd_tables(args.id)
        out = args.output or _default_output(f"table{args.id}.{fmt}")
        write_rows(rows, out, fmt)
        return EXIT_OK

    if args.command == "sweep":
        rows = cmd_sweep(args.K, args.lambda_mult)
        out = args.output or _default_output(f"sweep_K{args.K}_lam{args.lambda_mult:g}.{fmt}")
        write_rows(rows, out, fmt)
        return EXIT_OK

    if args.command == "simulate":
        args.__dict__["lambda"] = args.lambda_
        params = _build_params(args, config)
        sim = _build_sim(args, config)
        rows = cmd_simulate(params, sim)
        out = args.output or _default_output(f"simulate.{fmt}")
        write_rows(rows, out, fmt)
        return EXIT_OK

    args.__dict__["lambda"] = args.lambda_
    params = _build_params(args, config)
    sim = _build_sim(args, config)
    n_list = [int(n) for n in str(args.n_list).split(",") if n.strip()]
    rows = cmd_converge(params, ScalingRegime(args.scaling), n_list, sim)
    out = args.output or _default_output(f"converge.{fmt}")
    write_rows(rows, out, fmt)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
