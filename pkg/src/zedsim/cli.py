"""Command-line front end: single runs, policy comparisons, threshold and
capacitance sweeps, trace generation, and config validation.

Every artifact embeds the sha256 of the fully resolved configuration, and
re-running the same command reproduces byte-identical files. Power failures
inside a simulation are data, not process errors; only configuration problems
yield a nonzero exit status.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

from .config import DeviceConfig, config_hash, load_config
from .errors import ZedSimError
from .pmu import HarvestProfile
from .policy import Thresholds, sweep_thresholds, write_sweep_csv
from .scheduler import GATING_MOSFET, GATINGS, VARIANT_BASELINE, VARIANT_PROPOSED, VARIANTS
from .sim import (
    SimConfig,
    compare_policies,
    simulate,
    totals_text,
    write_comparison_csv,
    write_trajectory_csv,
)
from .traces import (
    GeneratorSpec,
    generate_trace,
    load_harvest,
    load_trace,
    save_trace,
    trace_statistics,
)

_POLICY_FLAGS = {
    "proposed": "proposed",
    "policy-i": "policy_i",
    "policy-ii": "policy_ii",
    "baseline": "baseline",
}
_GATING_FLAGS = {"mosfet": "mosfet", "load-switch": "load_switch"}


def _float_list(text: str) -> List[float]:
    """Parse '0.1,0.2' or 'start:stop:step' (stop inclusive within 1e-9)."""
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise argparse.ArgumentTypeError("range must be start:stop:step with step > 0")
        start, stop, step = parts
        out, k = [], 0
        while True:
            v = start + k * step
            if v > stop + 1e-9:
                break
            out.append(round(v, 12))
            k += 1
        return out
    return [float(p) for p in text.split(",") if p]


def _add_common(p: argparse.ArgumentParser, trace_required: bool = True) -> None:
    p.add_argument("--config", help="device config JSON; defaults apply when omitted")
    p.add_argument("--trace", required=trace_required, help="trace CSV (id,o1,o2,label)")
    p.add_argument("--harvest", help="harvest profile CSV (t_start_s,i_h_ma)")
    p.add_argument("--harvest-ma", type=float, default=0.0,
                   help="constant harvested current in mA when --harvest is not given")
    p.add_argument("--horizon", type=float, default=200.0, help="simulated seconds")
    p.add_argument("--initial-v", type=float, default=4.5, help="starting capacitor voltage")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", choices=sorted(_POLICY_FLAGS), default="proposed")
    p.add_argument("--gating", choices=sorted(_GATING_FLAGS), default="mosfet")
    p.add_argument("--out", default="out", help="output directory (created if absent)")


def _device(args) -> DeviceConfig:
    return load_config(args.config) if args.config else DeviceConfig.default()


def _harvest(args) -> HarvestProfile:
    if args.harvest:
        return load_harvest(args.harvest)
    return HarvestProfile.constant(args.harvest_ma * 1e-3)


def _sim_config(args, device: Optional[DeviceConfig] = None) -> SimConfig:
    return SimConfig(
        device=device if device is not None else _device(args),
        initial_v=args.initial_v,
        horizon_seconds=args.horizon,
        seed=args.seed,
        policy_variant=_POLICY_FLAGS[args.policy],
        gating_variant=_GATING_FLAGS[args.gating],
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_resolved(cfg_dict: dict, out: Path) -> str:
    digest = config_hash(cfg_dict)
    with open(out / "resolved_config.json", "w") as fh:
        json.dump({"config_sha256": digest, **cfg_dict}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return digest


def _cmd_run(args) -> int:
    cfg = _sim_config(args)
    trace = load_trace(args.trace)
    result = simulate(cfg, _harvest(args), trace)
    out = _out_dir(args)
    _write_resolved(result.config, out)
    write_trajectory_csv(result, out / "trajectory.csv")
    (out / "totals.txt").write_text(totals_text(result))
    print(totals_text(result), end="")
    return 0


def _cmd_compare(args) -> int:
    cfg = _sim_config(args)
    trace = load_trace(args.trace)
    variants = [_POLICY_FLAGS[v] for v in args.variants]
    comparison = compare_policies(cfg, variants, _harvest(args), trace)
    out = _out_dir(args)
    digest = _write_resolved(cfg.to_dict(), out)
    write_comparison_csv(comparison.rows, out / "comparison.csv", digest)
    for variant, result in comparison.results.items():
        (out / f"totals_{variant}.txt").write_text(totals_text(result))
    for row in comparison.rows:
        print(
            f"{row['variant']}: energy={row['energy_consumed_j']:.6f} J "
            f"completed={row['completed_pipelines']} failures={row['power_failures']} "
            f"accuracy={row['accuracy_total']}"
        )
    return 0


def _cmd_sweep_thresholds(args) -> int:
    device = _device(args)
    trace = load_trace(args.trace)
    g1 = args.gamma1 or [0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5]
    g2 = args.gamma2 or [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9]
    if not g1 or not g2:
        print("error: empty threshold grid", file=sys.stderr)
        return 2
    grid = [Thresholds(a, b) for a in g1 for b in g2]  # row-major: gamma1 outer
    cells = sweep_thresholds(trace, grid)
    out = _out_dir(args)
    digest = _write_resolved(device.to_dict(), out)
    write_sweep_csv(cells, out / "sweep_thresholds.csv", digest)
    print(f"wrote {len(cells)} cells to {out / 'sweep_thresholds.csv'}")
    return 0


def _run_capacitance_point(payload) -> dict:
    cfg_dict, variant, c_farads, harvest_pairs, trace_rows, initial_v, horizon, seed, gating = payload
    device = DeviceConfig.from_dict(cfg_dict).with_capacitance(c_farads)
    cfg = SimConfig(device, initial_v, horizon, seed, variant, gating)
    harvest = HarvestProfile.from_pairs(harvest_pairs)
    from .policy import InferenceInstance

    trace = [InferenceInstance(*row) for row in trace_rows]
    totals = simulate(cfg, harvest, trace).totals
    return {
        "c_farads": c_farads,
        "variant": variant,
        "completed_pipelines": totals.completed_pipelines,
        "energy_consumed_j": totals.energy_consumed_j,
        "power_failures": totals.power_failures,
        "accuracy_total": totals.accuracy_total,
    }


def _cmd_sweep_capacitance(args) -> int:
    device = _device(args)
    trace = load_trace(args.trace)
    harvest = _harvest(args)
    if not args.capacitance:
        print("error: empty capacitance grid", file=sys.stderr)
        return 2
    variants = [_POLICY_FLAGS[v] for v in args.variants]
    trace_rows = [(i.id, i.o1, i.o2, i.label) for i in trace]
    harvest_pairs = list(zip(harvest.times, harvest.currents))
    payloads = [
        (device.to_dict(), variant, c, harvest_pairs, trace_rows,
         args.initial_v, args.horizon, args.seed, _GATING_FLAGS[args.gating])
        for c in sorted(args.capacitance)
        for variant in variants
    ]
    jobs = args.jobs or os.cpu_count() or 1
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_capacitance_point, payloads))
    else:
        rows = [_run_capacitance_point(p) for p in payloads]
    out = _out_dir(args)
    digest = _write_resolved(device.to_dict(), out)
    path = out / "sweep_capacitance.csv"
    import csv as _csv

    with open(path, "w", newline="") as fh:
        fh.write(f"# config_sha256={digest}\n")
        writer = _csv.writer(fh)
        header = ["c_farads", "variant", "completed_pipelines", "energy_consumed_j",
                  "power_failures", "accuracy_total"]
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                ["" if row[k] is None else (repr(row[k]) if isinstance(row[k], float) else row[k])
                 for k in header]
            )
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def _cmd_gen_trace(args) -> int:
    spec = GeneratorSpec(args.n, args.acc1, args.acc2, args.person_fraction, args.seed)
    trace = generate_trace(spec)
    save_trace(trace, args.out)
    stats = trace_statistics(trace)
    print(f"wrote {stats.n} instances to {args.out}")
    print(f"acc_at_half_ex1={stats.acc_at_half_ex1!r}")
    print(f"acc_at_half_ex2={stats.acc_at_half_ex2!r}")
    print(f"person_fraction={stats.person_fraction!r}")
    return 0


def _cmd_validate(args) -> int:
    try:
        device = _device(args)
    except ZedSimError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 2
    problems = device.problems()
    # admission reachability at full charge, per gating path
    from .energy import min_start_voltage
    from .errors import UnreachableRequirementError

    for gating in GATINGS:
        try:
            min_start_voltage(device.capacitor, device.budget(gating).e_req_ex1,
                              device.schedule.guard_delta)
        except UnreachableRequirementError as exc:
            problems.append(f"budget[{gating}]: {exc}")
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        return 2
    print(f"ok: config_sha256={config_hash(device.to_dict())}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zedsim",
        description="Simulate a solar-harvesting two-exit detector node at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single simulation, trajectory + totals artifacts")
    _add_common(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="run several policy variants on identical inputs")
    _add_common(p)
    p.add_argument("--variants", nargs="+", choices=sorted(_POLICY_FLAGS),
                   default=["baseline", "proposed"])
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("sweep-thresholds", help="accuracy/exit-count surfaces over (gamma1, gamma2)")
    _add_common(p)
    p.add_argument("--gamma1", type=_float_list, help="list '0.1,0.2' or range 'start:stop:step'")
    p.add_argument("--gamma2", type=_float_list)
    p.set_defaults(func=_cmd_sweep_thresholds)

    p = sub.add_parser("sweep-capacitance", help="completed-pipeline table over capacitance values")
    _add_common(p)
    p.add_argument("--capacitance", type=_float_list, default=[0.1, 0.25, 0.5, 1.0, 1.5])
    p.add_argument("--variants", nargs="+", choices=sorted(_POLICY_FLAGS),
                   default=["baseline", "proposed"])
    p.add_argument("--jobs", type=int, default=0, help="worker processes (0 = all cores)")
    p.set_defaults(func=_cmd_sweep_capacitance)

    p = sub.add_parser("gen-trace", help="write a calibrated synthetic trace CSV")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--acc1", type=float, default=0.7265)
    p.add_argument("--acc2", type=float, default=0.8309)
    p.add_argument("--person-fraction", type=float, default=0.5386)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="trace.csv")
    p.set_defaults(func=_cmd_gen_trace)

    p = sub.add_parser("validate", help="check a config file and report violations")
    p.add_argument("--config", help="device config JSON; defaults when omitted")
    p.set_defaults(func=_cmd_validate)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ZedSimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
