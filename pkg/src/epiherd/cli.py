"""Command-line entry point.

Settings resolve in three layers: built-in defaults, then an optional
``--config`` file, then explicit command-line flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Optional, Sequence

from .belief import SensorModel
from .config import ConfigError, load_config
from .engine import EpisodeConfig, phase_order_audit, run_episode
from .experiment.calibrate import calibrate, reference_band_checks
from .experiment.design import (
    DESK_EPISODES, FULL_EPISODES, STANDARD_SCALING_GRIDS, STANDARD_THETAS, FactorialDesign, desk_condition,
)
from .experiment.report import emit_report, write_tsv
from .experiment.runner import AuditFailure, run_factorial, scaling_sweep, theta_sweep
from .experiment.stats import compare_protocols
from .grid import GridConfig
from .metrics import MehConfig
from .network import ChannelConfig
from .protocols import ProtocolConfig, Variant

log = logging.getLogger("epiherd")

EXIT_AUDIT = 1
EXIT_USAGE = 2
EXIT_CALIBRATION = 3
EXIT_IO = 4

DEFAULTS: dict[str, Any] = {
    "N": 50, "n": 4, "r": 2, "T": 200, "k": [2, 3, 4], "k_msg": 5, "w_max": 0.8, "theta": 0.20,
    "p_base": [0.0, 0.1, 0.3], "ell": [0, 1, 3], "episodes": DESK_EPISODES, "seed": 0, "epsilon": 0.1,
    "miss_log_decrement": 2.0, "hit_log_increment": 20.0, "c1_boost": 4.0,
    "protocols": ["C0", "C1", "C2", "C3"], "workers": 1,
}

# command-line dest -> settings key
_FLAG_KEYS = {
    "seed": "seed", "episodes": "episodes", "epsilon": "epsilon", "theta": "theta", "miss": "miss_log_decrement",
    "hit": "hit_log_increment", "c1_boost": "c1_boost", "workers": "workers", "side": "N", "steps": "T",
    "protocols": "protocols", "loss": "p_base", "latency": "ell", "k": "k",
}


def _csv_list(kind):
    def parse(text: str):
        try:
            return [kind(x) for x in text.split(",") if x.strip()]
        except ValueError as e:
            raise argparse.ArgumentTypeError(str(e)) from e
    return parse


def _grids(text: str):
    try:
        return [tuple(int(v) for v in part.split(":")) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError("grids look like 25:50,50:200") from e


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key-value settings file ([simulation] section)")
    common.add_argument("--seed", type=int, help="base seed (default 0)")
    common.add_argument("--episodes", type=int, help=f"episodes per condition (default {DESK_EPISODES})")
    common.add_argument("--full", action="store_true", help=f"use {FULL_EPISODES} episodes per condition")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--epsilon", type=float, help="MEH JSD threshold in nats (default 0.1)")
    common.add_argument("--theta", type=float, help="C3 gate threshold in nats (default 0.20)")
    common.add_argument("--miss", type=float, help="log-mass decrement for an empty observed cell")
    common.add_argument("--hit", type=float, help="log-mass increment for a detected target")
    common.add_argument("--c1-boost", type=float, help="probability mass a C1 message adds at zero entropy")
    common.add_argument("--workers", type=int, help="worker processes (results do not depend on this)")
    common.add_argument("--side", type=int, help="grid side length N")
    common.add_argument("--steps", type=int, help="episode budget T")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="epiherd", description="Multi-agent search with belief-sharing protocols.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("factorial", parents=[common], help="protocol x loss x latency x k design")
    f.add_argument("--protocols", type=_csv_list(str), help="e.g. C0,C1,C2,C3")
    f.add_argument("--loss", type=_csv_list(float), help="p_base levels, e.g. 0,0.1,0.3")
    f.add_argument("--latency", type=_csv_list(int), help="latency levels, e.g. 0,1,3")
    f.add_argument("--k", type=_csv_list(int), help="coordination levels, e.g. 2,3,4")
    f.add_argument("--trace", action="store_true", help="trace and audit every episode, emit per-step plot data")
    f.add_argument("--q", type=float, default=0.05, help="FDR level for the protocol comparisons")

    t = sub.add_parser("theta-sweep", parents=[common], help="C3 gate threshold sensitivity")
    t.add_argument("--thetas", type=_csv_list(float), default=list(STANDARD_THETAS))
    t.add_argument("--k", type=_csv_list(int), help="coordination levels (one sweep each, default 3)")

    s = sub.add_parser("scaling", parents=[common], help="grid-size sweep at k=3, no loss or latency")
    s.add_argument("--grids", type=_grids, default=list(STANDARD_SCALING_GRIDS), help="N:T pairs")

    e = sub.add_parser("episode", parents=[common], help="one episode, optionally traced")
    e.add_argument("--protocol", default="C3", choices=[v.value for v in Variant])
    e.add_argument("--k", type=int, default=3)
    e.add_argument("--p-base", type=float, default=0.0)
    e.add_argument("--latency", type=int, default=0)
    e.add_argument("--trace", type=Path, help="write the per-step trace CSV here and audit phase order")

    c = sub.add_parser("calibrate", parents=[common], help="check protocol ordering over sensor/boost settings")
    c.add_argument("--k", type=int, default=3)
    return p


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    settings = dict(DEFAULTS)
    if args.config is not None:
        settings.update(load_config(args.config))
    for dest, key in _FLAG_KEYS.items():
        v = getattr(args, dest, None)
        if v is not None and not (args.command in ("episode", "calibrate") and dest in ("k", "latency")):
            settings[key] = v
    if args.full:
        settings["episodes"] = FULL_EPISODES
    return settings


def design_from(settings: dict[str, Any]) -> FactorialDesign:
    grid = GridConfig(
        side_length=settings["N"], fov_radius=settings["r"], agent_count=settings["n"],
        max_steps=settings["T"], coordination_k=min(settings["n"], 3),
    )
    return FactorialDesign(
        protocols=[Variant(p) for p in settings["protocols"]],
        loss_rates=settings["p_base"],
        latencies=settings["ell"],
        coordination_ks=settings["k"],
        episodes_per_condition=settings["episodes"],
        base_seed=settings["seed"],
        grid=grid,
        protocol=ProtocolConfig(
            theta=settings["theta"], k_msg=settings["k_msg"], w_max=settings["w_max"], c1_boost=settings["c1_boost"],
        ),
        sensor=SensorModel(settings["miss_log_decrement"], settings["hit_log_increment"]),
        meh=MehConfig(settings["epsilon"]),
    )


def _cmd_factorial(args, settings) -> int:
    design = design_from(settings)
    summaries = run_factorial(design, workers=settings["workers"], trace=args.trace)
    tests = compare_protocols(summaries, q=args.q)
    for path in emit_report(args.out, {"factorial": summaries}, tests):
        print(path)
    return 0


def _cmd_theta(args, settings) -> int:
    design = design_from(settings)
    ks = args.k or [3]
    rows = []
    for k in ks:
        base = desk_condition(Variant.C3, k=k, side=design.grid.side_length, max_steps=design.grid.max_steps)
        rows += theta_sweep(design, base, args.thetas, workers=settings["workers"], include_c2=True)
    for path in emit_report(args.out, {"theta": rows}):
        print(path)
    return 0


def _cmd_scaling(args, settings) -> int:
    design = design_from(settings)
    rows = scaling_sweep(design, args.grids, workers=settings["workers"])
    for path in emit_report(args.out, {"scaling": rows}):
        print(path)
    return 0


def _cmd_episode(args, settings) -> int:
    design = design_from(settings)
    grid = replace(design.grid, coordination_k=args.k)
    cfg = EpisodeConfig(
        grid=grid,
        protocol=replace(design.protocol, variant=Variant(args.protocol)),
        channel=ChannelConfig(args.p_base, args.latency),
        sensor=design.sensor,
        seed=settings["seed"],
        record_trace=args.trace is not None,
        meh=design.meh,
    )
    r = run_episode(cfg)
    out = {
        "success": r.success, "time_to_success": r.time_to_success, "final_jsd": r.final_jsd,
        "final_alignment": r.final_alignment, "meh": r.meh, "messages_sent": r.messages_sent,
        "bytes_sent": r.bytes_sent, "messages_dropped": r.messages_dropped,
        "alignment_per_byte": r.alignment_per_byte,
    }
    code = 0
    if args.trace is not None:
        args.trace.parent.mkdir(parents=True, exist_ok=True)
        r.trace.write_csv(args.trace)
        audit = phase_order_audit(r.trace)
        out["phase_order_audit"] = audit.ok
        if not audit.ok:
            print(f"phase-order audit failed at (agent, t) = {audit.violation}: {audit.reason}", file=sys.stderr)
            code = EXIT_AUDIT
    print(json.dumps(out, indent=2))
    return code


def _cmd_calibrate(args, settings) -> int:
    design = design_from(settings)
    points = calibrate(design, workers=settings["workers"], k=args.k)
    rows = []
    ok = True
    for pt in points:
        by = {s.key.protocol: s for s in pt.summaries}
        for chk in pt.checks:
            rows.append((pt.miss, pt.hit, pt.c1_boost, chk.criterion, chk.name, "pass" if chk.passed else "FAIL", chk.detail))
        ok &= pt.passed
        status = "ok" if pt.passed else "FAILED: " + "; ".join(c.name for c in pt.checks if not c.passed)
        print(f"miss={pt.miss:g} hit={pt.hit:g} c1_boost={pt.c1_boost:g}: {status}")
        if (pt.miss, pt.hit, pt.c1_boost) == (
            design.sensor.miss_log_decrement, design.sensor.hit_log_increment, design.protocol.c1_boost,
        ):
            for chk in reference_band_checks(by):
                print(f"  reference band: {chk.name}: {'pass' if chk.passed else 'FAIL'} ({chk.detail})")
    print(write_tsv(args.out / "calibration.tsv",
                    ["miss", "hit", "c1_boost", "criterion", "check", "result", "detail"], rows))
    emit_report(args.out, {"calibration": [s for pt in points for s in pt.summaries]})
    return 0 if ok else EXIT_CALIBRATION


_COMMANDS = {
    "factorial": _cmd_factorial, "theta-sweep": _cmd_theta, "scaling": _cmd_scaling,
    "episode": _cmd_episode, "calibrate": _cmd_calibrate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve(args)
        return _COMMANDS[args.command](args, settings)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except AuditFailure as e:
        print(f"audit failed: {e}", file=sys.stderr)
        return EXIT_AUDIT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
