"""
Command line interface.

    jamgrip synth      render a waveform to CSV
    jamgrip simulate   run one grip (or relaxation) test and print metrics
    jamgrip run-plan   run an experiment plan
    jamgrip analyze    summarize a records file
    jamgrip plot       render figures from a records file
    jamgrip validate   run the invariant suite
"""

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, List, Optional

from .dem_core import SimConfig, build_world
from .errors import JamGripError
from .harness import (
    ExperimentKind,
    ExperimentPlan,
    build_plan,
    read_records,
    run_plan,
    summarize,
    write_summary,
)
from .membrane import PressureState
from .metrics import extract_metrics, metrics_from_config
from .plots import PlotKind, emit_plots
from .rig import (
    GripCycleConfig,
    RelaxationConfig,
    relaxation_protocol,
    relaxation_residuals,
    run_grip_cycle,
)
from .waveform import WaveformKind, WaveformSpec, synthesize


def _parse_level(text: str) -> Any:
    if "-" in text.strip("-"):
        start, end = text.split("-", 1)
        return (float(start), float(end))
    return float(text)


def _levels(text: Optional[str]) -> Optional[List[Any]]:
    if not text:
        return None
    return [_parse_level(part) for part in text.split(",") if part.strip()]


def _waveform(args: argparse.Namespace) -> Optional[WaveformSpec]:
    if getattr(args, "spec", None):
        return WaveformSpec.from_json(Path(args.spec).read_text())
    if args.kind is None:
        return None
    kind = WaveformKind(args.kind)
    f_end = args.f_end if args.f_end is not None else args.f_start
    v_end = (
        args.volume_end if args.volume_end is not None else args.volume_start
    )
    return WaveformSpec(
        kind,
        args.f_start,
        f_end,
        args.volume_start,
        v_end,
        args.duration,
        args.segment_duration,
    )


def _add_waveform_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--spec", help="waveform JSON file")
    parser.add_argument(
        "--kind", choices=[k.value for k in WaveformKind], default=None
    )
    parser.add_argument("--f-start", type=float, default=200.0)
    parser.add_argument("--f-end", type=float, default=None)
    parser.add_argument("--volume-start", type=float, default=150.0)
    parser.add_argument("--volume-end", type=float, default=None)
    parser.add_argument("--duration", type=float, default=25.0)
    parser.add_argument("--segment-duration", type=float, default=0.0)


def cmd_synth(args: argparse.Namespace, loader) -> int:
    spec = _waveform(args)
    if spec is None:
        raise JamGripError("synth needs --spec or --kind")
    waveform_cfg = loader.get_waveform_config()
    rate = args.sample_rate or float(waveform_cfg["sample_rate"])
    buffer = synthesize(
        spec, rate, float(waveform_cfg["reference_displacement"])
    )
    path = buffer.to_csv(args.out)
    print(f"✅ {spec.label()}: {len(buffer)} samples -> {path}")
    return 0


def cmd_simulate(args: argparse.Namespace, loader) -> int:
    sim = SimConfig.from_config(loader).with_overrides(rng_seed=args.seed)
    if args.grains:
        sim = sim.with_overrides(grain_count=args.grains)
    cycle = GripCycleConfig.from_config(loader)
    sim = sim.with_overrides(mount_height=cycle.start_height)
    reference = float(loader.get_waveform_config()["reference_displacement"])
    world = build_world(sim)

    if args.relaxation is not None:
        relax = RelaxationConfig.from_config(loader)
        trace = relaxation_protocol(
            world, args.relaxation, args.vibrate, cycle, relax, reference
        )
        result = relaxation_residuals(
            trace, args.relaxation, args.vibrate, relax.residual_window
        )
        summary = {
            "push_height": result.push_height,
            "vibrated": result.vibrated,
            "residual_before": result.residual_before,
            "residual_after": result.residual_after,
            "percent_reduction": result.percent_reduction,
        }
    else:
        vacuum = PressureState.from_dict(loader.get_vacuum_config())
        trace = run_grip_cycle(
            world, cycle, _waveform(args), vacuum, reference
        )
        summary = extract_metrics(trace, **metrics_from_config(loader)).to_dict()
    if args.out:
        trace.to_csv(args.out)
        summary["trace_path"] = str(args.out)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_run_plan(args: argparse.Namespace, loader) -> int:
    harness = loader.get_harness_config()
    if args.plan:
        plan = ExperimentPlan.from_json(Path(args.plan).read_text())
        if args.out:
            plan = plan.with_overrides(output_dir=args.out)
    else:
        plan = build_plan(
            args.experiment,
            levels=_levels(args.levels),
            replicates=args.replicates,
            batch_count=args.batches,
            rng_seed=args.seed,
            output_dir=args.out or harness["output_dir"],
            loader=loader,
        )
    workers = args.workers or int(harness.get("workers", 1))
    records = run_plan(plan, workers=workers, resume=not args.no_resume)
    stats_cfg = loader.get_stats_config()
    summary = summarize(
        records,
        plan,
        alpha=float(stats_cfg.get("alpha", 0.05)),
        correction=stats_cfg.get("correction", "none"),
        seed=plan.rng_seed,
    )
    write_summary(summary, plan.directory)
    valid = sum(1 for r in records if r.valid)
    print(
        f"✅ {plan.name}: {len(records)} trials ({valid} valid) -> "
        f"{plan.records_path}"
    )
    return 0


def cmd_analyze(args: argparse.Namespace, loader) -> int:
    records = read_records(args.records)
    plan = (
        ExperimentPlan.from_json(Path(args.plan).read_text())
        if args.plan
        else None
    )
    stats_cfg = loader.get_stats_config()
    summary = summarize(
        records,
        plan,
        metric=args.metric,
        alpha=args.alpha or float(stats_cfg.get("alpha", 0.05)),
        correction=args.correction or stats_cfg.get("correction", "none"),
        sampled_per_condition=args.sampled,
        seed=args.seed,
    )
    out = Path(args.out) if args.out else Path(args.records).parent
    write_summary(summary, out)
    for row in summary.conditions:
        print(
            f"{row.condition_id:>24}  n={row.n:<3} "
            f"push {row.push.median:8.3f} N  hold {row.holding.median:8.3f} N"
        )
    significant = summary.matrix.significant_pairs()
    print(f"{len(significant)} of {summary.matrix.pair_count} pairs significant")
    return 0


def cmd_plot(args: argparse.Namespace, loader) -> int:
    records = read_records(args.records)
    out = Path(args.out) if args.out else Path(args.records).parent
    paths = emit_plots(
        records,
        args.kind,
        out,
        metric=args.metric,
        alpha=float(loader.get_stats_config().get("alpha", 0.05)),
    )
    for path in paths:
        print(f"✅ {path}")
    return 0


def cmd_validate(args: argparse.Namespace, loader) -> int:
    from .invariants import run_invariant_suite

    results = run_invariant_suite()
    for result in results:
        mark = "✅" if result.passed else "❌"
        print(f"{mark} {result.name:<22} {result.seconds:6.1f}s  {result.detail}")
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jamgrip",
        description="Vibration-assisted jamming gripper simulator",
    )
    parser.add_argument("--config", help="alternative config.json")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="render a waveform to CSV")
    _add_waveform_args(synth)
    synth.add_argument("--sample-rate", type=float, default=None)
    synth.add_argument("--out", default="waveform.csv")
    synth.set_defaults(func=cmd_synth)

    simulate = sub.add_parser("simulate", help="run a single test")
    _add_waveform_args(simulate)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--grains", type=int, default=None)
    simulate.add_argument(
        "--relaxation",
        type=float,
        default=None,
        metavar="HEIGHT",
        help="run the stress-relaxation protocol at this push-down height",
    )
    simulate.add_argument("--vibrate", action="store_true")
    simulate.add_argument("--out", default=None, help="trace CSV path")
    simulate.set_defaults(func=cmd_simulate)

    run = sub.add_parser("run-plan", help="run an experiment plan")
    run.add_argument(
        "experiment",
        nargs="?",
        choices=[k.value for k in ExperimentKind],
        default=ExperimentKind.VOL_TONE.value,
    )
    run.add_argument("--plan", help="plan JSON file instead of an experiment")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--out", default=None)
    run.add_argument("--levels", help="comma list, e.g. 0,75,150 or 0-150")
    run.add_argument("--replicates", type=int, default=None)
    run.add_argument("--batches", type=int, default=None)
    run.add_argument("--no-resume", action="store_true")
    run.set_defaults(func=cmd_run_plan)

    analyze = sub.add_parser("analyze", help="summarize a records file")
    analyze.add_argument("records")
    analyze.add_argument("--plan", default=None)
    analyze.add_argument(
        "--metric",
        choices=["holding_force", "push_force"],
        default="holding_force",
    )
    analyze.add_argument("--alpha", type=float, default=None)
    analyze.add_argument(
        "--correction", choices=["none", "holm", "bonferroni"], default=None
    )
    analyze.add_argument("--sampled", type=int, default=None)
    analyze.add_argument("--seed", type=int, default=0)
    analyze.add_argument("--out", default=None)
    analyze.set_defaults(func=cmd_analyze)

    plot = sub.add_parser("plot", help="render figures")
    plot.add_argument("records")
    plot.add_argument(
        "--kind",
        choices=[k.value for k in PlotKind],
        default=PlotKind.BOX_BY_CONDITION.value,
    )
    plot.add_argument(
        "--metric",
        choices=["holding_force", "push_force"],
        default="holding_force",
    )
    plot.add_argument("--out", default=None)
    plot.set_defaults(func=cmd_plot)

    validate = sub.add_parser("validate", help="run the invariant suite")
    validate.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    from config_loader import (
        CONFIG_PATH_ENV,
        get_config_loader,
        reset_config_loader,
        setup_logging,
    )

    args = build_parser().parse_args(argv)
    if args.config:
        os.environ[CONFIG_PATH_ENV] = args.config
        reset_config_loader()
    loader = get_config_loader()
    setup_logging()
    try:
        return args.func(args, loader)
    except (JamGripError, FileNotFoundError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
