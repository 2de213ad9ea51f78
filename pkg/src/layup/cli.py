"""Command-line surface tying the pipeline together.

Subcommands
-----------
simulate   execute a plan file against the simulator, one log per seed
learn      aggregate experiment logs into an effectiveness model file
refine     search for a refined plan given a model and an initial capture
evaluate   alias of simulate, for running refined plans on fresh seeds
report     tabulate correction statistics and refined-vs-initial improvement

Exit codes: 0 ok, 1 runtime failure, 2 input validation failure. All
randomness comes from explicit seeds; repeated invocations write
byte-identical outputs.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .effectiveness import EffectivenessModel, aggregate, LogFormatError
from .plan import (ConstraintSet, DrapingPlan, PlanParseError, emit_plan,
                   initial_plan_constraints, parse_plan, standard_constraints,
                   validate)
from .search import (SearchConfig, SearchError, generate_refinement_paths,
                     refine_plan_detailed)
from .sheet_state import average_states, build_state, read_capture_frames
from .simulator import (GroundTruthParams, PlanInvalidError, SimulationError,
                        builtin_sheet, read_log, run_experiment, write_log)

REFINED_PREFIX = "refined"


@dataclass
class RunConfig:
    """Bundle of everything a pipeline invocation needs."""

    sheet: str = "sheet1"
    params: GroundTruthParams = field(default_factory=GroundTruthParams)
    constraints: ConstraintSet | None = None  # None: pick per command
    search: SearchConfig = field(default_factory=SearchConfig)
    seeds: tuple[int, ...] = (0,)
    out: Path = Path(".")

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        cfg = cls()
        if getattr(args, "config", None):
            with open(args.config) as fh:
                raw = json.load(fh)
            cfg.sheet = raw.get("sheet", cfg.sheet)
            if raw.get("ground_truth"):
                cfg.params = GroundTruthParams.load(raw["ground_truth"])
            if raw.get("constraints"):
                with open(raw["constraints"]) as fh:
                    cfg.constraints = ConstraintSet.from_json(json.load(fh))
            if raw.get("search"):
                cfg.search = SearchConfig.load(raw["search"])
            if raw.get("seeds"):
                cfg.seeds = tuple(int(s) for s in raw["seeds"])
            if raw.get("out"):
                cfg.out = Path(raw["out"])
        if getattr(args, "sheet", None):
            cfg.sheet = args.sheet
        if getattr(args, "seed", None):
            cfg.seeds = tuple(args.seed)
        if getattr(args, "out", None):
            cfg.out = Path(args.out)
        if not cfg.seeds:
            raise ValueError("at least one seed is required")
        return cfg


def _log_name(plan: DrapingPlan, sheet: str, seed: int) -> str:
    return f"{plan.name}_{sheet}_seed{seed}.jsonl"


def cmd_simulate(plan_path, cfg: RunConfig, keep_captures: bool = True) -> list[Path]:
    plan = parse_plan(plan_path)
    sheet = builtin_sheet(cfg.sheet)
    cs = cfg.constraints if cfg.constraints is not None else initial_plan_constraints()
    violations = validate(plan, cs)
    if violations:
        raise PlanInvalidError(violations)
    cfg.out.mkdir(parents=True, exist_ok=True)
    written = []
    for seed in cfg.seeds:
        log = run_experiment(plan, sheet, cfg.params, seed,
                             path_generator=generate_refinement_paths,
                             constraints=cs, keep_captures=keep_captures)
        target = cfg.out / _log_name(plan, sheet.name, seed)
        write_log(log, target)
        print(f"{target}  total_paths={log.total_paths} "
              f"correction={log.correction_paths} cycles={log.correction_cycles}")
        written.append(target)
    return written


def cmd_learn(log_paths, out_path) -> Path:
    if not log_paths:
        raise ValueError("learn needs at least one log file")
    logs = [read_log(p) for p in log_paths]
    model = aggregate(logs)
    model.save(out_path)
    print(f"experiments: {model.experiments}")
    print(f"sheets: {', '.join(model.sheets)}")
    per_action: dict[str, list[int]] = {}
    for key, count in model.bucket_counts().items():
        kind, arg, _sector = key.split("|")
        per_action.setdefault(f"{kind}|{arg}", []).append(count)
    for key in sorted(per_action):
        counts = per_action[key]
        print(f"  {key}: {sum(counts)} samples across {len(counts)} sectors")
    singletons = sum(1 for counts in per_action.values() for c in counts if c == 1)
    if singletons:
        print(f"  note: {singletons} singleton buckets (sample variance treated as zero)")
    return Path(out_path)


def cmd_refine(model_path, capture_path, cfg: RunConfig, name: str | None = None) -> Path:
    model = EffectivenessModel.load(model_path)
    if model.is_empty:
        raise ValueError("no data: the effectiveness model holds no samples")
    frames = read_capture_frames(capture_path)
    if not frames:
        raise ValueError(f"{capture_path}: no capture records")
    sheet = builtin_sheet(cfg.sheet)
    # a capture file with several records is treated as historical data and
    # averaged into one initial state
    state = average_states([build_state(fr, sheet.geometry, cfg.params.h_min,
                                        cfg.params.link_radius) for fr in frames])
    cs = cfg.constraints if cfg.constraints is not None else standard_constraints()
    plan_name = name or f"{REFINED_PREFIX}_{sheet.name}"
    plan, audit = refine_plan_detailed(state, model, cs, cfg.search, name=plan_name)
    cfg.out.mkdir(parents=True, exist_ok=True)
    plan_path = cfg.out / f"{plan_name}.plan"
    emit_plan(plan, plan_path)
    with open(cfg.out / f"{plan_name}.audit.json", "w") as fh:
        json.dump({"plan": plan_name, "steps": audit}, fh, indent=2)
    print(f"{plan_path}  actions={len(plan)} in_plan_paths={plan.path_equivalents}")
    return plan_path


def _read_summary(path) -> dict:
    last = None
    with open(path) as fh:
        for line in fh:
            if line.strip():
                last = line
    if last is None:
        raise LogFormatError(f"{path}: empty log")
    record = json.loads(last)
    if record.get("type") != "summary":
        raise LogFormatError(f"{path}: missing trailing summary record")
    return record


def build_report(summaries: list[dict], baseline: str | None = None) -> dict:
    """Per-trial statistics rows plus per-plan averages and improvement.

    Plans whose name starts with 'refined' compare against the baseline
    initial plan: by default the initial plan appearing last in the input
    (the experts' latest draft), overridable by name. Averages are shown to
    one decimal and the improvement is computed from those rounded averages,
    matching how the headline percentages are quoted.
    """
    groups: dict[tuple[str, str], list[dict]] = {}
    order: list[tuple[str, str]] = []
    for s in summaries:
        key = (s["sheet"], s["plan"])
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(s)

    sheets: dict[str, dict] = {}
    for sheet, plan_name in order:
        entry = sheets.setdefault(sheet, {"plans": [], "by_plan": {}})
        trials = groups[(sheet, plan_name)]
        totals = [t["total_paths"] for t in trials]
        avg = sum(totals) / len(totals)
        refined = plan_name.lower().startswith(REFINED_PREFIX)
        entry["plans"].append(plan_name)
        entry["by_plan"][plan_name] = {
            "plan": plan_name, "refined": refined,
            "trials": [{"trial": i + 1,
                        "seed": t["seed"],
                        "correction_cycles": t["correction_cycles"],
                        "correction_paths": t["correction_paths"],
                        "total_paths": t["total_paths"],
                        "in_plan_paths": t["in_plan_paths"]}
                       for i, t in enumerate(trials)],
            "average_paths": avg,
            "average_paths_rounded": round(avg, 1),
        }

    for sheet, entry in sheets.items():
        initials = [p for p in entry["plans"] if not entry["by_plan"][p]["refined"]]
        refined_plans = [p for p in entry["plans"] if entry["by_plan"][p]["refined"]]
        base_name = None
        if baseline and baseline in entry["by_plan"]:
            base_name = baseline
        elif initials:
            base_name = initials[-1]
        entry["baseline"] = base_name
        for p in refined_plans:
            if base_name is None:
                continue
            base_avg = entry["by_plan"][base_name]["average_paths_rounded"]
            ref_avg = entry["by_plan"][p]["average_paths_rounded"]
            base_raw = entry["by_plan"][base_name]["average_paths"]
            raw = (base_raw - entry["by_plan"][p]["average_paths"]) / base_raw \
                if base_raw else 0.0
            imp = (base_avg - ref_avg) / base_avg if base_avg else 0.0
            entry["by_plan"][p]["improvement_pct"] = round(100.0 * imp, 1)
            entry["by_plan"][p]["improvement_raw"] = raw
    return {"version": 1, "sheets": sheets}


def format_report(report: dict) -> str:
    lines = []
    header = (f"{'sheet':<8} {'plan':<16} {'trial':>5} {'cycles':>6} "
              f"{'corr':>5} {'total':>5} {'average':>8} {'improv%':>8}")
    lines.append(header)
    lines.append("-" * len(header))
    for sheet, entry in report["sheets"].items():
        for plan_name in entry["plans"]:
            info = entry["by_plan"][plan_name]
            for i, trial in enumerate(info["trials"]):
                avg = f"{info['average_paths_rounded']:.1f}" if i == 0 else ""
                imp = ""
                if i == 0 and "improvement_pct" in info:
                    imp = f"{info['improvement_pct']:.1f}"
                lines.append(f"{sheet:<8} {plan_name:<16} {trial['trial']:>5} "
                             f"{trial['correction_cycles']:>6} "
                             f"{trial['correction_paths']:>5} "
                             f"{trial['total_paths']:>5} {avg:>8} {imp:>8}")
    return "\n".join(lines)


def cmd_report(log_paths, out_dir=None, baseline: str | None = None) -> dict:
    if not log_paths:
        raise ValueError("report needs at least one log file")
    summaries = [_read_summary(p) for p in log_paths]
    report = build_report(summaries, baseline=baseline)
    text = format_report(report)
    print(text)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
        with open(out / "report.txt", "w") as fh:
            fh.write(text + "\n")
    return report


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layup",
                                     description="Draping-plan refinement pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="run-config JSON path")
        p.add_argument("--sheet", help="built-in sheet spec name (sheet1, sheet2)")
        p.add_argument("--seed", type=int, nargs="+", help="64-bit seeds")
        p.add_argument("--out", help="output directory")

    for cmd in ("simulate", "evaluate"):
        p = sub.add_parser(cmd, help="execute a plan file, one log per seed")
        p.add_argument("plan", help="plan file")
        add_common(p)
        p.add_argument("--no-captures", action="store_true",
                       help="omit raw captures from logs (smaller files)")

    p = sub.add_parser("learn", help="aggregate logs into a model file")
    p.add_argument("logs", nargs="+", help="experiment log files")
    p.add_argument("--out", required=True, help="model file to write")

    p = sub.add_parser("refine", help="search for a refined plan")
    p.add_argument("model", help="effectiveness model file")
    p.add_argument("--capture", required=True, help="initial capture (JSON-lines)")
    p.add_argument("--name", help="name for the refined plan")
    add_common(p)

    p = sub.add_parser("report", help="tabulate experiment statistics")
    p.add_argument("logs", nargs="+", help="experiment log files")
    p.add_argument("--out", help="directory for report.json / report.txt")
    p.add_argument("--baseline", help="initial plan name to compare refined plans against")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command in ("simulate", "evaluate"):
            cfg = RunConfig.from_args(args)
            cmd_simulate(args.plan, cfg, keep_captures=not args.no_captures)
        elif args.command == "learn":
            cmd_learn(args.logs, args.out)
        elif args.command == "refine":
            cfg = RunConfig.from_args(args)
            cmd_refine(args.model, args.capture, cfg, name=args.name)
        elif args.command == "report":
            cmd_report(args.logs, out_dir=args.out, baseline=args.baseline)
    except (PlanParseError, PlanInvalidError, LogFormatError, FileNotFoundError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SearchError, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
