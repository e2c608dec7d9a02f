"""Command-line entry points: theory, train, plan, report.

Every subcommand accepts --seed, --out, and --json (machine-readable
summary on stdout). Artifacts are deterministic: rerunning a command
with identical inputs produces byte-identical CSVs; timestamps live only
in manifest.json.

Exit codes: 0 success, 2 invalid configuration or input, 3 I/O failure,
4 numerical failure (divergence diagnostics are printed as JSON).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .errors import NumericalError, ValidationError
from .model import ModelConfig
from .planner import ArchSpec, count_params, tradeoff_table, vit_base_spec
from .randmat import SweepSpec, head_concat_sweep
from .reporting import (
    canonical_json,
    conditioning_csv,
    csv_text,
    format_cell,
    grid_csv,
    grid_summary,
    make_manifest,
    metrics_csv,
    run_summary,
    svg_line_chart,
    theory_csv,
    utc_now_iso,
    write_atomic,
)
from .tasks import TaskSpec
from .training import TrainConfig, depth_heads_grid, train

__all__ = ["main"]

# Files every completed training run directory must contain.
RUN_ARTIFACTS = ("conditioning.csv", "manifest.json", "metrics.csv", "summary.json")

# Field tables for the train config JSON: name -> expected type. bool is
# checked before int because bool is an int subtype in Python.
_MODEL_FIELDS = {
    "depth": int, "num_heads": int, "head_dim": int, "mlp_ratio": float,
    "causal": bool, "use_layernorm": bool, "attn_scale": bool,
}
_TASK_FIELDS = {
    "kind": str, "vocab_size": int, "seq_len": int, "modulus": int,
    "train_size": int, "eval_size": int, "seed": int,
}
_TRAIN_FIELDS = {
    "steps": int, "batch_size": int, "learning_rate": float,
    "weight_decay": float, "warmup_steps": int, "beta1": float,
    "beta2": float, "epsilon": float, "seed": int, "probe_every": int,
}
_GRID_FIELDS = {"depths": list, "head_counts": list, "reps": int}
_ARCH_FIELDS = {
    "embed_dim": int, "depth": int, "num_heads": int, "mlp_hidden": int,
    "num_classes": int, "head_dim": int, "image_size": int,
    "patch_size": int, "in_channels": int, "vocab_size": int,
    "seq_len": int, "cls_token": bool, "qkv_bias": bool, "layernorm": bool,
}
_ARCH_NULLABLE = {
    "head_dim", "image_size", "patch_size", "in_channels", "vocab_size", "seq_len",
}


def _load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(value, dict):
        raise ValidationError(f"{path}: top-level JSON value must be an object")
    return value


def _typed_section(raw, name: str, fields: dict, required: set,
                   nullable: set = frozenset()) -> dict:
    """Validate one config object against its field table.

    Rejects unknown keys (naming them), missing required keys, and
    type mismatches; returns a plain dict of validated values.
    """
    if not isinstance(raw, dict):
        raise ValidationError(f"'{name}' must be a JSON object")
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ValidationError(f"unknown field(s) in '{name}': {', '.join(unknown)}")
    missing = sorted(required - set(raw))
    if missing:
        raise ValidationError(f"'{name}' missing required field(s): {', '.join(missing)}")
    out = {}
    for key, value in raw.items():
        want = fields[key]
        if value is None and key in nullable:
            out[key] = None
            continue
        if want is bool:
            ok = isinstance(value, bool)
        elif want is int:
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif want is float:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        else:
            ok = isinstance(value, want)
        if not ok:
            raise ValidationError(
                f"'{name}.{key}' must be {want.__name__}, got {type(value).__name__}"
            )
        out[key] = float(value) if want is float else value
    return out


def _int_list(values, name: str) -> list[int]:
    if not isinstance(values, list) or not values:
        raise ValidationError(f"'{name}' must be a non-empty list of integers")
    for v in values:
        if not isinstance(v, int) or isinstance(v, bool):
            raise ValidationError(f"'{name}' must contain only integers, got {v!r}")
    return list(values)


def _parse_csv_ints(text: str, flag: str) -> tuple[int, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValidationError(f"{flag} must be a non-empty comma-separated list of integers")
    values = []
    for part in parts:
        try:
            values.append(int(part))
        except ValueError:
            raise ValidationError(f"{flag}: {part!r} is not an integer") from None
    return tuple(values)


def _model_echo(config: ModelConfig) -> dict:
    """Input-shaped model section (derived fields omitted), so a manifest
    config echo is itself a loadable train config."""
    return {
        "depth": config.depth, "num_heads": config.num_heads,
        "head_dim": config.head_dim, "mlp_ratio": config.mlp_ratio,
        "causal": config.causal, "use_layernorm": config.use_layernorm,
        "attn_scale": config.attn_scale,
    }


def parse_train_config(raw: dict):
    """Resolve a train config JSON into (ModelConfig, TaskSpec, TrainConfig, grid|None)."""
    unknown = sorted(set(raw) - {"model", "task", "train", "grid"})
    if unknown:
        raise ValidationError(f"unknown top-level section(s): {', '.join(unknown)}")
    missing = sorted({"model", "task", "train"} - set(raw))
    if missing:
        raise ValidationError(f"missing required section(s): {', '.join(missing)}")

    model_in = _typed_section(raw["model"], "model", _MODEL_FIELDS,
                              {"depth", "num_heads", "head_dim"})
    task_in = _typed_section(raw["task"], "task", _TASK_FIELDS,
                             {"kind", "vocab_size", "seq_len"})
    train_in = _typed_section(raw["train"], "train", _TRAIN_FIELDS, {"steps"})

    task = TaskSpec(**task_in)
    config = ModelConfig(
        depth=model_in["depth"],
        num_heads=model_in["num_heads"],
        head_dim=model_in["head_dim"],
        embed_dim=model_in["num_heads"] * model_in["head_dim"],
        mlp_ratio=model_in.get("mlp_ratio", 4.0),
        vocab_size=task.vocab_size,
        seq_len=task.seq_len,
        num_classes=task.num_classes,
        causal=model_in.get("causal", False),
        use_layernorm=model_in.get("use_layernorm", True),
        attn_scale=model_in.get("attn_scale", True),
    )
    tc = TrainConfig(**train_in)

    grid = None
    if "grid" in raw:
        grid_in = _typed_section(raw["grid"], "grid", _GRID_FIELDS,
                                 {"depths", "head_counts"})
        grid = {
            "depths": _int_list(grid_in["depths"], "grid.depths"),
            "head_counts": _int_list(grid_in["head_counts"], "grid.head_counts"),
            "reps": grid_in.get("reps", 3),
        }
        if grid["reps"] < 1:
            raise ValidationError("'grid.reps' must be >= 1")
    return config, task, tc, grid


def _aligned_text(rows) -> str:
    width = max(len(label) for label, _ in rows)
    return "".join(f"{label:<{width}}  {value}\n" for label, value in rows)


def _cell(value) -> str:
    if isinstance(value, (str, bool, int, float)):
        return format_cell(value)
    return str(value)


def _write_run_dir(directory: Path, result, config_echo: dict, seeds: dict,
                   started_at: str) -> None:
    write_atomic(directory / "metrics.csv", metrics_csv(result))
    write_atomic(directory / "conditioning.csv", conditioning_csv(result.conditioning))
    write_atomic(directory / "summary.json", canonical_json(run_summary(result)))
    manifest = make_manifest("train", config_echo, seeds, list(RUN_ARTIFACTS),
                             started_at, utc_now_iso())
    write_atomic(directory / "manifest.json", canonical_json(manifest))


def cmd_theory(args) -> int:
    started = utc_now_iso()
    spec = SweepSpec(
        seq_len=args.N, head_dim=args.d,
        head_counts=_parse_csv_ints(args.heads, "--heads"),
        trials=args.trials, seed=args.seed,
    )
    stats = head_concat_sweep(spec)
    echo = {"N": spec.seq_len, "d": spec.head_dim, "heads": list(spec.head_counts),
            "trials": spec.trials, "seed": spec.seed}
    summary = {"config": echo, "rows": [asdict(s) for s in stats]}

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_atomic(out / "theory.csv", theory_csv(stats))
    write_atomic(out / "summary.json", canonical_json(summary))
    manifest = make_manifest("theory", echo, {"seed": spec.seed},
                             ["manifest.json", "summary.json", "theory.csv"],
                             started, utc_now_iso())
    write_atomic(out / "manifest.json", canonical_json(manifest))

    if args.json:
        sys.stdout.write(canonical_json(summary))
    else:
        for s in stats:
            print(f"h={s.h} D={s.D} mean_kappa={_cell(s.mean_kappa)} "
                  f"asymptotic={_cell(s.asymptotic_kappa)} "
                  f"rank_deficient={s.rank_deficient_count}")
        print(f"wrote theory.csv, summary.json, manifest.json to {out}")
    return 0


def cmd_train(args) -> int:
    started = utc_now_iso()
    config, task, tc, grid = parse_train_config(_load_json(args.config))
    if args.seed is not None:
        tc = replace(tc, seed=args.seed)
    echo = {"model": _model_echo(config), "task": asdict(task), "train": asdict(tc)}
    seeds = {"train_seed": tc.seed, "task_seed": task.seed}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if grid is None:
        result = train(config, task, tc)
        _write_run_dir(out, result, echo, seeds, started)
        summary = run_summary(result)
        if args.json:
            sys.stdout.write(canonical_json(summary))
        else:
            print(_aligned_text([
                ("final_train_loss", _cell(result.final_train_loss)),
                ("final_eval_accuracy", _cell(result.final_eval_accuracy)),
                ("param_count", _cell(result.param_count)),
                ("run_dir", str(out)),
            ]), end="")
        return 0

    echo["grid"] = dict(grid)
    kept = {}

    def keep_first_rep(depth, heads, rep, result):
        if rep == 0:
            kept[(depth, heads)] = result

    rows = depth_heads_grid(
        config, grid["depths"], grid["head_counts"], task, tc,
        reps=grid["reps"], on_result=keep_first_rep,
    )
    outputs = ["grid_summary.csv", "manifest.json", "summary.json"]
    for row in rows:
        result = kept.get((row.depth, row.heads))
        if result is None:
            continue  # rep 0 failed numerically; aggregate row still records it
        cell_name = f"depth{row.depth}_heads{row.heads}"
        cell_echo = {"model": _model_echo(result.model_config),
                     "task": asdict(task), "train": asdict(tc)}
        _write_run_dir(out / cell_name, result, cell_echo, seeds, started)
        outputs.extend(f"{cell_name}/{name}" for name in RUN_ARTIFACTS)

    write_atomic(out / "grid_summary.csv", grid_csv(rows))
    summary = grid_summary(rows, echo)
    write_atomic(out / "summary.json", canonical_json(summary))
    manifest = make_manifest("train", echo, seeds, outputs, started, utc_now_iso())
    write_atomic(out / "manifest.json", canonical_json(manifest))

    if args.json:
        sys.stdout.write(canonical_json(summary))
    else:
        for row in rows:
            print(f"depth={row.depth} heads={row.heads} params={row.params} "
                  f"mean_acc={_cell(row.mean_acc)} "
                  f"final_mean_kappa={_cell(row.final_mean_kappa)}")
        print(f"wrote {len(rows)} cell dirs and grid_summary.csv to {out}")
    return 0


def _parse_arch(raw: dict) -> ArchSpec:
    fields = _typed_section(
        raw, "arch", _ARCH_FIELDS,
        {"embed_dim", "depth", "num_heads", "mlp_hidden", "num_classes"},
        nullable=_ARCH_NULLABLE,
    )
    return ArchSpec(**fields)


def _breakdown_rows(spec: ArchSpec, breakdown) -> list:
    label = "patch_embed" if spec.image_size is not None else "token_embed"
    rows = [(label, breakdown.patch_or_token_embed),
            ("position_embed", breakdown.position_embed)]
    if spec.cls_token:
        rows.append(("cls_token", breakdown.cls))
    rows.extend((f"layer_{i}", breakdown.per_layer.total)
                for i in range(breakdown.depth))
    rows.append(("final_norm", breakdown.final_norm))
    rows.append(("head", breakdown.head))
    rows.append(("total", breakdown.total))
    return rows


def cmd_plan(args) -> int:
    started = utc_now_iso()
    if args.vit_base:
        spec = vit_base_spec()
        echo = {"vit_base": True}
    else:
        echo = _load_json(args.arch)
        spec = _parse_arch(echo)
    breakdown = count_params(spec)
    rows = _breakdown_rows(spec, breakdown)

    if (args.depths is None) != (args.heads is None):
        raise ValidationError("--depths and --heads must be given together")
    tradeoff = None
    if args.depths is not None:
        depths = list(_parse_csv_ints(args.depths, "--depths"))
        heads = list(_parse_csv_ints(args.heads, "--heads"))
        fixed = spec.head_dim is not None and not args.fixed_width
        tradeoff = tradeoff_table(spec, depths, heads, head_dim_fixed=fixed)

    summary = {
        "config": echo,
        "breakdown": asdict(breakdown),
        "rows": [[name, value] for name, value in rows],
        "tradeoff": None if tradeoff is None else [asdict(r) for r in tradeoff],
    }

    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        outputs = ["manifest.json", "plan.csv", "summary.json"]
        write_atomic(out / "plan.csv", csv_text(["component", "params"], rows))
        if tradeoff is not None:
            outputs.append("tradeoff.csv")
            write_atomic(out / "tradeoff.csv", csv_text(
                ["depth", "heads", "total_params", "delta_vs_base_percent"],
                [(r.depth, r.heads, r.total_params, r.delta_vs_base_percent)
                 for r in tradeoff],
            ))
        write_atomic(out / "summary.json", canonical_json(summary))
        manifest = make_manifest("plan", echo, {"seed": args.seed}, outputs,
                                 started, utc_now_iso())
        write_atomic(out / "manifest.json", canonical_json(manifest))

    if args.json:
        sys.stdout.write(canonical_json(summary))
    else:
        print(_aligned_text([(name, _cell(value)) for name, value in rows]), end="")
        if tradeoff is not None:
            print()
            for r in tradeoff:
                print(f"depth={r.depth} heads={r.heads} params={r.total_params} "
                      f"delta={_cell(r.delta_vs_base_percent)}%")
    return 0


def _metrics_points(path: Path) -> list:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "step" not in reader.fieldnames \
                or "loss" not in reader.fieldnames:
            raise ValidationError("metrics.csv missing 'step'/'loss' columns")
        return [(int(row["step"]), float(row["loss"])) for row in reader]


def _kappa_points(path: Path) -> list:
    column = "mean_concat_kappa_across_layers"
    points = []
    seen = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "step" not in reader.fieldnames \
                or column not in reader.fieldnames:
            raise ValidationError(f"conditioning.csv missing 'step'/'{column}' columns")
        for row in reader:
            step = int(row["step"])
            if step in seen:
                continue  # the mean repeats on every (layer, head) row of a step
            seen.add(step)
            points.append((step, float(row[column])))
    return points


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise ValidationError(f"not a run directory: {run_dir}")
    for name in RUN_ARTIFACTS:
        if not (run_dir / name).is_file():
            raise ValidationError(f"missing artifact: {name}")
    summary = _load_json(run_dir / "summary.json")

    if args.svg:
        if args.out is None:
            raise ValidationError("--svg requires --out")
        out = Path(args.out)
        if out.resolve() == run_dir.resolve():
            raise ValidationError("--out must not be the run directory")
        out.mkdir(parents=True, exist_ok=True)
        write_atomic(out / "loss.svg", svg_line_chart(
            _metrics_points(run_dir / "metrics.csv"),
            title="training loss", x_label="step", y_label="loss"))
        write_atomic(out / "kappa.svg", svg_line_chart(
            _kappa_points(run_dir / "conditioning.csv"),
            title="mean concatenated-block condition number",
            x_label="step", y_label="kappa"))

    if args.json:
        sys.stdout.write(canonical_json(summary))
    else:
        rows = [(key, _cell(summary.get(key, "missing")))
                for key in ("final_train_loss", "final_eval_accuracy",
                            "param_count", "final_mean_kappa", "steps")]
        print(_aligned_text(rows), end="")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attncond",
        description="Condition numbers of concatenated attention heads: "
                    "Monte-Carlo theory sweeps, probe-instrumented training, "
                    "parameter planning, and run reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    theory = sub.add_parser(
        "theory", help="Monte-Carlo sweep of condition numbers over head counts")
    theory.add_argument("--N", type=int, required=True, help="rows per block")
    theory.add_argument("--d", type=int, required=True, help="columns per head")
    theory.add_argument("--heads", required=True,
                        help="comma-separated head counts, strictly ascending")
    theory.add_argument("--trials", type=int, default=50)
    theory.add_argument("--seed", type=int, default=0)
    theory.add_argument("--out", required=True, help="output directory")
    theory.add_argument("--json", action="store_true",
                        help="print machine-readable summary to stdout")
    theory.set_defaults(func=cmd_theory)

    train_p = sub.add_parser(
        "train", help="train a model (or a depth-by-heads grid) from a config JSON")
    train_p.add_argument("config", help="path to config JSON")
    train_p.add_argument("--seed", type=int, default=None,
                         help="override the train seed from the config")
    train_p.add_argument("--out", required=True, help="run directory")
    train_p.add_argument("--json", action="store_true",
                         help="print machine-readable summary to stdout")
    train_p.set_defaults(func=cmd_train)

    plan = sub.add_parser(
        "plan", help="parameter counts for an encoder architecture")
    source = plan.add_mutually_exclusive_group(required=True)
    source.add_argument("--arch", help="path to architecture JSON")
    source.add_argument("--vit-base", action="store_true",
                        help="use the canonical base encoder (86.6M)")
    plan.add_argument("--depths", default=None,
                      help="comma-separated depths for a trade-off grid")
    plan.add_argument("--heads", default=None,
                      help="comma-separated head counts for a trade-off grid")
    plan.add_argument("--fixed-width", action="store_true",
                      help="hold embed_dim fixed in the grid (default: fixed head_dim)")
    plan.add_argument("--seed", type=int, default=None,
                      help="accepted for interface uniformity; planning is exact")
    plan.add_argument("--out", default=None, help="write CSV artifacts here")
    plan.add_argument("--json", action="store_true",
                      help="print machine-readable summary to stdout")
    plan.set_defaults(func=cmd_plan)

    report = sub.add_parser(
        "report", help="summarize a completed training run directory")
    report.add_argument("run_dir", help="directory written by the train command")
    report.add_argument("--svg", action="store_true",
                        help="also render loss.svg and kappa.svg")
    report.add_argument("--seed", type=int, default=None,
                        help="accepted for interface uniformity; reporting is read-only")
    report.add_argument("--out", default=None,
                        help="directory for SVG output (never the run dir)")
    report.add_argument("--json", action="store_true",
                        help="print the run summary JSON to stdout")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        diagnostic = {"error": type(exc).__name__, "message": str(exc)}
        last_good = getattr(exc, "last_good_step", None)
        if last_good is not None:
            diagnostic["last_good_step"] = last_good
        iterations = getattr(exc, "iterations", None)
        if iterations is not None:
            diagnostic["iterations"] = iterations
        sys.stdout.write(canonical_json(diagnostic))
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
