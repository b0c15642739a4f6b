"""Command-line surface: task generation, relabeling, store inspection,
student training, diversity metrics, synthesis, and Pareto sweeps.

Every subcommand honors ``--seed`` (falling back to the SLBL_SEED environment
variable), reads defaults from an optional JSON config file (flags override
config values, config values override built-in defaults), and emits a single
newline-terminated JSON report on stdout. Human-readable summaries go to
stderr unless ``--json`` is given. Exit codes: 0 success, 1 usage error,
2 data/format error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .calibration import TemperatureSchedule
from .diversity import mmd_squared, within_class_cosine
from .label_store import (
    CorruptStoreError,
    StoreFormatError,
    compression_report,
    decode_store,
    encode_store,
    prune_plan,
    storage_breakdown,
)
from .synth import (
    LinearTeacher,
    SynthConfig,
    compute_class_stats,
    read_feature_file,
    synthesize_class_batch,
    synthesize_independent,
    write_feature_file,
)
from .trainer_sim import (
    Task,
    TaskSpec,
    TrainConfig,
    batches_per_epoch_for,
    generate_task,
    pareto_sweep,
    relabel,
    train_student,
)

__all__ = ["run", "main"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _emit(report: dict, json_mode: bool, table: list[str]) -> None:
    if not json_mode:
        for line in table:
            print(line, file=sys.stderr)
    sys.stdout.write(json.dumps(_jsonable(report)) + "\n")


def _report(command: str, **fields) -> dict:
    # generated_at is the single field allowed to differ between identical runs
    return {
        "command": command,
        "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        **fields,
    }


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return cfg


def _get(args, config: dict, name: str, default):
    """Precedence: explicit flag > config file entry > built-in default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _seed(args, config: dict) -> int:
    value = _get(args, config, "seed", None)
    if value is None:
        value = os.environ.get("SLBL_SEED", 0)
    return int(value)


def _save_teacher(path, teacher: LinearTeacher) -> None:
    np.savez(path, weights=teacher.weights, bias=teacher.bias)


def _load_teacher(path) -> LinearTeacher:
    with np.load(path) as data:
        return LinearTeacher(weights=data["weights"].copy(), bias=data["bias"].copy())


def _load_task_dir(task_dir: str) -> Task:
    d = Path(task_dir)
    train_X, train_y, C = read_feature_file(d / "train.sfmx")
    test_X, test_y, _ = read_feature_file(d / "test.sfmx")
    distilled_X, distilled_y, _ = read_feature_file(d / "distilled.sfmx")
    teacher = _load_teacher(d / "teacher.npz")
    meta = json.loads((d / "task.json").read_text())
    spec = TaskSpec(**meta["spec"])
    return Task(
        spec=spec,
        train_X=train_X,
        train_y=train_y,
        test_X=test_X,
        test_y=test_y,
        distilled_X=distilled_X,
        distilled_y=distilled_y,
        teacher=teacher,
        degenerate=bool(meta.get("degenerate", False)),
    )


def _schedule(args, config: dict) -> TemperatureSchedule:
    return TemperatureSchedule(
        initial_tau=float(_get(args, config, "initial_tau", 20.0)),
        decay_factor=float(_get(args, config, "decay_factor", 0.7)),
        step_epochs=int(_get(args, config, "step_epochs", 30)),
        floor_tau=float(_get(args, config, "floor_tau", 2.0)),
    )


def _grid(config: dict):
    # student temperature grid, config-file only (a list of floats)
    values = config.get("grid")
    return None if values is None else tuple(float(v) for v in values)


def _cmd_gen(args, config: dict) -> int:
    spec = TaskSpec(
        num_classes=int(_get(args, config, "classes", 20)),
        dim=int(_get(args, config, "dim", 32)),
        train_size=int(_get(args, config, "train_size", 2000)),
        test_size=int(_get(args, config, "test_size", 2000)),
        separation=float(_get(args, config, "separation", 4.0)),
        ipc=int(_get(args, config, "ipc", 5)),
        distill=str(_get(args, config, "distill", "noise")),
        seed=_seed(args, config),
    )
    task = generate_task(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    C = spec.num_classes
    write_feature_file(out / "train.sfmx", task.train_X, task.train_y, C)
    write_feature_file(out / "test.sfmx", task.test_X, task.test_y, C)
    write_feature_file(out / "distilled.sfmx", task.distilled_X, task.distilled_y, C)
    _save_teacher(out / "teacher.npz", task.teacher)
    meta = {"spec": dict(spec.__dict__), "degenerate": task.degenerate}
    (out / "task.json").write_text(json.dumps(_jsonable(meta)) + "\n")
    teacher_acc = float(
        np.mean(np.argmax(task.teacher.logits(task.train_X), axis=1) == task.train_y)
    )
    report = _report(
        "gen",
        out_dir=str(out),
        spec=meta["spec"],
        degenerate=task.degenerate,
        teacher_train_accuracy=teacher_acc,
        files=["train.sfmx", "test.sfmx", "distilled.sfmx", "teacher.npz", "task.json"],
    )
    _emit(report, args.json, [
        f"task written to {out}",
        f"teacher train accuracy: {teacher_acc:.4f}",
    ])
    return 0


def _cmd_relabel(args, config: dict) -> int:
    task = _load_task_dir(args.task_dir)
    epochs = int(_get(args, config, "epochs", 300))
    p = float(_get(args, config, "prune_rate", 0.0))
    k = int(_get(args, config, "top_k", 0))
    batch_size = int(_get(args, config, "batch_size", 16))
    seed = _seed(args, config)
    bpe = batches_per_epoch_for(task.distilled_X.shape[0], batch_size)
    plan = prune_plan(epochs, p, bpe)
    store = relabel(task.distilled_X, task.teacher, plan, batch_size, k, seed)
    blob = encode_store(store)
    Path(args.out).write_bytes(blob)
    report = _report(
        "relabel",
        store=str(args.out),
        bytes=len(blob),
        total_epochs=epochs,
        retained_epochs=plan.retained_epochs,
        batches_per_epoch=bpe,
        pruning_rate=p,
        top_k=k,
        seed=seed,
    )
    _emit(report, args.json, [
        f"store written to {args.out} ({len(blob)} bytes)",
        f"retained {plan.retained_epochs}/{epochs} epochs x {bpe} batches, top_k={k}",
    ])
    return 0


def _cmd_inspect(args, config: dict) -> int:
    store = decode_store(Path(args.store).read_bytes())
    bd = storage_breakdown(store)
    cr = compression_report(
        bd,
        total_epochs=store.total_epochs,
        batches_per_epoch=store.batches_per_epoch,
        batch_size=store.batch_size,
        num_classes=store.num_classes,
    )
    components = {
        name: {"bytes": bd.component_bytes[name], "fraction": bd.fractions.get(name)}
        for name in bd.component_bytes
    }
    report = _report(
        "inspect",
        store=str(args.store),
        num_classes=store.num_classes,
        batch_size=store.batch_size,
        total_epochs=store.total_epochs,
        retained_epochs=store.retained_epochs,
        batches_per_epoch=store.batches_per_epoch,
        top_k=store.k,
        components=components,
        payload_bytes=bd.payload_bytes,
        total_bytes=bd.total_bytes,
        theoretical_z_ratio=cr.theoretical_z_ratio,
        actual_ratio=cr.actual_ratio,
        baseline_bytes=cr.baseline_bytes,
    )
    table = [f"{'component':>14}  {'bytes':>12}  fraction"]
    for name, row in components.items():
        frac = "" if row["fraction"] is None else f"{row['fraction']:.6f}"
        table.append(f"{name:>14}  {row['bytes']:>12}  {frac}")
    table.append(f"theoretical ratio {cr.theoretical_z_ratio:.3f}x, actual {cr.actual_ratio:.3f}x")
    _emit(report, args.json, table)
    return 0


def _cmd_train(args, config: dict) -> int:
    task = _load_task_dir(args.task_dir)
    store = decode_store(Path(args.store).read_bytes())
    cfg = TrainConfig(
        epochs=store.total_epochs,
        batch_size=store.batch_size,
        learning_rate=float(_get(args, config, "learning_rate", 0.02)),
        pruning_rate=float(1.0 - store.retained_epochs / store.total_epochs),
        top_k=store.k,
        dkr=bool(_get(args, config, "dkr", False)),
        ca=bool(_get(args, config, "ca", False)),
        fixed_tau=float(_get(args, config, "fixed_tau", 2.0)),
        schedule=_schedule(args, config),
        grid=_grid(config),
        label_smoothing=float(_get(args, config, "label_smoothing", 0.0)),
        rescale_tau_sq=bool(_get(args, config, "rescale_tau_sq", False)),
        shuffle_reuse=bool(_get(args, config, "shuffle_reuse", False)),
        seed=_seed(args, config),
    )
    result = train_student(store, task, cfg)
    report = _report(
        "train",
        store=str(args.store),
        final_accuracy=result.final_accuracy,
        storage_bytes=result.storage_bytes,
        theoretical_z_ratio=result.compression.theoretical_z_ratio,
        actual_ratio=result.compression.actual_ratio,
        dkr=cfg.dkr,
        ca=cfg.ca,
        losses=result.losses,
        teacher_taus=result.teacher_taus,
        student_taus=result.student_taus,
        degenerate=result.degenerate,
    )
    if args.out:
        Path(args.out).write_text(json.dumps(_jsonable(report)) + "\n")
    _emit(report, args.json, [
        f"final test accuracy: {result.final_accuracy:.4f}",
        f"store: {result.storage_bytes} bytes "
        f"({result.compression.actual_ratio:.2f}x actual compression)",
    ])
    return 0


def _cmd_metrics(args, config: dict) -> int:
    X, y, _ = read_feature_file(args.features)
    rep = within_class_cosine(X, y)
    mmd = None
    if args.reference:
        ref_X, _, _ = read_feature_file(args.reference)
        bw = _get(args, config, "bandwidth", "auto")
        bw = bw if bw == "auto" else float(bw)
        mmd = mmd_squared(X, ref_X, bandwidth=bw)
    report = _report(
        "metrics",
        features=str(args.features),
        class_ids=rep.class_ids,
        per_class_cosine_mean=rep.per_class_cosine_mean,
        per_class_cosine_std=rep.per_class_cosine_std,
        overall_mean=rep.overall_mean,
        overall_std=rep.overall_std,
        mmd_squared=mmd,
    )
    table = [f"within-class cosine: {rep.overall_mean:.4f} +/- {rep.overall_std:.4f}"]
    if mmd is not None:
        table.append(f"mmd^2 vs reference: {mmd:.6f}")
    _emit(report, args.json, table)
    return 0


def _cmd_synth(args, config: dict) -> int:
    X, y, C = read_feature_file(args.stats_from)
    teacher = _load_teacher(args.teacher)
    stats = compute_class_stats(X, y, C)
    cfg = SynthConfig(
        alpha=float(_get(args, config, "alpha", 0.01)),
        iterations=int(_get(args, config, "iterations", 300)),
        step_size=float(_get(args, config, "step_size", 0.1)),
        batch_size=int(_get(args, config, "ipc", 5)),
        seed=_seed(args, config),
        optimizer=str(_get(args, config, "optimizer", "gd")),
    )
    mode = str(_get(args, config, "mode", "classwise"))
    if mode not in ("classwise", "independent"):
        raise ValueError(f"unknown synthesis mode {mode!r}")
    synth_fn = synthesize_class_batch if mode == "classwise" else synthesize_independent
    batches, labels = [], []
    for c in range(C):
        batches.append(synth_fn(teacher, stats, c, replace(cfg, seed=cfg.seed + c)))
        labels.append(np.full(cfg.batch_size, c))
    out_X = np.concatenate(batches)
    out_y = np.concatenate(labels)
    write_feature_file(args.out, out_X, out_y, C)
    report = _report(
        "synth",
        out=str(args.out),
        mode=mode,
        classes=C,
        per_class=cfg.batch_size,
        alpha=cfg.alpha,
        iterations=cfg.iterations,
        seed=cfg.seed,
    )
    _emit(report, args.json, [f"{mode} synthesis: {out_X.shape[0]} rows -> {args.out}"])
    return 0


def _cmd_pareto(args, config: dict) -> int:
    task = _load_task_dir(args.task_dir)
    prune_rates = [float(v) for v in str(_get(args, config, "prune_rates", "0.5,0.9")).split(",")]
    top_ks = [int(v) for v in str(_get(args, config, "top_ks", "0,2")).split(",")]
    n_seeds = int(_get(args, config, "seeds", 3))
    base_seed = _seed(args, config)
    cfg = TrainConfig(
        epochs=int(_get(args, config, "epochs", 300)),
        batch_size=int(_get(args, config, "batch_size", 16)),
        learning_rate=float(_get(args, config, "learning_rate", 0.02)),
        dkr=bool(_get(args, config, "dkr", True)),
        ca=bool(_get(args, config, "ca", True)),
        schedule=_schedule(args, config),
        grid=_grid(config),
    )
    grid = [(p, k) for p in prune_rates for k in top_ks]
    entries = pareto_sweep(
        task,
        grid,
        cfg,
        seeds=range(base_seed, base_seed + n_seeds),
        jobs=int(_get(args, config, "jobs", 1)),
    )
    report = _report(
        "pareto",
        entries=[
            {
                "pruning_rate": en.pruning_rate,
                "top_k": en.top_k,
                "storage_bytes": en.storage_bytes,
                "mean_accuracy": en.mean_accuracy,
                "accuracies": list(en.accuracies),
                "non_dominated": en.non_dominated,
            }
            for en in entries
        ],
    )
    table = [f"{'p':>5}  {'k':>4}  {'bytes':>10}  {'acc':>7}  front"]
    for en in entries:
        mark = "*" if en.non_dominated else ""
        table.append(
            f"{en.pruning_rate:>5.2f}  {en.top_k:>4}  {en.storage_bytes:>10}  "
            f"{en.mean_accuracy:>7.4f}  {mark}"
        )
    _emit(report, args.json, table)
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="slbl", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="JSON config file (flags override its values)")
        p.add_argument("--seed", type=int, help="RNG seed (fallback: SLBL_SEED env var)")
        p.add_argument("--json", action="store_true", help="suppress stderr tables")

    p = sub.add_parser("gen", help="generate a synthetic task and write its fixtures")
    common(p)
    p.add_argument("--out-dir", required=True)
    for name, typ in [
        ("classes", int), ("dim", int), ("train-size", int), ("test-size", int),
        ("separation", float), ("ipc", int), ("distill", str),
    ]:
        p.add_argument(f"--{name}", type=typ)

    p = sub.add_parser("relabel", help="build a label store from a task's distilled set")
    common(p)
    p.add_argument("--task-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--prune-rate", type=float)
    p.add_argument("--top-k", type=int)
    p.add_argument("--batch-size", type=int)

    p = sub.add_parser("inspect", help="storage breakdown and compression ratios of a store")
    common(p)
    p.add_argument("--store", required=True)

    p = sub.add_parser("train", help="train a student from a store")
    common(p)
    p.add_argument("--task-dir", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--out", help="also write the JSON report to this path")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--dkr", action="store_const", const=True)
    p.add_argument("--no-dkr", dest="dkr", action="store_const", const=False)
    p.add_argument("--ca", action="store_const", const=True)
    p.add_argument("--no-ca", dest="ca", action="store_const", const=False)
    p.add_argument("--fixed-tau", type=float)
    p.add_argument("--label-smoothing", type=float)
    p.add_argument("--shuffle-reuse", action="store_const", const=True)
    for name, typ in [
        ("initial-tau", float), ("decay-factor", float), ("step-epochs", int), ("floor-tau", float),
    ]:
        p.add_argument(f"--{name}", type=typ)

    p = sub.add_parser("metrics", help="diversity metrics of a feature file")
    common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--reference", help="second feature file for MMD")
    p.add_argument("--bandwidth")

    p = sub.add_parser("synth", help="synthesize per-class feature batches")
    common(p)
    p.add_argument("--stats-from", required=True, help="feature file supplying the statistics")
    p.add_argument("--teacher", required=True, help="teacher .npz file")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["classwise", "independent"])
    for name, typ in [("alpha", float), ("iterations", int), ("step-size", float), ("ipc", int)]:
        p.add_argument(f"--{name}", type=typ)
    p.add_argument("--optimizer", choices=["gd", "adam"])

    p = sub.add_parser("pareto", help="sweep pruning x quantization configurations")
    common(p)
    p.add_argument("--task-dir", required=True)
    p.add_argument("--prune-rates", help="comma-separated pruning rates")
    p.add_argument("--top-ks", help="comma-separated top-k values (0 = full)")
    p.add_argument("--seeds", type=int, help="number of seeds per configuration")
    p.add_argument("--jobs", type=int, help="parallel worker processes")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--dkr", action="store_const", const=True)
    p.add_argument("--no-dkr", dest="dkr", action="store_const", const=False)
    p.add_argument("--ca", action="store_const", const=True)
    p.add_argument("--no-ca", dest="ca", action="store_const", const=False)

    return parser


_COMMANDS = {
    "gen": _cmd_gen,
    "relabel": _cmd_relabel,
    "inspect": _cmd_inspect,
    "train": _cmd_train,
    "metrics": _cmd_metrics,
    "synth": _cmd_synth,
    "pareto": _cmd_pareto,
}


def run(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        config = _load_config(args.config)
        return _COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (StoreFormatError, CorruptStoreError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
