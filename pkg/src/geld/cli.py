"""Command-line interface: instance generation, training, solving,
improvement, benchmarking, and gradient checking.

All randomness flows from --seed; rerunning a command with the same inputs
reproduces identical length columns (wall-time columns will differ).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import GeldError
from .generate import PATTERNS, generate_instances
from .heuristics import brute_force_optimal, nearest_neighbor, random_insertion, two_opt
from .inference import beam_search, greedy_rollout, prc
from .model import ModelParams, desk_model_config
from .report import RunReport
from .training import (
    TrainConfig,
    TrainLog,
    build_labeled_dataset,
    desk_train_config,
    train_stage1,
    train_stage2,
)
from .tsp import TspInstance, Tour, gap
from .tsplib import load_tsplib

SOLVE_MODES = ("greedy", "beam", "ri", "nn2opt", "brute")
IMPROVE_INITS = ("ri", "nn2opt", "greedy")


def _instance_to_json(inst: TspInstance) -> str:
    return json.dumps(
        {
            "name": inst.name,
            "metric_mode": inst.metric_mode,
            "coords": inst.coords.tolist(),
        }
    )


def _instance_from_json(text: str) -> TspInstance:
    doc = json.loads(text)
    return TspInstance(
        np.array(doc["coords"], dtype=np.float64),
        name=doc.get("name", ""),
        metric_mode=doc["metric_mode"],
    )


def load_instances(path) -> list[TspInstance]:
    """Load .json and .tsp instances from a file or directory (sorted)."""
    p = Path(path)
    files = sorted(p.iterdir()) if p.is_dir() else [p]
    out = []
    for f in files:
        if f.suffix == ".json":
            out.append(_instance_from_json(f.read_text()))
        elif f.suffix == ".tsp":
            out.append(load_tsplib(f))
    if not out:
        raise GeldError(f"no instances found under {path}")
    return out


def _load_refs(path) -> dict[str, float]:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return {k: float(v) for k, v in json.load(fh).items()}


_WORKER_PARAMS: ModelParams | None = None
_WORKER_CKPT: str | None = None


def _worker_init(ckpt_path):
    global _WORKER_PARAMS, _WORKER_CKPT
    if ckpt_path is not None:
        _WORKER_PARAMS = load_checkpoint(ckpt_path)
        _WORKER_CKPT = str(ckpt_path)


def _solve_task(task: dict) -> dict:
    inst = TspInstance(
        np.array(task["coords"]), name=task["name"], metric_mode=task["metric_mode"]
    )
    t0 = time.perf_counter()
    tour = _run_method(
        inst,
        task["method"],
        _WORKER_PARAMS,
        seed=task["seed"],
        beam_width=task["beam_width"],
        k_m=task["k_m"],
        init=task.get("init"),
        prc_iters=task.get("prc_iters"),
        two_opt_iters=task.get("two_opt_iters", 1000),
    )
    return {
        "name": inst.name,
        "n": inst.n,
        "length": tour.length,
        "seconds": time.perf_counter() - t0,
    }


def _run_method(inst, method, params, *, seed, beam_width, k_m, init=None,
                prc_iters=None, two_opt_iters=1000) -> Tour:
    if method == "greedy":
        return greedy_rollout(inst, params, k_m)
    if method == "beam":
        return beam_search(inst, params, beam_width, k_m)
    if method == "ri":
        return random_insertion(inst, seed=seed)
    if method == "nn2opt":
        return two_opt(inst, nearest_neighbor(inst), max_iters=two_opt_iters)
    if method == "brute":
        return brute_force_optimal(inst)
    if method == "improve":
        start = _run_method(
            inst, init, params, seed=seed, beam_width=beam_width, k_m=k_m,
            two_opt_iters=two_opt_iters,
        )
        return prc(inst, start, params, prc_iters, seed=seed, k_m=k_m)
    raise GeldError(f"unknown method {method!r}")


def _solve_instances(instances, method, args, params, refs, method_label=None,
                     init=None, prc_iters=None) -> RunReport:
    report = RunReport()
    tasks = [
        {
            "coords": inst.coords.tolist(),
            "name": inst.name,
            "metric_mode": inst.metric_mode,
            "method": method,
            "seed": args.seed + i,
            "beam_width": getattr(args, "beam_width", 16),
            "k_m": args.k_m,
            "init": init,
            "prc_iters": prc_iters,
            "two_opt_iters": getattr(args, "two_opt_iters", 1000),
        }
        for i, inst in enumerate(instances)
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(
            max_workers=args.jobs, initializer=_worker_init, initargs=(args.ckpt,)
        ) as pool:
            results = list(pool.map(_solve_task, tasks))
    else:
        _worker_init(args.ckpt)
        results = [_solve_task(t) for t in tasks]
    for i, res in enumerate(results):
        ref = refs.get(res["name"])
        report.add(
            name=res["name"],
            n=res["n"],
            method=method_label or method,
            length=res["length"],
            gap_pct=gap(res["length"], ref) if ref else None,
            seconds=res["seconds"],
            seed=tasks[i]["seed"],
        )
    return report


def _finish(report: RunReport, out_path) -> None:
    if out_path:
        report.save(out_path)
    print(report.format_table())


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_gen(args) -> tuple[int, RunReport | None]:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    instances = generate_instances(args.pattern, args.n, args.count, args.seed)
    for inst in instances:
        (out / f"{inst.name}.json").write_text(_instance_to_json(inst) + "\n")
    print(f"wrote {len(instances)} instances to {out}")
    return 0, None


def _cmd_solve(args) -> tuple[int, RunReport | None]:
    if args.mode in ("greedy", "beam") and args.ckpt is None:
        raise GeldError(f"--mode {args.mode} requires --ckpt")
    instances = load_instances(args.input)
    refs = _load_refs(args.ref)
    report = _solve_instances(instances, args.mode, args, None, refs)
    _finish(report, args.report)
    return 0, report


def _cmd_improve(args) -> tuple[int, RunReport | None]:
    if args.ckpt is None:
        raise GeldError("improve requires --ckpt")
    instances = load_instances(args.input)
    refs = _load_refs(args.ref)
    label = f"{args.init}+prc{args.prc}"
    report = _solve_instances(
        instances, "improve", args, None, refs, method_label=label,
        init=args.init, prc_iters=args.prc,
    )
    _finish(report, args.report)
    return 0, report


def _cmd_bench(args) -> tuple[int, RunReport | None]:
    instances = load_instances(args.input)
    refs = _load_refs(args.ref)
    merged = RunReport()
    for method in args.methods.split(","):
        method = method.strip()
        if method not in SOLVE_MODES:
            raise GeldError(f"unknown bench method {method!r}")
        if method in ("greedy", "beam") and args.ckpt is None:
            raise GeldError(f"bench method {method} requires --ckpt")
        part = _solve_instances(instances, method, args, None, refs)
        merged.rows.extend(part.rows)
    _finish(merged, args.report)
    return 0, merged


def _cmd_train(args) -> tuple[int, RunReport | None]:
    if args.preset == "desk":
        cfg = desk_train_config(seed=args.seed)
        model_cfg = desk_model_config()
    else:
        cfg = TrainConfig(seed=args.seed)
        model_cfg = None
    if args.epochs is not None:
        if args.stage == 1:
            cfg.n_e1 = args.epochs
        else:
            cfg.n_e2 = args.epochs
    log = TrainLog(args.log)
    if args.stage == 1:
        from .model import ModelConfig

        params = ModelParams.init(model_cfg or ModelConfig(), seed=args.seed)
        data = build_labeled_dataset(args.count, args.train_n, seed=args.seed)
        train_stage1(params, cfg, data, log)
    else:
        if args.ckpt is None:
            raise GeldError("train --stage 2 requires --ckpt from stage 1")
        params = load_checkpoint(args.ckpt).cast(np.float64)
        for t in params.named().values():
            t.requires_grad = True
        data = build_labeled_dataset(args.count, min(cfg.k_m, 20), seed=args.seed)
        train_stage2(params, cfg, data, log)
    save_checkpoint(params, args.out)
    print(f"saved checkpoint to {args.out}")
    return 0, None


def _cmd_grad_check(args) -> tuple[int, RunReport | None]:
    from .diagnostics import end_to_end_grad_report

    report = end_to_end_grad_report(seed=args.seed, n_nodes=args.nodes)
    for entry in sorted(report.per_parameter, key=lambda e: -e.rel_diff)[:10]:
        print(
            f"{entry.name:<28} analytic={entry.analytic:+.6e} "
            f"numeric={entry.numeric:+.6e} rel={entry.rel_diff:.3e}"
        )
    print(f"max_abs_diff={report.max_abs_diff:.3e} max_rel_diff={report.max_rel_diff:.3e}")
    ok = report.max_rel_diff < 1e-3
    print("PASS" if ok else "FAIL")
    return (0 if ok else 1), None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geld", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic instances")
    p.add_argument("--pattern", choices=PATTERNS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen)

    def common_solve_flags(p):
        p.add_argument("--in", dest="input", required=True)
        p.add_argument("--ckpt", default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--k-m", dest="k_m", type=int, default=100)
        p.add_argument("--beam-width", type=int, default=16)
        p.add_argument("--two-opt-iters", type=int, default=1000)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--ref", default=None, help="JSON file mapping name -> reference length")
        p.add_argument("--report", default=None, help="write the JSON report here")

    p = sub.add_parser("solve", help="solve instances with one method")
    p.add_argument("--mode", choices=SOLVE_MODES, required=True)
    common_solve_flags(p)
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("improve", help="initial tour + parallel re-construction")
    p.add_argument("--init", choices=IMPROVE_INITS, required=True)
    p.add_argument("--prc", type=int, required=True, help="re-construction iterations")
    common_solve_flags(p)
    p.set_defaults(fn=_cmd_improve)

    p = sub.add_parser("bench", help="matrix of methods over a dataset")
    p.add_argument("--methods", default="ri,nn2opt,greedy")
    common_solve_flags(p)
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("train", help="two-stage training (desk preset by default)")
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ckpt", default=None, help="stage-1 checkpoint (stage 2 only)")
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--count", type=int, default=2000, help="labeled training instances")
    p.add_argument("--train-n", type=int, default=10, help="stage-1 instance size")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", default=None, help="JSONL training log path")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("grad-check", help="finite-difference check of the full model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes", type=int, default=10)
    p.set_defaults(fn=_cmd_grad_check)
    return parser


def run_command(argv) -> tuple[int, RunReport | None]:
    """Execute one CLI invocation; returns (exit code, report when the
    command produces one)."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except GeldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1, None


def main() -> None:
    code, _ = run_command(sys.argv[1:])
    raise SystemExit(code)
