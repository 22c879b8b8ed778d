"""``vfl-recon`` command line: train, attack, bench, repro and transcript inspect.

Exit codes: 0 success, 1 failed suite or runtime error, 2 configuration error,
3 attack dimension above the cap.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .attack import AttackReport, attack_accuracy
from .data import load_dataset, save_dataset
from .errors import ConfigError, DimensionCap, VflReconError
from .model import save_checkpoint
from .vfl import collect_inference_transcript, load_transcript, save_transcript

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CAP = 0, 1, 2, 3


def _args_hash(obj: dict) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _load_config(path: str | None) -> ex.RunConfig:
    return ex.RunConfig.load(path) if path else ex.RunConfig.from_dict({})


# --------------------------------------------------------------------- train


def cmd_train(cfg: ex.RunConfig, seed: int, out: Path) -> dict:
    """Train, then record the inference transcript over every row.

    Files: ``config.json``, ``checkpoint.{json,bin}``, ``transcript.vtr``,
    ``metrics.csv``, ``truth.{json,bin}`` (passive ground truth for scoring) and,
    for masquerade runs, ``fabricated_bits.json``.  The last two are evaluation
    aids the active party would never see.
    """
    h = cfg.hash()
    out.mkdir(parents=True, exist_ok=True)
    ex.write_json(out / "config.json", {"config": cfg.to_dict(), "seed": seed}, h)
    prep, res = ex.train(cfg, seed)
    save_checkpoint(res.model, out / "checkpoint", len(res.metrics), extra={"config_hash": h, "seed": seed})
    tr = collect_inference_transcript(res.passive)
    tr.header.update({"config_hash": h, "seed": seed})
    save_transcript(tr, out / "transcript.vtr")
    ex.write_csv(out / "metrics.csv", ["epoch", "loss", "test_acc"],
                 [[m["epoch"], m["train_loss"], m["test_acc"]] for m in res.metrics], h)
    save_dataset(prep.ds.take_columns(prep.passive_cols), out / "truth")
    if res.passive.inference_bits is not None:
        ex.write_json(out / "fabricated_bits.json",
                      {"bits": "".join(str(int(b)) for b in res.passive.inference_bits)}, h)
    summary = {
        "final_loss": res.metrics[-1]["train_loss"],
        "test_acc": res.metrics[-1]["test_acc"],
        "majority_baseline": float(np.mean(prep.ds.labels[prep.test_rows] == np.bincount(prep.ds.labels).argmax())),
        "dropped_passive_columns": prep.dropped,
        "defense": cfg.defense.kind,
    }
    ex.write_json(out / "train.json", summary, h)
    return summary


# -------------------------------------------------------------------- attack


def cmd_attack(transcript_path, spec: ex.AttackSpec, out: Path, seed: int = 0,
               truth: str | None = None, fabricated: str | None = None) -> AttackReport:
    """Attack a saved transcript; score against ``truth`` (a dataset cache prefix) if given."""
    tr = load_transcript(transcript_path)
    h = _args_hash({"transcript": tr.checksum(), "attack": ex.dataclasses.asdict(spec), "seed": seed,
                    "truth": truth, "fabricated": fabricated})
    report = ex.run_attack(spec, tr, seed)
    ex.write_json(out / "attack.json", report.to_json(), h)
    ds = load_dataset(truth) if truth else None
    fab = None
    if fabricated:
        fab = np.frombuffer(json.loads(Path(fabricated).read_text())["bits"].encode(), dtype=np.uint8) - ord("0")
    rows = []
    for i, x in enumerate(report.solutions):
        acc = attack_accuracy(x, ds, range(ds.d)) if ds is not None else float("nan")
        eq = "n/a" if fab is None else int(np.array_equal(x, fab))
        rows.append([i, report.residuals[i], acc, eq])
    if not rows:
        rows.append(["n/a", float("nan"), float("nan"), "n/a"])
    ex.write_csv(out / "accuracy.csv", ["solution", "residual", "accuracy", "equals_fabricated"], rows, h)
    return report


# ----------------------------------------------------------------- commands


def _attack_spec(args, cfg: ex.RunConfig) -> ex.AttackSpec:
    spec = ex.dataclasses.replace(cfg.attack)
    for name in ("algorithm", "r", "trials", "binary_tol", "max_dim", "rank", "objective"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(spec, name, v)
    probe = ex.RunConfig(attack=spec)
    probe.validate()
    return spec


def _run(args) -> int:
    out = Path(args.out)
    if args.command == "train":
        cfg = _load_config(args.config)
        seed = cfg.seeds[0] if args.seed is None else args.seed
        summary = cmd_train(cfg, seed, out)
        print(json.dumps(summary, sort_keys=True))
    elif args.command == "attack":
        cfg = _load_config(args.config)
        spec = _attack_spec(args, cfg)
        report = cmd_attack(args.transcript, spec, out, args.seed or 0, args.truth, args.fabricated)
        print(f"{report.algorithm}: {len(report.solutions)} solution(s) in {report.elapsed:.3f}s")
    elif args.command == "bench":
        if args.d_min > args.d_max:
            raise ConfigError("--d-min must not exceed --d-max")
        params = {"n": args.n, "d": [args.d_min, args.d_max], "algorithm": args.algorithm,
                  "seed": args.seed or 0, "repeats": args.repeats}
        h = _args_hash(params)
        rows, fit = ex.run_bench(args.n, range(args.d_min, args.d_max + 1), args.algorithm,
                                 args.seed or 0, args.max_dim, args.repeats)
        ex.write_csv(out / "timing.csv", ["n", "d_A", "seconds"], rows, h)
        ex.write_json(out / "bench.json", {"params": params, "fit": fit}, h)
        for n, s in fit["slopes"].items():
            print(f"n={n}: log2(seconds) slope vs d_A = {s:.3f}")
        for k, r in fit["ratios"].items():
            print(f"time ratio {k}: {r:.3f}")
    elif args.command == "repro":
        seeds = list(range(args.seed or 0, (args.seed or 0) + args.seeds))
        kwargs = {}
        if args.suite in ("no-defense", "gaussian-sweep", "masquerade"):
            kwargs = {"seeds": seeds, "epochs": args.epochs}
        elif args.suite == "exact-cover":
            kwargs = {"seed": args.seed or 0}
        elif args.suite == "invariance":
            kwargs = {"seed": args.seed or 0}
        result = ex.SUITES[args.suite](**kwargs)
        h = _args_hash({"suite": args.suite, **kwargs})
        name = args.suite.replace("-", "_")
        ex.write_csv(out / f"{name}.csv", result.header, result.rows, h)
        ex.write_json(out / f"{name}.json", {"suite": args.suite, "passed": result.passed,
                                             "lines": result.lines, "summary": result.summary}, h)
        print(result.report())
        return EXIT_OK if result.passed else EXIT_FAIL
    elif args.command == "transcript":
        tr = load_transcript(args.file)
        z = tr.stacked()
        info = {"phase": tr.phase, "frames": len(tr), "k": tr.k, "rows": int(z.shape[0]),
                "unique_rows": int(np.unique(tr.row_ids()).size), "checksum": tr.checksum(), **tr.header}
        print(json.dumps(info, indent=2, sort_keys=True, default=str))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vfl-recon", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="runs"):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="seed (train/attack) or first seed (repro)")
        sp.add_argument("--out", default=out_default, help="output directory")

    common(sub.add_parser("train", help="train and record the inference transcript"))

    a = sub.add_parser("attack", help="attack a recorded transcript")
    a.add_argument("transcript")
    common(a)
    a.add_argument("--algorithm", choices=["equations", "regression"])
    a.add_argument("--r", type=int)
    a.add_argument("--trials", type=int)
    a.add_argument("--binary-tol", type=float)
    a.add_argument("--max-dim", type=int)
    a.add_argument("--rank", type=int, help="attack dimension (default: numerical rank)")
    a.add_argument("--objective", choices=["relative", "absolute"])
    a.add_argument("--truth", help="dataset cache prefix with the true passive features")
    a.add_argument("--fabricated", help="fabricated_bits.json from a masquerade run")

    b = sub.add_parser("bench", help="runtime grid over (n, d_A)")
    common(b)
    b.add_argument("--n", type=int, nargs="+", default=[5000, 10000])
    b.add_argument("--d-min", type=int, default=10)
    b.add_argument("--d-max", type=int, default=20)
    b.add_argument("--algorithm", choices=["equations", "regression"], default="equations")
    b.add_argument("--max-dim", type=int, default=ex.DEFAULT_MAX_DIM)
    b.add_argument("--repeats", type=int, default=1)

    r = sub.add_parser("repro", help="run a reproduction suite")
    r.add_argument("suite", choices=sorted(ex.SUITES))
    common(r)
    r.add_argument("--seeds", type=int, default=len(ex.DEFAULT_SEEDS), help="number of seeds")
    r.add_argument("--epochs", type=int, default=100)

    t = sub.add_parser("transcript", help="transcript utilities")
    tsub = t.add_subparsers(dest="action", required=True)
    ti = tsub.add_parser("inspect", help="print a transcript summary")
    ti.add_argument("file")
    t.set_defaults(out=".")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DimensionCap as exc:
        print(f"dimension cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (VflReconError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
