"""Command-line entry point: ``matchkit {gen-data,train,eval,verify,recover,bench}``.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("matchkit")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _sizes(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None
    if len(out) < 2 or min(out) < 1:
        raise argparse.ArgumentTypeError("need at least two positive sizes")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="matchkit", description="Learn and verify strategy-proof matching mechanisms.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a synthetic JSONL dataset")
    g.add_argument("--n", type=int, required=True, help="number of workers")
    g.add_argument("--m", type=int, help="number of firms (default: n)")
    g.add_argument("--count", type=int, required=True, help="number of instances")
    g.add_argument("--mechanism", choices=["da", "eh", "mh"], required=True, help="example mechanism")
    g.add_argument("--seed", type=int, default=0, help="dataset seed")
    g.add_argument("--t", type=float, default=8.0, help="acceptability threshold on the distance")
    g.add_argument("--squared", action="store_true", help="compare the squared distance with t")
    g.add_argument("--d", type=int, default=10, help="context dimension")
    g.add_argument("--out", required=True, help="output path (.jsonl or .jsonl.gz)")

    t = sub.add_parser("train", help="train NeuralSD on a dataset")
    t.add_argument("--data", required=True, help="training dataset")
    t.add_argument("--epochs", type=int, default=5)
    t.add_argument("--batch-size", type=int, default=4)
    t.add_argument("--tau", type=float, default=0.1, help="SoftSort temperature")
    t.add_argument("--d-emb", type=int, default=10, help="attention embedding size")
    t.add_argument("--lr", type=float, default=0.1, help="Adam learning rate")
    t.add_argument("--clip-l1", type=float, default=10.0, help="max L1 norm of the gradient")
    t.add_argument("--lambda", dest="lam", type=float, default=0.0, help="stability regulariser weight")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True, help="checkpoint path (JSON)")

    e = sub.add_parser("eval", help="evaluate a checkpoint against RSD")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--baseline", choices=["rsd"], default="rsd")
    e.add_argument("--seed", type=int, default=0, help="seed for the RSD baseline")
    e.add_argument("--threads", type=int, help="record-level parallelism (default: MATCHKIT_THREADS or cores)")
    e.add_argument("--out", required=True, help="per-record metrics CSV")

    v = sub.add_parser("verify", help="run property suites")
    v.add_argument("--suite", choices=["sp", "pareto", "irv", "tsd-equiv", "hungarian", "all"], default="all")
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("recover", help="recovery rate of optimal rankings at n = m = 3")
    r.add_argument("--ckpt", required=True, nargs="+", help="one checkpoint per run")
    r.add_argument("--data", required=True, help="n = m = 3 test dataset")
    r.add_argument("--runs", type=int, default=20, help="RSD runs when a single checkpoint is given")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--threads", type=int)
    r.add_argument("--out", required=True, help="per-record CSV")

    b = sub.add_parser("bench", help="wall-time growth of TSD or the ranking block")
    b.add_argument("--op", choices=["tsd", "ranking"], required=True)
    b.add_argument("--sizes", type=_sizes, default=[20, 40, 80], help="comma-separated n values")
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--out", help="CSV path (default: stdout)")
    return p


def _echo_config(args, out_path: str | None = None) -> None:
    cfg = dict(vars(args))
    log.info("config: %s", json.dumps(cfg, sort_keys=True))
    if out_path:
        Path(str(out_path) + ".config.json").write_text(json.dumps(cfg, sort_keys=True, indent=2) + "\n",
                                                        encoding="utf-8")


# --------------------------------------------------------------------------
# commands

def cmd_gen_data(args) -> int:
    from .datagen import DataConfig, generate_dataset, write_dataset

    cfg = DataConfig(args.n, args.m if args.m is not None else args.n, args.count, args.mechanism.upper(),
                     args.seed, args.t, args.d, args.squared)
    _echo_config(args, args.out)
    count = write_dataset(args.out, cfg, generate_dataset(cfg))
    log.info("wrote %d records to %s", count, args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    from .datagen import read_dataset
    from .training import TrainConfig, train

    _, records = read_dataset(args.data)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr, tau=args.tau,
                      d_emb=args.d_emb, clip_l1_max=args.clip_l1, lambda_stability=args.lam, seed=args.seed)
    _echo_config(args, args.out)
    ckpt = train(records, cfg)
    ckpt.save(args.out)
    with open(str(args.out) + ".loss.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "mean_loss"])
        for i, v in enumerate(ckpt.loss_curve, 1):
            w.writerow([i, repr(v)])
    return EXIT_OK


def _stem(path: str) -> str:
    return path[:-4] if path.endswith(".csv") else path


def cmd_eval(args) -> int:
    from .datagen import read_dataset
    from .training import Checkpoint, evaluate

    ckpt = Checkpoint.load(args.ckpt)
    _, records = read_dataset(args.data)
    _echo_config(args, args.out)
    res = evaluate(ckpt.params, records, seed=args.seed, threads=args.threads)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["record_id", "model", "metric", "value"])
        w.writeheader()
        w.writerows(res.rows)
    stem = _stem(args.out)
    Path(stem + ".summary.json").write_text(json.dumps(res.aggregate, indent=2, sort_keys=True) + "\n",
                                            encoding="utf-8")
    with open(stem + ".wilcoxon.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "neuralsd_mean", "rsd_mean", "p_value"])
        for name, p in res.wilcoxon.items():
            w.writerow([name, res.mean("NeuralSD", name), res.mean("RSD", name), p])
    for name, p in res.wilcoxon.items():
        print(f"{name}: NeuralSD {res.mean('NeuralSD', name):.4f}  RSD {res.mean('RSD', name):.4f}  p={p:.3g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_suite

    _echo_config(args)
    ok = True
    for res in run_suite(args.suite, args.trials, args.seed):
        status = "PASS" if res.passed else "FAIL"
        extra = f" {res.stats}" if res.stats else ""
        print(f"{res.name}: {status} ({res.checked} checks){extra}")
        for f in res.failures[:20]:
            print(f"  counterexample: {f}")
        ok &= res.passed
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_recover(args) -> int:
    from .datagen import read_dataset
    from .metrics import optimal_ranking_set, wilcoxon_one_sided
    from .ranking import hard_ranking
    from .training import Checkpoint, rsd_rng, thread_count

    _, records = read_dataset(args.data)
    if any((r.n, r.m) != (3, 3) for r in records):
        raise UsageError("recover needs an n = m = 3 dataset")
    ckpts = [Checkpoint.load(p) for p in args.ckpt]
    runs = len(ckpts) if len(ckpts) > 1 else args.runs
    _echo_config(args, args.out)
    with ThreadPoolExecutor(max_workers=thread_count(args.threads)) as pool:
        opt_sets = list(pool.map(lambda r: optimal_ranking_set(r.profile, r.example), records))

    nn_hits = np.zeros((runs, len(records)), dtype=bool)
    rsd_hits = np.zeros((runs, len(records)), dtype=bool)
    for k in range(runs):
        params = ckpts[k if len(ckpts) > 1 else 0].params
        for rid, (rec, opt) in enumerate(zip(records, opt_sets)):
            r_nn = hard_ranking(rec.instance.contexts_w, rec.instance.contexts_f, params)
            nn_hits[k, rid] = tuple(int(a) for a in r_nn) in opt
            r_rsd = rsd_rng(args.seed + k, rid).permutation(6)
            rsd_hits[k, rid] = tuple(int(a) for a in r_rsd) in opt

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["record_id", "optimal_set_size", "neuralsd_hit_rate", "rsd_hit_rate"])
        for rid, opt in enumerate(opt_sets):
            w.writerow([rid, len(opt), nn_hits[:, rid].mean(), rsd_hits[:, rid].mean()])
    nn_rates, rsd_rates = nn_hits.mean(axis=1), rsd_hits.mean(axis=1)
    try:
        p = wilcoxon_one_sided(nn_rates, rsd_rates, alternative="greater")
    except ValueError:
        p = float("nan")
    summary = {
        "runs": runs,
        "neuralsd": {"mean": float(nn_rates.mean()), "std": float(nn_rates.std())},
        "rsd": {"mean": float(rsd_rates.mean()), "std": float(rsd_rates.std())},
        "expected_rsd": float(np.mean([len(o) / 720 for o in opt_sets])),
        "wilcoxon_p": p,
    }
    Path(_stem(args.out) + ".summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"recovery NeuralSD {summary['neuralsd']['mean']:.4f} +- {summary['neuralsd']['std']:.4f}  "
          f"RSD {summary['rsd']['mean']:.4f} +- {summary['rsd']['std']:.4f}  p={p:.3g}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_bench

    _echo_config(args, args.out)
    rows, slope = run_bench(args.op, args.sizes, repeats=args.repeats)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["op", "n", "seconds"])
        for row in rows:
            w.writerow([row.op, row.n, f"{row.seconds:.6g}"])
    finally:
        if args.out:
            fh.close()
    print(f"log-log slope ({args.op}): {slope:.3f}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "verify": cmd_verify,
    "recover": cmd_recover,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:          # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"matchkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - map every runtime failure to exit 3
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
