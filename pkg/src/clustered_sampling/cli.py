"""Command-line front end: partition, allocate, train, verify.

Any flag may also come from a JSON file given with ``--config``; flags on
the command line win over the file. Exit codes: 0 success, 1 verification
failure, 2 usage error, 3 I/O or format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data, engine, sampling, verify
from .alloc_similarity import MEASURES, allocate_from_dissimilarity, similarity_matrix
from .alloc_size import allocate_by_size, support_bound_check, support_is_contiguous
from .errors import ClusteredSamplingError, InvalidAllocation

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return v


def nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected an integer >= 0, got {text}")
    return v


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _client_sizes(args) -> list[int]:
    if args.dataset:
        return json.loads(Path(args.dataset).read_text())["client_sizes"]
    if args.sizes_profile:
        return data.sizes_profile(args.sizes_profile)
    raise UsageError("one of --dataset or --sizes-profile is required")


# ---------------------------------------------------------------------------

def cmd_partition(args) -> int:
    _require(args, "out")
    if args.source == "synthetic" and args.alpha is None:
        ds = data.make_synthetic(args.groups, args.per_group, args.n_per_client, args.dim,
                                 args.noise, args.seed)
    else:
        if args.alpha is None:
            raise UsageError("--source idx needs --alpha")
        sizes = data.sizes_profile(args.sizes_profile)
        if args.source == "synthetic":
            n_test = sum(data.test_count(s) for s in sizes)
            source = {"kind": "synthetic-pool", "num_classes": args.classes,
                      "size": args.pool_size or sum(sizes), "test_size": n_test,
                      "d_in": args.dim, "noise_sigma": args.noise, "seed": args.seed}
        else:
            _require(args, "images", "labels")
            source = {"kind": "idx", "images": str(args.images), "labels": str(args.labels),
                      "test_images": args.test_images and str(args.test_images),
                      "test_labels": args.test_labels and str(args.test_labels)}
        spec = {"generator": "dirichlet", "seed": args.seed, "source": source,
                "params": {"alpha": args.alpha, "client_sizes": sizes}}
        if args.source == "synthetic":
            spec["num_classes"] = args.classes
        ds = data.build_from_manifest(spec)
    data.save_manifest(ds, args.out)
    print(f"wrote {args.out}: n={ds.n} clients, M={ds.total_train}, C={ds.num_classes}")
    return EXIT_OK


def cmd_allocate(args) -> int:
    _require(args, "out")
    sizes = np.asarray(_client_sizes(args), dtype=np.int64)
    if args.method == "size":
        alloc = allocate_by_size(sizes, args.m)
        detail = None
    else:
        grads = np.load(args.grads) if args.grads else np.zeros((len(sizes), 1))
        if len(grads) != len(sizes):
            raise UsageError(f"--grads has {len(grads)} rows for {len(sizes)} clients")
        detail = allocate_from_dissimilarity(sizes, similarity_matrix(grads, args.measure), args.m)
        alloc = detail.allocation
    sampling.save_allocation(alloc, args.out)

    print(f"allocation m={alloc.m} n={alloc.n} M={alloc.M} -> {args.out}")
    print("unbiasedness: every row sums to M and every column to m*n_i: OK")
    support = alloc.support()
    if (support == 1).all():
        print("support=1 for all clients")
    else:
        print(f"support: min={support.min()} max={support.max()}")
    if args.method == "size":
        print(f"support bound floor(m p_i)+2 holds: {support_bound_check(alloc)}; "
              f"contiguous: {support_is_contiguous(alloc)}")
    print(f"{'client':>6} {'n_i':>7} {'Var_MD':>12} {'Var_Cl':>12} {'P_MD':>9} {'P_Cl':>9}")
    for rec, n_i in zip(sampling.variance_dominance_report(alloc), sizes):
        print(f"{rec.client:>6} {n_i:>7} {rec.var_md:>12.6g} {rec.var_cl:>12.6g} "
              f"{rec.p_md:>9.6f} {rec.p_cl:>9.6f}")

    if args.tree_out and detail is not None:
        tree_txt = (detail.tree.to_text(labels=detail.leaf_clients) if detail.tree else None)
        dump = {"dedicated": detail.dedicated, "tree": tree_txt,
                "groups": detail.cut.groups if detail.cut else [],
                "q": detail.cut.q if detail.cut else []}
        Path(args.tree_out).write_text(json.dumps(dump, indent=1) + "\n")
    return EXIT_OK


def cmd_train(args) -> int:
    _require(args, "dataset", "metrics_out")
    ds = data.load_manifest(args.dataset)
    cfg = engine.LocalUpdateConfig(N=args.N, lr=args.lr, batch=args.batch, mu=args.mu)
    arch = engine.default_arch(ds, args.model, args.hidden)
    result = engine.run_training(ds, args.sampler, cfg, args.rounds, args.seed, m=args.m,
                                 measure=args.measure, arch=arch, threads=args.threads)
    header = {"dataset": Path(args.dataset).name, "sampler": args.sampler, "measure": args.measure,
              "m": args.m, "N": args.N, "lr": args.lr, "batch": args.batch, "mu": args.mu,
              "rounds": args.rounds, "seed": args.seed, "model": args.model, "hidden": args.hidden}
    engine.write_metrics_jsonl(args.metrics_out, header, result.metrics)
    if args.csv_out:
        engine.write_metrics_csv(args.csv_out, result.metrics)
    if result.metrics:
        last = result.metrics[-1]
        print(f"{args.rounds} rounds, final train loss {last.train_loss:.4f}, "
              f"test accuracy {last.test_accuracy}")
    else:
        print("0 rounds")
    return EXIT_OK


def parse_sampler_spec(text: str):
    """A sampler from inline JSON or a JSON file.

    Keys: ``kind`` (uniform | md | size | clustered), ``m``, and either
    ``sizes`` / ``sizes_profile`` or, for ``clustered``, ``allocation`` (CSV path).
    """
    spec = json.loads(text) if text.lstrip().startswith("{") else json.loads(Path(text).read_text())
    kind = spec.get("kind")
    if kind == "clustered":
        return sampling.clustered(sampling.load_allocation(spec["allocation"]))
    sizes = spec["sizes"] if "sizes" in spec else data.sizes_profile(spec["sizes_profile"])
    m = int(spec["m"])
    if m < 1:
        raise UsageError("sampler spec needs m >= 1")
    if kind == "uniform":
        return sampling.uniform(sizes, m)
    if kind == "md":
        return sampling.md(sizes, m)
    if kind == "size":
        return sampling.clustered(allocate_by_size(sizes, m))
    raise UsageError(f"unknown sampler kind {kind!r}")


def cmd_verify(args) -> int:
    _require(args, "sampler_spec")
    trials = args.trials or (verify.FAST_TRIALS if args.fast else verify.DEFAULT_TRIALS)
    try:
        sampler = parse_sampler_spec(args.sampler_spec)
    except InvalidAllocation as e:
        report = {"pass": False, "error": f"invalid allocation: {e}"}
        if args.out:
            Path(args.out).write_text(json.dumps(report, indent=1) + "\n")
        print(f"verification failed: invalid allocation: {e}")
        return EXIT_VERIFY
    report = verify.verify_report(sampler, trials, args.seed, z=args.z, familywise=not args.per_test)
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=1) + "\n")
    hist = report["distinct_histogram"]
    print(f"{report['sampler']} n={report['n']} m={report['m']} trials={trials}: "
          f"{report['failures']} client(s) outside the {report['z_band']:.3f}-sigma band, "
          f"{report['beyond_z']} beyond {args.z} sigma; "
          f"P(all {report['m']} distinct)={hist[-1] / trials:.5f}")
    print("PASS" if report["pass"] else "FAIL")
    return EXIT_OK if report["pass"] else EXIT_VERIFY


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clustered-sampling", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="JSON file supplying default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", help="build a federated dataset manifest")
    p.add_argument("--source", choices=("synthetic", "idx"), default="synthetic")
    p.add_argument("--groups", type=positive_int, default=10)
    p.add_argument("--per-group", type=positive_int, default=10)
    p.add_argument("--n-per-client", type=positive_int, default=500)
    p.add_argument("--dim", type=positive_int, default=20)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--classes", type=positive_int, default=10, help="classes of the synthetic Dirichlet pool")
    p.add_argument("--pool-size", type=positive_int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--sizes-profile", default="paper-unbalanced")
    p.add_argument("--images", type=Path)
    p.add_argument("--labels", type=Path)
    p.add_argument("--test-images", type=Path)
    p.add_argument("--test-labels", type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("allocate", help="compute clustered-sampling distributions")
    p.add_argument("--dataset", type=Path, help="dataset manifest (client sizes are read from it)")
    p.add_argument("--sizes-profile")
    p.add_argument("--m", type=positive_int, default=10)
    p.add_argument("--method", choices=("size", "similarity"), default="size")
    p.add_argument("--measure", choices=MEASURES, default="arccos")
    p.add_argument("--grads", type=Path, help=".npy (n, d) representative gradients")
    p.add_argument("--out", type=Path, help="allocation CSV; a .json sidecar is written next to it")
    p.add_argument("--tree-out", type=Path, help="JSON dump of the merge tree and tree cut")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("train", help="simulate federated training")
    p.add_argument("--dataset", type=Path)
    p.add_argument("--sampler", choices=engine.POLICIES, default="md")
    p.add_argument("--measure", choices=MEASURES, default="arccos")
    p.add_argument("--m", type=positive_int, default=10)
    p.add_argument("--N", type=positive_int, default=50)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch", type=positive_int, default=50)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--rounds", type=nonneg_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", choices=("mlp", "softmax"), default="mlp")
    p.add_argument("--hidden", type=positive_int, default=50)
    p.add_argument("--threads", type=positive_int, default=1)
    p.add_argument("--metrics-out", type=Path)
    p.add_argument("--csv-out", type=Path, help="optional CSV with a 50-round rolling-mean loss column")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="Monte-Carlo check of a sampler against closed forms")
    p.add_argument("--sampler-spec", help="JSON file or inline JSON describing the sampler")
    p.add_argument("--trials", type=positive_int)
    p.add_argument("--fast", action="store_true", help=f"{verify.FAST_TRIALS} trials instead of {verify.DEFAULT_TRIALS}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--z", type=float, default=3.0)
    p.add_argument("--per-test", action="store_true", help="apply the z band per check, without family-wise widening")
    p.add_argument("--out", type=Path, help="JSON report path")
    p.set_defaults(func=cmd_verify)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        try:
            config = json.loads(args.config.read_text())
        except (OSError, ValueError) as e:
            parser.exit(EXIT_IO, f"error: cannot read config {args.config}: {e}\n")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in config.items()})
        args = parser.parse_args(argv)
    return parser, args


def main(argv=None) -> int:
    parser, args = parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError, ClusteredSamplingError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
