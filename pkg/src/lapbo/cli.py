"""Command-line driver.

    lapbo [--config FILE] [--seed N] [--out DIR] [--set key=value ...] <command> ...

Commands: gen-data, train, curvature, eval-point, search, report, run, show-config.
``--seed`` is the master search seed: it sets ``search.seed`` (and with it the
evaluation seed) for ``search``/``eval-point`` and ``experiment.seed`` for ``run``.
Dataset, init and training seeds come from the config.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .curvature import diagonal_fisher, load_curvature, save_curvature
from .data import write_csv
from .experiment import (
    ExperimentConfig,
    StageError,
    evaluate_point,
    load_config,
    load_or_train,
    make_context,
    make_splits,
    report,
    run_experiment,
    run_search,
    save_cached,
    search_meta,
    train_network,
)
from .metrics import score
from .nn import forward_batch, load_network

log = logging.getLogger("lapbo")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["search.seed"] = str(args.seed)
        overrides["experiment.seed"] = str(args.seed)
    return cfg.with_overrides(**overrides) if overrides else cfg


def _out(args, cfg) -> Path:
    out = Path(args.out or cfg.experiment.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _point(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def cmd_gen_data(args, cfg):
    out = _out(args, cfg)
    splits = make_splits(cfg)
    for name in ("train", "val", "test"):
        d = getattr(splits, name)
        if d is not None:
            write_csv(d, out / "data" / f"{name}.csv")
            print(out / "data" / f"{name}.csv")


def cmd_train(args, cfg):
    out = _out(args, cfg)
    splits = make_splits(cfg)
    net = train_network(cfg, splits.train)
    save_cached(out / "network.bin", "network", net.arch, net.params, cfg)
    base = score(forward_batch(net, splits.val.inputs), splits.val.labels, cfg.metrics.m_bins)
    print(json.dumps({"network": str(out / "network.bin"), "val": asdict(base)}, sort_keys=True))


def cmd_curvature(args, cfg):
    out = _out(args, cfg)
    net = load_network(args.network or out / "network.bin")
    curv = diagonal_fisher(net, make_splits(cfg).train)
    if args.network:
        save_curvature(curv, out / "curvature.bin")
    else:
        save_cached(out / "curvature.bin", "curvature", curv.arch, curv.diag, cfg)
    print(out / "curvature.bin")


def _context(args, cfg, out):
    splits = make_splits(cfg)
    if getattr(args, "network", None):
        net = load_network(args.network)
        curv = load_curvature(args.curvature or out / "curvature.bin", net.arch)
    else:
        net, curv = load_or_train(cfg, splits, out)
    return make_context(cfg, net, curv, splits.val)


def cmd_eval_point(args, cfg):
    point = _point(args.point)
    expected = 2 * len(cfg.layout)
    if len(point) != expected:
        raise ValueError(f"point needs {expected} coordinates for groups={cfg.laplace.groups}")
    ctx = _context(args, cfg, _out(args, cfg))
    rec = evaluate_point(point, ctx, cfg.search_config().eval_seed)
    print(rec.to_json())


def cmd_search(args, cfg):
    out = _out(args, cfg)
    ctx = _context(args, cfg, out)
    scfg = cfg.search_config()
    trace = Path(args.trace) if args.trace else out / "traces" / f"{args.method}_seed{scfg.seed}.jsonl"
    records = run_search(args.method, ctx, scfg, trace, search_meta(cfg, ctx.baseline()))
    best = min(records, key=lambda r: r.cost)
    print(json.dumps({"trace": str(trace), "best": json.loads(best.to_json())}, sort_keys=True))


def cmd_report(args, cfg):
    out = _out(args, cfg)
    written = report(args.traces, out / "summary")
    for name, path in written.items():
        print(f"{name}\t{path}")


def cmd_run(args, cfg):
    art = run_experiment(cfg, _out(args, cfg))
    for name, path in art.summary.items():
        print(f"{name}\t{path}")


def cmd_show_config(args, cfg):
    sys.stdout.write(cfg.to_text())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lapbo", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="master search seed (non-negative)")
    p.add_argument("--out", help="output directory (default: experiment.out)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", help="write train/val(/test) CSV files").set_defaults(fn=cmd_gen_data)
    sub.add_parser("train", help="train the MAP network").set_defaults(fn=cmd_train)
    s = sub.add_parser("curvature", help="diagonal Fisher of a trained network")
    s.add_argument("--network", help="network file (default: OUT/network.bin)")
    s.set_defaults(fn=cmd_curvature)

    for name, fn in (("eval-point", cmd_eval_point), ("search", cmd_search)):
        s = sub.add_parser(name)
        s.add_argument("--network", help="use this network file instead of training/caching")
        s.add_argument("--curvature", help="curvature file matching --network")
        s.set_defaults(fn=fn)
        if name == "eval-point":
            s.add_argument("point", help="log10 coords, e.g. '3.3,-1' (n1, tau1, n2, tau2, ...)")
        else:
            s.add_argument("--method", choices=("bo", "random"), required=True)
            s.add_argument("--trace", help="trace path (default: OUT/traces/METHOD_seedN.jsonl)")

    s = sub.add_parser("report", help="summary CSVs from trace files")
    s.add_argument("traces", nargs="+")
    s.set_defaults(fn=cmd_report)
    sub.add_parser("run", help="full experiment: data, training, all repetitions, report"
                   ).set_defaults(fn=cmd_run)
    sub.add_parser("show-config", help="print the effective config").set_defaults(fn=cmd_show_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2
    try:
        cfg = _config(args)
        args.fn(args, cfg)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
