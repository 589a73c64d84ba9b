"""Command-line entry point: ``spin <subcommand> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from contextlib import nullcontext
from dataclasses import fields, replace
from pathlib import Path

from spin import lab
from spin.data import (
    DataError, build_features, load_tu_dataset, precompute_dataset, read_bank_cache, stratified_kfold,
)
from spin.graph import OperatorKind, read_edgelist
from spin.model import GraphSet, SpinConfig
from spin.nn import make_rng, save_checkpoint
from spin.training import (
    HYPERPARAMETER_GRID, NonFiniteLoss, TrainConfig, cross_validate, evaluate, train_model,
)
from spin.wl import wl_distinguish

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("spin")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _on_off(text: str) -> bool:
    t = text.strip().lower()
    if t in ("on", "true", "1", "yes"):
        return True
    if t in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def read_config_file(path) -> dict:
    """Flat ``key = value`` file (``#`` comments); returns raw strings."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}")
    try:
        parser.read_string("[spin]\n" + text)
    except configparser.Error as exc:
        raise DataError(f"{path}: {exc}")
    return dict(parser["spin"])


# --- argument definitions ----------------------------------------------------

def _common(p):
    p.add_argument("--seed", type=int, default=0, help="seed for every random stream (default 0)")
    p.add_argument("--threads", type=int, default=1, help="maximum worker threads/processes (default 1)")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded numeric reductions for byte-identical output")
    p.add_argument("--out", default=".", help="output directory (default: working directory)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _dataset_args(p):
    p.add_argument("--dataset", required=True, help="TU dataset name, e.g. PROTEINS")
    p.add_argument("--dir", default="data", help="directory holding the dataset files (default data/)")
    p.add_argument("--features", choices=["onehot", "degree", "attributes+onehot"],
                   help="node feature scheme (default chosen from the available files)")
    p.add_argument("--R", type=int, help="highest operator power (default 3)")
    p.add_argument("--operator", choices=[k.value for k in OperatorKind],
                   help="aggregation operator (default adjacency)")


def _model_args(p):
    p.add_argument("--config", help="flat key = value file with model/training settings")
    p.add_argument("--attention", type=_on_off, help="attention-weighted readout on/off (default on)")
    p.add_argument("--readout", choices=["sum", "mean", "max"], help="branch readout (default sum)")
    p.add_argument("--hidden-dim", type=int, help="intermediate dimension (default 16)")
    p.add_argument("--dropout", type=float, help="dropout rate (default 0)")
    p.add_argument("--batch-size", type=int, help="minibatch size (default 32)")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 1e-3)")
    p.add_argument("--l2", type=float, help="L2 coefficient (default 0)")
    p.add_argument("--epochs", type=int, help="maximum epochs (default 200)")
    p.add_argument("--patience", type=int, help="early-stopping patience in epochs (default 30)")
    p.add_argument("--dtype", choices=["float64", "float32"], help="numeric precision (default float64)")
    p.add_argument("--k", type=int, default=10, help="number of folds (default 10)")


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="spin", description="Parallel-aggregation graph classifier toolkit.")
    sub = root.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("precompute", help="build and cache operator banks for a dataset")
    _dataset_args(p)
    _common(p)
    p.add_argument("--cache", help="cache file name (default <dataset>-R<R>.bank in --out)")

    p = sub.add_parser("train", help="train on one fold's train/val split and report test accuracy")
    _dataset_args(p)
    _model_args(p)
    _common(p)
    p.add_argument("--fold", type=int, default=0, help="fold index to train on (default 0)")
    p.add_argument("--bank", help="SPINBANK cache to use instead of recomputing")

    p = sub.add_parser("cv", help="k-fold cross-validation")
    _dataset_args(p)
    _model_args(p)
    _common(p)
    p.add_argument("--repeats", type=int, help="trainings per fold (default 3)")
    p.add_argument("--grid", action="store_true", help="select hyperparameters per fold from the dataset's grid")
    p.add_argument("--auroc", action="store_true", help="also report AUROC (binary datasets only)")

    p = sub.add_parser("wl-test", help="1-WL test on two edge-list files")
    p.add_argument("--g1", required=True, help="first graph (edge-list file)")
    p.add_argument("--g2", required=True, help="second graph (edge-list file)")
    p.add_argument("--max-iters", type=int, help="iteration cap (default: node count)")
    p.add_argument("--uniform", action="store_true", help="ignore node features, start from one color")
    _common(p)

    p = sub.add_parser("lemmas", help="readout collision and attention injectivity demos")
    p.add_argument("--which", choices=["1", "2", "3", "all"], default="all", help="demo to run (default all)")
    p.add_argument("--n1", type=int, default=6, help="nodes of the first regular graph (default 6)")
    p.add_argument("--n2", type=int, default=3, help="nodes of the second regular graph (default 3)")
    p.add_argument("--k", type=int, default=2, help="degree of the regular graphs (default 2)")
    p.add_argument("--trials", type=int, default=10000, help="injectivity probe trials (default 10000)")
    p.add_argument("--random-w", type=int, default=100, help="random scalar weights in demo 1 (default 100)")
    _common(p)

    p = sub.add_parser("power", help="agreement of random-parameter embeddings with 1-WL")
    p.add_argument("--pairs", type=int, default=500, help="WL-distinguished pairs to collect (default 500)")
    p.add_argument("--max-nodes", type=int, default=8, help="largest graph size, at most 8 (default 8)")
    p.add_argument("--tau", type=float, default=1e-6, help="separation threshold (default 1e-6)")
    _common(p)

    p = sub.add_parser("bench", help="training epoch time versus edge density")
    p.add_argument("--N", type=int, default=200, help="nodes per graph (default 200)")
    p.add_argument("--d", type=int, default=16, help="feature dimension (default 16)")
    p.add_argument("--R", type=int, default=3, help="highest operator power (default 3)")
    p.add_argument("--densities", type=_floats, default=[0.05, 0.5], help="comma-separated (default 0.05,0.5)")
    p.add_argument("--epochs", type=int, default=7, help="timed epochs after one warm-up (default 7)")
    p.add_argument("--graphs", type=int, default=32, help="graphs per density (default 32)")
    _common(p)
    return root


# --- helpers -------------------------------------------------------------------

def _settings(args):
    """Merge config file and flags into ``(SpinConfig kwargs, TrainConfig)``."""
    raw = read_config_file(args.config) if getattr(args, "config", None) else {}
    model_keys = {f.name for f in fields(SpinConfig)}
    train_keys = {f.name for f in fields(TrainConfig)}
    unknown = set(raw) - model_keys - train_keys
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg = SpinConfig.from_mapping({k: v for k, v in raw.items() if k in model_keys})
    tc_kwargs = {}
    for f in fields(TrainConfig):
        if f.name in raw:
            tc_kwargs[f.name] = type(f.default)(raw[f.name])
    flag_model = {
        "R": args.R, "operator": args.operator, "attention": args.attention, "readout": args.readout,
        "hidden_dim": args.hidden_dim, "dropout_rate": args.dropout, "dtype": args.dtype,
    }
    flag_train = {
        "batch_size": args.batch_size, "learning_rate": args.lr, "l2": args.l2,
        "max_epochs": args.epochs, "patience": args.patience, "seed": args.seed,
        "repeats_per_fold": getattr(args, "repeats", None),
    }
    cfg = replace(cfg, **{k: v for k, v in flag_model.items() if v is not None})
    tc = TrainConfig(**{**tc_kwargs, **{k: v for k, v in flag_train.items() if v is not None}})
    return cfg, tc


def _load_graphs(args, cfg: SpinConfig, R: int, bank=None):
    ds = load_tu_dataset(args.dir, args.dataset)
    ds = build_features(ds, args.features)
    if bank:
        pgs = read_bank_cache(bank)
        if len(pgs) != len(ds) or pgs[0].bank.R < R:
            raise DataError(f"{bank}: cache does not match {args.dataset} with R={R}")
        for pg, g in zip(pgs, ds.graphs):
            pg.label = g.label
    else:
        pgs = precompute_dataset(ds, cfg.operator, R, threads=max(args.threads, 1))
    cfg = replace(cfg, input_dim=ds.feature_dim, num_classes=ds.num_classes)
    graphs = GraphSet.from_graphs(pgs, cfg.np_dtype)
    if graphs.R > R:
        graphs = GraphSet(graphs.xs[: R + 1], graphs.offsets, graphs.labels)
    return ds, graphs, cfg


def _out(args, name: str) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _curves_csv(curves: dict) -> str:
    rows = ["fold,repeat,epoch,train_loss,val_acc"]
    for (fold, rep), curve in sorted(curves.items()):
        rows += [f"{fold},{rep},{e},{loss:.6f},{acc:.6f}" for e, loss, acc in curve]
    return "\n".join(rows) + "\n"


# --- subcommands -----------------------------------------------------------------

def cmd_precompute(args) -> int:
    R = 3 if args.R is None else args.R
    ds = build_features(load_tu_dataset(args.dir, args.dataset), args.features)
    path = _out(args, args.cache or f"{args.dataset}-R{R}.bank")
    precompute_dataset(ds, args.operator or "adjacency", R, cache_path=path, threads=max(args.threads, 1))
    print(f"wrote {len(ds)} banks (R={R}, d={ds.feature_dim}) to {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg, tc = _settings(args)
    ds, graphs, cfg = _load_graphs(args, cfg, cfg.R, args.bank)
    plan = stratified_kfold(graphs.labels, args.k, args.seed)
    if not 0 <= args.fold < len(plan):
        raise UsageError(f"--fold must be in [0, {len(plan)})")
    fold = plan.folds[args.fold]
    res = train_model(cfg, graphs.subset(fold.train), graphs.subset(fold.val), tc)
    test = evaluate(res.params, cfg, graphs.subset(fold.test))
    save_checkpoint(_out(args, "model.ckpt"), cfg.to_text(), res.params.arrays())
    _out(args, "curves.csv").write_text(_curves_csv({(args.fold, 0): res.curves}))
    print(f"best epoch {res.best_epoch}, val accuracy {res.best_val_accuracy:.4f}, "
          f"test accuracy {test['accuracy']:.4f}")
    return EXIT_OK


def cmd_cv(args) -> int:
    cfg, tc = _settings(args)
    grid = None
    if args.grid:
        key = args.dataset.upper()
        if key not in HYPERPARAMETER_GRID:
            raise UsageError(f"no hyperparameter grid for {args.dataset}; known: {', '.join(HYPERPARAMETER_GRID)}")
        grid = dict(HYPERPARAMETER_GRID[key])
        if args.R is not None:
            grid["R"] = [r for r in grid["R"] if r <= args.R] or [args.R]
    R = max(grid["R"]) if grid else cfg.R
    ds, graphs, cfg = _load_graphs(args, replace(cfg, R=R), R)
    plan = stratified_kfold(graphs.labels, args.k, args.seed)
    workers = 1 if args.deterministic else max(args.threads, 1)
    result = cross_validate(graphs, plan, cfg, tc, grid=grid, with_auroc=args.auroc, workers=workers)
    csv_text = result.to_csv()
    _out(args, "cv.csv").write_text(csv_text)
    _out(args, "curves.csv").write_text(_curves_csv(result.curves))
    sys.stdout.write(csv_text)
    print(f"{args.dataset}: {result.summary()}")
    print(f"mean ± std: {100 * result.mean:.2f} ± {100 * result.std:.2f}")
    return EXIT_OK


def cmd_wl_test(args) -> int:
    g1, g2 = read_edgelist(args.g1), read_edgelist(args.g2)
    verdict = wl_distinguish(g1, g2, args.max_iters, use_features=not args.uniform)
    print(verdict)
    if verdict.distinguished:
        print(f"first differing iteration: {verdict.iteration}")
    return EXIT_OK


def cmd_lemmas(args) -> int:
    rng = make_rng(args.seed)
    reports = []
    if args.which in ("1", "all"):
        Ws = [[1.0], [-1.0]] + [[w] for w in rng.normal(size=args.random_w)]
        reports.append(("lemma1-relu", lab.lemma1_demo(Ws, "relu")))
        reports.append(("lemma1-leaky", lab.lemma1_demo(Ws, "leaky_relu")))
    if args.which in ("2", "all"):
        reports.append(("lemma2", lab.lemma2_probe(args.trials, 8, make_rng(args.seed, 2))))
    if args.which in ("3", "all"):
        try:
            lab.regular_pair(args.n1, args.n2, args.k)
        except ValueError as exc:
            raise UsageError(str(exc))
        for readout in ("mean", "max", "sum"):
            rep = lab.lemma3_demo(args.n1, args.n2, args.k, readout, seed=args.seed)
            reports.append((f"lemma3-{readout}", rep))
    for name, rep in reports:
        sys.stdout.write(rep.to_text())
        _out(args, f"{name}.txt").write_text(rep.to_text())
        _out(args, f"{name}.csv").write_text(rep.to_csv())
    return EXIT_OK


def cmd_power(args) -> int:
    if not 1 <= args.max_nodes <= 8:
        raise UsageError("--max-nodes must be in [1, 8]")
    rep = lab.theorem1_experiment(args.pairs, args.max_nodes, args.tau, args.seed)
    _out(args, "power.csv").write_text(rep.to_csv())
    sys.stdout.write(rep.to_text())
    return EXIT_OK


def cmd_bench(args) -> int:
    from spin.bench import bench_edge_independence, density_ratio, rows_to_csv

    rows = bench_edge_independence(args.N, args.d, args.R, args.densities, args.epochs, args.graphs,
                                   seed=args.seed)
    _out(args, "bench.csv").write_text(rows_to_csv(rows))
    for r in rows:
        print(f"density {r.density:g}: mean edges {r.edges}, precompute {r.precompute_seconds:.4f}s, "
              f"median epoch {r.median_epoch:.4f}s")
    if len(rows) > 1:
        print(f"epoch time ratio densest/sparsest: {density_ratio(rows):.3f}")
    return EXIT_OK


COMMANDS = {
    "precompute": cmd_precompute, "train": cmd_train, "cv": cmd_cv, "wl-test": cmd_wl_test,
    "lemmas": cmd_lemmas, "power": cmd_power, "bench": cmd_bench,
}


def _thread_limit(args):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(1 if args.deterministic else max(args.threads, 1))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit(args):
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"spin {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"spin {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteLoss, FloatingPointError) as exc:
        print(f"spin {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"spin {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
