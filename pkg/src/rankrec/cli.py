"""Command-line front end: prepare data, train models, emit reports.

Every run is replayable from its manifest: configuration plus seeds
fully determine the outputs. Exit codes: 0 success, 2 usage or input
problems, 3 numeric failure during training.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    MODE_HOLDOUT,
    MODE_PROPORTIONAL,
    MODE_THIRDS,
    SplitSpec,
    binarize,
    filter_min_relevant,
    load_interactions,
    read_partitions,
    sample_negatives,
    split,
    write_partitions,
)
from .errors import ConfigurationError, DivergenceError, RankrecError
from .mainstream import (
    CostProfile,
    cost_weights,
    dis_scores,
    sim_scores,
    util_scores,
    write_user_values,
)
from .metrics import MetricSpec
from .models import TrainConfig, init_model, load_model, save_model
from .report import (
    EvalReport,
    bin_users,
    candidates_of,
    format_table,
    gain_delta,
    improvement_table,
    per_user_eval,
    val_test_correlation,
)
from .trainer import (
    LossSpec,
    default_tracked_metrics,
    evaluate_model,
    select_best_epoch,
    train_ranking,
)

MODE_ALIASES = {
    "80-20": MODE_HOLDOUT,
    MODE_HOLDOUT: MODE_HOLDOUT,
    "thirds": MODE_THIRDS,
    MODE_THIRDS: MODE_THIRDS,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rankrec",
        description="Metric-optimized ranking recommenders with cost-sensitive weighting",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    prep = sub.add_parser("prepare", help="split interactions and sample negatives")
    prep.add_argument("--input", required=True, help="delimited interaction file")
    prep.add_argument("--outdir", required=True)
    prep.add_argument("--config", help="JSON file with defaults for any flag")
    prep.add_argument(
        "--mode",
        default="80-20",
        choices=sorted(MODE_ALIASES),
        help="80-20: per-user holdout with NSR negatives; thirds: even "
        "three-way split with fixed-size evaluation candidate sets",
    )
    prep.add_argument("--seed", type=int, default=0)
    prep.add_argument("--threshold", type=float, default=4.0, help="rating >= threshold is relevant")
    prep.add_argument("--min-relevant", type=int, default=None, help="drop users below this many relevant items (default: the protocol minimum)")
    prep.add_argument("--min-per-partition", type=int, default=5)
    prep.add_argument("--nsr", type=float, default=1.0, help="negatives per positive (80-20 mode)")
    prep.add_argument("--val-fraction", type=float, default=0.0, help="validation share carved from the 80%% train side")
    prep.add_argument("--neg-per-pos", type=int, default=4, help="train negatives per positive (thirds mode)")
    prep.add_argument("--candidates", type=int, default=500, help="evaluation candidate-set size (thirds mode)")
    prep.add_argument("--cap", type=int, default=200, help="cap on relevant items per user (thirds mode)")
    prep.add_argument("--columns", default="0,1,2", help="user,item[,rating] column positions or header names")
    prep.add_argument("--delimiter", default=None)
    prep.set_defaults(func=cmd_prepare)

    train = sub.add_parser("train", help="train a model on prepared partitions")
    train.add_argument("--data", required=True, help="directory from 'prepare'")
    train.add_argument("--outdir", required=True)
    train.add_argument("--config", help="JSON file with defaults for any flag")
    train.add_argument("--loss", default="nrbp-listwise", help="bce or <metric>-<paradigm>, e.g. ndcg-pairwise")
    train.add_argument("--p", type=float, default=0.95, help="persistence for rbp/nrbp losses")
    train.add_argument("--nrbp-delta", default="paper", choices=["paper", "swap"])
    train.add_argument("--epochs", type=int, default=300)
    train.add_argument("--lr", type=float, default=None, help="default: 0.05 for ranking losses, 1e-4 for bce")
    train.add_argument("--l2", type=float, default=None, help="default: 0 for ranking losses, 1e-3 for bce")
    train.add_argument("--factors", type=int, default=32)
    train.add_argument("--optimizer", default=None, choices=["sgd", "adam"], help="default: sgd for ranking losses, adam for bce")
    train.add_argument("--batch-size", type=int, default=512)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--weights", default="none", choices=["none", "sim", "dis", "util"])
    train.add_argument("--contrast", type=float, default=10.0)
    train.add_argument("--util-metric", default="ndcg")
    train.add_argument("--eval-split", default="validation", choices=["validation", "test"])
    train.add_argument("--select-metric", default=None, help="track this metric and checkpoint its best epoch")
    train.add_argument("--no-history", action="store_true", help="skip per-epoch evaluation")
    train.set_defaults(func=cmd_train)

    rep = sub.add_parser("report", help="evaluate a checkpoint and emit bias reports")
    rep.add_argument("--data", help="directory from 'prepare'")
    rep.add_argument("--checkpoint", help="model file from 'train'")
    rep.add_argument("--outdir", required=True)
    rep.add_argument("--config", help="JSON file with defaults for any flag")
    rep.add_argument("--metric", default="ndcg")
    rep.add_argument("--p", type=float, default=0.95)
    rep.add_argument("--split", default="test", choices=["validation", "test"])
    rep.add_argument("--groups", default="quintiles", choices=["quintiles", "p10-50-90", "none"])
    rep.add_argument("--baseline", help="report.json of a baseline run to compare against")
    rep.add_argument("--study", choices=["val-test-corr"], help="run a protocol study instead of a plain report")
    rep.add_argument("--input", help="raw interaction file (val-test-corr study)")
    rep.add_argument("--threshold", type=float, default=4.0)
    rep.add_argument("--min-grid", default="1,2,3,4,5", help="per-partition minimums to sweep (val-test-corr study)")
    rep.add_argument("--train-min", type=int, default=5, help="train-partition minimum (val-test-corr study)")
    rep.add_argument("--candidates", type=int, default=500)
    rep.add_argument("--epochs", type=int, default=100)
    rep.add_argument("--lr", type=float, default=1e-4)
    rep.add_argument("--l2", type=float, default=1e-3)
    rep.add_argument("--factors", type=int, default=32)
    rep.add_argument("--batch-size", type=int, default=512)
    rep.add_argument("--seed", type=int, default=0)
    rep.set_defaults(func=cmd_report)
    return parser


def _apply_config_file(parser, argv):
    """Layer a JSON config under the command line; flags win."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    config = json.loads(Path(known.config).read_text())
    if not isinstance(config, dict):
        raise ConfigurationError("config file must hold a JSON object")
    command = next((a for a in argv if not a.startswith("-")), None)
    subparsers = next(
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    )
    if command not in subparsers.choices:
        raise ConfigurationError("config files require an explicit subcommand")
    sub = subparsers.choices[command]
    valid = {a.dest for a in sub._actions}
    unknown = set(config) - valid
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    sub.set_defaults(**config)
    return parser.parse_args(argv)


def _parse_columns(text):
    parts = [c.strip() for c in text.split(",")]
    if len(parts) not in (2, 3):
        raise ConfigurationError("--columns takes 2 or 3 comma-separated entries")
    keys = ["user", "item", "rating"][: len(parts)]
    if all(p.lstrip("-").isdigit() for p in parts):
        return dict(zip(keys, map(int, parts)))
    return dict(zip(keys, parts))


def cmd_prepare(args):
    mode = MODE_ALIASES[args.mode]
    if mode == MODE_HOLDOUT:
        spec = SplitSpec(
            mode,
            min_relevant_per_partition=args.min_per_partition,
            nsr=args.nsr,
            val_fraction=args.val_fraction,
            seed=args.seed,
        )
    else:
        spec = SplitSpec(
            mode,
            min_relevant_per_partition=args.min_per_partition,
            train_negatives_per_positive=args.neg_per_pos,
            eval_candidate_total=args.candidates,
            relevant_cap=args.cap,
            seed=args.seed,
        )
    dataset, id_maps = load_interactions(
        args.input, schema=_parse_columns(args.columns), delimiter=args.delimiter
    )
    dataset = binarize(dataset, args.threshold)
    min_relevant = args.min_relevant
    if min_relevant is None:
        min_relevant = spec.min_total_relevant
    dataset, kept_users = filter_min_relevant(dataset, min_relevant)
    id_maps = {
        "users": [id_maps["users"][u] for u in kept_users],
        "items": id_maps["items"],
    }
    parts = sample_negatives(split(dataset, spec))
    manifest = write_partitions(args.outdir, parts, id_maps)
    print(f"wrote partitions for {parts.num_users} users, {parts.num_items} items")
    for name, counts in manifest["counts"].items():
        print(
            f"  {name}: {counts['records']} records "
            f"({counts['positives']} positive, {counts['negatives']} negative)"
        )
    return 0


def _train_config_from_args(args, loss):
    ranking = loss.paradigm != "bce"
    lr = args.lr if args.lr is not None else (0.05 if ranking else 1e-4)
    l2 = args.l2 if args.l2 is not None else (0.0 if ranking else 1e-3)
    optimizer = args.optimizer or ("sgd" if ranking else "adam")
    return TrainConfig(
        learning_rate=lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        l2=l2,
        seed=args.seed,
        optimizer=optimizer,
        latent_dim=args.factors,
    )


def _resolve_weights(args, parts, loss, config, outdir):
    """Per-user weight map for cost-sensitive training, or None."""
    if args.weights == "none":
        return None, None
    if args.weights == "sim":
        scores = sim_scores(parts.train)
    elif args.weights == "dis":
        scores = dis_scores(parts.train)
    else:
        print("training unweighted baseline for utility-based mainstreamness")
        baseline = init_model(
            parts.num_users,
            parts.num_items,
            config.latent_dim,
            config.seed,
            variant=_variant_for(loss),
        )
        baseline, _ = train_ranking(baseline, parts, loss, config, tracked_metrics=[])
        spec = MetricSpec(args.util_metric, args.p if args.util_metric in ("rbp", "nrbp") else None)
        if len(parts.validation) == 0:
            raise ConfigurationError(
                "utility weights need a validation partition; prepare with "
                "--mode thirds or --val-fraction > 0"
            )
        _, per_user = evaluate_model(baseline, parts.validation, [spec])
        scores = util_scores(per_user[spec.label], parts.num_users)
        save_model(outdir / "baseline_model.npz", baseline, seed=config.seed)
    weights = cost_weights(scores, CostProfile(args.contrast))
    write_user_values(outdir / "mainstreamness.csv", scores.values, ("user", "mainstreamness"))
    write_user_values(outdir / "weights.csv", weights, ("user", "weight"))
    return weights, scores


def _variant_for(loss):
    return "fm" if loss.paradigm == "bce" else "mf"


def cmd_train(args):
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    parts = read_partitions(args.data)
    loss = LossSpec.parse(args.loss, p=args.p, nrbp_delta=args.nrbp_delta)
    config = _train_config_from_args(args, loss)
    weights, _ = _resolve_weights(args, parts, loss, config, outdir)

    eval_part = getattr(parts, args.eval_split)
    if args.no_history or len(eval_part) == 0:
        tracked = []
    else:
        tracked = default_tracked_metrics(loss)
    snapshot = None
    if args.select_metric:
        snapshot = MetricSpec(
            args.select_metric,
            args.p if args.select_metric in ("rbp", "nrbp") else None,
        )
        if snapshot.label not in {m.label for m in tracked}:
            tracked = tracked + [snapshot]

    model = init_model(
        parts.num_users, parts.num_items, config.latent_dim, config.seed,
        variant=_variant_for(loss),
    )
    model, history = train_ranking(
        model,
        parts,
        loss,
        config,
        weights=weights,
        tracked_metrics=tracked,
        eval_split=args.eval_split,
        snapshot_metric=snapshot,
    )
    best_epochs = {
        spec.label: select_best_epoch(history, spec) for spec in tracked
    }
    save_model(
        outdir / "model.npz",
        model,
        seed=config.seed,
        extra={"loss": loss.name, "best_epochs": best_epochs},
    )
    manifest = {
        "loss": loss.name,
        "nrbp_delta": loss.nrbp_delta,
        "weights": args.weights,
        "contrast": args.contrast if args.weights != "none" else None,
        "config": {
            "learning_rate": config.learning_rate,
            "epochs": config.epochs,
            "batch_size": config.batch_size,
            "l2": config.l2,
            "seed": config.seed,
            "optimizer": config.optimizer,
            "latent_dim": config.latent_dim,
        },
        "eval_split": args.eval_split,
        "best_epochs": best_epochs,
        "history": history.to_dict(),
    }
    (outdir / "run_manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"trained {loss.name} for {history.epochs_run} epochs "
          f"({history.wall_time:.1f}s); model at {outdir / 'model.npz'}")
    for label, epoch in best_epochs.items():
        value = history.metrics[label][epoch]
        print(f"  best {label}: {value:.4f} at epoch {epoch}")
    return 0


def cmd_report(args):
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.study == "val-test-corr":
        return _study_val_test_corr(args, outdir)
    if not args.data or not args.checkpoint:
        raise ConfigurationError("report needs --data and --checkpoint")
    parts = read_partitions(args.data)
    model, _ = load_model(args.checkpoint)
    spec = MetricSpec(args.metric, args.p if args.metric in ("rbp", "nrbp") else None)
    partition = getattr(parts, args.split)
    scores = per_user_eval(model, candidates_of(partition), spec)

    baseline_report = None
    if args.baseline:
        payload = json.loads(Path(args.baseline).read_text())
        baseline_report = EvalReport(
            payload["metric"],
            {int(u): v for u, v in payload["per_user"].items()},
            {k: list(v) for k, v in payload.get("groups", {}).items()} or None,
        )
        if baseline_report.metric_label != spec.label:
            raise ConfigurationError(
                f"baseline report measures {baseline_report.metric_label}, "
                f"requested {spec.label}"
            )

    groups = None
    if args.groups != "none":
        group_source = baseline_report.per_user if baseline_report else scores
        groups = bin_users(group_source, args.groups)
    this_report = EvalReport(spec.label, scores, groups)
    (outdir / "report.json").write_text(json.dumps(this_report.to_dict(), indent=2))
    write_user_values(outdir / "per_user.csv", scores, ("user", spec.label))
    print(f"{spec.label} over {len(scores)} users: mean {this_report.overall:.4f}")

    if baseline_report is not None:
        table = improvement_table(baseline_report, this_report, groups)
        rendered = format_table(table)
        (outdir / "improvement.json").write_text(json.dumps(table, indent=2))
        (outdir / "improvement.txt").write_text(rendered + "\n")
        print(rendered)
        if args.groups == "p10-50-90":
            deltas = [
                table[name]["treated_mean"] - table[name]["baseline_mean"]
                for name in ("bottom10", "mid-low40", "mid-high40", "top10")
            ]
            print(f"gain delta: {gain_delta(deltas):+.4f}")
    elif groups is not None:
        for name, members in groups.items():
            mean = float(np.mean([scores[u] for u in members]))
            print(f"  {name}: {len(members)} users, mean {mean:.4f}")
    return 0


def _study_val_test_corr(args, outdir):
    if not args.input:
        raise ConfigurationError("--study val-test-corr needs --input")
    dataset, _ = load_interactions(args.input)
    dataset = binarize(dataset, args.threshold)
    mins = [int(x) for x in args.min_grid.split(",")]
    grid = []
    for minimum in mins:
        spec = SplitSpec(
            MODE_PROPORTIONAL,
            partition_minimums=(args.train_min, minimum, minimum),
            eval_candidate_total=args.candidates,
            seed=args.seed,
        )
        filtered, _ = filter_min_relevant(dataset, spec.min_total_relevant)
        grid.append(sample_negatives(split(filtered, spec)))
    config = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        l2=args.l2,
        seed=args.seed,
        optimizer="adam",
        latent_dim=args.factors,
    )
    metric = MetricSpec(args.metric, args.p if args.metric in ("rbp", "nrbp") else None)
    results = val_test_correlation(grid, LossSpec("bce"), config, metric)
    for minimum, row in zip(mins, results):
        row["eval_min"] = minimum
        print(
            f"min {minimum} relevant/partition: rmse {row['rmse']:.4f}, "
            f"spearman {row['spearman']:.4f}"
        )
    (outdir / "val_test_correlation.json").write_text(json.dumps(results, indent=2))
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = _apply_config_file(parser, list(argv) if argv is not None else sys.argv[1:])
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (RankrecError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
