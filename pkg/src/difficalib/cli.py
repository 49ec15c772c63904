"""Command-line pipeline: synth, fit, score, rank, train, eval, selective,
ood, bucket-error.

Every subcommand is a thin composition of library operations; the effective
configuration is echoed in a one-line JSON summary on stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import classifier, difficulty, embedding_store, gaussian, metrics, synthetic
from .errors import DifficalibError

SMALL_K_ALPHA = 0.3
LARGE_K_ALPHA = 0.2
SMALL_K_LIMIT = 100


def _summary(command: str, config: dict, outputs: list[str]) -> None:
    print(json.dumps({"command": command, "config": config, "outputs": outputs}))


def _parse_hidden(text: str) -> tuple[int, ...]:
    if not text:
        return ()
    return tuple(int(v) for v in text.split(","))


def _parse_epoch_list(text: str) -> tuple[int, ...]:
    if not text:
        return ()
    return tuple(int(v) for v in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="difficalib")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a Gaussian-mixture embedding dataset")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--per-class", type=int, default=500)
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--id-start", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="fit the Gaussian bank on an embedding file")
    p.add_argument("--data", required=True)
    p.add_argument("--shrinkage", type=float, default=gaussian.DEFAULT_SHRINKAGE)
    p.add_argument("--out", required=True)

    p = sub.add_parser("score", help="compute per-sample difficulty scores")
    p.add_argument("--data", required=True)
    p.add_argument("--bank")
    p.add_argument("--scorer", choices=["rmd", "md", "kmeans"], default="rmd")
    p.add_argument("--T", type=float, default=difficulty.DEFAULT_TEMPERATURE)
    p.add_argument("--c", type=float, default=difficulty.DEFAULT_OFFSET)
    p.add_argument("--clusters", type=int)
    p.add_argument("--kmeans-iters", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--average", nargs="+", metavar="CSV",
                   help="average these score files instead of scoring")
    p.add_argument("--out", required=True)

    p = sub.add_parser("rank", help="per-class hardest/easiest sample ids")
    p.add_argument("--data", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--top-k", type=int, default=8)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a softmax head on embeddings")
    p.add_argument("--data", required=True)
    p.add_argument("--loss", choices=list(classifier.LOSS_KINDS), default="ce")
    p.add_argument("--alpha", type=float, default=None,
                   help=f"default {SMALL_K_ALPHA} for K <= {SMALL_K_LIMIT}, else {LARGE_K_ALPHA}")
    p.add_argument("--scores")
    p.add_argument("--T", type=float, default=difficulty.DEFAULT_TEMPERATURE)
    p.add_argument("--c", type=float, default=difficulty.DEFAULT_OFFSET)
    p.add_argument("--ls-epsilon", type=float, default=0.1)
    p.add_argument("--focal-gamma", type=float, default=3.0)
    p.add_argument("--l1-coeff", type=float, default=0.01)
    p.add_argument("--poly-epsilon", type=float, default=2.0)
    p.add_argument("--hidden", type=_parse_hidden, default=())
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--decay-epochs", type=_parse_epoch_list, default=())
    p.add_argument("--decay-factor", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-data")
    p.add_argument("--log")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="accuracy/ECE/NLL report, optionally comparing models")
    p.add_argument("--model")
    p.add_argument("--compare", nargs="+", metavar="MODEL")
    p.add_argument("--data", required=True)
    p.add_argument("--bins", type=int, default=metrics.DEFAULT_BINS)
    p.add_argument("--out")
    p.add_argument("--csv", help="flat metric,value rows")
    p.add_argument("--reliability-csv", help="per-bin confidence/accuracy/count rows")

    p = sub.add_parser("selective", help="accuracy vs rejection-rate curve")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--score", choices=["entropy", "msp", "maxlogit"], default="entropy")
    p.add_argument("--out", required=True)

    p = sub.add_parser("ood", help="OOD detection metrics from predictive uncertainty")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="in-distribution split")
    p.add_argument("--ood-data", required=True)
    p.add_argument("--out")

    p = sub.add_parser("bucket-error", help="error rate per difficulty bucket")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--bucket-size", type=int, required=True)
    p.add_argument("--out", required=True)

    return parser


def _cmd_synth(args) -> None:
    spec = synthetic.MixtureSpec(
        num_classes=args.classes,
        dim=args.dim,
        samples_per_class=args.per_class,
        separation=args.separation,
        seed=args.seed,
        id_start=args.id_start,
    )
    ds = synthetic.generate_mixture(spec)
    embedding_store.save_dataset(ds, args.out)
    sidecar = args.out + ".json"
    with open(sidecar, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2)
        fh.write("\n")
    _summary("synth", spec.to_dict(), [args.out, sidecar])


def _cmd_fit(args) -> None:
    ds = embedding_store.load_dataset(args.data)
    bank = gaussian.fit_gaussian_bank(ds, args.shrinkage)
    gaussian.save_bank(bank, args.out)
    _summary("fit", {"data": args.data, "shrinkage": args.shrinkage}, [args.out])


def _cmd_score(args) -> None:
    ds = embedding_store.load_dataset(args.data)
    config = {"data": args.data, "scorer": args.scorer, "T": args.T, "c": args.c}
    if args.average:
        runs = [difficulty.import_scores(path, ds, args.T, args.c) for path in args.average]
        scores = difficulty.average_scores(runs)
        config["average"] = args.average
    else:
        bank = gaussian.load_bank(args.bank) if args.bank else None
        scores = difficulty.score_dataset(
            bank, ds, args.scorer, args.T, args.c,
            clusters=args.clusters, kmeans_iters=args.kmeans_iters, seed=args.seed,
        )
        config["bank"] = args.bank
    difficulty.save_scores(scores, args.out)
    _summary("score", config, [args.out])


def _cmd_rank(args) -> None:
    ds = embedding_store.load_dataset(args.data)
    scores = difficulty.import_scores(args.scores, ds)
    report = difficulty.rank_report(scores, ds, args.top_k)
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    _summary("rank", {"data": args.data, "scores": args.scores, "top_k": args.top_k}, [args.out])


def _cmd_train(args) -> None:
    ds = embedding_store.load_dataset(args.data)
    alpha = args.alpha
    if alpha is None:
        alpha = SMALL_K_ALPHA if ds.num_classes <= SMALL_K_LIMIT else LARGE_K_ALPHA
    scores = None
    if args.loss == "difficulty_er":
        if not args.scores:
            raise DifficalibError("difficulty_er requires --scores")
        scores = difficulty.import_scores(args.scores, ds, args.T, args.c)
    loss_cfg = classifier.LossConfig(
        kind=args.loss,
        alpha=alpha,
        ls_epsilon=args.ls_epsilon,
        focal_gamma=args.focal_gamma,
        l1_coeff=args.l1_coeff,
        poly_epsilon=args.poly_epsilon,
    )
    optim_cfg = classifier.OptimConfig(
        learning_rate=args.lr,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        lr_decay_epochs=args.decay_epochs,
        lr_decay_factor=args.decay_factor,
    )
    val = embedding_store.load_dataset(args.val_data) if args.val_data else None
    model, log = classifier.train(
        ds, scores, loss_cfg, optim_cfg, hidden_sizes=args.hidden, val=val
    )
    classifier.save_model(model, args.out)
    outputs = [args.out]
    if args.log:
        with open(args.log, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_acc", "val_ece"])
            for entry in log:
                writer.writerow([
                    entry["epoch"],
                    f"{entry['train_loss']:.17g}",
                    "" if entry["val_acc"] is None else f"{entry['val_acc']:.17g}",
                    "" if entry["val_ece"] is None else f"{entry['val_ece']:.17g}",
                ])
        outputs.append(args.log)
    config = {
        "loss": loss_cfg.__dict__,
        "optim": {**optim_cfg.__dict__, "lr_decay_epochs": list(optim_cfg.lr_decay_epochs)},
        "hidden": list(args.hidden),
        "scores": args.scores,
    }
    _summary("train", config, outputs)


def _cmd_eval(args) -> None:
    ds = embedding_store.load_dataset(args.data)
    if args.compare:
        rows = []
        for path in args.compare:
            model = classifier.load_model(path)
            logits, _ = classifier.predict(model, ds.features)
            report = metrics.eval_report(logits, ds.labels, ids=ds.ids, bins=args.bins,
                                         with_detection=False)
            rows.append({"model": path, "accuracy": report.accuracy, "ece": report.ece,
                         "nll": report.nll})
        if args.out:
            with open(args.out, "w") as fh:
                json.dump(rows, fh, indent=2)
                fh.write("\n")
        _summary("eval", {"data": args.data, "bins": args.bins, "compare": args.compare},
                 [args.out] if args.out else [])
        return
    if not args.model:
        raise DifficalibError("eval requires --model or --compare")
    model = classifier.load_model(args.model)
    logits, _ = classifier.predict(model, ds.features)
    report = metrics.eval_report(logits, ds.labels, ids=ds.ids, bins=args.bins,
                                 with_risk_coverage=True)
    outputs = []
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")
        outputs.append(args.out)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            writer.writerow(["accuracy", f"{report.accuracy:.17g}"])
            writer.writerow(["ece", f"{report.ece:.17g}"])
            writer.writerow(["nll", f"{report.nll:.17g}"])
            if report.detection:
                for kind, d in report.detection.items():
                    writer.writerow([f"auroc_{kind}", f"{d.auroc:.17g}"])
                    writer.writerow([f"aupr_{kind}", f"{d.aupr:.17g}"])
                    writer.writerow([f"fpr95_{kind}", f"{d.fpr_at_95_tpr:.17g}"])
        outputs.append(args.csv)
    if args.reliability_csv:
        with open(args.reliability_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin", "confidence", "accuracy", "count"])
            for i, b in enumerate(report.bins):
                writer.writerow([i, f"{b.confidence:.17g}", f"{b.accuracy:.17g}", b.count])
        outputs.append(args.reliability_csv)
    _summary("eval", {"model": args.model, "data": args.data, "bins": args.bins}, outputs)


_SCORE_KEYS = {"entropy": "entropy", "msp": "msp_negated", "maxlogit": "maxlogit_negated"}


def _cmd_selective(args) -> None:
    ds = embedding_store.load_dataset(args.data)
    model = classifier.load_model(args.model)
    logits, probs = classifier.predict(model, ds.features)
    uncertainty = metrics.uncertainty_scores(logits)[_SCORE_KEYS[args.score]]
    points = metrics.risk_coverage(probs, ds.labels, uncertainty, ids=ds.ids)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rejection_rate", "accuracy"])
        for rate, acc in points:
            writer.writerow([f"{rate:.17g}", f"{acc:.17g}"])
    _summary("selective", {"model": args.model, "data": args.data, "score": args.score},
             [args.out])


def _cmd_ood(args) -> None:
    in_ds = embedding_store.load_dataset(args.data)
    ood_ds = embedding_store.load_dataset(args.ood_data)
    model = classifier.load_model(args.model)
    in_logits, _ = classifier.predict(model, in_ds.features)
    ood_logits, _ = classifier.predict(model, ood_ds.features)
    in_scores = metrics.uncertainty_scores(in_logits)
    ood_scores = metrics.uncertainty_scores(ood_logits)
    positives = np.concatenate([np.zeros(in_ds.n, bool), np.ones(ood_ds.n, bool)])
    result = {}
    for kind in in_scores:
        combined = np.concatenate([in_scores[kind], ood_scores[kind]])
        d = metrics.detection_metrics(combined, positives)
        result[kind] = {"auroc": d.auroc, "aupr": d.aupr, "fpr_at_95_tpr": d.fpr_at_95_tpr}
    outputs = []
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(result, fh, indent=2)
            fh.write("\n")
        outputs.append(args.out)
    _summary("ood", {"model": args.model, "data": args.data, "ood_data": args.ood_data}, outputs)


def _cmd_bucket_error(args) -> None:
    ds = embedding_store.load_dataset(args.data)
    scores = difficulty.import_scores(args.scores, ds)
    model = classifier.load_model(args.model)
    _, probs = classifier.predict(model, ds.features)
    predictions = probs.argmax(axis=1)
    buckets = metrics.bucket_error(scores, predictions, ds.labels, args.bucket_size)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["start_rank", "end_rank", "count", "error_rate"])
        for b in buckets:
            writer.writerow([b.start_rank, b.end_rank, b.count, f"{b.error_rate:.17g}"])
    _summary("bucket-error",
             {"model": args.model, "data": args.data, "bucket_size": args.bucket_size},
             [args.out])


_HANDLERS = {
    "synth": _cmd_synth,
    "fit": _cmd_fit,
    "score": _cmd_score,
    "rank": _cmd_rank,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "selective": _cmd_selective,
    "ood": _cmd_ood,
    "bucket-error": _cmd_bucket_error,
}


def run(argv: list[str] | None = None) -> int:
    """Parse argv and execute one subcommand; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        _HANDLERS[args.command](args)
    except (DifficalibError, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
