#!/usr/bin/env python3
"""Sweep the entropy-regularization strength for constant vs difficulty-aware
weighting and print ECE per alpha (seed-averaged)."""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np  # noqa: E402

from difficalib import classifier, difficulty, gaussian, metrics, synthetic  # noqa: E402


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, nargs="+", default=[7, 8, 9, 10, 11])
    parser.add_argument("--alphas", type=float, nargs="+",
                        default=[0.05, 0.10, 0.15, 0.20, 0.25, 0.30])
    parser.add_argument("--epochs", type=int, default=40)
    parser.add_argument("--hidden", type=int, nargs="*", default=[16])
    parser.add_argument("--shrinkage", type=float, default=32.0)
    args = parser.parse_args()

    table = {(kind, a): [] for kind in ("er_const", "difficulty_er") for a in args.alphas}
    for seed in args.seeds:
        train_ds = synthetic.generate_mixture(synthetic.MixtureSpec(seed=seed))
        val_ds = synthetic.generate_mixture(
            synthetic.MixtureSpec(samples_per_class=1000, seed=seed, id_start=10**6)
        )
        bank = gaussian.fit_gaussian_bank(train_ds, args.shrinkage)
        scores = difficulty.score_dataset(bank, train_ds)
        for kind in ("er_const", "difficulty_er"):
            for alpha in args.alphas:
                lcfg = classifier.LossConfig(kind=kind, alpha=alpha)
                ocfg = classifier.OptimConfig(epochs=args.epochs, seed=seed)
                model, _ = classifier.train(
                    train_ds, scores if kind == "difficulty_er" else None,
                    lcfg, ocfg, hidden_sizes=tuple(args.hidden),
                )
                _, probs = classifier.predict(model, val_ds.features)
                table[(kind, alpha)].append(metrics.ece(probs, val_ds.labels)[0])
        print(f"seed {seed} done", file=sys.stderr)

    header = "alpha        " + "".join(f"{a:>9.2f}" for a in args.alphas)
    print(header)
    for kind in ("er_const", "difficulty_er"):
        row = "".join(f"{100 * np.mean(table[(kind, a)]):9.3f}" for a in args.alphas)
        print(f"{kind:13s}{row}")


if __name__ == "__main__":
    main()
