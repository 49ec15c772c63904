#!/usr/bin/env python3
"""End-to-end pipeline: synth -> fit -> score -> train -> eval -> selective.

Every artifact is written under --out; reruns with the same seed are
byte-identical.
"""

import argparse
import hashlib
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from difficalib import cli  # noqa: E402


def run_pipeline(outdir, seed=7, per_class=200, epochs=10):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    train = outdir / "train.emb"
    val = outdir / "val.emb"
    bank = outdir / "bank.gbk"
    scores = outdir / "scores.csv"
    model = outdir / "model.mdl"
    log = outdir / "train_log.csv"
    report = outdir / "report.json"
    rc = outdir / "risk_coverage.csv"

    steps = [
        ["synth", "--classes", "10", "--dim", "16", "--per-class", str(per_class),
         "--separation", "3", "--seed", str(seed), "--out", str(train)],
        ["synth", "--classes", "10", "--dim", "16", "--per-class", str(per_class // 2),
         "--separation", "3", "--seed", str(seed), "--id-start", "1000000", "--out", str(val)],
        ["fit", "--data", str(train), "--shrinkage", "32", "--out", str(bank)],
        ["score", "--data", str(train), "--bank", str(bank), "--T", "0.7", "--c", "1e-3",
         "--out", str(scores)],
        ["train", "--data", str(train), "--loss", "difficulty_er", "--scores", str(scores),
         "--alpha", "0.3", "--hidden", "16", "--epochs", str(epochs), "--seed", str(seed),
         "--val-data", str(val), "--log", str(log), "--out", str(model)],
        ["eval", "--model", str(model), "--data", str(val), "--out", str(report)],
        ["selective", "--model", str(model), "--data", str(val), "--out", str(rc)],
    ]
    for argv in steps:
        status = cli.run(argv)
        if status != 0:
            raise SystemExit(f"pipeline step failed ({argv[0]}): exit {status}")
    artifacts = [train, Path(str(train) + ".json"), val, Path(str(val) + ".json"),
                 bank, scores, model, log, report, rc]
    return artifacts


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--per-class", type=int, default=200)
    parser.add_argument("--epochs", type=int, default=10)
    args = parser.parse_args()
    artifacts = run_pipeline(args.out, args.seed, args.per_class, args.epochs)
    for path in artifacts:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        print(f"{digest}  {path.name}")


if __name__ == "__main__":
    main()
