"""Trace how feature errors shrink step by step over pipeline iterations.

Runs one tool order for N iterations on a seeded synthetic workspace and
prints the error of every feature after each tool step, plus which runs
needed validator relaxation. Writes iteration_curve.csv next to the outputs.

    python3 scripts/iteration_curve.py --order C-L-P --iterations 5
"""

import argparse
import csv
import random
from pathlib import Path

from scaletweak.pipeline import PipelineConfig, run_pipeline
from synth import fill_random, reference_targets, social_schema, write_workspace

FEATURES = ("linear", "coappear", "pairwise")


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=606)
    ap.add_argument("--order", default="L-C-P")
    ap.add_argument("--iterations", type=int, default=5)
    ap.add_argument("--size", type=int, default=60)
    ap.add_argument("--source-lo", type=int, default=35)
    ap.add_argument("--source-hi", type=int, default=55)
    ap.add_argument("--targets", choices=("reference", "scaled"),
                    default="reference")
    ap.add_argument("--out", default="out/iteration_curve")
    return ap.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    rng = random.Random(args.seed)
    schema = social_schema()
    source = fill_random(
        schema,
        {t.name: rng.randint(args.source_lo, args.source_hi) for t in schema.tables},
        rng,
    )
    sizes = {t.name: args.size for t in schema.tables}
    targets = None
    if args.targets == "reference":
        targets = reference_targets(schema, sizes, random.Random(args.seed + 1))
    root = Path(args.out)
    paths = write_workspace(root / "workspace", schema, source, sizes, targets)

    cfg = PipelineConfig(
        schema_path=str(paths["schema"]),
        data_dir=str(paths["data"]),
        out_dir=str(root / "run"),
        sizes_path=str(paths["sizes"]),
        targets_path=str(paths["targets"]) if targets else None,
        order=args.order,
        iterations=args.iterations,
        seed=args.seed,
    )
    report = run_pipeline(cfg).report

    header = ["step", "tool"] + list(FEATURES) + ["relaxed"]
    print("  ".join(f"{h:>9}" for h in header))
    rows = []
    initial = report["initialErrors"]
    start = [0, "(scaled)"] + [initial[f] for f in FEATURES] + [""]
    rows.append(start)
    for step, run in zip(report["steps"], report["runs"]):
        rows.append(
            [step["step"], run["tool"]]
            + [step["errors"][f] for f in FEATURES]
            + ["+".join(run["relaxed"])]
        )
    for row in rows:
        print("  ".join(
            f"{v:>9.4f}" if isinstance(v, float) else f"{v:>9}" for v in row
        ))
    csv_path = root / "iteration_curve.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"\nwrote {csv_path}")


if __name__ == "__main__":
    main()
