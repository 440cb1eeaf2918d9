"""Run every tool order on one synthetic workspace and compare final errors.

Builds a seeded source dataset, scales it to a uniform target size, then runs
the pipeline once per permutation of the three tools. Prints a per-order
table of final feature errors and writes order_sweep.csv next to the outputs.

    python3 scripts/order_sweep.py --seed 606 --iterations 3 --out out/sweep
"""

import argparse
import csv
import itertools
import random
from pathlib import Path

from scaletweak.pipeline import PipelineConfig, run_pipeline
from synth import fill_random, reference_targets, social_schema, write_workspace

FEATURES = ("linear", "coappear", "pairwise")


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=606)
    ap.add_argument("--iterations", type=int, default=3)
    ap.add_argument("--size", type=int, default=60,
                    help="target row count for every table")
    ap.add_argument("--source-lo", type=int, default=35)
    ap.add_argument("--source-hi", type=int, default=55)
    ap.add_argument("--targets", choices=("reference", "scaled"),
                    default="reference",
                    help="reference: targets from one consistent dataset at "
                         "target size; scaled: each tool scales the source "
                         "feature independently")
    ap.add_argument("--out", default="out/order_sweep")
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

    rows = []
    for order in ("-".join(p) for p in itertools.permutations("LCP")):
        cfg = PipelineConfig(
            schema_path=str(paths["schema"]),
            data_dir=str(paths["data"]),
            out_dir=str(root / order.replace("-", "")),
            sizes_path=str(paths["sizes"]),
            targets_path=str(paths["targets"]) if targets else None,
            order=order,
            iterations=args.iterations,
            seed=args.seed,
        )
        final = run_pipeline(cfg).report["finalErrors"]
        rows.append([order] + [final[f] for f in FEATURES])

    header = ["order"] + list(FEATURES)
    print("  ".join(f"{h:>10}" for h in header))
    for row in rows:
        print("  ".join(
            f"{v:>10}" if isinstance(v, str) else f"{v:>10.4f}" for v in row
        ))
    csv_path = root / "order_sweep.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"\nwrote {csv_path}")


if __name__ == "__main__":
    main()
