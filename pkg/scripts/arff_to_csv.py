#!/usr/bin/env python3
"""Convert a MULAN-style multi-label ARFF file to the X.csv/Y.csv pair.

Usage:
    python scripts/arff_to_csv.py scene.arff 6 out/scene
    python scripts/arff_to_csv.py scene-train.arff 6 out/scene scene-test.arff

The label count L refers to the LAST L attributes (MULAN convention for
scene/yeast; pass --labels-first for corpora that put labels first). When a
second ARFF is given (the MULAN train/test pair), rows are concatenated so
the package's own seeded splitter can be used on the union.

Only dense, numeric/nominal{0,1} ARFF bodies are handled; that covers the
mulan.sourceforge.net "scene" and "yeast" distributions.
"""

import argparse
import os
import sys


def parse_arff(path):
    rows, in_data = [], False
    n_attrs = 0
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("%"):
                continue
            low = line.lower()
            if low.startswith("@attribute"):
                n_attrs += 1
            elif low.startswith("@data"):
                in_data = True
            elif in_data:
                if line.startswith("{"):
                    raise SystemExit(f"{path}: sparse ARFF bodies are not supported")
                vals = [v.strip().strip("'\"") for v in line.split(",")]
                if len(vals) != n_attrs:
                    raise SystemExit(f"{path}: row with {len(vals)} fields, "
                                     f"expected {n_attrs}")
                rows.append([float(v) for v in vals])
    if not rows:
        raise SystemExit(f"{path}: no data rows found")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("arff", help="ARFF file (or the train half of a pair)")
    ap.add_argument("n_labels", type=int)
    ap.add_argument("out_prefix", help="writes <prefix>/X.csv and <prefix>/Y.csv")
    ap.add_argument("extra_arff", nargs="?", help="optional second ARFF to append")
    ap.add_argument("--labels-first", action="store_true")
    args = ap.parse_args()

    rows = parse_arff(args.arff)
    if args.extra_arff:
        rows += parse_arff(args.extra_arff)
    L = args.n_labels
    os.makedirs(args.out_prefix, exist_ok=True)
    with open(os.path.join(args.out_prefix, "X.csv"), "w") as fx, \
            open(os.path.join(args.out_prefix, "Y.csv"), "w") as fy:
        for row in rows:
            labels = row[:L] if args.labels_first else row[-L:]
            feats = row[L:] if args.labels_first else row[:-L]
            if any(v not in (0.0, 1.0) for v in labels):
                raise SystemExit("label block contains non-binary values; "
                                 "check n_labels/--labels-first")
            fx.write(",".join(repr(v) for v in feats) + "\n")
            fy.write(",".join(str(int(v)) for v in labels) + "\n")
    print(f"wrote {len(rows)} rows to {args.out_prefix}/X.csv and Y.csv "
          f"(D={len(rows[0]) - L}, L={L})")


if __name__ == "__main__":
    sys.exit(main())
