"""Write a synthetic MUSTARD-style dataset and matching detections for the eval command.

    python3 scripts/make_fixtures.py out/ --n 200 --noise 0.05
    otslkit eval out/records.jsonl --detections out/detections.jsonl --group-by language
"""
import argparse
import json
import random
from pathlib import Path

from otslkit.dataset import write_records
from otslkit.synthetic import make_detections, make_records


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("out", type=Path)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0, help="per-character corruption rate of predictions")
    p.add_argument("--max-rows", type=int, default=8)
    p.add_argument("--max-cols", type=int, default=8)
    p.add_argument("--grid-from-detections", action="store_true",
                   help="drop gt_grid so eval estimates the grid from detections")
    args = p.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    records = make_records(args.n, args.seed, args.max_rows, args.max_cols, noise=args.noise)
    rng = random.Random(args.seed + 1)
    with open(args.out / "detections.jsonl", "w") as fh:
        for r in records:
            rows, cols = r.gt_grid
            dets = make_detections(rows, cols, rng, duplicates=rng.randint(0, 2), low_score=rng.randint(0, 3))
            fh.write(json.dumps({"id": r.id, "detections": [d.to_dict() for d in dets]}) + "\n")
    if args.grid_from_detections:
        for r in records:
            r.gt_grid = None
    write_records(records, args.out / "records.jsonl")
    print(f"wrote {len(records)} records to {args.out}")


if __name__ == "__main__":
    main()
