"""Per-table alignment and conversion latency as a function of grid size."""
import argparse
import random

from otslkit.dataset import EvalConfig, SampleRecord, evaluate_batch, timing_report
from otslkit.otsl import random_valid, serialize
from otslkit.synthetic import corrupt


def batch(size, n, noise, rng):
    records = []
    for k in range(n):
        gt = serialize(random_valid(size, size, rng.randrange(2**32), 0.3, 0.1))
        records.append(SampleRecord(id=f"{size}-{k}", gt_otsl=gt, pred_otsl=corrupt(gt, rng, noise),
                                    gt_grid=(size, size)))
    return records


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sizes", type=int, nargs="+", default=[5, 10, 20, 30, 50])
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    rng = random.Random(args.seed)
    cfg = EvalConfig(score=False, max_len=None)
    print(f"{'R=C':>5}{'tokens':>8}{'align ms':>10}{'conv ms':>10}{'post ms':>10}")
    for size in args.sizes:
        t = timing_report(evaluate_batch(batch(size, args.n, args.noise, rng), config=cfg))
        print(f"{size:>5}{size * (size + 1):>8}{t.t_alignment * 1e3:>10.3f}"
              f"{t.t_conversion * 1e3:>10.3f}{t.t_post_processing * 1e3:>10.3f}")


if __name__ == "__main__":
    main()
