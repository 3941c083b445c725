"""TEDS-S of repaired predictions as the corruption rate grows, split simple/complex."""
import argparse

from otslkit.dataset import EvalConfig, evaluate_batch
from otslkit.synthetic import make_records


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--rates", type=float, nargs="+", default=[0.0, 0.01, 0.02, 0.05, 0.1, 0.2])
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args()

    print(f"{'rate':>6}{'simple':>9}{'complex':>9}{'overall':>9}{'repairs/table':>15}")
    for rate in args.rates:
        records = make_records(args.n, args.seed, noise=rate)
        report = evaluate_batch(records, config=EvalConfig(jobs=args.jobs))
        g = report.overall
        repairs = sum(sum(r.repairs.values()) for r in report.records) / len(report.records)
        fmt = lambda v: f"{v:9.2f}" if v is not None else f"{'-':>9}"  # noqa: E731
        print(f"{rate:>6.2f}{fmt(g.simple)}{fmt(g.complex)}{fmt(g.overall)}{repairs:>15.2f}")


if __name__ == "__main__":
    main()
