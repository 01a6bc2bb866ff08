"""
Backtesting against simple baselines
====================================

Rolling splits: 14 test events after each split date, 10 validation events
before it, everything earlier for training. Two seeds keep this quick; the
reporting protocol uses ten.
"""

from etpp.evaluation import ablation_suite, even_split_dates, make_backtest_splits
from etpp.synth import SynthConfig, generate

market = generate(SynthConfig(seed=7, n_events=60))
splits = make_backtest_splits(market.events, even_split_dates(market.events, 3))
for s in splits:
    print(f"split {s.split_date}: train {len(s.train_ids)}, validate {len(s.val_ids)}, test {len(s.test_ids)}")

report = ablation_suite(market, splits, seeds=[0, 1])
print(f"\n{'method':>15s}   MAPE            MSE")
for row in sorted(report.summary(), key=lambda r: r["mape_mean"]):
    print(f"{row['method']:>15s}   {row['mape_mean']:.4f} ± {row['mape_se']:.4f}   "
          f"{row['mse_mean']:7.1f} ± {row['mse_se']:.1f}")

# Paired per-split differences against the full model.
for method, diffs in report.paired_differences().items():
    if method != "etpp":
        print(f"{method:>15s} minus etpp:", ", ".join(f"{d:+.4f}" for d in diffs.values()))
