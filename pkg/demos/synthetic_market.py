"""
A synthetic ticket market
=========================

Generate one season of sales and look at how sparse it is.
"""

from etpp.synth import SynthConfig, describe, generate

config = SynthConfig(seed=7, n_events=60, rows=16, cols=16)
market = generate(config)
summary = describe(market)

print(f"{summary['n_transactions']} sales over {summary['n_events']} events and {summary['n_seats']} seats")
print(f"sale rate {summary['sale_rate']:.3f}")

# Most sales land in the last few days before an event. Octave bands make
# the decay visible; the density column divides by band width.
print("\n  days-to-event band   count   per day")
for lo, hi, count, dens in zip(summary["octave_edges"][:-1], summary["octave_edges"][1:],
                               summary["octave_counts"], summary["octave_density"]):
    print(f"  [{lo:5.0f}, {hi:5.0f})      {count:6d}   {dens:8.1f}")

# Prices fan out with seat location, event and time.
levels = summary["price_quantile_levels"]
quantiles = summary["price_quantiles"]
print("\nprice quantiles:", ", ".join(f"{q:.0%}: {v:.1f}" for q, v in zip(levels, quantiles)))
