"""Plant a reaction depth in synthetic order flow and find it again.

The generator adds flicker orders at a chosen depth whose size follows the
absolute one-second trade-price move. Sweeping candidate depths and picking
the one where reacted volume tracks the price speed best should land on it.

Run: python demos/recover_active_depth.py [planted_depth_ticks]
"""
import sys
import time

from lobphys.physics import active_depth
from lobphys.synth import SynthConfig, generate

planted = int(sys.argv[1]) if len(sys.argv) > 1 else 30
t0 = time.perf_counter()
cfg = SynthConfig(seed=1, active_depth=planted)
run = generate(cfg)
print(f"generated {len(run.events):,} events and {len(run.tickers):,} tickers "
      f"in {time.perf_counter() - t0:.1f} s")

t0 = time.perf_counter()
result = active_depth(run.events, tick_size=cfg.instrument.tick_size)
print(f"swept {len(result.correlation_curve)} depths over {result.n_windows} windows "
      f"in {time.perf_counter() - t0:.1f} s")

curve = dict(result.correlation_curve)
print(f"\nplanted depth {planted} ticks, estimated {result.alpha} ticks ({result.alpha_currency} quote units)")
print("correlation around the peak:")
for depth in sorted(curve):
    if result.alpha / 2 <= depth <= result.alpha * 2:
        bar = "#" * max(0, int(40 * curve[depth]))
        print(f"  {depth:>6}  {curve[depth]:+.3f}  {bar}")
