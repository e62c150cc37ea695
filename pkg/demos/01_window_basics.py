"""Pick a delivery window for one customer from arrival scenarios.

The cost trades width against expected earliness and lateness.  The
best window snaps to order statistics of the scenario arrivals, and the
dual prices tell you which scenarios pin the edges.
"""

import numpy as np

from twdesign import PenaltyConfig, brute_force_windows, critical_indices, random_network, route_to_xy, saa_window, sample_travel_times

rng = np.random.default_rng(7)

# 60 noisy arrival times around 100
arrivals = rng.normal(100.0, 12.0, 60).clip(min=0.0)
a_w, a_l, a_u = 0.1, 0.8, 0.9

win = saa_window(arrivals, a_w, a_l, a_u)
p1, p2 = critical_indices(len(arrivals), a_w, a_l, a_u)
print(f"scenarios: q={len(arrivals)}, mean={arrivals.mean():.2f}, std={arrivals.std():.2f}")
print(f"window   : [{win.lower:.2f}, {win.upper:.2f}]  cost={win.cost:.4f}")
print(f"edges sit on the {p1}-th and {p2}-th smallest arrival")

srt = np.sort(arrivals)
assert win.lower == srt[p1 - 1] and win.upper == srt[p2 - 1]

# in-sample miss rates follow from the ranks alone
print(f"early rate {(arrivals < win.lower).mean():.3f} vs bound a_w/a_l = {a_w/a_l:.3f}")
print(f"late  rate {(arrivals > win.upper).mean():.3f} vs bound a_w/a_u = {a_w/a_u:.3f}")

# dual prices: one per scenario, they sum to a_w on each side
print(f"\nscenarios priced on the early side: {np.count_nonzero(win.rho1)}")
print(f"scenarios priced on the late  side: {np.count_nonzero(win.rho2)}")
print(f"sum rho1 = {win.rho1.sum():.6f}, sum rho2 = {win.rho2.sum():.6f} (= a_w)")
dual_obj = float(arrivals @ (win.rho2 - win.rho1))
print(f"dual objective {dual_obj:.6f} equals cost {win.cost:.6f}")

# widening the width penalty narrows the window
print("\n  a_w   window                cost")
for aw in (0.02, 0.05, 0.1, 0.2, 0.4):
    w = saa_window(arrivals, aw, a_l, a_u)
    print(f"  {aw:.2f}  [{w.lower:7.2f}, {w.upper:7.2f}]  {w.cost:.4f}")

# the closed form agrees with trying every scenario pair on a route
net = random_network(3, seed=11, complete=True)
route = route_to_xy([0, 2, 1, 3, 0], net)
samples = sample_travel_times(net, 40, seed=12)
pen = PenaltyConfig(np.full(3, 0.1), np.full(3, 0.8), np.full(3, 0.9))
from twdesign import design_stochastic

plan, _ = design_stochastic(route, samples, pen)
ref = brute_force_windows(route, samples, pen)
print(f"\nroute plan cost {plan.total_cost:.6f}, brute force {ref.total_cost:.6f}")
