"""Windows from moments only: worst-case earliness and tardiness.

When all you trust about an arrival time is its mean and variance, the
worst-case expected miss has a closed form, and so does the window that
minimizes it.  A two-point distribution attains the bound, which makes
the pessimism easy to see.
"""

import numpy as np

from twdesign import dro_window, gamma_coeffs, scarf_earliness, scarf_tardiness

mean, variance = 100.0, 100.0
sigma = np.sqrt(variance)

# worst-case expected earliness below a candidate lower edge
print("lower edge   worst E[(l - tau)+]   attained by two points")
for lower in (85.0, 95.0, 100.0, 105.0):
    bound = scarf_earliness(lower, mean, variance)
    # the worst distribution is two-point: mean + sigma*t and mean - sigma/t
    d = lower - mean
    t = (d + np.sqrt(d * d + variance)) / sigma
    hi = mean + sigma * t
    lo = mean - sigma / t
    p_hi = 1.0 / (1.0 + t * t)
    attained = (1 - p_hi) * max(lower - lo, 0.0) + p_hi * max(lower - hi, 0.0)
    print(f"  {lower:6.1f}     {bound:8.4f}            {attained:8.4f}")

# the robust window and its cost
a_w, a_l, a_u = 0.05, 1.0, 1.0
lower, upper, cost, clamped = dro_window(mean, variance, a_w, a_l, a_u)
print(f"\nrobust window [{lower:.4f}, {upper:.4f}], cost {cost:.6f}")

gl, gu = gamma_coeffs(a_w, a_l, a_u)
print(f"cost per unit sigma: {gl:.4f} + {gu:.4f} = {(gl + gu):.4f}")
print(f"check: ({gl:.4f} + {gu:.4f}) * {sigma:.1f} = {(gl + gu) * sigma:.6f}")

# asymmetric penalties skew the window off center
lo2, up2, cost2, _ = dro_window(mean, variance, 0.05, 0.4, 1.0)
print(f"\ncheap earliness : [{lo2:.2f}, {up2:.2f}] (lower edge pulled in)")
lo3, up3, cost3, _ = dro_window(mean, variance, 0.05, 1.0, 0.4)
print(f"cheap lateness  : [{lo3:.2f}, {up3:.2f}] (upper edge pulled in)")

# as the width penalty approaches half the side penalty the window
# collapses to a point at the mean
print("\n  a_w    width")
for aw in (0.05, 0.15, 0.3, 0.45, 0.499):
    lo, up, _, _ = dro_window(mean, variance, aw, 1.0, 1.0)
    print(f"  {aw:5.3f}  {up - lo:8.4f}")

# variance is the only distributional knob: double it, width grows sqrt(2)
lo_a, up_a, _, _ = dro_window(mean, variance, 0.05, 1.0, 1.0)
lo_b, up_b, _, _ = dro_window(mean, 2 * variance, 0.05, 1.0, 1.0)
print(f"\nwidth ratio at 2x variance: {(up_b - lo_b) / (up_a - lo_a):.6f} (sqrt 2 = {np.sqrt(2):.6f})")
