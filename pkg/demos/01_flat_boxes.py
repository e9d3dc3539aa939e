"""
Flatness defects on rectangles
==============================

A box is flat for a phase when the phase, minus its best affine
approximation, stays small on the box.  For quadratic phases the defect
has a closed form; this script compares it against brute-force sampling
and then looks at the anisotropic boxes that sit flush against the
flatness threshold.
"""

import numpy as np

from flatcover import BivariatePoly, candidate_box, flat_defect, is_flat
from flatcover.geometry import axis_rectangle

phi = BivariatePoly(2, {(1, 1): 1.0})  # the model saddle xi1*xi2

# 1. Closed form versus sampling.  For this phase the defect of an
#    axis-aligned w x h rectangle is exactly w*h, independent of position.
print("defect of w x h rectangles under the saddle phase")
rng = np.random.default_rng(7)
for _ in range(5):
    w, h = rng.uniform(0.05, 0.9, size=2)
    x0, y0 = rng.uniform(0.0, 0.5, size=2)
    box = axis_rectangle(x0, y0, x0 + w, y0 + h)
    closed = flat_defect(phi, box, method="closed").defect
    sampled = flat_defect(phi, box, m=65, method="sample", polish=False).defect
    print(f"  w*h = {w * h:.6f}   closed = {closed:.6f}   "
          f"sampled(m=65) = {sampled:.6f}")

# 2. The flatness test at a threshold.  With A = 1 and delta = 1/16,
#    a quarter-by-quarter box lands exactly on the boundary, which the
#    certificate accepts; shrinking delta by any amount rejects it.
box = axis_rectangle(0.0, 0.0, 0.25, 0.25)
print()
print("threshold behaviour on the 1/4 x 1/4 box (defect 1/16):")
for delta in (1 / 16, 1 / 16 - 1e-6):
    ok = is_flat(phi, box, delta, a_const=1.0)
    print(f"  delta = {delta:.7f}  ->  flat: {ok}")

# 3. Candidate boxes.  At scale delta the flat boxes for the saddle are
#    1/alpha long in a direction where the phase restricts to an affine
#    function, and delta*alpha wide across it, for any alpha in
#    [1, 1/sqrt(delta)].  alpha = 1/sqrt(delta) gives the square cap.
delta = 2.0 ** -8
print()
print(f"candidate boxes at delta = 2^-8 (area always {delta:g}):")
for alpha in (1.0, 4.0, delta ** -0.5):
    b = candidate_box(phi, (0.3, 0.4), alpha, delta)
    L, s = sorted(b.side_lengths())[::-1]
    print(f"  alpha = {alpha:8.4f}   sides {L:.5f} x {s:.5f}   "
          f"area {L * s:.6f}")
    assert is_flat(phi, b, delta, a_const=4.0)
print("all candidates certified flat at A = 4")
