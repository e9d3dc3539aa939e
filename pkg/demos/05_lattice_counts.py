"""
Lattice points in flat boxes and Pell-equation gaps
===================================================

Frequencies of the form (a*delta, b*alpha*delta) land in the flat boxes
of a cover with a multiplicity that depends on the arithmetic of alpha.
For alpha = sqrt(2) the products |a^2 - 2b^2| never vanish, which keeps
every long box nearly empty; for alpha = 1 the diagonal loads up whole
boxes.  This dichotomy is the quantitative content of the square-root
cancellation heuristic for quadratic exponential sums.
"""

import math

from flatcover import (
    BivariatePoly,
    lambda_grid,
    max_flat_multiplicity,
    normal_axis_family,
    pell_gap,
)
from flatcover.lattice import pell_convergents

phi = BivariatePoly(2, {(2, 0): 1.0, (0, 2): -1.0})

# Cover at scale delta^3, lattice spaced delta: long thin boxes hugging
# the null directions, against a grid three orders coarser.
print("max lattice points in one flat box, rotated-saddle cover")
print(f"{'delta':>10} {'alpha=sqrt2':>12} {'alpha=1':>9} {'1/(4 sqrt(delta))':>18}")
for e in (4, 5, 6):
    d = 2.0 ** -e
    cov = normal_axis_family(phi, d ** 3)
    hi_irr, _ = max_flat_multiplicity(cov, lambda_grid(d, math.sqrt(2.0)), phi)
    hi_rat, _ = max_flat_multiplicity(cov, lambda_grid(d, 1.0), phi)
    print(f"{d:10.6f} {hi_irr:12d} {hi_rat:9d} {0.25 * d ** -0.5:18.2f}")
print("sqrt(2) stays at O(1); alpha = 1 grows like delta^(-1/2)")

# Why sqrt(2) works: the quantity governing how close a lattice point
# can sit to the null line is |a^2 - 2 b^2| / b, and a^2 - 2b^2 = +-1
# exactly on the continued-fraction convergents of sqrt(2).
print()
print("convergents |a|/b of sqrt(2) and their Pell numerators")
for a, b in pell_convergents(200):
    print(f"  {abs(a):5d}/{b:<5d}  a^2 - 2 b^2 = {a * a - 2 * b * b:+d}")

gap = pell_gap(100000, 0.1)
print()
print(f"min weighted Pell product over b <= 10^5: "
      f"{gap.product:.6f} at (a, b) = ({gap.a}, {gap.b})")
print("the floor stays above 0.2, uniformly in the range")
