"""
Expected absorption time from the worst case
============================================

Start one slot away from a perfect split: one node has an extra slot and
another is missing one.  The chain over outlier positions and edge phase
is solved numerically and compared with the closed-form polynomial.
"""

from d3sync.markov import (
    absorption_solve,
    build_outlier_chain,
    recursion_check,
    tbar_asymptotic_constant,
    tbar_closed_form,
)

print(" N  alpha   solve mean    closed form   max state   residual")
for N in (3, 4, 6, 10, 20):
    for alpha in (0.2, 0.5):
        sol = absorption_solve(build_outlier_chain(N, alpha))
        rep = recursion_check(N, alpha, sol)
        print(f"{N:2d}  {alpha:4.1f}  {sol.mean:12.4f}  {tbar_closed_form(N, alpha):12.4f}  "
              f"{sol.max:10.2f}  {rep.max_residual:.1e}")

# Growth is cubic in N with a constant that blows up as alpha -> 1
for alpha in (0.2, 0.5, 0.8):
    ratio = tbar_closed_form(500, alpha) / 500**3
    print(f"alpha = {alpha}: T/N^3 at N=500 = {ratio:.5f}, limit {tbar_asymptotic_constant(alpha):.5f}")
