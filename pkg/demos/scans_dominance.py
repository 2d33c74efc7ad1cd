"""Exceedances of a bivariate 2-scans process: itemized bound against the
Monte Carlo distance for a smooth cylinder functional.

    python3 demos/scans_dominance.py [n] [samples]
"""
import sys
import time

from fclt.bounds import total
from fclt.functionals import CylinderFunctional, make_chi
from fclt.harness import verify
from fclt.models import ScansModel, scans_regime, scans_stats

n = int(sys.argv[1]) if len(sys.argv) > 1 else 50
samples = int(sys.argv[2]) if len(sys.argv) > 2 else 5000

# Bernoulli(1/2) marginals, coupled across the two coordinates
model = ScansModel(2, 2, n, [1, 1], support=[[0, 0], [0, 1], [1, 0], [1, 1]],
                   probs=[3 / 8, 1 / 8, 1 / 8, 3 / 8])
stats = scans_stats(model)
print(f"pi = {stats.pi}, exact = {stats.exact}")
print("Sigma =\n", stats.sigma)

g = CylinderFunctional(make_chi("cos-mean", 4, scale=0.25), [0.5, 1.0, 0.5, 1.0], [0, 0, 1, 1])
regime = scans_regime(model, "block", g, stats=stats)
for t in regime.report.terms:
    print(f"  {t.name:<6} {t.value:.5g}")
print(f"bound with certified M1 norm {g.norm('M1')}: {total(regime.report, g):.5g}")

t0 = time.perf_counter()
rep = verify(g, regime, samples, seed=1)
print(f"|E g(Y) - E g(Z)| = {rep.distance.mean:.3g} ± {rep.distance.se:.2g} "
      f"({samples} paths, {time.perf_counter() - t0:.1f}s)")
print(f"pass = {rep.passed}, margin = {rep.margin:.4g}")
