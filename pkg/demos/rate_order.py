"""How the i.i.d. and U-statistic bounds decay in n.

The U-statistic bound settles at slope about -1/2 early. The i.i.d. bound
carries an n^{-3/2}(log 2n)^{3/2} term that outweighs the leading terms at
unit variance for n up to about 128, and fades early when the variance is
small.

    python3 demos/rate_order.py
"""
import math

import numpy as np

from fclt.bounds import iid_bound, ustat_bound
from fclt.harness import rate_fit

NS = [2 ** k for k in range(6, 15)]
E3 = 2 * math.sqrt(2 / math.pi)


def summary(label, totals):
    fit = rate_fit(list(zip(NS, totals)))
    norm = [math.sqrt(n) * t / math.sqrt(math.log(n)) for n, t in zip(NS, totals)]
    print(f"{label:<28} slope {fit.slope:+.3f}   spread {max(norm) / min(norm) - 1:6.1%}")


summary("ustat, x+y+xy", [ustat_bound(n, 3.0, 1.0, E3, math.sqrt(2 / math.pi)).total for n in NS])
for s in (1.0, 1e-2, 1e-3):
    totals = [iid_bound(1, n, np.eye(1) * s, [E3 * s ** 1.5], [s]).total for n in NS]
    summary(f"iid, variance {s:g}", totals)

rep = iid_bound(1, 64, np.eye(1), [E3], [1.0])
print("\niid terms at n = 64:")
for t in rep.terms:
    print(f"  {t.name:<14} {t.value:9.3f}")
