"""Numerical checks of the Ornstein-Uhlenbeck Stein identities on a small
Gaussian model: stationary decomposition, the Stein null and the
generator as the derivative of the semigroup.

    python3 demos/stein_identities.py [samples]
"""
import sys

import numpy as np

from fclt.core import DependencyModel, PathGrid, RngStream
from fclt.functionals import CylinderFunctional, make_chi
from fclt.stein import (check_stationary_decomposition, gaussian_dn_sampler,
                        generator_semigroup_check, stein_null_check)

samples = int(sys.argv[1]) if len(sys.argv) > 1 else 50_000
a = np.random.default_rng(0).standard_normal((4, 4))
cov = a @ a.T / 4 + 0.1 * np.eye(4)
model = DependencyModel(2, 2, (2, 2), (frozenset({0, 1}),) * 2)
stream = RngStream(5)

for j, v in enumerate((0.0, 0.7, 50.0)):
    rep = check_stationary_decomposition(model, cov, 0.3, v, samples, stream.split(j))
    print(f"v = {v:<5} max |dev| = {rep.max_deviation:.2e}   within 3 SE: {rep.passed}")

dn = gaussian_dn_sampler(cov, model, 2)
for j, name in enumerate(("linear", "square", "cos-mean")):
    f = CylinderFunctional(make_chi(name, 2), [0.5, 1.0], [0, 1])
    est = stein_null_check(f, dn, samples, stream.split(10 + j))
    print(f"E A f(D), {name:<9} {est.mean:+.2e} ± {est.se:.1e}")

f = CylinderFunctional(make_chi("cos-mean", 2), [0.5, 1.0], [0, 1])
w = PathGrid(np.array([[0.0, 0.0], [0.3, -0.2], [0.5, 0.4]]))
gc = generator_semigroup_check(f, w, dn, samples, stream.split(20))
for u, q, se in gc.quotients:
    print(f"(T_u f - f)/u at u = {u:<5} {q:+.4f} ± {se:.1e}")
print(f"extrapolated {gc.extrapolated:+.4f}, generator {gc.generator.mean:+.4f}: {gc.passed}")
