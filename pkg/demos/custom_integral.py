# A three-dimensional integral with a time-dependent term, built with the
# default (coordinate) families, then checked and simulated.

# %%
import numpy as np

from stochfi import Domain, FirstIntegral, MarkLaw, check_conditions, construct_system, monte_carlo

fi = FirstIntegral.from_string("x1*x2 + x3 + 0.1*x3^3 - t", 3)
system = construct_system(fi, m=2, anchor=(0.0, [0.5, 0.5, 0.5]), q00="0.2")
print("families:", system.summary["diffusion_family"], system.summary["jump_family"])
print("B columns:", system.summary["diffusion"])

# %%
report = check_conditions(system, fi, Domain.box((0, 1), (0.2, 1), (0.2, 1), (-1, 1)), 300)
print(report)

# %%
stats = monte_carlo(system, [0.5, 0.5, 0.0], 0.5, 1e-3, MarkLaw.uniform(intensity=3.0), 10, seed=1)
print(f"max relative deviation {stats.max:.2e} over {stats.n_paths} paths, {int(np.sum(stats.n_jumps))} jumps")
