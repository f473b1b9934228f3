# %% [markdown]
# The algebra behind everything: on a torus, stationary fields are
# diagonalized by the 2-D FFT.

# %%
import numpy as np

from gmrfsel.cls import fit_torus
from gmrfsel.lattice import LatticeSpec, build_model_collection
from gmrfsel.params import ConstraintSpec, ThetaField, covariance_from_theta
from gmrfsel.simulate import sample_torus_gmrf

lat = LatticeSpec(6, 6)
theta = ThetaField.from_offsets(lat, {(1, 0): 0.15, (0, 1): 0.15, (1, 1): 0.05, (1, -1): 0.05})
lam = theta.eigenvalues
print("eigenvalues of C(theta): min", lam.min().round(4), "max", lam.max().round(4))

# %% covariance from eigenvalues versus a dense inverse
S = covariance_from_theta(theta).dense()
C = np.zeros((36, 36))
for a in range(36):
    for b in range(36):
        C[a, b] = theta.coeffs[(b // 6 - a // 6) % 6, (b % 6 - a % 6) % 6]
print("max |S - (I - C)^-1|:", np.abs(S - np.linalg.inv(np.eye(36) - C)).max())

# %% strongly anticorrelated data push the unconstrained fit towards the
# edge of validity; the constraint 1 - lambda <= rho keeps it conditioned
anti = ThetaField.from_offsets(LatticeSpec(8, 8), {(1, 0): -0.245, (0, 1): -0.245})
data = sample_torus_gmrf(anti, 1, seed=0)
m = build_model_collection(data.lattice, 6)[-1]
for rho in (None, 4.0, 2.0):
    fit = fit_torus(m, data, constraint=None if rho is None else ConstraintSpec(rho=rho))
    gap = 1 - fit.theta.eigenvalues
    print(f"rho={rho}: 1-lambda in [{gap.min():.3f}, {gap.max():.3f}], boundary {fit.on_boundary}")
