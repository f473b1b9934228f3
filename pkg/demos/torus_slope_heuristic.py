# %% [markdown]
# Selecting a neighborhood on a torus with the slope heuristic.
#
# A 20 x 20 toroidal field is drawn from a GMRF whose neighborhood is a
# disc of squared radius 17. We fit every model of a nested collection
# by conditional least squares and let the dimension jump of the
# selection path choose the penalty.

# %%
import warnings

import numpy as np

from gmrfsel.baselines import aic_bic_select, fit_mle
from gmrfsel.cls import Periodogram, fit_torus
from gmrfsel.lattice import LatticeSpec, build_model_collection
from gmrfsel.risk import loss_torus
from gmrfsel.select import slope_select_torus
from gmrfsel.simulate import TorusSampler, make_theta_phi, substream

lat = LatticeSpec(20, 20)
truth = make_theta_phi(0.015, lat)
print("true support size:", len(truth.support()), " largest eigenvalue of C:", truth.eigenvalues.max().round(4))

data = Periodogram(TorusSampler(truth).sample(1, substream(2027)))
models = build_model_collection(lat, 21)
print("collection dimensions:", [m.d_m_iso for m in models])

# %% one CLS fit per model; the criterion decreases along the collection
fits = [fit_torus(m, data) for m in models]
for m, f in zip(models[:6], fits[:6]):
    print(f"  d={m.d_m_iso:2d}  gamma={f.criterion:.5f}")

# %% the path m(N) and its largest jump
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    rep = slope_select_torus(data, models, fits=fits)
for bp in rep.path.to_dict()["breakpoints"]:
    print(f"  N >= {bp['N']:.4g}: dimension {bp['dim']}")
print(f"N_min estimate {rep.N_min_hat:.4g} (jump of {rep.jump_size}); "
      f"selected dimension {rep.selected_model.d_m_iso} at 2 N_min")

# %% how good is that choice? compare with the oracle model and BIC
losses = np.array([loss_torus(f.theta, truth, truth) for f in fits])
oracle = int(np.argmin(losses))
_, bic = aic_bic_select(data, models, criterion="BIC", fits=[fit_mle(m, data) for m in models])
print(f"selected loss {losses[rep.selected]:.4f}, oracle (d={models[oracle].d_m_iso}) {losses[oracle]:.4f}, "
      f"BIC (d={bic.model.d_m_iso}) {loss_torus(bic.theta, truth, truth):.4f}")
