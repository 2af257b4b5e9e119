# Collapse quality under experimental decoherence.
#
# Dephasing, motional dephasing, heating and cooling act as unmonitored
# channels; the counting record still carries the size-enhanced information,
# but the scaling collapse degrades as the rates grow. The quality factor
# Q = M_ideal / M_noisy at fixed exponents (2, 1) quantifies it.

import numpy as np

from rabisense.hilbert import default_fock_dim
from rabisense.models import NoiseParams, tune_to_cp
from rabisense.dynamics import noisy_spec, perfect_spec
from rabisense.inference import estimate_fisher
from rabisense.collapse import CollapseDataset, quality_factor

ETAS = (5.0, 10.0)
N_TRAJ = 200  # keep the demo light; the acceptance suite runs more


def curve_points(gamma):
    triples = []
    for eta in ETAS:
        params = tune_to_cp(10.0, eta, 1.0)
        t_final = 1.2 * eta
        ck = np.geomspace(1.2, t_final, 11)
        if gamma == 0.0:
            spec = perfect_spec(params, t_final, 2e-3, default_fock_dim(eta))
        else:
            noise = NoiseParams(gamma_dph=1 / 200.0, gamma_m=gamma,
                                gamma_h=gamma, gamma_c=gamma)
            fock = {5.0: 14, 10.0: 17}[eta]
            spec = noisy_spec(params, noise, t_final, 2e-3, fock, leak_tol=1e-3)
        est = estimate_fisher(spec, ck, N_TRAJ, None, 24 + int(eta),
                              richardson=False)
        for t, fi in zip(est.t_checkpoints, est.fi_values):
            if fi > 0:
                triples.append((eta, t, fi))
    return CollapseDataset.from_points(triples)


ideal = curve_points(0.0)
print("quality factor against the noiseless reference:")
print(f"  rates 0    : Q = {quality_factor(ideal, ideal):.3f} (self-ratio)")
for gamma, label in ((1 / 40.0, "κ/40"), (1 / 10.0, "κ/10")):
    q = quality_factor(curve_points(gamma), ideal)
    print(f"  Γ = {label:5s}: Q = {q:.3f}")
