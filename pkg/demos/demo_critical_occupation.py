# Steady-state occupation at the dissipative critical point.
#
# At g = g_c the steady occupation of the mode grows like sqrt(eta) with the
# effective system size eta = Omega/omega. The fit below reproduces that
# scaling and also shows the two-ion realization (system ion + detector ion)
# agreeing with the reduced damped-Rabi description.

import numpy as np

from rabisense.hilbert import HilbertSpec, expectation, number_operator
from rabisense.models import AncillaParams, tune_to_cp
from rabisense.dynamics import (
    fit_effective_kappa,
    rabi_lindblad_model,
    steady_state,
    two_ion_lindblad_model,
)

etas = np.array([10.0, 20.0, 40.0, 80.0])
nbars = []
for eta in etas:
    params = tune_to_cp(omega=10.0, eta=eta, kappa=1.0)
    fock = int(np.ceil(4 * np.sqrt(eta))) + 10
    space = HilbertSpec(fock, has_system_qubit=True)
    rho = steady_state(rabi_lindblad_model(params, space))
    nbars.append(expectation(rho, number_operator(space)))
    print(f"eta = {eta:4.0f}:  <n>_st = {nbars[-1]:.4f}")

slope = np.polyfit(np.log(etas), np.log(nbars), 1)[0]
print(f"\nlog-log slope: {slope:.3f}  (sqrt growth -> 0.5)")

# same comparison with the dissipation engineered by the ancilla
anc = AncillaParams(Omega_s=6400.0, Omega_w=572.0, Gamma_s=3200.0, Gamma_w=40.0,
                    eta_ld2=0.07)
kappa = fit_effective_kappa(anc, initial_n=1).kappa
print(f"\ntwo-ion check at the fitted kappa = {kappa:.4f} (omega = 0.6):")
for eta in (10.0, 20.0):
    params = tune_to_cp(0.6, eta, kappa)
    s1 = HilbertSpec(14, has_system_qubit=True)
    s2 = HilbertSpec(14, has_system_qubit=True, has_ancilla=True)
    n1 = expectation(steady_state(rabi_lindblad_model(params, s1)),
                     number_operator(s1))
    n2 = expectation(steady_state(two_ion_lindblad_model(params, anc, s2)),
                     number_operator(s2))
    print(f"  eta = {eta:4.0f}: reduced {n1:.4f}   two-ion {n2:.4f}   "
          f"({(n2 - n1) / n1:+.2%})")
