"""Recovering a full scattering matrix from accessible-port measurements.

Two ports are measured directly; two more are only reachable by switching
their terminations. The fit leaves a joint sign of the cross blocks open,
which one extra measurement settles.

Run:  python3 demos/virtual_vna.py
"""

import numpy as np

from bdris.envgen import generate_environment
from bdris.loadnet import LoadCatalog
from bdris.vvna import (
    disambiguation_measurement,
    estimate_scattering,
    flip_sign,
    redesignation_setup,
    resolve_sign,
    simulate_campaign,
)

env = generate_environment(n=4, n_tx=1, n_rx=1, n_freq=1, seed=3)
S = env.matrices[0]
acc, nda = (0, 1), (2, 3)
cat = LoadCatalog.default(env.frequencies_hz)

for noise in (0.0, 1e-3):
    m = simulate_campaign(S, nda, cat, n_meas=60, seed=1, noise_std=noise)
    est = estimate_scattering(m, cat, seed=0)
    E = est.matrix.entries
    err = min(abs(E - S).max(), abs(flip_sign(E, acc, nda) - S).max())
    print(f"noise {noise:g}: residual {est.report.residual:.2e}, error up to sign {err:.2e}, "
          f"converged={est.report.converged}")

    loaded, S_L = redesignation_setup(nda, nda[0], cat)
    d = disambiguation_measurement(S, loaded, S_L, noise_std=noise, seed=2)
    res = resolve_sign(est, acc, nda, d)
    print(f"  sign resolved={res.resolved} flipped={res.flipped}, "
          f"final error {abs(res.matrix.entries - S).max():.2e}")

print("\ntrue S (magnitudes):\n", np.round(abs(S), 3))
