"""Physics-consistent vs cascaded channel on one synthetic environment.

Run:  python3 demos/channel_models.py
"""

import numpy as np

from bdris.envgen import generate_environment
from bdris.kpi import siso_gain
from bdris.loadnet import LoadCatalog, SwitchConfig, build_load_scattering
from bdris.netmodel import channel_cascaded, channel_mnt, restrict_to_active, validate

env = generate_environment(n_freq=11, seed=1, coupling_strength=0.8)
p = env.partition
print(f"{env.n_ports} ports: TX {p.tx}, RX {p.rx}, RIS {p.ris}")
print("environment at 800 MHz:", validate(env.matrices[5]))

cat = LoadCatalog.default(env.frequencies_hz)
cfg = SwitchConfig.parse("1RL2 3RL1")
S_L = build_load_scattering(cfg, cat, f_index=5).entries
print(f"\nconfiguration {cfg}:")
print(np.round(np.abs(S_L), 2))

# one TX/RX pair; the unused antennas are matched and simply drop out
S, q = restrict_to_active(env.matrices[5], p, [p.tx[0]], [p.rx[0]])
h_mnt = channel_mnt(S, q, S_L)[0, 0]
h_cas = channel_cascaded(S, q, S_L)[0, 0]
print(f"\n|h|^2 with mutual coupling:    {siso_gain(h_mnt):.4e}")
print(f"|h|^2 ignoring mutual coupling: {siso_gain(h_cas):.4e}")

# the two models agree once the RIS elements stop talking to each other
S0 = S.entries.copy()
S0[np.ix_(q.ris, q.ris)] = 0
gap = abs(channel_mnt(S0, q, S_L) - channel_cascaded(S0, q, S_L)).max()
print(f"difference with S_SS = 0: {gap:.1e}")

# a perfectly absorptive load makes S_L singular; the channel is still well defined
S_abs = np.diag([0.0] * 8).astype(complex)
print("all ports absorptive:", np.round(channel_mnt(S, q, S_abs)[0, 0], 4), "== direct path",
      np.round(S.entries[q.rx[0], q.tx[0]], 4))
