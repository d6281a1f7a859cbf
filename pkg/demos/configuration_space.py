"""Counting and enumerating switch configurations of an eight-element tridiagonal RIS.

Run:  python3 demos/configuration_space.py
"""

from bdris.loadnet import ConfigSpace, LoadCatalog, PortMapping, SwitchConfig, build_load_scattering, count_configs

for loads, coupled, label in [((1, 2, 3), True, "BD-123"), ((1, 2), True, "BD-12"),
                              ((1, 2, 3), False, "D-123"), ((1, 2), False, "D-12")]:
    space = ConfigSpace(8, loads, coupled)
    print(f"{label:7s} {space.count():6d} configurations")

# sum over m connected pairs: C(n - m, m) * 3^(n - 2m)
print("\nclosed form vs enumeration for n_s = 1..10:")
for n in range(1, 11):
    print(f"  n_s={n:2d}  {count_configs(n):7d}  {len(ConfigSpace(n).codes()):7d}")

space = ConfigSpace(8)
print("\nfirst, middle and last configuration in lexicographic order:")
for i in (0, space.count() // 2, space.count() - 1):
    print(f"  #{i:5d}  {space.config_at(i)}")

# the same switch settings seen through the interleaved wiring
cfg = SwitchConfig.parse("RL1RL2RL")
cat = LoadCatalog.default()
plain = build_load_scattering(cfg, cat).entries
inter = build_load_scattering(cfg, cat, mapping=PortMapping.interleaved(8)).entries
print(f"\n{cfg}: nonzero pattern, identity wiring vs interleaved wiring")
for a, b in zip(plain != 0, inter != 0):
    print("  " + "".join("x" if v else "." for v in a) + "    " + "".join("x" if v else "." for v in b))
