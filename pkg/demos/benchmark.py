"""Benchmark table: average KPI per variant over frequencies and TX/RX choices.

Uses a handful of frequency points to stay quick; drop ``frequencies`` for the
full 201-point sweep (about a minute per environment on one core).

Run:  python3 demos/benchmark.py
"""

from bdris.envgen import generate_environment
from bdris.harness import BenchmarkPlan, emit_report, parse_variants, run_plan

env = generate_environment(seed=0)
plan = BenchmarkPlan(
    variants=parse_variants("OC,D-12,D-123,BD-12,BD-123,IBD-123,BD-123:unaware"),
    kpis=("siso", "sum_rate", "spec_norm", "logdet"),
    frequencies=tuple(range(0, 201, 25)),
)
report = run_plan(plan, env)

print(f"{'variant':18s}" + "".join(f"{k:>12s}" for k in plan.kpis))
for v in report.variants:
    cells = "".join(f"{report.pct_vs_oc(v, k):+11.1f}%" for k in plan.kpis)
    print(f"{v.label:18s}{cells}")
print("\n(improvement over the open-circuit baseline)")
print("\nCSV form:\n")
print(emit_report(report))
