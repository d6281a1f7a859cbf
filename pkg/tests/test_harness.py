import csv
import io
import json

import numpy as np
import pytest

from bdris.envgen import generate_environment
from bdris.errors import StructuralError, ValidationError
from bdris.harness import (
    CSV_COLUMNS,
    SCHEMA_VERSION,
    BenchmarkPlan,
    Variant,
    emit_report,
    parse_variants,
    run_plan,
    txrx_choices,
)
from bdris.kpi import kpi_function
from bdris.loadnet import ConfigSpace, LoadCatalog, PortMapping
from bdris.netmodel import channel_mnt, restrict_to_active
from bdris.optim import exhaustive_search

FREQS = (0, 3)


@pytest.fixture(scope="module")
def env():
    return generate_environment(n=9, n_tx=2, n_rx=3, n_freq=4, seed=21)


@pytest.fixture(scope="module")
def discrete_report(env):
    plan = BenchmarkPlan(variants=parse_variants("discrete"), kpis=("siso", "sum_rate", "spec_norm", "logdet"))
    return run_plan(plan, env)


def test_oc_only_is_direct_evaluation(env):
    report = run_plan(BenchmarkPlan(variants=[Variant("OC")], kpis=("siso", "logdet")), env)
    for k in ("siso", "logdet"):
        f = kpi_function(k)
        expected = []
        for fi in range(env.n_freq):
            for tx, rx in txrx_choices(env.partition, k):
                S, q = restrict_to_active(env.matrices[fi], env.partition, tx, rx)
                expected.append(float(f(channel_mnt(S, q, np.eye(q.n_ris)))))
        assert np.allclose(report.raw[("OC", k)].ravel(), expected, rtol=1e-13, atol=0)
    assert report.pct_vs_oc("OC", "siso") == 0.0


def test_dominance_in_every_cell(discrete_report):
    r = discrete_report
    for k in r.kpis:
        raw = lambda name: r.raw[(name, k)]
        assert np.all(raw("D-12") <= raw("D-123"))
        assert np.all(raw("D-13") <= raw("D-123"))
        assert np.all(raw("D-23") <= raw("D-123"))
        assert np.all(raw("D-123") <= raw("BD-123"))
        for sub in ("BD-12", "BD-13", "BD-23"):
            assert np.all(raw(sub) <= raw("BD-123"))
        for d, bd in (("D-12", "BD-12"), ("D-13", "BD-13"), ("D-23", "BD-23")):
            assert np.all(raw(d) <= raw(bd))


def test_unaware_never_beats_aware(discrete_report):
    r = discrete_report
    for v in r.variants:
        if v.mc_mode == "unaware":
            for k in r.kpis:
                assert np.all(r.raw[(v.label, k)] <= r.raw[(v.name, k)])
                assert r.mean(v, k) <= r.mean(v.name, k)


def test_cells_match_exhaustive_search(env, discrete_report):
    cat = LoadCatalog.default(env.frequencies_hz)
    cells = txrx_choices(env.partition, "sum_rate")
    for fi, c in ((1, 0), (2, len(cells) - 1)):
        tx, rx = cells[c]
        S, q = restrict_to_active(env.matrices[fi], env.partition, tx, rx)
        for label, space, model, mapping in [
            ("BD-12", ConfigSpace(4, (1, 2)), "mnt", None),
            ("D-23:unaware", ConfigSpace(4, (2, 3), False), "cascaded", None),
            ("IBD-123", ConfigSpace(4), "mnt", PortMapping.interleaved(4)),
        ]:
            res = exhaustive_search(S, q, cat, space, "sum_rate", model, fi, mapping)
            assert discrete_report.raw[(label, "sum_rate")][fi, c] == pytest.approx(res.best_value, rel=1e-12)


def test_full_factorial_coverage(env, discrete_report):
    r = discrete_report
    n_cells = {k: len(txrx_choices(env.partition, k)) for k in r.kpis}
    assert n_cells["siso"] == 2 * 3 and n_cells["logdet"] == 1 * 3
    total = sum(r.raw[(v.label, k)].size for v in r.variants for k in r.kpis)
    assert total == len(r.variants) * env.n_freq * sum(n_cells.values())
    for row in r.rows():
        assert row["n_cells"] == env.n_freq * n_cells[row["kpi"]]


def test_means_are_arithmetic_means(discrete_report):
    for row in discrete_report.rows():
        label = row["variant"] if row["mc_mode"] == "aware" else f"{row['variant']}:unaware"
        raw = discrete_report.raw[(label, row["kpi"])]
        assert abs(row["mean"] - np.mean(raw)) <= 1e-12 * abs(row["mean"])


def test_ideal_variants(env):
    plan = BenchmarkPlan(variants=parse_variants("OC,Ideal-D,Ideal-BD,Ideal-BD:unaware"), kpis=("siso",),
                         frequencies=(1,), restarts=2)
    r = run_plan(plan, env)
    assert np.all(r.raw[("Ideal-BD", "siso")] >= r.raw[("Ideal-D", "siso")] - 1e-9)
    assert np.all(r.raw[("Ideal-D", "siso")] > r.raw[("OC", "siso")])


def test_frequency_subset(env):
    r = run_plan(BenchmarkPlan(variants=[Variant("OC")], kpis=("siso",), frequencies=FREQS), env)
    assert r.raw[("OC", "siso")].shape == (2, 6)
    assert list(r.frequencies_hz) == [env.frequencies_hz[0], env.frequencies_hz[3]]
    with pytest.raises(StructuralError):
        run_plan(BenchmarkPlan(variants=[Variant("OC")], kpis=("siso",), frequencies=(7,)), env)


def test_generated_environment_from_plan():
    plan = BenchmarkPlan(variants=parse_variants("OC,D-12"), kpis=("siso",),
                         generator={"n": 6, "n_freq": 2, "n_tx": 1, "n_rx": 1}, seed=4)
    r = run_plan(plan)
    assert r.metadata["environment"] == "synthetic"
    assert r.metadata["environment_seed"] == 4


# --- plan validation ----------------------------------------------------------------


def test_variant_parsing():
    assert Variant.parse("BD-123:unaware") == Variant("BD-123", "unaware")
    assert Variant.parse("D-13").label == "D-13"
    assert len(parse_variants("all")) == 1 + 2 * 11
    with pytest.raises(StructuralError):
        Variant.parse("OC:unaware")
    with pytest.raises(StructuralError):
        Variant.parse("BD-124")
    with pytest.raises(StructuralError):
        Variant.parse("BD-12:sometimes")


def test_plan_validation(env):
    with pytest.raises(StructuralError):
        run_plan(BenchmarkPlan(variants=parse_variants("OC,OC")), env)
    with pytest.raises(StructuralError):
        run_plan(BenchmarkPlan(kpis=("throughput",)), env)
    with pytest.raises(StructuralError):
        run_plan(BenchmarkPlan(threads=0), env)


def test_mimo_needs_two_antennas():
    env = generate_environment(n=5, n_tx=1, n_rx=2, n_freq=1)
    with pytest.raises(StructuralError):
        run_plan(BenchmarkPlan(variants=[Variant("OC")], kpis=("sum_rate",)), env)


def test_catalog_grid_mismatch_fails_first(env):
    cat = LoadCatalog.default(env.frequencies_hz[:2])
    with pytest.raises(ValidationError, match="grid"):
        run_plan(BenchmarkPlan(kpis=("siso",)), env, cat)


# --- output -------------------------------------------------------------------------


def test_csv_layout(discrete_report):
    text = emit_report(discrete_report)
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 1 + len(discrete_report.variants) * 4
    oc = [r for r in rows[1:] if r[0] == "OC"]
    assert all(r[4] == "0.0" for r in oc)


def test_empty_variant_list_gives_header_only(env):
    r = run_plan(BenchmarkPlan(variants=[], kpis=("siso",), frequencies=(0,)), env)
    assert emit_report(r) == ",".join(CSV_COLUMNS) + "\n"


def test_json_round_trip(discrete_report, tmp_path):
    emit_report(discrete_report, tmp_path / "r.json", "json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["schema_version"] == SCHEMA_VERSION
    assert doc["columns"] == list(CSV_COLUMNS)
    for row, expected in zip(doc["rows"], discrete_report.rows()):
        assert row["mean"] == expected["mean"]
        assert row["pct_vs_oc"] == expected["pct_vs_oc"]
        assert np.mean(row["raw"]) == pytest.approx(expected["mean"], rel=1e-12)
    assert doc["metadata"]["mimo_pairing"].startswith("unordered")


def test_csv_reproduces_json_means(discrete_report):
    rows = list(csv.DictReader(io.StringIO(emit_report(discrete_report))))
    for row, expected in zip(rows, discrete_report.rows()):
        assert float(row["mean"]) == expected["mean"]


def test_unknown_format_and_unwritable_path(discrete_report, tmp_path):
    with pytest.raises(StructuralError):
        emit_report(discrete_report, fmt="xml")
    with pytest.raises(OSError):
        emit_report(discrete_report, tmp_path / "missing" / "r.csv")


def test_thread_count_does_not_change_output(env):
    plan = lambda t: BenchmarkPlan(variants=parse_variants("OC,BD-123,D-12:unaware,Ideal-D"), kpis=("siso", "logdet"),
                                   restarts=1, threads=t, seed=9)
    a = emit_report(run_plan(plan(1), env), fmt="json")
    b = emit_report(run_plan(plan(3), env), fmt="json")
    assert a == b
