"""Command-line entry point: ``bdris {gen-env,run,vvna-sim,vvna-estimate}``.

Exit codes: 0 success, 2 validation/parse error, 3 I/O error, 4 estimator
did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .envgen import generate_environment, load_environment, save_environment
from .errors import BdrisError, ParseError, ValidationError
from .harness import BenchmarkPlan, emit_report, parse_variants, run_plan
from .loadnet import LoadCatalog, load_catalog
from .vvna import (
    Disambiguation,
    disambiguation_measurement,
    estimate_scattering,
    load_measurements,
    redesignation_setup,
    resolve_sign,
    save_measurements,
    simulate_campaign,
)

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NONCONVERGENCE = 0, 2, 3, 4

log = logging.getLogger("bdris")


def _generator_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("synthetic environment")
    g.add_argument("--n", type=int, default=15, help="number of ports")
    g.add_argument("--n-tx", type=int, default=None)
    g.add_argument("--n-rx", type=int, default=None)
    g.add_argument("--n-freq", type=int, default=201)
    g.add_argument("--loss", type=float, default=0.95, help="largest singular value of S")
    g.add_argument("--coupling", type=float, default=0.5, help="RIS-RIS coupling strength in [0, 1]")
    g.add_argument("--f-start", type=float, default=700e6)
    g.add_argument("--f-stop", type=float, default=900e6)


def _generator_params(args) -> dict:
    return dict(
        n=args.n,
        n_freq=args.n_freq,
        loss_factor=args.loss,
        coupling_strength=args.coupling,
        n_tx=args.n_tx,
        n_rx=args.n_rx,
        f_start_hz=args.f_start,
        f_stop_hz=args.f_stop,
    )


def _environment(args):
    if args.env:
        return load_environment(args.env)
    return generate_environment(seed=args.seed, **_generator_params(args))


def _catalog(args, env=None):
    if args.catalog:
        return load_catalog(args.catalog)
    return LoadCatalog.default(env.frequencies_hz if env is not None else (800e6,))


def _frequency_indices(text: str | None):
    if not text:
        return None
    if ":" in text:
        parts = [int(x) if x else None for x in text.split(":")]
        return tuple(range(*slice(*parts).indices(10**9)))
    return tuple(int(x) for x in text.split(","))


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gen_env(args) -> int:
    env = generate_environment(seed=args.seed, **_generator_params(args))
    save_environment(env, args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    plan = BenchmarkPlan(
        variants=parse_variants(args.variants),
        kpis=tuple(k.strip() for k in args.kpis.split(",") if k.strip()),
        env_path=args.env,
        catalog_path=args.catalog,
        snr_db=args.snr_db,
        seed=args.seed,
        restarts=args.restarts,
        threads=args.threads,
    )
    env = _environment(args)
    freqs = _frequency_indices(args.freqs)
    if freqs is not None:
        plan.frequencies = tuple(f for f in freqs if f < env.n_freq)
    report = run_plan(plan, env, _catalog(args, env))
    _write(emit_report(report, None, args.format), args.out)
    return EXIT_OK


def cmd_vvna_sim(args) -> int:
    env = _environment(args)
    cat = _catalog(args, env)
    S = env.at(args.freq_index)
    nda = tuple(int(x) for x in args.nda.split(",")) if args.nda else env.partition.ris
    m = simulate_campaign(S, nda, cat, args.n_meas, args.seed, args.noise, args.freq_index)
    save_measurements(m, args.out)
    if args.disambiguation_out:
        loaded, S_L = redesignation_setup(nda, nda[0], cat, args.freq_index)
        d = disambiguation_measurement(S, loaded, S_L, args.noise, seed=args.seed + 1)
        Path(args.disambiguation_out).write_text(json.dumps(disambiguation_to_dict(d)) + "\n")
    return EXIT_OK


def _pairs(a) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(a).reshape(-1)]


def _complex(pairs, n) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(n, n)


def disambiguation_to_dict(d: Disambiguation) -> dict:
    return {
        "format": "bdris-disambiguation",
        "version": 1,
        "loaded": list(d.loaded),
        "load_matrix": _pairs(d.S_L),
        "matrix": _pairs(d.matrix),
    }


def disambiguation_from_dict(doc: dict) -> Disambiguation:
    try:
        loaded = tuple(doc["loaded"])
        S_L = _complex(doc["load_matrix"], len(loaded))
        M = np.asarray(doc["matrix"], dtype=float)
        n = int(round(np.sqrt(len(M))))
        return Disambiguation(loaded, S_L, _complex(M, n))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed disambiguation document: {exc}") from None


def cmd_vvna_estimate(args) -> int:
    m = load_measurements(args.meas)
    if args.catalog:
        cat = load_catalog(args.catalog)
    else:
        # the default catalog is frequency-flat
        cat, m = LoadCatalog.default(), replace(m, f_index=0)
    if not 0 <= m.f_index < cat.n_freq:
        raise ValidationError(f"measurement frequency index {m.f_index} outside the catalog grid")
    est = estimate_scattering(m, cat, seed=args.seed, starts=args.starts, tol=args.tol)
    r = est.report
    doc = {
        "format": "bdris-estimate",
        "version": 1,
        "accessible": list(m.accessible),
        "nda": list(m.nda),
        "frequency_hz": m.frequency_hz,
        "matrix": _pairs(est.matrix.entries),
        "report": {
            "residual": r.residual,
            "iterations": r.iterations,
            "converged": r.converged,
            "start_residuals": list(r.start_residuals),
            "n_equations": r.n_equations,
            "n_unknowns": r.n_unknowns,
            "message": r.message,
        },
        "sign": {"resolved": False, "flipped": False, "residuals": None},
    }
    if args.disambiguation:
        try:
            d_doc = json.loads(Path(args.disambiguation).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
        res = resolve_sign(est, m.accessible, m.nda, disambiguation_from_dict(d_doc))
        doc["sign"] = {"resolved": res.resolved, "flipped": res.flipped, "residuals": list(res.residuals)}
        if res.resolved:
            doc["matrix"] = _pairs(res.matrix.entries)
    _write(json.dumps(doc, indent=1) + "\n", args.out)
    if not r.converged:
        log.error("estimation did not converge: %s", r.message)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bdris", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-env", help="generate a synthetic environment sweep")
    _generator_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_env)

    p = sub.add_parser("run", help="run a benchmark plan and write a KPI report")
    p.add_argument("--env", help="environment file (default: generate one)")
    _generator_args(p)
    p.add_argument("--catalog", help="load catalog file (default: synthetic catalog)")
    p.add_argument("--variants", default="discrete", help="comma list, e.g. OC,BD-123,BD-123:unaware; or 'all'/'discrete'")
    p.add_argument("--kpis", default="siso,sum_rate,spec_norm,logdet")
    p.add_argument("--snr-db", type=float, default=100.0)
    p.add_argument("--freqs", help="frequency indices: '0,5,9' or 'start:stop:step'")
    p.add_argument("--restarts", type=int, default=8, help="quasi-Newton restarts for Ideal variants")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("vvna-sim", help="simulate a Virtual VNA measurement campaign")
    p.add_argument("--env", help="environment file (default: generate one)")
    _generator_args(p)
    p.add_argument("--catalog")
    p.add_argument("--freq-index", type=int, default=0)
    p.add_argument("--nda", help="comma list of NDA ports (default: the RIS ports)")
    p.add_argument("--n-meas", type=int, default=900)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--disambiguation-out", help="also write a sign-disambiguation measurement")
    p.set_defaults(func=cmd_vvna_sim)

    p = sub.add_parser("vvna-estimate", help="estimate the full scattering matrix from a campaign")
    p.add_argument("--meas", required=True)
    p.add_argument("--catalog")
    p.add_argument("--disambiguation", help="disambiguation measurement file")
    p.add_argument("--starts", type=int, default=4)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_vvna_estimate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except BdrisError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
