"""Configuration optimization.

Two routes: exhaustive search over a discrete hardware-constrained
configuration space, and a quasi-Newton search over ideal lossless reciprocal
loads for the idealized benchmarks. Both can select the configuration with the
coupling-unaware cascaded model while reporting the physics-consistent value.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateCavityError, OptimizationError, StructuralError
from .kpi import kpi_function
from .loadnet import ConfigSpace, LoadCatalog, PortMapping, SwitchConfig, load_matrices
from .netmodel import Z0, PortPartition, channel_cascaded, channel_mnt

log = logging.getLogger(__name__)

MODELS = ("mnt", "cascaded")
MODES = ("fully_connected", "diagonal")

KpiLike = Union[str, Callable[[np.ndarray], np.ndarray]]


def _kpi(kpi: KpiLike):
    return kpi_function(kpi) if isinstance(kpi, str) else kpi


def _check_model(model: str) -> None:
    if model not in MODELS:
        raise StructuralError(f"model must be one of {MODELS}, got {model!r}")


def channel(S, p: PortPartition, S_L, model: str = "mnt") -> np.ndarray:
    _check_model(model)
    return channel_mnt(S, p, S_L) if model == "mnt" else channel_cascaded(S, p, S_L)


# --- ideal (lossless, reciprocal) loads -------------------------------------


def n_params(n_s: int, mode: str) -> int:
    if mode == "diagonal":
        return n_s
    if mode == "fully_connected":
        return n_s * (n_s + 1) // 2
    raise StructuralError(f"mode must be one of {MODES}, got {mode!r}")


def reactance_matrices(params, n_s: int, mode: str) -> np.ndarray:
    """Real symmetric reactance matrices (ohm) from parameter vectors ``(..., n_params)``."""
    params = np.asarray(params, dtype=float)
    if params.shape[-1] != n_params(n_s, mode):
        raise StructuralError(f"expected {n_params(n_s, mode)} parameters for mode {mode!r}, got {params.shape[-1]}")
    X = np.zeros(params.shape[:-1] + (n_s, n_s))
    if mode == "diagonal":
        idx = np.arange(n_s)
        X[..., idx, idx] = params
    else:
        iu, ju = np.triu_indices(n_s)
        X[..., iu, ju] = params
        X[..., ju, iu] = params
    return X


def cayley(X) -> np.ndarray:
    """``S_L = (jX + Z0 I)^-1 (jX - Z0 I)``: unitary and symmetric for real symmetric X."""
    X = np.asarray(X, dtype=float)
    n = X.shape[-1]
    Z = 1j * X
    eye = np.eye(n)
    return np.linalg.solve(Z + Z0 * eye, Z - Z0 * eye)


@dataclass(frozen=True)
class IdealLoadParametrization:
    """Purely imaginary symmetric load impedance ``Z_L = jX``, stored as the
    upper triangle of ``X`` (ohm), or its diagonal in ``diagonal`` mode."""

    n_s: int
    params: np.ndarray
    mode: str = "fully_connected"

    def __post_init__(self):
        p = np.array(self.params, dtype=float).reshape(-1)
        if p.size != n_params(self.n_s, self.mode):
            raise StructuralError(f"expected {n_params(self.n_s, self.mode)} parameters, got {p.size}")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    @classmethod
    def from_load_scattering(cls, S_L, mode: str = "fully_connected") -> "IdealLoadParametrization":
        """Inverse Cayley map. ``S_L`` must be unitary, symmetric, without eigenvalue +1."""
        S_L = np.asarray(S_L, dtype=complex)
        n = S_L.shape[0]
        eye = np.eye(n)
        Z = Z0 * np.linalg.solve((eye - S_L).T, (eye + S_L).T).T
        X = (Z.imag + Z.imag.T) / 2
        if mode == "diagonal":
            return cls(n, np.diag(X).copy(), mode)
        return cls(n, X[np.triu_indices(n)], mode)

    def reactance(self) -> np.ndarray:
        return reactance_matrices(self.params, self.n_s, self.mode)

    def impedance(self) -> np.ndarray:
        return 1j * self.reactance()

    def load_scattering(self) -> np.ndarray:
        return cayley(self.reactance())


@dataclass(frozen=True)
class SearchResult:
    """Outcome of an optimization.

    ``best_value`` is always the physics-consistent KPI of ``best_config``;
    ``selection_value`` is the objective the optimizer actually maximized
    (they differ only for the cascaded model).
    """

    best_value: float
    best_config: Union[SwitchConfig, IdealLoadParametrization]
    evaluations: int
    model: str
    selection_value: float
    best_index: int | None = None


# --- exhaustive search ------------------------------------------------------


def select_best(report_values: np.ndarray, selection_values: np.ndarray, candidates=None) -> int:
    """Index maximizing ``selection_values`` (first one on ties).

    ``candidates`` optionally restricts the search to a boolean mask or an
    increasing index array.
    """
    if candidates is None:
        if selection_values.size == 0:
            raise StructuralError("empty configuration space")
        return int(np.argmax(selection_values))
    candidates = np.asarray(candidates)
    if candidates.dtype == bool:
        candidates = np.flatnonzero(candidates)
    if candidates.size == 0:
        raise StructuralError("empty configuration space")
    return int(candidates[np.argmax(selection_values[candidates])])


def exhaustive_search(
    S,
    p: PortPartition,
    cat: LoadCatalog,
    space: ConfigSpace,
    kpi: KpiLike,
    model: str = "mnt",
    f_index: int = 0,
    mapping: PortMapping | None = None,
) -> SearchResult:
    """Globally optimal configuration of ``space`` by brute force.

    With ``model="cascaded"`` the configuration is chosen with the cascaded
    channel but ``best_value`` is its physics-consistent KPI. Ties go to the
    lexicographically smallest configuration.
    """
    _check_model(model)
    if space.n_s != p.n_ris:
        raise StructuralError(f"space has {space.n_s} ports but the environment has {p.n_ris} RIS ports")
    f = _kpi(kpi)
    codes = space.codes()
    S_L = load_matrices(codes, cat, f_index, mapping)
    report = f(channel_mnt(S, p, S_L))
    selection = report if model == "mnt" else f(channel_cascaded(S, p, S_L))
    i = select_best(report, selection)
    return SearchResult(
        best_value=float(report[i]),
        best_config=SwitchConfig.from_codes(codes[i]),
        evaluations=len(codes),
        model=model,
        selection_value=float(selection[i]),
        best_index=i,
    )


# --- quasi-Newton over ideal loads ------------------------------------------


class _NonFinite(Exception):
    pass


def central_difference_gradient(F: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    """Central differences with step ``1e-4 * max(1, |x_i|)``; ``F`` is evaluated on a batch."""
    h = 1e-4 * np.maximum(1.0, np.abs(x))
    steps = np.diag(h)
    values = F(np.vstack([x + steps, x - steps]))
    n = x.size
    return (values[:n] - values[n:]) / (2 * h)


def ideal_optimize(
    S,
    p: PortPartition,
    kpi: KpiLike,
    mode: str = "fully_connected",
    model: str = "mnt",
    restarts: int = 8,
    seed=0,
    init=(),
    init_range: float = 200.0,
    max_iter: int = 500,
    gtol: float = 1e-7,
) -> SearchResult:
    """Maximize a KPI over lossless reciprocal loads with BFGS.

    Each of ``restarts`` runs starts from reactances drawn uniformly on
    ``[-init_range, init_range]`` ohm. ``init`` adds warm starts (parameter
    vectors or IdealLoadParametrization) that run before the random ones.
    """
    _check_model(model)
    if restarts < 1:
        raise StructuralError("restarts must be at least 1")
    n_s = p.n_ris
    k = n_params(n_s, mode)
    f = _kpi(kpi)
    evaluations = 0

    def batch_objective(xs):
        nonlocal evaluations
        xs = np.atleast_2d(xs)
        evaluations += len(xs)
        S_L = cayley(reactance_matrices(xs, n_s, mode))
        try:
            values = f(channel(S, p, S_L, model))
        except DegenerateCavityError:
            raise _NonFinite("degenerate cavity") from None
        if not np.all(np.isfinite(values)):
            raise _NonFinite("non-finite objective")
        return -values

    starts = []
    for x0 in init:
        if isinstance(x0, IdealLoadParametrization):
            if x0.n_s != n_s or x0.mode != mode:
                raise StructuralError("warm start does not match the problem size or mode")
            x0 = x0.params
        starts.append(np.asarray(x0, dtype=float).reshape(k))
    rng = np.random.default_rng(seed)
    starts += [rng.uniform(-init_range, init_range, size=k) for _ in range(restarts)]

    best = None
    for run, x0 in enumerate(starts):
        try:
            res = minimize(
                lambda x: batch_objective(x)[0],
                x0,
                jac=lambda x: central_difference_gradient(batch_objective, x),
                method="BFGS",
                options={"gtol": gtol, "maxiter": max_iter},
            )
        except _NonFinite as exc:
            log.warning("ideal_optimize: restart %d discarded (%s)", run, exc)
            continue
        if not np.all(np.isfinite(res.x)):
            log.warning("ideal_optimize: restart %d discarded (non-finite parameters)", run)
            continue
        value = -float(res.fun)
        if best is None or value > best[0]:
            best = (value, res.x.copy())
    if best is None:
        raise OptimizationError("all optimizer restarts were discarded")

    config = IdealLoadParametrization(n_s, best[1], mode)
    S_L = config.load_scattering()
    report = float(np.asarray(f(channel_mnt(S, p, S_L))).reshape(()))
    return SearchResult(report, config, evaluations, model, best[0])


def mc_unawareness_gap(S, p: PortPartition, kpi: KpiLike, space: ConfigSpace | None = None, cat: LoadCatalog | None = None,
                       mode: str | None = None, **kwargs) -> tuple[float, float]:
    """Physics-consistent KPI reached when optimizing with and without coupling awareness.

    Pass ``space`` and ``cat`` for exhaustive search, or ``mode`` for the
    ideal-load optimizer. Returns ``(aware_value, unaware_value)``.
    """
    if space is not None:
        if cat is None:
            raise StructuralError("exhaustive search needs a load catalog")
        aware = exhaustive_search(S, p, cat, space, kpi, "mnt", **kwargs)
        unaware = exhaustive_search(S, p, cat, space, kpi, "cascaded", **kwargs)
    elif mode is not None:
        aware = ideal_optimize(S, p, kpi, mode, "mnt", **kwargs)
        unaware = ideal_optimize(S, p, kpi, mode, "cascaded", **kwargs)
    else:
        raise StructuralError("give either a configuration space or an ideal-load mode")
    return aware.best_value, unaware.best_value
