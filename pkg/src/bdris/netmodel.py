"""Multi-port network types and the two end-to-end channel models.

The environment is a passive reciprocal N-port described by ``S``; the RIS
element ports are terminated by a load network ``S_L``. The physics-consistent
channel is

    H = S_RT + S_RS (S_L^-1 - S_SS)^-1 S_ST

which is evaluated here in the push-through form
``S_RT + S_RS S_L (I - S_SS S_L)^-1 S_ST`` so that singular loads (an
absorptive termination with zero reflection) need no special casing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateCavityError, StructuralError

Z0 = 50.0
"""Reference impedance (ohm) used at every port."""

RCOND_MIN = 1e-12
SYMMETRY_TOL = 1e-9


def _entries(S) -> np.ndarray:
    if isinstance(S, ScatteringMatrix):
        return S.entries
    return np.asarray(S, dtype=complex)


@dataclass(frozen=True)
class ScatteringMatrix:
    """Complex square scattering matrix, optionally tagged with a frequency."""

    entries: np.ndarray
    frequency_hz: float | None = None

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise StructuralError(f"scattering matrix must be square and non-empty, got shape {a.shape}")
        if self.frequency_hz is not None and not self.frequency_hz > 0:
            raise StructuralError(f"frequency must be positive, got {self.frequency_hz}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n_ports(self) -> int:
        return self.entries.shape[0]

    def block(self, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
        return self.entries[np.ix_(list(rows), list(cols))]

    def validate(self, tol: float = SYMMETRY_TOL) -> "ValidationReport":
        return validate(self, tol)

    def __eq__(self, other):
        if not isinstance(other, ScatteringMatrix):
            return NotImplemented
        return self.frequency_hz == other.frequency_hz and np.array_equal(self.entries, other.entries)

    __hash__ = None


@dataclass(frozen=True)
class PortPartition:
    """Transmitter, receiver and RIS port index sets over the environment ports."""

    tx: tuple[int, ...]
    rx: tuple[int, ...]
    ris: tuple[int, ...]

    def __post_init__(self):
        for name in ("tx", "rx", "ris"):
            object.__setattr__(self, name, tuple(int(i) for i in getattr(self, name)))
        everything = self.tx + self.rx + self.ris
        if any(i < 0 for i in everything):
            raise StructuralError("port indices must be non-negative")
        if len(set(everything)) != len(everything):
            raise StructuralError("tx, rx and ris index sets must be pairwise disjoint and duplicate-free")

    @property
    def n_tx(self) -> int:
        return len(self.tx)

    @property
    def n_rx(self) -> int:
        return len(self.rx)

    @property
    def n_ris(self) -> int:
        return len(self.ris)

    @property
    def accessible(self) -> tuple[int, ...]:
        """Antenna ports (transmitters then receivers)."""
        return self.tx + self.rx

    def check(self, n_ports: int) -> None:
        top = max(self.tx + self.rx + self.ris, default=-1)
        if top >= n_ports:
            raise StructuralError(f"port index {top} out of range for a {n_ports}-port network")

    def swapped(self) -> "PortPartition":
        """Same network with the roles of transmitters and receivers exchanged."""
        return PortPartition(tx=self.rx, rx=self.tx, ris=self.ris)


@dataclass(frozen=True)
class ValidationReport:
    max_asymmetry: float
    max_singular_value: float
    tol: float
    problems: tuple[str, ...] = field(default=())

    @property
    def symmetric(self) -> bool:
        return self.max_asymmetry <= self.tol

    @property
    def passive(self) -> bool:
        return self.max_singular_value <= 1.0 + self.tol

    @property
    def passed(self) -> bool:
        return self.symmetric and self.passive

    def __bool__(self):
        return self.passed


def validate(S, tol: float = SYMMETRY_TOL) -> ValidationReport:
    """Check reciprocity (symmetry) and passivity (sigma_max <= 1)."""
    a = _entries(S)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise StructuralError(f"expected a non-empty square matrix, got shape {a.shape}")
    asym = float(np.max(np.abs(a - a.T)))
    smax = float(np.linalg.norm(a, 2))
    problems = []
    if asym > tol:
        problems.append(f"not reciprocal: max |S_ij - S_ji| = {asym:.3e}")
    if smax > 1.0 + tol:
        problems.append(f"not passive: sigma_max = {smax:.6g}")
    return ValidationReport(asym, smax, tol, tuple(problems))


def _lmul(M: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``M @ X`` for a fixed matrix ``M`` and a stack ``X``, as a single GEMM."""
    if X.ndim == 2:
        return M @ X
    lead, (k, m) = X.shape[:-2], X.shape[-2:]
    flat = np.moveaxis(X.reshape(-1, k, m), 0, 1).reshape(k, -1)
    return np.moveaxis((M @ flat).reshape(M.shape[0], -1, m), 0, 1).reshape(lead + (M.shape[0], m))


def _rmul(X: np.ndarray, M: np.ndarray) -> np.ndarray:
    """``X @ M`` for a stack ``X`` and a fixed matrix ``M``, as a single GEMM."""
    if X.ndim == 2:
        return X @ M
    return (X.reshape(-1, X.shape[-1]) @ M).reshape(X.shape[:-1] + M.shape[-1:])


def loaded_response(S, rows: Sequence[int], cols: Sequence[int], loaded: Sequence[int], S_L) -> np.ndarray:
    """Response between ``cols`` and ``rows`` with the ``loaded`` ports terminated by ``S_L``.

    ``S_L`` may be a stack of shape ``(..., n, n)``; the result then carries
    the same leading axes. Ports outside ``rows``, ``cols`` and ``loaded`` are
    treated as matched.
    """
    a = _entries(S)
    rows, cols, loaded = list(rows), list(cols), list(loaded)
    S_L = _entries(S_L)
    n = len(loaded)
    if S_L.shape[-2:] != (n, n):
        raise StructuralError(f"load matrix must be {n}x{n}, got {S_L.shape[-2:]}")
    direct = a[np.ix_(rows, cols)]
    if n == 0:
        return np.broadcast_to(direct, S_L.shape[:-2] + direct.shape).copy()
    S_rl = a[np.ix_(rows, loaded)]
    S_ll = a[np.ix_(loaded, loaded)]
    S_lc = a[np.ix_(loaded, cols)]
    A = np.eye(n) - S_ll @ S_L
    # ||S_ll S_L||_2 <= q < 1 bounds cond_2(A) by (1+q)/(1-q), and cond_1 <= n cond_2
    mag = np.abs(S_L)
    load_norm = np.sqrt(mag.sum(axis=-2).max(axis=-1) * mag.sum(axis=-1).max(axis=-1))
    q = np.linalg.norm(S_ll, 2) * load_norm.max(initial=0.0)
    if q < 1 and (1 - q) / ((1 + q) * n) >= RCOND_MIN:
        rhs = np.ascontiguousarray(np.broadcast_to(S_lc, A.shape[:-1] + S_lc.shape[-1:]))
        return direct + _lmul(S_rl, S_L @ np.linalg.solve(A, rhs))
    try:
        A_inv = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCavityError("I - S_SS S_L is singular") from exc
    norm_a = np.abs(A).sum(axis=-2).max(axis=-1)
    norm_inv = np.abs(A_inv).sum(axis=-2).max(axis=-1)
    with np.errstate(over="ignore", invalid="ignore"):
        rcond = 1.0 / (norm_a * norm_inv)
    if not np.all(rcond >= RCOND_MIN):
        raise DegenerateCavityError(
            f"I - S_SS S_L is ill-conditioned (reciprocal condition {np.nanmin(rcond):.2e} < {RCOND_MIN})"
        )
    return direct + _lmul(S_rl, S_L @ _rmul(A_inv, S_lc))


def _check_inputs(S, p: PortPartition, S_L) -> np.ndarray:
    a = _entries(S)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise StructuralError(f"environment matrix must be square, got shape {a.shape}")
    p.check(a.shape[0])
    S_L = _entries(S_L)
    if S_L.shape[-2:] != (p.n_ris, p.n_ris):
        raise StructuralError(f"load matrix must be {p.n_ris}x{p.n_ris}, got {S_L.shape[-2:]}")
    return S_L


def channel_mnt(S, p: PortPartition, S_L) -> np.ndarray:
    """Physics-consistent end-to-end channel (rows = receivers, columns = transmitters).

    Accepts a single load matrix or a stack of them.
    """
    S_L = _check_inputs(S, p, S_L)
    return loaded_response(S, p.rx, p.tx, p.ris, S_L)


def channel_cascaded(S, p: PortPartition, S_L) -> np.ndarray:
    """Mutual-coupling-unaware cascaded channel ``S_RT + S_RS S_L S_ST``."""
    S_L = _check_inputs(S, p, S_L)
    a = _entries(S)
    S_rt = a[np.ix_(p.rx, p.tx)]
    S_rs = a[np.ix_(p.rx, p.ris)]
    S_st = a[np.ix_(p.ris, p.tx)]
    return S_rt + _lmul(S_rs, _rmul(S_L, S_st))


def restrict_to_active(S, p: PortPartition, active_tx: Iterable[int], active_rx: Iterable[int]):
    """Drop unused antennas, which are assumed terminated by matched loads.

    Matched terminations at the reference impedance reflect nothing, so the
    remaining network is simply the submatrix over the kept ports. Kept ports
    retain their original relative order; the returned partition is
    re-indexed into the submatrix.
    """
    a = _entries(S)
    p.check(a.shape[0])
    active_tx, active_rx = tuple(active_tx), tuple(active_rx)
    if not active_tx or not active_rx:
        raise StructuralError("at least one active transmitter and one active receiver are required")
    if not set(active_tx) <= set(p.tx):
        raise StructuralError(f"active transmitters {active_tx} not a subset of {p.tx}")
    if not set(active_rx) <= set(p.rx):
        raise StructuralError(f"active receivers {active_rx} not a subset of {p.rx}")
    tx = tuple(i for i in p.tx if i in active_tx)
    rx = tuple(i for i in p.rx if i in active_rx)
    keep = sorted(tx + rx + p.ris)
    new_index = {old: new for new, old in enumerate(keep)}
    sub = a[np.ix_(keep, keep)]
    freq = S.frequency_hz if isinstance(S, ScatteringMatrix) else None
    q = PortPartition(
        tx=tuple(new_index[i] for i in tx),
        rx=tuple(new_index[i] for i in rx),
        ris=tuple(new_index[i] for i in p.ris),
    )
    return ScatteringMatrix(sub, freq), q
