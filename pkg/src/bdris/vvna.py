"""Virtual VNA: estimate a full scattering matrix from accessible-port measurements.

Only the accessible ports ``A`` are measured; the not-directly-accessible
(NDA) ports ``S`` are terminated by the switched load network in many random
configurations. Fitting all measurements recovers ``S_AA``, ``S_AS`` and
``S_SS`` up to a joint sign flip of the ``S_AS``/``S_SA`` blocks, which one
extra measurement that breaks the flip symmetry resolves.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParseError, StructuralError, ValidationError
from .loadnet import ConfigSpace, LoadCatalog, SwitchConfig, load_matrices
from .netmodel import ScatteringMatrix, _entries, loaded_response

log = logging.getLogger(__name__)

MEAS_FORMAT = "bdris-measurements"
MEAS_VERSION = 1


def complement(n: int, nda: Sequence[int]) -> tuple[int, ...]:
    nda = set(nda)
    return tuple(i for i in range(n) if i not in nda)


def forward_measure(S_true, nda: Sequence[int], S_L) -> np.ndarray:
    """Accessible-port matrix with the ``nda`` ports (in the given order) terminated by ``S_L``.

    Accessible ports are all remaining ports in increasing order.
    """
    a = _entries(S_true)
    nda = tuple(nda)
    if len(set(nda)) != len(nda) or any(not 0 <= i < a.shape[0] for i in nda):
        raise StructuralError(f"invalid NDA port set {nda} for a {a.shape[0]}-port network")
    acc = complement(a.shape[0], nda)
    return loaded_response(a, acc, acc, nda, S_L)


def flip_sign(S, accessible: Sequence[int], nda: Sequence[int]) -> np.ndarray:
    """Negate the accessible/NDA cross blocks."""
    a = np.array(_entries(S), dtype=complex)
    acc, nda = list(accessible), list(nda)
    a[np.ix_(acc, nda)] *= -1
    a[np.ix_(nda, acc)] *= -1
    return a


# --- measurement campaigns --------------------------------------------------


@dataclass(frozen=True)
class MeasurementSet:
    """Accessible-port matrices recorded under known NDA switch configurations.

    ``codes[m]`` is the switch configuration (state codes, in ``nda`` order)
    of measurement ``m`` and ``matrices[m]`` the measured ``|A| x |A|`` matrix.
    """

    accessible: tuple[int, ...]
    nda: tuple[int, ...]
    codes: np.ndarray
    matrices: np.ndarray
    f_index: int = 0
    frequency_hz: float | None = None

    def __post_init__(self):
        acc = tuple(int(i) for i in self.accessible)
        nda = tuple(int(i) for i in self.nda)
        if sorted(acc + nda) != list(range(len(acc) + len(nda))):
            raise StructuralError("accessible and NDA ports must partition 0..N-1")
        codes = np.array(self.codes, dtype=np.int8).reshape(-1, len(nda))
        mats = np.array(self.matrices, dtype=complex)
        if mats.shape != (len(codes), len(acc), len(acc)):
            raise StructuralError(f"expected {len(codes)} matrices of size {len(acc)}, got {mats.shape}")
        for row in codes:
            SwitchConfig.from_codes(row)
        asym = np.max(np.abs(mats - np.swapaxes(mats, 1, 2)), axis=(1, 2), initial=0.0)
        smax = np.linalg.norm(mats, 2, axis=(1, 2)) if len(mats) else np.zeros(0)
        bad = np.flatnonzero((asym > 1e-9) | (smax > 1 + 1e-9)).tolist()
        if bad:
            raise ValidationError(f"measurements {bad} are not symmetric and passive", bad)
        codes.setflags(write=False)
        mats.setflags(write=False)
        object.__setattr__(self, "accessible", acc)
        object.__setattr__(self, "nda", nda)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "matrices", mats)

    @property
    def n_ports(self) -> int:
        return len(self.accessible) + len(self.nda)

    def __len__(self):
        return len(self.codes)

    def configs(self) -> list[SwitchConfig]:
        return [SwitchConfig.from_codes(c) for c in self.codes]

    def __eq__(self, other):
        if not isinstance(other, MeasurementSet):
            return NotImplemented
        return (
            self.accessible == other.accessible
            and self.nda == other.nda
            and self.f_index == other.f_index
            and self.frequency_hz == other.frequency_hz
            and np.array_equal(self.codes, other.codes)
            and np.array_equal(self.matrices, other.matrices)
        )

    __hash__ = None


def _noise(shape, std, rng) -> np.ndarray:
    z = rng.standard_normal(shape + (2,)) * (std / np.sqrt(2))
    return z[..., 0] + 1j * z[..., 1]


def random_configs(space: ConfigSpace, count: int, rng) -> np.ndarray:
    """Configurations drawn uniformly from ``space``."""
    idx = rng.integers(0, space.count(), size=count)
    return np.array([space.config_at(int(i)).codes for i in idx], dtype=np.int8).reshape(count, space.n_s)


def simulate_campaign(
    S_true,
    nda: Sequence[int],
    cat: LoadCatalog,
    n_meas: int = 900,
    seed=0,
    noise_std: float = 0.0,
    f_index: int = 0,
    space: ConfigSpace | None = None,
) -> MeasurementSet:
    """Measure the accessible ports under ``n_meas`` random NDA configurations.

    Optional complex Gaussian noise of standard deviation ``noise_std`` per
    entry is added and the result re-symmetrized.
    """
    if n_meas < 1:
        raise StructuralError("n_meas must be at least 1")
    if noise_std < 0:
        raise StructuralError("noise_std must be non-negative")
    a = _entries(S_true)
    nda = tuple(nda)
    if space is None:
        space = ConfigSpace(len(nda))
    rng = np.random.default_rng(seed)
    codes = random_configs(space, n_meas, rng)
    mats = forward_measure(a, nda, load_matrices(codes, cat, f_index))
    if noise_std > 0:
        mats = mats + _noise(mats.shape, noise_std, rng)
        mats = (mats + np.swapaxes(mats, 1, 2)) / 2
    freq = S_true.frequency_hz if isinstance(S_true, ScatteringMatrix) else None
    return MeasurementSet(complement(a.shape[0], nda), nda, codes, mats, f_index, freq)


# --- estimation -------------------------------------------------------------


@dataclass(frozen=True)
class FitReport:
    residual: float
    iterations: int
    converged: bool
    start_residuals: tuple[float, ...]
    n_equations: int
    n_unknowns: int
    sign_ambiguous: bool = True
    message: str = ""


@dataclass(frozen=True)
class Estimate:
    matrix: ScatteringMatrix
    report: FitReport


def _loss_and_grad(S_aa, S_as, S_ss, loads, measured, need_grad=True):
    """Sum of squared Frobenius errors and its conjugate gradients (``dL/d conj(P)``)."""
    n = S_ss.shape[0]
    W = np.linalg.inv(np.eye(n) - S_ss @ loads)
    B = loads @ W
    SB = S_as @ B
    E = S_aa + SB @ S_as.T - measured
    loss = float(np.sum(E.real**2 + E.imag**2))
    if not need_grad:
        return loss, None
    g_aa = E.sum(axis=0)
    BS = B @ S_as.T  # L W S_SA
    g_as = (E @ np.conj(np.swapaxes(BS, -1, -2))).sum(axis=0) + (np.swapaxes(E, -1, -2) @ np.conj(SB)).sum(axis=0)
    g_ss = (np.conj(np.swapaxes(SB, -1, -2)) @ E @ np.conj(np.swapaxes(BS, -1, -2))).sum(axis=0)
    g_aa = (g_aa + g_aa.T) / 2
    g_ss = (g_ss + g_ss.T) / 2
    return loss, (g_aa, g_as, g_ss)


def _assemble(acc, nda, S_aa, S_as, S_ss) -> np.ndarray:
    n = len(acc) + len(nda)
    S = np.zeros((n, n), dtype=complex)
    acc, nda = list(acc), list(nda)
    S[np.ix_(acc, acc)] = S_aa
    S[np.ix_(acc, nda)] = S_as
    S[np.ix_(nda, acc)] = S_as.T
    S[np.ix_(nda, nda)] = S_ss
    return S


def _split(S, acc, nda):
    a = _entries(S)
    acc, nda = list(acc), list(nda)
    return a[np.ix_(acc, acc)], a[np.ix_(acc, nda)], a[np.ix_(nda, nda)]


def campaign_residual(S, m: MeasurementSet, cat: LoadCatalog) -> float:
    """Objective value of a candidate full matrix on a measurement set."""
    loads = load_matrices(m.codes, cat, m.f_index)
    S_aa, S_as, S_ss = _split(S, m.accessible, m.nda)
    return _loss_and_grad(S_aa, S_as, S_ss, loads, m.matrices, need_grad=False)[0]


def _descend(params, loads, measured, max_iter, tol):
    S_aa, S_as, S_ss = params
    loss, grad = _loss_and_grad(S_aa, S_as, S_ss, loads, measured)
    step = 1.0 / len(measured)
    it = 0
    stalls = 0
    for it in range(1, max_iter + 1):
        if loss <= tol:
            break
        cand = (S_aa - step * grad[0], S_as - step * grad[1], S_ss - step * grad[2])
        try:
            new_loss, new_grad = _loss_and_grad(*cand, loads, measured)
        except np.linalg.LinAlgError:
            new_loss = np.inf
        if new_loss < loss:
            stalls = 0 if new_loss < loss * (1 - 1e-14) else stalls + 1
            S_aa, S_as, S_ss = cand
            loss, grad = new_loss, new_grad
            step *= 1.1
        else:
            step /= 2
            stalls += 1
        if stalls > 60 or step < 1e-30:
            break
    return (S_aa, S_as, S_ss), loss, it


def _jacobian(S_aa, S_as, S_ss, loads):
    """Complex Jacobian of every measured entry w.r.t. the unique unknowns.

    Returns ``(M * a * a, n_unknowns)``; unknowns are ordered as the upper
    triangle of ``S_AA``, all of ``S_AS`` (row-major), the upper triangle of ``S_SS``.
    """
    a, s = S_as.shape
    M = len(loads)
    W = np.linalg.inv(np.eye(s) - S_ss @ loads)
    B = loads @ W
    D = S_as @ B  # (M, a, s), equals S_AS L W
    C = B @ S_as.T  # (M, s, a), equals L W S_SA
    eye_a = np.eye(a)
    cols = []
    for i, j in zip(*np.triu_indices(a)):
        e = np.zeros((a, a), dtype=complex)
        e[i, j] = e[j, i] = 1
        cols.append(np.broadcast_to(e, (M, a, a)))
    for i in range(a):
        for k in range(s):
            cols.append(eye_a[i][None, :, None] * C[:, k, None, :] + D[:, :, k, None] * eye_a[i][None, None, :])
    for k, l in zip(*np.triu_indices(s)):
        J = D[:, :, k, None] * C[:, l, None, :]
        if k != l:
            J = J + D[:, :, l, None] * C[:, k, None, :]
        cols.append(J)
    return np.stack(cols, axis=-1).reshape(M * a * a, -1)


def _pack(S_aa, S_as, S_ss):
    return np.concatenate([S_aa[np.triu_indices(len(S_aa))], S_as.reshape(-1), S_ss[np.triu_indices(len(S_ss))]])


def _unpack(x, a, s):
    def sym(v, n):
        P = np.zeros((n, n), dtype=complex)
        P[np.triu_indices(n)] = v
        return P + np.triu(P, 1).T

    k1 = a * (a + 1) // 2
    k2 = k1 + a * s
    return sym(x[:k1], a), x[k1:k2].reshape(a, s).copy(), sym(x[k2:], s)


def _polish(params, loads, measured, max_iter=100):
    """Levenberg-Marquardt refinement; the residual is holomorphic in the unknowns."""
    a, s = params[1].shape
    x = _pack(*params)
    loss = _loss_and_grad(*params, loads, measured, need_grad=False)[0]
    lam = 1e-3
    it = 0
    for it in range(1, max_iter + 1):
        S_aa, S_as, S_ss = _unpack(x, a, s)
        J = _jacobian(S_aa, S_as, S_ss, loads)
        W = np.linalg.inv(np.eye(s) - S_ss @ loads)
        r = (S_aa + S_as @ loads @ W @ S_as.T - measured).reshape(-1)
        JhJ = J.conj().T @ J
        g = J.conj().T @ r
        improved = False
        while lam < 1e12:
            try:
                dx = np.linalg.solve(JhJ + lam * np.diag(np.diag(JhJ).real + 1e-12), -g)
                new_loss = _loss_and_grad(*_unpack(x + dx, a, s), loads, measured, need_grad=False)[0]
            except np.linalg.LinAlgError:
                new_loss = np.inf
            if new_loss < loss:
                improved = True
                break
            lam *= 10
        if not improved:
            break
        x = x + dx
        done = loss - new_loss <= 1e-15 * loss or new_loss == 0
        loss = new_loss
        lam = max(lam / 10, 1e-15)
        if done:
            break
    return _unpack(x, a, s), loss, it


def estimate_scattering(
    m: MeasurementSet,
    cat: LoadCatalog,
    seed=0,
    starts: int = 4,
    max_iter: int = 5000,
    tol: float = 1e-9,
    init_scale: float = 0.3,
    descent_iter: int = 500,
    polish_iter: int = 100,
) -> Estimate:
    """Least-squares fit of ``S_AA``, ``S_AS`` and ``S_SS`` to a measurement set.

    Each of ``starts`` random initializations runs gradient descent with an
    adaptive step (x1.1 after an improvement, /2 after a failed step) for up
    to ``descent_iter`` iterations, then a Levenberg-Marquardt polish; the
    total iteration count per start is capped by ``max_iter``. The best fit
    is returned. Its ``S_AS`` sign is still ambiguous, see ``resolve_sign``.
    """
    if len(m) < 1:
        raise StructuralError("no measurements to fit")
    if starts < 1:
        raise StructuralError("starts must be at least 1")
    a, s = len(m.accessible), len(m.nda)
    loads = load_matrices(m.codes, cat, m.f_index)
    measured = m.matrices
    rng = np.random.default_rng(seed)

    best = None
    residuals, total_iter = [], 0
    for _ in range(starts):
        S_aa = measured.mean(axis=0)
        S_as = init_scale * _noise((a, s), 1.0, rng)
        S_ss = init_scale * _noise((s, s), 1.0, rng)
        S_ss = (S_ss + S_ss.T) / 2
        n_descent = min(descent_iter, max_iter)
        params, loss, it = _descend((S_aa, S_as, S_ss), loads, measured, n_descent, 0.0)
        total_iter += it
        if max_iter - it > 0 and polish_iter > 0:
            params, loss, it = _polish(params, loads, measured, min(polish_iter, max_iter - it))
            total_iter += it
        residuals.append(loss)
        if best is None or loss < best[1]:
            best = (params, loss)

    (S_aa, S_as, S_ss), loss = best
    S = _assemble(m.accessible, m.nda, S_aa, S_as, S_ss)
    converged = loss <= tol
    unknowns = a * (a + 1) // 2 + a * s + s * (s + 1) // 2
    equations = len(m) * a * (a + 1) // 2
    msg = "converged" if converged else f"stagnated at residual {loss:.3e} above threshold {tol:.1e}"
    if equations < unknowns:
        msg += f"; under-determined ({equations} complex equations for {unknowns} unknowns)"
    if not converged:
        log.info("estimate_scattering: %s", msg)
    report = FitReport(loss, total_iter, converged, tuple(residuals), equations, unknowns, True, msg)
    return Estimate(ScatteringMatrix(S, m.frequency_hz), report)


# --- sign disambiguation ----------------------------------------------------


@dataclass(frozen=True)
class Disambiguation:
    """One extra accessible-port measurement with ``loaded`` ports terminated by ``S_L``."""

    loaded: tuple[int, ...]
    S_L: np.ndarray
    matrix: np.ndarray


@dataclass(frozen=True)
class SignResolution:
    matrix: ScatteringMatrix | None
    resolved: bool
    flipped: bool
    residuals: tuple[float, float] = field(default=(np.nan, np.nan))


def disambiguation_measurement(S_true, loaded: Sequence[int], S_L, noise_std: float = 0.0, seed=None) -> Disambiguation:
    """Simulate a disambiguation measurement (optionally noisy)."""
    M = forward_measure(S_true, loaded, S_L)
    if noise_std > 0:
        M = M + _noise(M.shape, noise_std, np.random.default_rng(seed))
        M = (M + M.T) / 2
    return Disambiguation(tuple(loaded), np.asarray(S_L, dtype=complex), M)


def redesignation_setup(nda: Sequence[int], port: int, cat: LoadCatalog, f_index: int = 0):
    """Loaded ports and loads for a measurement where NDA ``port`` is made accessible.

    The remaining NDA ports are terminated by individual load 1. The newly
    accessible port sees the cross blocks linearly, which breaks the flip.
    """
    loaded = tuple(i for i in nda if i != port)
    if len(loaded) == len(nda):
        raise StructuralError(f"port {port} is not an NDA port")
    S_L = np.diag(np.full(len(loaded), cat.individual[0, f_index]))
    return loaded, S_L


def coupled_setup(nda: Sequence[int], accessible_port: int, neighbour: int, cat: LoadCatalog, f_index: int = 0):
    """Loaded ports and loads for a measurement where a formerly accessible port
    is connected by the coupled load to an NDA neighbour (the auxiliary-port route).

    Other NDA ports are terminated by individual load 1.
    """
    if neighbour not in nda:
        raise StructuralError(f"port {neighbour} is not an NDA port")
    if accessible_port in nda:
        raise StructuralError(f"port {accessible_port} is already an NDA port")
    loaded = (accessible_port,) + tuple(nda)
    S_L = np.diag(np.full(len(loaded), cat.individual[0, f_index]))
    j = loaded.index(neighbour)
    S_L[np.ix_([0, j], [0, j])] = cat.coupled_block(f_index)
    return loaded, S_L


def resolve_sign(estimate, accessible: Sequence[int], nda: Sequence[int], d: Disambiguation, rel_tol: float = 1e-9) -> SignResolution:
    """Pick the sign of the cross blocks that better explains ``d``.

    Residuals closer than ``rel_tol`` times the measurement energy leave the
    sign unresolved (``matrix`` is then None).
    """
    S = estimate.matrix if isinstance(estimate, Estimate) else estimate
    S = _entries(S)
    flipped = flip_sign(S, accessible, nda)
    r_keep = float(np.sum(np.abs(forward_measure(S, d.loaded, d.S_L) - d.matrix) ** 2))
    r_flip = float(np.sum(np.abs(forward_measure(flipped, d.loaded, d.S_L) - d.matrix) ** 2))
    scale = float(np.sum(np.abs(d.matrix) ** 2))
    if abs(r_keep - r_flip) <= rel_tol * max(scale, r_keep, r_flip):
        return SignResolution(None, False, False, (r_keep, r_flip))
    use_flip = r_flip < r_keep
    chosen = flipped if use_flip else S
    return SignResolution(ScatteringMatrix(chosen), True, use_flip, (r_keep, r_flip))


# --- file format ------------------------------------------------------------


def measurements_to_text(m: MeasurementSet) -> str:
    header = {
        "format": MEAS_FORMAT,
        "version": MEAS_VERSION,
        "accessible": list(m.accessible),
        "nda": list(m.nda),
        "f_index": m.f_index,
        "frequency_hz": m.frequency_hz,
    }
    rows = []
    for codes, mat in zip(m.codes, m.matrices):
        rec = {"config": str(SwitchConfig.from_codes(codes)), "matrix": [[float(z.real), float(z.imag)] for z in mat.reshape(-1)]}
        rows.append(json.dumps(rec))
    return json.dumps(header)[:-1] + ', "records": [\n' + ",\n".join(rows) + "\n]}\n"


def measurements_from_text(text: str) -> MeasurementSet:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict) or doc.get("format") != MEAS_FORMAT:
        raise ParseError(f"not a {MEAS_FORMAT!r} document", line=1, field="format")
    try:
        acc, nda, records = doc["accessible"], doc["nda"], doc["records"]
    except KeyError as exc:
        raise ParseError("missing required field", line=1, field=exc.args[0]) from None
    a = len(acc)
    codes, mats = [], []
    for k, rec in enumerate(records):
        try:
            cfg = SwitchConfig.parse(rec["config"])
            arr = np.array(rec["matrix"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed record: {exc}", line=k + 2, field=f"records[{k}]") from None
        if arr.shape != (a * a, 2) or cfg.n_ports != len(nda):
            raise ParseError("record dimensions do not match the header", line=k + 2, field=f"records[{k}]")
        codes.append(cfg.codes)
        mats.append((arr[:, 0] + 1j * arr[:, 1]).reshape(a, a))
    codes = np.array(codes, dtype=np.int8).reshape(-1, len(nda))
    mats = np.array(mats, dtype=complex).reshape(-1, a, a)
    return MeasurementSet(tuple(acc), tuple(nda), codes, mats, int(doc.get("f_index", 0)), doc.get("frequency_hz"))


def save_measurements(m: MeasurementSet, path) -> None:
    Path(path).write_text(measurements_to_text(m))


def load_measurements(path) -> MeasurementSet:
    return measurements_from_text(Path(path).read_text())
