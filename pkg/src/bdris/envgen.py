"""Synthetic rich-scattering environments and their file format.

The generator is a qualitative stand-in for a measured reverberation chamber:
random complex symmetric matrices, smoothed along frequency so that channels
are frequency selective but correlated between neighbouring points, rescaled
to a prescribed largest singular value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, StructuralError, ValidationError
from .netmodel import PortPartition, ScatteringMatrix

ENV_FORMAT = "bdris-environment"
ENV_VERSION = 1
SMOOTHING_TAPS = 8


@dataclass(frozen=True)
class EnvironmentSweep:
    """Per-frequency environment scattering matrices, shape ``(n_freq, N, N)``."""

    frequencies_hz: np.ndarray
    matrices: np.ndarray
    partition: PortPartition
    label: str = ""
    seed: int | None = None

    def __post_init__(self):
        f = np.array(self.frequencies_hz, dtype=float).reshape(-1)
        m = np.array(self.matrices, dtype=complex)
        if m.ndim != 3 or m.shape[1] != m.shape[2] or m.shape[0] != f.size:
            raise StructuralError(f"matrices must have shape ({f.size}, N, N), got {m.shape}")
        if f.size < 1 or np.any(f <= 0) or np.any(np.diff(f) <= 0):
            raise ValidationError("frequency grid must be positive and strictly increasing")
        self.partition.check(m.shape[1])
        asym = np.max(np.abs(m - np.swapaxes(m, 1, 2)), axis=(1, 2))
        smax = np.linalg.norm(m, 2, axis=(1, 2))
        bad = np.flatnonzero((asym > 1e-9) | (smax > 1 + 1e-9) | ~np.isfinite(smax)).tolist()
        if bad:
            raise ValidationError(
                f"environment is not reciprocal and passive at frequency indices {bad} "
                f"(max asymmetry {asym[bad].max():.3e}, max sigma {smax[bad].max():.6g})",
                bad,
            )
        f.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "frequencies_hz", f)
        object.__setattr__(self, "matrices", m)

    @property
    def n_ports(self) -> int:
        return self.matrices.shape[1]

    @property
    def n_freq(self) -> int:
        return self.frequencies_hz.size

    def at(self, f_index: int) -> ScatteringMatrix:
        return ScatteringMatrix(self.matrices[f_index], float(self.frequencies_hz[f_index]))

    def __eq__(self, other):
        if not isinstance(other, EnvironmentSweep):
            return NotImplemented
        return (
            np.array_equal(self.frequencies_hz, other.frequencies_hz)
            and np.array_equal(self.matrices, other.matrices)
            and self.partition == other.partition
            and self.label == other.label
            and self.seed == other.seed
        )

    __hash__ = None


def default_partition(n: int, n_tx: int | None = None, n_rx: int | None = None) -> PortPartition:
    """Transmitters first, then receivers, then RIS ports. Defaults scale 3/4/8 of 15."""
    if n_tx is None:
        n_tx = max(1, round(n * 3 / 15))
    if n_rx is None:
        n_rx = max(1, round(n * 4 / 15))
    if n_tx < 1 or n_rx < 1 or n_tx + n_rx >= n:
        raise StructuralError(f"cannot split {n} ports into {n_tx} TX, {n_rx} RX and at least one RIS port")
    return PortPartition(tuple(range(n_tx)), tuple(range(n_tx, n_tx + n_rx)), tuple(range(n_tx + n_rx, n)))


def generate_environment(
    n: int = 15,
    n_freq: int = 201,
    seed: int = 0,
    loss_factor: float = 0.95,
    coupling_strength: float = 0.5,
    n_tx: int | None = None,
    n_rx: int | None = None,
    f_start_hz: float = 700e6,
    f_stop_hz: float = 900e6,
) -> EnvironmentSweep:
    """Random reciprocal environment with largest singular value ``loss_factor`` at every frequency.

    ``coupling_strength`` multiplies the off-diagonal entries of the RIS-RIS
    block, so 0 removes mutual coupling between RIS elements entirely.
    """
    if n < 3:
        raise StructuralError("an environment needs at least 3 ports")
    if n_freq < 1:
        raise StructuralError("n_freq must be positive")
    if not 0 < loss_factor <= 1:
        raise StructuralError(f"loss_factor must lie in (0, 1], got {loss_factor}")
    if not 0 <= coupling_strength <= 1:
        raise StructuralError(f"coupling_strength must lie in [0, 1], got {coupling_strength}")
    if n_freq > 1 and not 0 < f_start_hz < f_stop_hz:
        raise StructuralError("frequency range must be positive and increasing")
    partition = default_partition(n, n_tx, n_rx)
    rng = np.random.default_rng(seed)

    raw = rng.standard_normal((n_freq + SMOOTHING_TAPS - 1, n, n, 2))
    raw = raw[..., 0] + 1j * raw[..., 1]
    raw = raw + np.swapaxes(raw, 1, 2)
    window = np.hanning(SMOOTHING_TAPS + 2)[1:-1]
    window /= np.sqrt(np.sum(window**2))
    S = sum(w * raw[k : k + n_freq] for k, w in enumerate(window))

    ris = np.asarray(partition.ris)
    off = ris[:, None] != ris[None, :]
    block = S[:, ris[:, None], ris[None, :]]
    block[:, off] *= coupling_strength
    S[:, ris[:, None], ris[None, :]] = block

    smax = np.linalg.norm(S, 2, axis=(1, 2))
    S *= (loss_factor / smax)[:, None, None]
    S = (S + np.swapaxes(S, 1, 2)) / 2

    freqs = np.linspace(f_start_hz, f_stop_hz, n_freq) if n_freq > 1 else np.array([f_start_hz])
    return EnvironmentSweep(freqs, S, partition, label="synthetic", seed=seed)


# --- file format ------------------------------------------------------------


def _flatten(matrix: np.ndarray) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in matrix.reshape(-1)]


def environment_to_text(env: EnvironmentSweep) -> str:
    header = {
        "format": ENV_FORMAT,
        "version": ENV_VERSION,
        "label": env.label,
        "seed": env.seed,
        "n_ports": env.n_ports,
        "partition": {"tx": list(env.partition.tx), "rx": list(env.partition.rx), "ris": list(env.partition.ris)},
        "frequencies_hz": [float(x) for x in env.frequencies_hz],
    }
    lines = [json.dumps(header)[:-1] + ', "matrices": [']
    rows = [json.dumps(_flatten(m)) for m in env.matrices]
    lines.append(",\n".join(rows))
    lines.append("]}")
    return "\n".join(lines) + "\n"


def environment_from_text(text: str) -> EnvironmentSweep:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict) or doc.get("format") != ENV_FORMAT:
        raise ParseError(f"not a {ENV_FORMAT!r} document", line=1, field="format")
    try:
        n = int(doc["n_ports"])
        part = doc["partition"]
        partition = PortPartition(tuple(part["tx"]), tuple(part["rx"]), tuple(part["ris"]))
        freqs = np.array(doc["frequencies_hz"], dtype=float)
        rows = doc["matrices"]
    except KeyError as exc:
        raise ParseError("missing required field", line=1, field=exc.args[0]) from None
    except (TypeError, ValueError) as exc:
        raise ParseError(f"malformed header: {exc}", line=1) from None
    if freqs.ndim != 1 or len(rows) != freqs.size:
        raise ParseError(f"{len(rows)} matrices for {freqs.size} frequencies", field="matrices")
    mats = np.empty((freqs.size, n, n), dtype=complex)
    for k, row in enumerate(rows):
        try:
            arr = np.array(row, dtype=float)
        except (TypeError, ValueError):
            arr = None
        if arr is None or arr.shape != (n * n, 2):
            raise ParseError(f"expected {n * n} [re, im] pairs", line=k + 2, field=f"matrices[{k}]")
        mats[k] = (arr[:, 0] + 1j * arr[:, 1]).reshape(n, n)
    seed = doc.get("seed")
    return EnvironmentSweep(freqs, mats, partition, label=doc.get("label", ""), seed=seed)


def save_environment(env: EnvironmentSweep, path) -> None:
    Path(path).write_text(environment_to_text(env))


def load_environment(path) -> EnvironmentSweep:
    return environment_from_text(Path(path).read_text())
