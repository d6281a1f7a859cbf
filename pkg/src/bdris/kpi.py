"""Key performance indicators of an end-to-end channel.

All functions accept a single channel or a stack ``(..., n_rx, n_tx)`` and
return one value per channel. ``H[j, i]`` is the gain from transmitter ``i``
to receiver ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import StructuralError

DEFAULT_SNR_DB = 100.0


@dataclass(frozen=True)
class SnrConfig:
    """Transmit power over noise power, linear scale."""

    pt_over_sigma2: float = 10 ** (DEFAULT_SNR_DB / 10)

    def __post_init__(self):
        if not self.pt_over_sigma2 > 0:
            raise StructuralError(f"SNR must be positive, got {self.pt_over_sigma2}")

    @classmethod
    def from_db(cls, db: float) -> "SnrConfig":
        return cls(10.0 ** (db / 10.0))


def siso_gain(h) -> np.ndarray | float:
    """Channel gain |h|^2. Accepts scalars or ``(..., 1, 1)`` stacks."""
    h = np.asarray(h)
    if h.ndim >= 2:
        if h.shape[-2:] != (1, 1):
            raise StructuralError(f"SISO gain needs a 1x1 channel, got {h.shape[-2:]}")
        h = h[..., 0, 0]
    return np.abs(h) ** 2


def _check_2x2(H):
    H = np.asarray(H)
    if H.shape[-2:] != (2, 2):
        raise StructuralError(f"expected a 2x2 channel, got {H.shape[-2:]}")
    return H


def sum_rate_interference(H, snr: SnrConfig = SnrConfig()):
    """Sum rate of two interfering links TX1->RX1 and TX2->RX2 (bit/s/Hz)."""
    H = _check_2x2(H)
    g = np.abs(H) ** 2
    rho = snr.pt_over_sigma2
    # divide P_T through so that sigma^2 becomes 1/rho
    r1 = np.log2(1 + g[..., 0, 0] / (g[..., 0, 1] + 1 / rho))
    r2 = np.log2(1 + g[..., 1, 1] / (g[..., 1, 0] + 1 / rho))
    return r1 + r2


def spectral_norm_sq(H):
    """Squared largest singular value (low-SNR capacity proxy)."""
    H = np.asarray(H)
    if H.shape[-2:] == (2, 2):
        # largest root of t^2 - ||H||_F^2 t + |det H|^2
        fro = np.sum(np.abs(H) ** 2, axis=(-2, -1))
        det = np.abs(_det2(H)) ** 2
        return (fro + np.sqrt(np.maximum(fro**2 - 4 * det, 0.0))) / 2
    return np.linalg.norm(H, 2, axis=(-2, -1)) ** 2


def _det2(H):
    return H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] * H[..., 1, 0]


def logdet_capacity(H, snr: SnrConfig = SnrConfig()):
    """log2 det(I + rho H H^H), i.e. equal-power multi-stream capacity (bit/s/Hz)."""
    H = np.asarray(H)
    rho = snr.pt_over_sigma2
    if H.shape[-2:] == (2, 2):
        fro = np.sum(np.abs(H) ** 2, axis=(-2, -1))
        return np.log2(1 + rho * fro + rho**2 * np.abs(_det2(H)) ** 2)
    # det(I + rho H H^H) = prod(1 + rho s_i^2); avoids forming an ill-conditioned matrix at high SNR
    sv = np.linalg.svd(H, compute_uv=False)
    return np.sum(np.log2(1 + rho * sv**2), axis=-1)


KPI_NAMES = ("siso", "sum_rate", "spec_norm", "logdet")


def kpi_function(name: str, snr: SnrConfig = SnrConfig()) -> Callable[[np.ndarray], np.ndarray]:
    """Look up a KPI by name; the returned callable maps channel stacks to values."""
    if name == "siso":
        return siso_gain
    if name == "sum_rate":
        return lambda H: sum_rate_interference(H, snr)
    if name == "spec_norm":
        return spectral_norm_sq
    if name == "logdet":
        return lambda H: logdet_capacity(H, snr)
    raise StructuralError(f"unknown KPI {name!r}; choose from {', '.join(KPI_NAMES)}")


def is_siso(name: str) -> bool:
    return name == "siso"
