"""The switched tunable load network terminating the RIS element ports.

Every network port feeds a five-throw switch that selects one of three
individual loads or a connection to the neighbouring port on either side.
A connection needs both neighbours to agree, so the set of connections is a
matching on the path graph of ports and the load scattering matrix is
tridiagonal (in port order).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from math import comb
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ConstraintViolationError, ParseError, StructuralError, ValidationError
from .netmodel import ScatteringMatrix

CATALOG_FORMAT = "bdris-load-catalog"
CATALOG_VERSION = 1


class State(IntEnum):
    """Switch throw. The integer values define the lexicographic order."""

    LOAD1 = 0
    LOAD2 = 1
    LOAD3 = 2
    CONNECT_LEFT = 3
    CONNECT_RIGHT = 4


_SYMBOLS = {State.LOAD1: "1", State.LOAD2: "2", State.LOAD3: "3", State.CONNECT_LEFT: "L", State.CONNECT_RIGHT: "R"}
_FROM_SYMBOL = {v: k for k, v in _SYMBOLS.items()}


def check_codes(codes: Sequence[int]) -> None:
    """Raise ConstraintViolationError unless ``codes`` is a realizable switch setting."""
    n = len(codes)
    for i, c in enumerate(codes):
        if c not in (0, 1, 2, 3, 4):
            raise ConstraintViolationError(f"port {i}: unknown switch state {c!r}")
        if c == State.CONNECT_RIGHT and (i + 1 >= n or codes[i + 1] != State.CONNECT_LEFT):
            raise ConstraintViolationError(f"port {i} connects right but port {i + 1} does not connect left")
        if c == State.CONNECT_LEFT and (i == 0 or codes[i - 1] != State.CONNECT_RIGHT):
            raise ConstraintViolationError(f"port {i} connects left but port {i - 1} does not connect right")


@dataclass(frozen=True)
class SwitchConfig:
    """Per-port switch states, ordered by network port."""

    states: tuple[State, ...]

    def __post_init__(self):
        states = tuple(State(int(s)) for s in self.states)
        if not states:
            raise StructuralError("a configuration needs at least one port")
        check_codes(states)
        object.__setattr__(self, "states", states)

    @classmethod
    def from_codes(cls, codes) -> "SwitchConfig":
        return cls(tuple(State(int(c)) for c in codes))

    @classmethod
    def parse(cls, text: str) -> "SwitchConfig":
        """Inverse of ``str()``: e.g. ``"1R L3"`` (whitespace ignored)."""
        try:
            return cls(tuple(_FROM_SYMBOL[ch] for ch in text if not ch.isspace()))
        except KeyError as exc:
            raise ConstraintViolationError(f"unknown switch symbol {exc.args[0]!r} in {text!r}") from None

    @classmethod
    def uniform(cls, n_s: int, state: State = State.LOAD1) -> "SwitchConfig":
        return cls((State(state),) * n_s)

    @property
    def codes(self) -> tuple[int, ...]:
        return tuple(int(s) for s in self.states)

    @property
    def n_ports(self) -> int:
        return len(self.states)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        """Connected adjacent port pairs."""
        return [(i, i + 1) for i, s in enumerate(self.states) if s == State.CONNECT_RIGHT]

    def __str__(self):
        return "".join(_SYMBOLS[s] for s in self.states)


@dataclass(frozen=True)
class PortMapping:
    """``ports[e]`` is the network port wired to RIS element ``e``."""

    ports: tuple[int, ...]

    def __post_init__(self):
        ports = tuple(int(p) for p in self.ports)
        if sorted(ports) != list(range(len(ports))):
            raise StructuralError(f"port mapping must be a permutation of 0..{len(ports) - 1}, got {ports}")
        object.__setattr__(self, "ports", ports)

    @classmethod
    def identity(cls, n: int) -> "PortMapping":
        return cls(tuple(range(n)))

    @classmethod
    def interleaved(cls, n: int) -> "PortMapping":
        """Even elements take the first half of the ports, odd elements the second half.

        For eight elements this is 0,4,1,5,2,6,3,7.
        """
        half = (n + 1) // 2
        return cls(tuple(e // 2 if e % 2 == 0 else half + e // 2 for e in range(n)))

    def __len__(self):
        return len(self.ports)

    def apply(self, S_port: np.ndarray) -> np.ndarray:
        """Re-express a port-ordered load matrix (or stack) in element order."""
        idx = np.asarray(self.ports)
        return S_port[..., idx[:, None], idx[None, :]]


# --- load catalog -----------------------------------------------------------


@dataclass(frozen=True)
class LoadCatalog:
    """Frequency-swept characteristics of the three individual loads and the coupled load.

    ``individual`` has shape ``(3, n_freq)``; ``coupled`` holds ``(s11, s21, s22)``
    and has shape ``(3, n_freq)``.
    """

    frequencies_hz: np.ndarray
    individual: np.ndarray
    coupled: np.ndarray

    def __post_init__(self):
        f = np.array(self.frequencies_hz, dtype=float).reshape(-1)
        ind = np.array(self.individual, dtype=complex)
        cpl = np.array(self.coupled, dtype=complex)
        if ind.ndim == 1:
            ind = np.repeat(ind[:, None], f.size, axis=1)
        if cpl.ndim == 1:
            cpl = np.repeat(cpl[:, None], f.size, axis=1)
        if f.size < 1 or np.any(f <= 0) or np.any(np.diff(f) <= 0):
            raise ValidationError("catalog frequency grid must be positive and strictly increasing")
        if ind.shape != (3, f.size):
            raise StructuralError(f"individual loads must have shape (3, {f.size}), got {ind.shape}")
        if cpl.shape != (3, f.size):
            raise StructuralError(f"coupled load must have shape (3, {f.size}), got {cpl.shape}")
        bad = sorted(set(np.nonzero(np.abs(ind) > 1 + 1e-9)[1].tolist()))
        if bad:
            raise ValidationError(f"individual load reflection exceeds unity at frequency indices {bad}", bad)
        smax = np.linalg.norm(_coupled_blocks(cpl), 2, axis=(-2, -1))
        bad = np.nonzero(smax > 1 + 1e-9)[0].tolist()
        if bad:
            raise ValidationError(f"coupled load is not passive at frequency indices {bad}", bad)
        for a in (f, ind, cpl):
            a.setflags(write=False)
        object.__setattr__(self, "frequencies_hz", f)
        object.__setattr__(self, "individual", ind)
        object.__setattr__(self, "coupled", cpl)

    @classmethod
    def default(cls, frequencies_hz=(800e6,)) -> "LoadCatalog":
        """Frequency-flat synthetic stand-in for a measured catalog.

        Two strongly reflective loads of opposite phase, one nearly matched
        load and a lossy reciprocal through connection.
        """
        f = np.atleast_1d(np.asarray(frequencies_hz, dtype=float))
        t = 0.93 * np.exp(-1j * np.pi / 4)
        return cls(f, np.array([0.95, -0.95, 0.02], dtype=complex), np.array([0.05, t, 0.05]))

    @classmethod
    def flat(cls, individual, coupled_block, frequencies_hz=(800e6,)) -> "LoadCatalog":
        """Frequency-flat catalog from three reflections and a symmetric 2x2 block."""
        c = np.asarray(coupled_block, dtype=complex)
        if c.shape != (2, 2) or abs(c[0, 1] - c[1, 0]) > 1e-12:
            raise StructuralError("coupled block must be a symmetric 2x2 matrix")
        return cls(np.atleast_1d(np.asarray(frequencies_hz, dtype=float)), np.asarray(individual), np.array([c[0, 0], c[1, 0], c[1, 1]]))

    @property
    def n_freq(self) -> int:
        return self.frequencies_hz.size

    def coupled_block(self, f_index: int) -> np.ndarray:
        return _coupled_blocks(self.coupled[:, f_index])

    def on_grid(self, frequencies_hz) -> "LoadCatalog":
        """Replicate a single-frequency catalog onto another grid."""
        if self.n_freq != 1:
            raise StructuralError("only a single-frequency catalog can be broadcast onto a grid")
        f = np.asarray(frequencies_hz, dtype=float)
        return LoadCatalog(f, self.individual[:, 0], self.coupled[:, 0])

    def __eq__(self, other):
        if not isinstance(other, LoadCatalog):
            return NotImplemented
        return all(
            np.array_equal(a, b)
            for a, b in ((self.frequencies_hz, other.frequencies_hz), (self.individual, other.individual), (self.coupled, other.coupled))
        )

    __hash__ = None


def _coupled_blocks(c: np.ndarray) -> np.ndarray:
    s11, s21, s22 = c
    return np.stack([np.stack([s11, s21], -1), np.stack([s21, s22], -1)], -2)


def _pairs(values) -> list[list[float]]:
    return [[float(v.real), float(v.imag)] for v in values]


def _complex_array(obj, field: str, n: int) -> np.ndarray:
    try:
        arr = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        raise ParseError("expected an array of [re, im] pairs", field=field) from None
    if arr.shape != (n, 2):
        raise ParseError(f"expected {n} [re, im] pairs, got shape {arr.shape}", field=field)
    return arr[:, 0] + 1j * arr[:, 1]


def catalog_to_dict(cat: LoadCatalog) -> dict:
    return {
        "format": CATALOG_FORMAT,
        "version": CATALOG_VERSION,
        "frequencies_hz": [float(x) for x in cat.frequencies_hz],
        "individual": {f"load{k + 1}": _pairs(cat.individual[k]) for k in range(3)},
        "coupled": {name: _pairs(cat.coupled[k]) for k, name in enumerate(("s11", "s21", "s22"))},
    }


def catalog_from_dict(doc: dict) -> LoadCatalog:
    if not isinstance(doc, dict):
        raise ParseError("catalog document must be a JSON object")
    if doc.get("format") != CATALOG_FORMAT:
        raise ParseError(f"expected format {CATALOG_FORMAT!r}", field="format")
    try:
        f = np.array(doc["frequencies_hz"], dtype=float)
        individual = doc["individual"]
        coupled = doc["coupled"]
    except KeyError as exc:
        raise ParseError("missing required field", field=exc.args[0]) from None
    except (TypeError, ValueError):
        raise ParseError("frequencies must be a list of numbers", field="frequencies_hz") from None
    if f.ndim != 1:
        raise ParseError("frequencies must be a flat list", field="frequencies_hz")
    ind, cpl = [], []
    for k in range(3):
        key = f"load{k + 1}"
        if key not in individual:
            raise ParseError("missing individual load", field=f"individual.{key}")
        ind.append(_complex_array(individual[key], f"individual.{key}", f.size))
    for key in ("s11", "s21", "s22"):
        if key not in coupled:
            raise ParseError("missing coupled-load entry", field=f"coupled.{key}")
        cpl.append(_complex_array(coupled[key], f"coupled.{key}", f.size))
    return LoadCatalog(f, np.array(ind), np.array(cpl))


def save_catalog(cat: LoadCatalog, path) -> None:
    Path(path).write_text(json.dumps(catalog_to_dict(cat), indent=1) + "\n")


def load_catalog(path) -> LoadCatalog:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    return catalog_from_dict(doc)


# --- configuration spaces ---------------------------------------------------


def count_configs(n_s: int, n_individual: int = 3, allow_coupled: bool = True) -> int:
    """Number of realizable configurations.

    With ``m`` connected pairs there are ``C(n_s - m, m)`` ways to place the
    pairs on the path and ``n_individual ** (n_s - 2m)`` ways to load the
    remaining ports.
    """
    if n_s < 1:
        raise StructuralError("n_s must be positive")
    if not allow_coupled:
        return n_individual**n_s
    return sum(comb(n_s - m, m) * n_individual ** (n_s - 2 * m) for m in range(n_s // 2 + 1))


@lru_cache(maxsize=None)
def _suffix_codes(n: int, loads: tuple[int, ...], coupled: bool) -> np.ndarray:
    """All valid code rows of length ``n`` in lexicographic order."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int8)
    blocks = []
    rest = _suffix_codes(n - 1, loads, coupled)
    for load in loads:
        blocks.append(np.hstack([np.full((len(rest), 1), load, dtype=np.int8), rest]))
    if coupled and n >= 2:
        rest2 = _suffix_codes(n - 2, loads, coupled)
        head = np.tile(np.array([State.CONNECT_RIGHT, State.CONNECT_LEFT], dtype=np.int8), (len(rest2), 1))
        blocks.append(np.hstack([head, rest2]))
    out = np.vstack(blocks)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ConfigSpace:
    """A set of switch configurations: which individual loads are usable and
    whether adjacent ports may be connected.

    ``loads`` uses 1-based load labels, as in the "12"/"13"/"23" naming.
    Iteration follows the lexicographic order LOAD1 < LOAD2 < LOAD3 <
    CONNECT_LEFT < CONNECT_RIGHT.
    """

    n_s: int
    loads: tuple[int, ...] = (1, 2, 3)
    allow_coupled: bool = True

    def __post_init__(self):
        loads = tuple(sorted(set(int(k) for k in self.loads)))
        if self.n_s < 1:
            raise StructuralError("n_s must be positive")
        if not loads or not set(loads) <= {1, 2, 3}:
            raise StructuralError(f"individual loads must be a non-empty subset of {{1, 2, 3}}, got {self.loads}")
        object.__setattr__(self, "loads", loads)

    @property
    def _codes_key(self):
        return tuple(k - 1 for k in self.loads), bool(self.allow_coupled)

    def codes(self) -> np.ndarray:
        """Read-only ``(count, n_s)`` int8 array of state codes."""
        loads, coupled = self._codes_key
        return _suffix_codes(self.n_s, loads, coupled)

    def count(self) -> int:
        return count_configs(self.n_s, len(self.loads), self.allow_coupled)

    def __len__(self):
        return self.count()

    def __iter__(self) -> Iterator[SwitchConfig]:
        for row in self.codes():
            yield SwitchConfig.from_codes(row)

    def __contains__(self, cfg) -> bool:
        codes = cfg.codes if isinstance(cfg, SwitchConfig) else tuple(cfg)
        if len(codes) != self.n_s:
            return False
        try:
            check_codes(codes)
        except ConstraintViolationError:
            return False
        for c in codes:
            if c in (State.CONNECT_LEFT, State.CONNECT_RIGHT):
                if not self.allow_coupled:
                    return False
            elif c + 1 not in self.loads:
                return False
        return True

    def _completions(self, k: int) -> int:
        return 1 if k == 0 else count_configs(k, len(self.loads), self.allow_coupled)

    def config_at(self, index: int) -> SwitchConfig:
        """The ``index``-th configuration in lexicographic order (no enumeration)."""
        total = self.count()
        if not 0 <= index < total:
            raise IndexError(f"configuration index {index} out of range [0, {total})")
        codes = []
        i = 0
        while i < self.n_s:
            left = self.n_s - i
            block = self._completions(left - 1)
            chosen = None
            for load in self.loads:
                if index < block:
                    chosen = load - 1
                    break
                index -= block
            if chosen is not None:
                codes.append(chosen)
                i += 1
            else:
                codes += [State.CONNECT_RIGHT, State.CONNECT_LEFT]
                i += 2
        return SwitchConfig.from_codes(codes)

    def restrict_individual_loads(self, kept) -> "ConfigSpace":
        return restrict_individual_loads(self, kept)


def enumerate_configs(n_s: int, n_individual: int = 3, allow_coupled: bool = True) -> Iterator[SwitchConfig]:
    """Every valid configuration exactly once, in lexicographic order."""
    if n_individual not in (2, 3):
        raise StructuralError("n_individual must be 2 or 3")
    return iter(ConfigSpace(n_s, tuple(range(1, n_individual + 1)), allow_coupled))


def restrict_individual_loads(space: ConfigSpace, kept) -> ConfigSpace:
    """Keep exactly two of the three individual loads (the 1-bit variants)."""
    kept = tuple(sorted(set(int(k) for k in kept)))
    if len(kept) != 2 or not set(kept) <= {1, 2, 3}:
        raise StructuralError(f"exactly two of the loads 1, 2, 3 must be kept, got {kept}")
    return ConfigSpace(space.n_s, kept, space.allow_coupled)


# --- building S_L -----------------------------------------------------------


def load_matrices(codes, cat: LoadCatalog, f_index: int, mapping: PortMapping | None = None) -> np.ndarray:
    """Load scattering matrices for a ``(count, n_s)`` array of codes, in element order."""
    codes = np.atleast_2d(np.asarray(codes))
    count, n = codes.shape
    if not 0 <= f_index < cat.n_freq:
        raise StructuralError(f"frequency index {f_index} outside catalog grid of {cat.n_freq} points")
    if mapping is not None and len(mapping) != n:
        raise StructuralError(f"mapping has {len(mapping)} entries for {n} ports")
    s11, s21, s22 = cat.coupled[:, f_index]
    diag_values = np.array([*cat.individual[:, f_index], s22, s11])
    S = np.zeros((count, n, n), dtype=complex)
    idx = np.arange(n)
    S[:, idx, idx] = diag_values[codes]
    right = codes[:, :-1] == State.CONNECT_RIGHT
    rows, cols = np.nonzero(right)
    S[rows, cols, cols + 1] = s21
    S[rows, cols + 1, cols] = s21
    if mapping is not None:
        S = mapping.apply(S)
    return S


def build_load_scattering(cfg: SwitchConfig, cat: LoadCatalog, f_index: int = 0, mapping: PortMapping | None = None) -> ScatteringMatrix:
    """Load-network scattering matrix for one configuration, in element order."""
    if not isinstance(cfg, SwitchConfig):
        cfg = SwitchConfig.from_codes(cfg)
    S = load_matrices(np.array([cfg.codes]), cat, f_index, mapping)[0]
    return ScatteringMatrix(S, float(cat.frequencies_hz[f_index]))
