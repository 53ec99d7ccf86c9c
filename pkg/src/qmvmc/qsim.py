"""A small statevector engine specialised to branch-diagonal algorithms.

Amplitudes live in numpy arrays whose axes are named registers. Operations
that act independently on every grid branch take an array of shape
``(branches, *branch_shape)`` and never build the full tensor product
operator.
"""

from __future__ import annotations

import math
import threading
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import NormDrift

NORM_TOL = 1e-9
DENSE_QFT_MAX_BITS = 10


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based Philox stream keyed by (seed, *keys)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *keys])))


@dataclass(frozen=True)
class RegisterLayout:
    registers: tuple  # ((name, dim), ...)

    def __post_init__(self) -> None:
        names = [r[0] for r in self.registers]
        if len(set(names)) != len(names):
            raise ValueError("register names must be unique")
        if any(dim < 1 for _, dim in self.registers):
            raise ValueError("every register needs dimension >= 1")

    @property
    def shape(self) -> tuple:
        return tuple(dim for _, dim in self.registers)

    @property
    def dim(self) -> int:
        return math.prod(self.shape)

    def axis(self, name: str) -> int:
        for i, (reg, _) in enumerate(self.registers):
            if reg == name:
                return i
        raise KeyError(name)


class StateVector:
    """Amplitudes over a :class:`RegisterLayout`, kept at unit norm."""

    def __init__(self, layout: RegisterLayout, amplitudes: np.ndarray) -> None:
        amps = np.asarray(amplitudes, dtype=complex).reshape(layout.shape)
        self.layout = layout
        self.amplitudes = amps
        self.check_norm()

    @classmethod
    def basis(cls, layout: RegisterLayout, index: tuple) -> "StateVector":
        amps = np.zeros(layout.shape, dtype=complex)
        amps[tuple(index)] = 1.0
        return cls(layout, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def check_norm(self) -> None:
        if abs(self.norm() - 1.0) > NORM_TOL:
            raise NormDrift(f"state norm drifted to {self.norm()!r}")

    def probabilities(self, register: str) -> np.ndarray:
        ax = self.layout.axis(register)
        others = tuple(i for i in range(len(self.layout.shape)) if i != ax)
        return (np.abs(self.amplitudes) ** 2).sum(axis=others)


class QueryCounter:
    """Per-oracle call tallies; increments are lock-protected."""

    def __init__(self) -> None:
        self._counts: Counter = Counter()
        self._lock = threading.Lock()

    def charge(self, name: str, calls: int = 1) -> None:
        if calls < 0:
            raise ValueError("charges are nonnegative")
        with self._lock:
            self._counts[name] += int(calls)

    def __getitem__(self, name: str) -> int:
        with self._lock:
            return self._counts[name]

    def snapshot(self) -> dict:
        with self._lock:
            return dict(self._counts)


# -- branch-diagonal application ----------------------------------------------


def apply_branch_diagonal(
    psi: np.ndarray, op: np.ndarray | Callable[[int, np.ndarray], np.ndarray]
) -> np.ndarray:
    """Act on every branch of ``psi`` (shape ``(B, k...)``) independently.

    ``op`` is a phase vector of shape ``(B,)``, a stack of per-branch unitaries
    of shape ``(B, k, k)``, or a callable ``(branch, vector) -> vector``.
    """
    psi = np.asarray(psi, dtype=complex)
    before = np.linalg.norm(psi)
    if callable(op):
        out = np.stack([np.asarray(op(b, psi[b]), dtype=complex) for b in range(len(psi))])
    else:
        op = np.asarray(op)
        if op.ndim == 1:
            if len(op) != len(psi):
                raise ValueError("one phase per branch is required")
            out = psi * np.exp(1j * op).reshape((-1,) + (1,) * (psi.ndim - 1))
        else:
            flat = psi.reshape(len(psi), -1)
            out = np.einsum("bij,bj->bi", op, flat).reshape(psi.shape)
    if abs(np.linalg.norm(out) - before) > NORM_TOL:
        raise NormDrift("branch operation is not norm preserving")
    return out


# -- Fourier transforms --------------------------------------------------------


@lru_cache(maxsize=16)
def qft_matrix(n: int) -> np.ndarray:
    N = 2**n
    k = np.arange(N)
    F = np.exp(2j * np.pi * np.outer(k, k) / N) / math.sqrt(N)
    F.setflags(write=False)
    return F


def inverse_qft_matrix(n: int) -> np.ndarray:
    return qft_matrix(n).conj().T


def inverse_qft_array(amps: np.ndarray, axis: int = -1) -> np.ndarray:
    """Inverse QFT along one axis: |j> -> 2^{-n/2} sum_k e^{-2 pi i jk/2^n} |k>."""
    N = amps.shape[axis]
    n = N.bit_length() - 1
    if N != 2**n:
        raise ValueError("register dimension must be a power of two")
    if n <= DENSE_QFT_MAX_BITS:
        moved = np.moveaxis(amps, axis, -1)
        return np.moveaxis(moved @ inverse_qft_matrix(n).T, -1, axis)
    return np.fft.fft(amps, axis=axis, norm="ortho")


def qft_array(amps: np.ndarray, axis: int = -1) -> np.ndarray:
    N = amps.shape[axis]
    n = N.bit_length() - 1
    if N != 2**n:
        raise ValueError("register dimension must be a power of two")
    if n <= DENSE_QFT_MAX_BITS:
        moved = np.moveaxis(amps, axis, -1)
        return np.moveaxis(moved @ qft_matrix(n).T, -1, axis)
    return np.fft.ifft(amps, axis=axis, norm="ortho")


def inverse_qft(state: StateVector, register: str) -> StateVector:
    ax = state.layout.axis(register)
    return StateVector(state.layout, inverse_qft_array(state.amplitudes, ax))


def qft(state: StateVector, register: str) -> StateVector:
    ax = state.layout.axis(register)
    return StateVector(state.layout, qft_array(state.amplitudes, ax))


# -- measurement ---------------------------------------------------------------


def measure(state: StateVector, register: str, rng: np.random.Generator) -> tuple[int, StateVector]:
    """Born-rule sample of one register; returns outcome and collapsed state."""
    probs = state.probabilities(register)
    outcome = int(rng.choice(len(probs), p=probs / probs.sum()))
    ax = state.layout.axis(register)
    amps = np.zeros_like(state.amplitudes)
    sl = [slice(None)] * amps.ndim
    sl[ax] = outcome
    amps[tuple(sl)] = state.amplitudes[tuple(sl)]
    amps /= np.linalg.norm(amps)
    return outcome, StateVector(state.layout, amps)


def sample_outcomes(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Repeated Born-rule samples from a fixed outcome distribution."""
    probs = np.asarray(probs, dtype=float)
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    return np.minimum(np.searchsorted(cdf, rng.random(shots), side="right"), len(probs) - 1)


def interpret_signed(outcome: int | np.ndarray, n: int) -> int | np.ndarray:
    """Two's-complement reading of an n-bit outcome."""
    arr = np.asarray(outcome, dtype=np.int64)
    if np.any(arr < 0) or np.any(arr >= 2**n):
        raise ValueError("outcome outside [0, 2^n)")
    signed = np.where(arr < 2 ** (n - 1), arr, arr - 2**n)
    return int(signed) if signed.ndim == 0 else signed


def phase_register(slope: float, n: int, extra: np.ndarray | None = None) -> np.ndarray:
    """Uniform n-bit register with phase 2 pi y slope / 2^n on centred value y."""
    N = 2**n
    y = np.arange(N) - (N / 2 - 0.5)
    phase = 2 * np.pi * y * slope / N
    if extra is not None:
        phase = phase + extra
    return np.exp(1j * phase) / math.sqrt(N)


def readout_distribution(slope: float, n: int, extra: np.ndarray | None = None) -> np.ndarray:
    """Outcome probabilities after the inverse QFT of :func:`phase_register`."""
    out = inverse_qft_array(phase_register(slope, n, extra))
    probs = np.abs(out) ** 2
    return probs / probs.sum()
