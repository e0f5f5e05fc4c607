"""
Finite model of the signal spaces: T-periodic real signals on a uniform grid.

The Nyquist period is 1 time unit.  A grid with ``rate_R`` points per unit
and period ``period_T`` units holds ``T * R`` samples.  The bandlimited space
is spanned by the harmonics ``exp(2j*pi*m*t/T)`` with ``|m| <= (T-1)/2``;
for those signals the plain Riemann sum ``dt * sum(u * v)`` is the exact
L2 inner product, so no higher-order quadrature is ever needed.

Multi-channel signals are stacked as ``(M, L)`` arrays.  A ``SignalSpace``
describes the closed subspace the input is known to live in: bandlimited in
every channel and, at every instant, inside the range of an ``M x M``
orthogonal projector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    PreconditionError,
    UnsupportedConfigurationError,
)

__all__ = [
    "GridSpec",
    "GridSignal",
    "MultiSignal",
    "SignalSpace",
    "inner_product",
    "norm",
    "project_B",
    "dirichlet_kernel",
    "spectral_derivative",
    "evaluate",
    "random_bandlimited",
    "is_bandlimited",
    "as_multi",
    "bandlimited_space",
]

# relative size of out-of-band DFT bins still accepted as bandlimited
BAND_TOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    period_T: int
    rate_R: int = 16

    def __post_init__(self):
        if int(self.period_T) != self.period_T or self.period_T < 1:
            raise ConfigError(f"period_T must be a positive integer, got {self.period_T}")
        if int(self.rate_R) != self.rate_R or self.rate_R < 8:
            raise ConfigError(f"rate_R must be an integer >= 8, got {self.rate_R}")

    @property
    def grid_len(self) -> int:
        return self.period_T * self.rate_R

    @property
    def dt(self) -> float:
        return 1.0 / self.rate_R

    @property
    def n_harmonics(self) -> int:
        """Highest harmonic index kept by the bandlimited space."""
        return (self.period_T - 1) // 2

    @cached_property
    def times(self) -> np.ndarray:
        t = np.arange(self.grid_len) / self.rate_R
        t.setflags(write=False)
        return t

    def require_odd(self):
        if self.period_T % 2 == 0:
            raise UnsupportedConfigurationError(
                f"even period T={self.period_T} needs an asymmetric Nyquist bin; only odd T is supported"
            )


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _band_violation(values: np.ndarray, spec: GridSpec) -> float:
    spectrum = np.abs(np.fft.rfft(values, axis=-1))
    peak = spectrum.max() if spectrum.size else 0.0
    if peak == 0.0:
        return 0.0
    return spectrum[..., spec.n_harmonics + 1:].max(initial=0.0) / peak


def is_bandlimited(values: np.ndarray, spec: GridSpec, tol: float = BAND_TOL) -> bool:
    return _band_violation(np.asarray(values, dtype=float), spec) <= tol


@dataclass(frozen=True, eq=False)
class GridSignal:
    """One period of a real signal sampled at ``t_i = i / rate_R``."""

    spec: GridSpec
    values: np.ndarray
    bandlimited: bool = False

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.shape != (self.spec.grid_len,):
            raise DimensionError(
                f"expected {self.spec.grid_len} grid values, got shape {self.values.shape}"
            )
        if self.bandlimited:
            self.spec.require_odd()
            if not is_bandlimited(self.values, self.spec):
                raise PreconditionError("signal flagged bandlimited has out-of-band content")

    @cached_property
    def spectrum(self) -> np.ndarray:
        s = np.fft.rfft(self.values)
        s.setflags(write=False)
        return s

    def _combine(self, other, op):
        if isinstance(other, GridSignal):
            if other.spec != self.spec:
                raise DimensionError("grid specs differ")
            return GridSignal(self.spec, op(self.values, other.values),
                              self.bandlimited and other.bandlimited)
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, a):
        if np.isscalar(a):
            return GridSignal(self.spec, a * self.values, self.bandlimited)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return GridSignal(self.spec, -self.values, self.bandlimited)


@dataclass(frozen=True, eq=False)
class MultiSignal:
    """An M-tuple of grid signals sharing one ``GridSpec``, stored as an ``(M, L)`` array."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim == 1:
            v = _frozen(v[None, :])
        if v.ndim != 2 or v.shape[1] != self.spec.grid_len:
            raise DimensionError(
                f"expected shape (M, {self.spec.grid_len}), got {v.shape}"
            )
        object.__setattr__(self, "values", v)

    @classmethod
    def from_channels(cls, channels) -> "MultiSignal":
        channels = list(channels)
        if not channels:
            raise DimensionError("at least one channel is required")
        spec = channels[0].spec
        if any(c.spec != spec for c in channels):
            raise DimensionError("all channels must share one GridSpec")
        return cls(spec, np.stack([c.values for c in channels]))

    @classmethod
    def zeros(cls, spec: GridSpec, n_channels: int = 1) -> "MultiSignal":
        return cls(spec, np.zeros((n_channels, spec.grid_len)))

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> list:
        return [GridSignal(self.spec, row, is_bandlimited(row, self.spec)) for row in self.values]

    def _combine(self, other, op):
        if isinstance(other, MultiSignal):
            if other.spec != self.spec or other.values.shape != self.values.shape:
                raise DimensionError("grid specs or channel counts differ")
            return MultiSignal(self.spec, op(self.values, other.values))
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, a):
        if np.isscalar(a):
            return MultiSignal(self.spec, a * self.values)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return MultiSignal(self.spec, -self.values)


Signal = Union[GridSignal, MultiSignal]


def as_multi(u: Signal) -> MultiSignal:
    if isinstance(u, MultiSignal):
        return u
    return MultiSignal(u.spec, u.values[None, :])


def _check_same(u: Signal, v: Signal):
    if type(u) is not type(v):
        raise DimensionError("cannot mix GridSignal and MultiSignal")
    if u.spec != v.spec:
        raise DimensionError("grid specs differ")
    if u.values.shape != v.values.shape:
        raise DimensionError("channel counts differ")


def inner_product(u: Signal, v: Signal) -> float:
    """``dt * sum_i u(t_i) v(t_i)``, summed over channels."""
    _check_same(u, v)
    return float(u.spec.dt * np.vdot(u.values, v.values))


def norm(u: Signal) -> float:
    return float(np.sqrt(inner_product(u, u)))


def _lowpass(values: np.ndarray, spec: GridSpec) -> np.ndarray:
    spec.require_odd()
    spectrum = np.fft.rfft(values, axis=-1)
    spectrum[..., spec.n_harmonics + 1:] = 0.0
    return np.fft.irfft(spectrum, n=spec.grid_len, axis=-1)


def project_B(u: Signal) -> Signal:
    """Orthogonal projection onto the bandlimited space (channel-wise DFT mask)."""
    if isinstance(u, GridSignal):
        return GridSignal(u.spec, _lowpass(u.values, u.spec), True)
    return MultiSignal(u.spec, _lowpass(u.values, u.spec))


def dirichlet_kernel(t0: float, spec: GridSpec) -> GridSignal:
    """
    Reproducing kernel of the periodic bandlimited space centred at ``t0``.

    ``D(t) = sin(pi t) / (T sin(pi t / T))`` with ``D(0) = 1``, so that
    ``inner_product(x, dirichlet_kernel(t0, spec)) == x(t0)`` for every
    bandlimited ``x``.
    """
    spec.require_odd()
    T = spec.period_T
    # reduce to (-T/2, T/2] so that sin(pi t) keeps full relative precision near 0
    t = np.mod(spec.times - t0 + 0.5 * T, T) - 0.5 * T
    den = T * np.sin(np.pi * t / T)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.sin(np.pi * t) / den
    d = np.where(t == 0, 1.0, d)
    return GridSignal(spec, d, True)


def _harmonic_factors(spec: GridSpec, order: int) -> np.ndarray:
    m = np.arange(spec.grid_len // 2 + 1)
    return (2j * np.pi * m / spec.period_T) ** order


def spectral_derivative(u: GridSignal, order: int = 1) -> GridSignal:
    """Exact ``order``-th derivative of a bandlimited grid signal."""
    if order < 0 or int(order) != order:
        raise PreconditionError("derivative order must be a non-negative integer")
    if not is_bandlimited(u.values, u.spec):
        raise PreconditionError("spectral derivative requires a bandlimited signal")
    if order == 0:
        return GridSignal(u.spec, u.values, True)
    spectrum = np.fft.rfft(u.values) * _harmonic_factors(u.spec, order)
    spectrum[u.spec.n_harmonics + 1:] = 0.0
    return GridSignal(u.spec, np.fft.irfft(spectrum, n=u.spec.grid_len), True)


def evaluate(u: Signal, t, order: int = 0) -> np.ndarray:
    """
    Evaluate the bandlimited part of ``u`` (or its derivative) at arbitrary times.

    Uses the Fourier series directly, so off-grid points are exact for
    bandlimited signals.  Returns shape ``(len(t),)`` for a GridSignal and
    ``(M, len(t))`` for a MultiSignal.
    """
    spec = u.spec
    spec.require_odd()
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n = spec.n_harmonics
    coeffs = np.fft.rfft(u.values, axis=-1)[..., : n + 1] / spec.grid_len
    m = np.arange(n + 1)
    w = 2 * np.pi * m / spec.period_T
    coeffs = coeffs * (1j * w) ** order
    phase = np.exp(1j * np.outer(w, t))
    weights = np.full(n + 1, 2.0)
    weights[0] = 1.0
    return np.real((coeffs * weights) @ phase)


def random_bandlimited(spec: GridSpec, profile: str = "flat", seed=None,
                       dc_weight: float = 0.0) -> GridSignal:
    """
    Random real bandlimited signal normalized to unit L2 norm.

    Parameters
    ----------
    spec : GridSpec
    profile : {"flat", "linear"}
        Amplitude weight of harmonic ``m``: 1 for ``flat``, ``m`` for
        ``linear`` (spectrum increasing linearly with frequency).
    seed : int, sequence of int or numpy Generator
    dc_weight : float
        Weight of the standard-normal DC coefficient.
    """
    spec.require_odd()
    if profile == "flat":
        weight = lambda m: np.ones_like(m, dtype=float)
    elif profile == "linear":
        weight = lambda m: m.astype(float)
    else:
        raise ConfigError(f"unknown spectrum profile {profile!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = spec.n_harmonics
    m = np.arange(1, n + 1)
    a = rng.standard_normal(n)
    b = rng.standard_normal(n)
    dc = rng.standard_normal()
    L = spec.grid_len
    spectrum = np.zeros(L // 2 + 1, dtype=complex)
    spectrum[0] = dc_weight * dc * L
    spectrum[1: n + 1] = weight(m) * (a - 1j * b) * (L / 2)
    x = np.fft.irfft(spectrum, n=L)
    x /= np.sqrt(spec.dt * np.dot(x, x))
    return GridSignal(spec, x, True)


def _real_fourier_basis(spec: GridSpec) -> np.ndarray:
    """Rows are the real harmonic basis, orthonormal under ``inner_product``."""
    T = spec.period_T
    t = spec.times
    rows = [np.full(spec.grid_len, 1.0 / np.sqrt(T))]
    for m in range(1, spec.n_harmonics + 1):
        rows.append(np.sqrt(2.0 / T) * np.cos(2 * np.pi * m * t / T))
        rows.append(np.sqrt(2.0 / T) * np.sin(2 * np.pi * m * t / T))
    return np.array(rows)


@dataclass(frozen=True, eq=False)
class SignalSpace:
    """
    Closed subspace ``{v bandlimited in every channel : v(t) in range(P)}``.

    With ``P`` the identity this is the plain bandlimited space (M copies);
    with ``P = A A^+`` it is the multi-channel subspace of mixed sources.
    """

    spec: GridSpec
    projector: np.ndarray = field(default_factory=lambda: np.eye(1))

    def __post_init__(self):
        self.spec.require_odd()
        P = _frozen(np.atleast_2d(self.projector))
        if P.shape[0] != P.shape[1]:
            raise DimensionError("projector must be square")
        if not (np.allclose(P, P.T, atol=1e-12) and np.allclose(P @ P, P, atol=1e-12)):
            raise PreconditionError("projector must be symmetric and idempotent")
        object.__setattr__(self, "projector", P)

    @property
    def n_channels(self) -> int:
        return self.projector.shape[0]

    @cached_property
    def _is_identity(self) -> bool:
        return bool(np.array_equal(self.projector, np.eye(self.n_channels)))

    def project(self, u: MultiSignal) -> MultiSignal:
        u = as_multi(u)
        if u.spec != self.spec or u.n_channels != self.n_channels:
            raise DimensionError("signal does not match the space")
        return MultiSignal(self.spec, self.project_array(u.values))

    def project_array(self, values: np.ndarray) -> np.ndarray:
        """Project a stack ``(..., M, L)`` of raw value arrays."""
        out = _lowpass(values, self.spec)
        if not self._is_identity:
            out = np.einsum("ij,...jl->...il", self.projector, out)
        return out

    @cached_property
    def basis(self) -> np.ndarray:
        """Orthonormal basis of the subspace, shape ``(dim, M, L)``."""
        evals, evecs = np.linalg.eigh(self.projector)
        q = evecs[:, evals > 0.5]
        phi = _real_fourier_basis(self.spec)
        b = np.einsum("dl,mq->qdml", phi, q).reshape(-1, self.n_channels, self.spec.grid_len)
        b.setflags(write=False)
        return b

    @property
    def dim(self) -> int:
        return self.basis.shape[0]


def bandlimited_space(spec: GridSpec, n_channels: int = 1) -> SignalSpace:
    return SignalSpace(spec, np.eye(n_channels))
