"""
Sampling kernels and generalized samples ``s_k = <x, h_k>``.

Kernels live in the continuous periodic L2 space.  A ``KernelFamily`` keeps,
for every kernel, its exact projection onto the bandlimited space (one row
per channel, sampled on the grid) together with its exact L2 norm.  For
point and derivative kernels the projection is the kernel itself.  For
integrate-and-fire kernels (interval indicators, possibly exponentially
weighted) the projection is built from closed-form Fourier coefficients, so
inner products with bandlimited signals are exact integrals and the family
stays exactly orthogonal in continuous time.

Every subspace used for reconstruction is contained in the bandlimited
space, so these projections are all the engines downstream ever need.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, DimensionError, PreconditionError
from .signal_space import (
    GridSignal,
    GridSpec,
    MultiSignal,
    as_multi,
    dirichlet_kernel,
    evaluate,
    is_bandlimited,
    spectral_derivative,
)

__all__ = [
    "KernelFamily",
    "SampleRecord",
    "SpikeTrain",
    "Extrema",
    "point_kernels",
    "derivative_kernels",
    "extrema_kernels",
    "find_extrema",
    "if_kernels",
    "interval_band_kernel",
    "encode_if",
    "sample",
    "add_noise",
    "write_spike_train",
    "read_spike_train",
    "write_samples",
    "read_samples",
]


def _ro(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class KernelFamily:
    """
    Sampling kernels ``(h_k)``.

    Attributes
    ----------
    spec : GridSpec
    band_kernels : ndarray, shape (K, M, L)
        Bandlimited projection of each kernel, sampled on the grid.
    norms : ndarray, shape (K,)
        Exact L2 norm of each (unprojected) kernel.
    orthogonal : bool
        Whether the unprojected kernels are mutually orthogonal.
    index_map : list
        Label of each kernel: ``k`` or ``(channel, j)``.
    scheme : str
        ``point``, ``derivative``, ``extrema``, ``integrate_fire(alpha)`` or
        ``multichannel_tem``.
    bandlimited : bool
        True when the kernels themselves are bandlimited, so that
        ``band_kernels`` *are* the kernels.
    times : ndarray, shape (K,)
        Sampling instant of each kernel (interval end for interval kernels).
    intervals : ndarray or None, shape (K, 2)
        ``[start, end)`` of each interval kernel.
    channels : ndarray, shape (K,)
        Channel carrying each kernel.
    """

    spec: GridSpec
    band_kernels: np.ndarray
    norms: np.ndarray
    orthogonal: bool
    index_map: list
    scheme: str
    bandlimited: bool
    times: np.ndarray
    intervals: Optional[np.ndarray] = None
    channels: Optional[np.ndarray] = None
    _projected: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        bk = _ro(self.band_kernels)
        if bk.ndim == 2:
            bk = _ro(bk[:, None, :])
        if bk.ndim != 3 or bk.shape[2] != self.spec.grid_len:
            raise DimensionError(f"band_kernels must be (K, M, {self.spec.grid_len}), got {bk.shape}")
        object.__setattr__(self, "band_kernels", bk)
        object.__setattr__(self, "norms", _ro(self.norms))
        object.__setattr__(self, "times", _ro(self.times))
        if self.intervals is not None:
            object.__setattr__(self, "intervals", _ro(self.intervals))
        if self.channels is None:
            object.__setattr__(self, "channels", _ro(np.zeros(len(bk)), int))
        else:
            object.__setattr__(self, "channels", _ro(self.channels, int))
        K = bk.shape[0]
        if not (len(self.norms) == len(self.times) == len(self.index_map) == K):
            raise DimensionError("family metadata lengths do not match the kernel count")
        if np.any(self.norms <= 0):
            raise PreconditionError("zero-norm kernel")

    def __len__(self) -> int:
        return self.band_kernels.shape[0]

    @property
    def n_channels(self) -> int:
        return self.band_kernels.shape[1]

    @property
    def family_id(self) -> str:
        h = hashlib.sha1()
        h.update(self.scheme.encode())
        h.update(self.band_kernels.tobytes())
        h.update(self.norms.tobytes())
        return h.hexdigest()[:16]

    def kernel(self, k: int) -> MultiSignal:
        return MultiSignal(self.spec, self.band_kernels[k])

    def projected(self, space) -> np.ndarray:
        """Kernels projected onto ``space`` (cached per space instance)."""
        key = id(space)
        hit = self._projected.get(key)
        if hit is None or hit[0] is not space:
            arr = space.project_array(self.band_kernels)
            arr.setflags(write=False)
            hit = (space, arr)
            self._projected[key] = hit
        return hit[1]

    def raw_gram(self) -> Optional[np.ndarray]:
        """
        ``[<h_j, h_k>]`` of the unprojected kernels.

        Exact for interval families (disjoint supports give a diagonal
        matrix); computed on the grid for bandlimited kernels.
        """
        if self.bandlimited:
            flat = self.band_kernels.reshape(len(self), -1)
            return self.spec.dt * flat @ flat.T
        if self.intervals is not None:
            g = np.zeros((len(self), len(self)))
            T = self.spec.period_T
            for j in range(len(self)):
                for k in range(j + 1, len(self)):
                    if self.channels[j] == self.channels[k] and _overlap(
                            self.intervals[j], self.intervals[k], T) > 0:
                        raise PreconditionError("overlapping in-channel intervals")
            np.fill_diagonal(g, self.norms ** 2)
            return g
        return None


def _overlap(a, b, T) -> float:
    total = 0.0
    for shift in (-T, 0.0, T):
        lo = max(a[0], b[0] + shift)
        hi = min(a[1], b[1] + shift)
        total += max(0.0, hi - lo)
    return total


@dataclass(frozen=True, eq=False)
class SampleRecord:
    raw: np.ndarray
    normalized: np.ndarray
    norms: np.ndarray
    family_ref: str
    noise: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "raw", _ro(self.raw))
        object.__setattr__(self, "normalized", _ro(self.normalized))
        object.__setattr__(self, "norms", _ro(self.norms))
        if self.noise is not None:
            object.__setattr__(self, "noise", _ro(self.noise))
        if not (self.raw.shape == self.normalized.shape == self.norms.shape):
            raise DimensionError("sample record lengths differ")

    def __len__(self):
        return len(self.raw)

    @classmethod
    def from_raw(cls, raw, family: KernelFamily, noise=None) -> "SampleRecord":
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (len(family),):
            raise DimensionError(f"expected {len(family)} samples, got {raw.shape}")
        return cls(raw, raw / family.norms, family.norms, family.family_id, noise)


@dataclass(frozen=True, eq=False)
class SpikeTrain:
    """
    Spike instants in ``[0, T)`` and one sample per interval.

    ``samples[j]`` belongs to the interval ending at ``times[j]``; the
    interval of ``samples[0]`` wraps around from ``times[-1] - T``.  The
    intervals therefore tile exactly one period.
    """

    times: np.ndarray
    samples: np.ndarray
    period: float

    def __post_init__(self):
        object.__setattr__(self, "times", _ro(self.times))
        object.__setattr__(self, "samples", _ro(self.samples))
        t = self.times
        if t.ndim != 1 or len(t) != len(self.samples):
            raise DimensionError("times and samples must be 1-D of equal length")
        if len(t) and (np.any(np.diff(t) <= 0) or t[0] < 0 or t[-1] >= self.period):
            raise PreconditionError("spike times must be strictly increasing within [0, T)")

    def __len__(self):
        return len(self.times)

    @property
    def intervals(self) -> np.ndarray:
        starts = np.concatenate([[self.times[-1] - self.period], self.times[:-1]])
        return np.column_stack([starts, self.times])


# ---------------------------------------------------------------------------
# bandlimited kernels

def _check_times(times, spec: GridSpec) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise DimensionError("times must be a non-empty 1-D array")
    if np.any(times < 0) or np.any(times >= spec.period_T):
        raise PreconditionError("times must lie within one period [0, T)")
    return times


def point_kernels(times, spec: GridSpec) -> KernelFamily:
    """Dirichlet kernels centred at ``times``: samples are point values ``x(t_k)``."""
    times = _check_times(times, spec)
    if len(np.unique(times)) != len(times):
        raise PreconditionError("duplicate sampling times")
    if np.any(np.diff(times) <= 0):
        raise PreconditionError("times must be strictly increasing")
    kernels = np.stack([dirichlet_kernel(t, spec).values for t in times])
    return _bandlimited_family(spec, kernels, times, "point")


def _bandlimited_family(spec, kernels, times, scheme, labels=None) -> KernelFamily:
    norms = np.sqrt(spec.dt * np.einsum("kl,kl->k", kernels, kernels))
    return KernelFamily(
        spec=spec,
        band_kernels=kernels[:, None, :],
        norms=norms,
        orthogonal=False,
        index_map=list(range(len(times))) if labels is None else labels,
        scheme=scheme,
        bandlimited=True,
        times=times,
    )


def derivative_kernels(times, orders, spec: GridSpec, scheme: str = "derivative") -> KernelFamily:
    """
    Kernels ``(-1)^n D^(n)(t - t_k)``; the sample is ``x^(n_k)(t_k)``.

    ``times`` may repeat as long as the ``(time, order)`` pairs are distinct.
    """
    times = _check_times(times, spec)
    orders = np.asarray(orders)
    if orders.shape != times.shape:
        raise DimensionError("times and orders must have equal length")
    if np.any(orders < 0) or np.any(orders != np.round(orders)):
        raise PreconditionError("orders must be non-negative integers")
    orders = orders.astype(int)
    pairs = set(zip(times.tolist(), orders.tolist()))
    if len(pairs) != len(times):
        raise PreconditionError("duplicate (time, order) pairs")
    rows = []
    for t, n in zip(times, orders):
        d = spectral_derivative(dirichlet_kernel(t, spec), n).values
        rows.append(d if n % 2 == 0 else -d)
    labels = [(int(n), float(t)) for t, n in zip(times, orders)]
    return _bandlimited_family(spec, np.stack(rows), times, scheme, labels)


class Extrema(NamedTuple):
    times: np.ndarray
    values: np.ndarray
    degenerate: np.ndarray


def find_extrema(x: GridSignal, detect_oversample: int = 4) -> Extrema:
    """
    Locate all local extrema of a bandlimited signal over one period.

    Sign changes of ``x'`` are detected on the grid (upsampled by
    ``detect_oversample``), then each root is refined by Newton's method on
    the Fourier series of ``x'`` and ``x''`` (at most 30 steps) with a
    bisection fallback.  Roots where ``|x''|`` is below ``1e-8 max|x''|``
    are flagged in ``degenerate``.
    """
    spec = x.spec
    if not is_bandlimited(x.values, spec):
        raise PreconditionError("find_extrema requires a bandlimited signal")
    T = spec.period_T
    n_fine = spec.grid_len * detect_oversample
    spectrum = np.fft.rfft(x.values)
    m = np.arange(len(spectrum))
    fine = np.zeros(n_fine // 2 + 1, dtype=complex)
    fine[: spec.n_harmonics + 1] = (spectrum * (2j * np.pi * m / T))[: spec.n_harmonics + 1]
    d1 = np.fft.irfft(fine, n=n_fine) * detect_oversample
    scale1 = np.abs(d1).max()
    if scale1 == 0:
        raise PreconditionError("constant signal has no isolated extrema")
    tf = np.arange(n_fine) * (T / n_fine)
    nxt = np.roll(d1, -1)
    prv = np.roll(d1, 1)
    crossing = np.nonzero(d1 * nxt < 0)[0]
    on_grid = np.nonzero((d1 == 0) & (prv * nxt < 0))[0]

    h = T / n_fine
    lo = tf[crossing]
    hi = lo + h
    f_lo = d1[crossing]
    f_hi = nxt[crossing]
    tau = lo - f_lo * h / (f_hi - f_lo)
    tol = 1e-11 * scale1
    done = np.zeros(len(tau), dtype=bool)
    failed = np.zeros(len(tau), dtype=bool)
    for _ in range(30):
        active = ~done & ~failed
        if not active.any():
            break
        f1 = evaluate(x, tau[active], 1)
        f2 = evaluate(x, tau[active], 2)
        conv = np.abs(f1) <= tol
        idx = np.nonzero(active)[0]
        done[idx[conv]] = True
        step_idx = idx[~conv]
        with np.errstate(divide="ignore", invalid="ignore"):
            new = tau[step_idx] - f1[~conv] / f2[~conv]
        bad = ~np.isfinite(new) | (new < lo[step_idx]) | (new > hi[step_idx])
        failed[step_idx[bad]] = True
        tau[step_idx[~bad]] = new[~bad]
    pending = ~done
    if pending.any():
        final = np.abs(evaluate(x, tau[pending], 1)) <= tol
        idx = np.nonzero(pending)[0]
        done[idx[final]] = True
    for i in np.nonzero(~done)[0]:
        tau[i] = _bisect(lambda t: evaluate(x, t, 1)[0], lo[i], hi[i], f_lo[i], tol)

    roots = np.concatenate([np.mod(tau, T), tf[on_grid]])
    roots = np.sort(roots)
    d2 = evaluate(x, roots, 2)
    fine2 = fine * (2j * np.pi * np.arange(len(fine)) / T)
    scale2 = np.abs(np.fft.irfft(fine2, n=n_fine) * detect_oversample).max()
    degenerate = np.abs(d2) < 1e-8 * scale2
    return Extrema(roots, evaluate(x, roots, 0), degenerate)


def _bisect(f, lo, hi, f_lo, tol, max_iter=200):
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= tol or hi - lo < 1e-15:
            return mid
        if (fm < 0) == (f_lo < 0):
            lo, f_lo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def extrema_kernels(extrema: Extrema, spec: GridSpec) -> tuple:
    """
    Interleaved value/derivative family of an extrema sequence.

    Returns ``(family, raw_samples)`` with ``(order, time, sample)`` equal to
    ``(0, tau_i, a_i)`` at index ``2i`` and ``(1, tau_i, 0)`` at ``2i+1``.
    """
    tau = np.repeat(extrema.times, 2)
    orders = np.tile([0, 1], len(extrema.times))
    family = derivative_kernels(tau, orders, spec, scheme="extrema")
    raw = np.zeros(len(tau))
    raw[0::2] = extrema.values
    return family, raw


# ---------------------------------------------------------------------------
# integrate-and-fire kernels

def interval_band_kernel(start: float, end: float, alpha: float, spec: GridSpec) -> tuple:
    """
    Bandlimited projection and L2 norm of ``exp(-alpha (end - t)) 1_[start, end)(t)``.

    The interval may start before 0 (periodic wrap).  Returns
    ``(values, norm)`` where ``values`` has length ``grid_len``.
    """
    spec.require_odd()
    T = spec.period_T
    length = end - start
    n = spec.n_harmonics
    w = 2 * np.pi * np.arange(n + 1) / T
    beta = alpha - 1j * w
    decay = np.exp(-alpha * length)
    coeff = np.empty(n + 1, dtype=complex)
    nz = np.abs(beta) > 0
    coeff[nz] = (np.exp(-1j * w[nz] * end) - decay * np.exp(-1j * w[nz] * start)) / beta[nz]
    coeff[~nz] = length
    spectrum = np.zeros(spec.grid_len // 2 + 1, dtype=complex)
    spectrum[: n + 1] = coeff * spec.rate_R
    values = np.fft.irfft(spectrum, n=spec.grid_len)
    if alpha == 0:
        norm2 = length
    else:
        norm2 = -np.expm1(-2 * alpha * length) / (2 * alpha)
    return values, float(np.sqrt(norm2))


def if_kernels(partition, alpha: float, spec: GridSpec, channel: int = 0,
               n_channels: int = 1) -> KernelFamily:
    """
    Integrate-and-fire kernels over the intervals of a periodic partition.

    ``partition`` is a ``SpikeTrain`` or an increasing array of instants in
    ``[0, T)``; kernel ``k`` covers ``[t_{k-1}, t_k)`` with the first
    interval wrapping around the period, weighted by ``exp(-alpha (t_k - t))``.
    """
    if alpha < 0:
        raise PreconditionError("alpha must be non-negative")
    times = partition.times if isinstance(partition, SpikeTrain) else np.asarray(partition, float)
    if times.ndim != 1 or len(times) == 0:
        raise PreconditionError("partition must contain at least one instant")
    train = SpikeTrain(times, np.zeros(len(times)), spec.period_T)
    iv = train.intervals
    if np.any(iv[:, 1] - iv[:, 0] < spec.dt):
        raise PreconditionError("interval shorter than one grid step; raise rate_R")
    rows, norms = [], []
    for start, end in iv:
        v, nrm = interval_band_kernel(start, end, alpha, spec)
        rows.append(v)
        norms.append(nrm)
    bk = np.zeros((len(rows), n_channels, spec.grid_len))
    bk[:, channel, :] = np.stack(rows)
    tag = f"integrate_fire({alpha:g})"
    return KernelFamily(
        spec=spec,
        band_kernels=bk,
        norms=np.array(norms),
        orthogonal=True,
        index_map=[(channel, j) for j in range(len(rows))] if n_channels > 1 else list(range(len(rows))),
        scheme=tag,
        bandlimited=False,
        times=times,
        intervals=iv,
        channels=np.full(len(rows), channel),
    )


def _antiderivative(x: GridSignal):
    """Callable ``F(t) = int_0^t x`` from the Fourier series (vectorized in t)."""
    spec = x.spec
    T = spec.period_T
    n = spec.n_harmonics
    c = np.fft.rfft(x.values)[: n + 1] / spec.grid_len
    mean = c[0].real
    w = 2 * np.pi * np.arange(1, n + 1) / T
    ac = 2 * c[1:] / (1j * w)

    def F(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        g = np.real(np.exp(1j * np.outer(t, w)) @ ac)
        g0 = np.real(ac.sum())
        return mean * t + g - g0

    return F


def encode_if(x: GridSignal, bias: float, threshold: float, start: float = 0.0) -> SpikeTrain:
    """
    Biased integrate-and-fire time encoding of one period of ``x``.

    Spikes fire when ``int (x + bias)`` since the previous spike reaches
    ``threshold``, starting from a reset at ``start``.  Each interval sample
    is ``threshold - bias * (t_j - t_{j-1}) = int x`` over the interval; the
    wrap-around interval is integrated directly.  The mean spike rate is
    ``bias / threshold`` per unit time.
    """
    spec = x.spec
    T = spec.period_T
    if threshold <= 0:
        raise PreconditionError("threshold must be positive")
    peak = np.abs(evaluate(x, np.linspace(0, T, 8 * spec.grid_len, endpoint=False))).max()
    if bias <= peak:
        raise PreconditionError(f"bias {bias} must exceed max|x| = {peak:.6g}")
    Fx = _antiderivative(x)
    F = lambda t: Fx(t + start) - Fx(start) + bias * t
    total = float(F(T)[0])
    count = int(np.floor(total / threshold))
    if count < 2:
        raise ConfigError("fewer than 2 spikes per period; lower the threshold")
    targets = threshold * np.arange(1, count + 1)
    targets = targets[targets < total]
    lo = np.zeros(len(targets))
    hi = np.full(len(targets), float(T))
    t = targets / (total / T)
    tol = 1e-13 * threshold
    for _ in range(100):
        res = F(t) - targets
        if np.all(np.abs(res) <= tol):
            break
        lo = np.where(res < 0, t, lo)
        hi = np.where(res > 0, t, hi)
        slope = evaluate(x, t + start, 0) + bias
        cand = t - res / slope
        outside = (cand <= lo) | (cand >= hi)
        t = np.where(outside, 0.5 * (lo + hi), cand)
    rel = t
    if T - rel[-1] < 1e-9:
        rel = rel[:-1]
    # the reset instant itself closes the wrap interval unless it is degenerate
    edges = np.concatenate([[0.0], rel])
    if edges[1] < 1e-9:
        edges = edges[1:]
    absolute = np.mod(edges + start, T)
    order = np.argsort(absolute)
    absolute = absolute[order]
    iv = SpikeTrain(absolute, np.zeros(len(absolute)), T).intervals
    # Fx is analytic on the real line, so wrapped starts (< 0) need no special case
    samples = Fx(iv[:, 1]) - Fx(iv[:, 0])
    return SpikeTrain(absolute, samples, T)


# ---------------------------------------------------------------------------
# sampling

def sample(x, family: KernelFamily) -> SampleRecord:
    """Generalized samples ``s_k = <x, h_k>`` and their normalized version ``s_k / ||h_k||``."""
    x = as_multi(x)
    if x.spec != family.spec or x.n_channels != family.n_channels:
        raise DimensionError("signal and kernel family do not share grid and channel count")
    if not family.bandlimited and not is_bandlimited(x.values, x.spec):
        raise PreconditionError("interval kernels can only sample bandlimited signals on the grid")
    raw = x.spec.dt * np.einsum("kml,ml->k", family.band_kernels, x.values)
    return SampleRecord.from_raw(raw, family)


def add_noise(record: SampleRecord, sigma: float, seed=None) -> SampleRecord:
    """Add i.i.d. zero-mean Gaussian noise of standard deviation ``sigma`` to the raw samples."""
    if sigma < 0:
        raise PreconditionError("sigma must be non-negative")
    if sigma == 0:
        return record
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    e = sigma * rng.standard_normal(len(record))
    raw = record.raw + e
    noise = e if record.noise is None else record.noise + e
    return SampleRecord(raw, raw / record.norms, record.norms, record.family_ref, noise)


# ---------------------------------------------------------------------------
# line-oriented text format

def _header(scheme: str, spec: GridSpec, count: int) -> str:
    return f"{scheme},{spec.period_T},{spec.rate_R},{count}\n"


def write_spike_train(path, train: SpikeTrain, spec: GridSpec, scheme: str = "integrate_fire") -> None:
    with open(path, "w") as fh:
        fh.write(_header(scheme, spec, len(train)))
        for t, s in zip(train.times, train.samples):
            fh.write(f"{t:.17g},{s:.17g}\n")


def _read_table(path):
    with open(path) as fh:
        head = fh.readline().strip().split(",")
        scheme, T, R, count = head[0], int(head[1]), int(head[2]), int(head[3])
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if len(rows) != count:
        raise DimensionError(f"header announces {count} rows, found {len(rows)}")
    return scheme, GridSpec(T, R), np.array(rows, dtype=float).reshape(count, -1)


def read_spike_train(path) -> tuple:
    """Returns ``(train, spec, scheme)``."""
    scheme, spec, rows = _read_table(path)
    return SpikeTrain(rows[:, 0], rows[:, 1], spec.period_T), spec, scheme


def write_samples(path, record: SampleRecord, family: KernelFamily) -> None:
    with open(path, "w") as fh:
        fh.write(_header(family.scheme, family.spec, len(record)))
        for t, s in zip(family.times, record.raw):
            fh.write(f"{t:.17g},{s:.17g}\n")


def read_samples(path) -> tuple:
    """Returns ``(times, raw_samples, spec, scheme)``."""
    scheme, spec, rows = _read_table(path)
    return rows[:, 0], rows[:, 1], spec, scheme
