"""
Multi-channel time encoding of mixed sources.

``N`` bandlimited sources ``y(t)`` are mixed by a full-rank ``M x N`` matrix
into ``x(t) = A y(t)``, and each of the ``M`` channels is encoded by its
own integrate-and-fire machine.  The mixed signal lives in the subspace of
bandlimited M-tuples whose value at every instant lies in ``range(A)``;
its orthogonal projector acts as the lowpass filter followed by the
pointwise matrix ``P = A A^+``.  Channel kernels ``h^i_j e_i`` are mutually
orthogonal, so the orthogonal-kernel engine applies directly, and the
Gram matrix factorizes into a per-channel-pair scalar block times ``P``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionError, PreconditionError
from .samplers import KernelFamily, SpikeTrain, encode_if, interval_band_kernel
from .signal_space import GridSignal, GridSpec, MultiSignal, SignalSpace, as_multi

__all__ = [
    "MixingMatrix",
    "tight_frame",
    "project_A_multichannel",
    "ChannelSpikeSet",
    "encode_channels",
    "mc_kernels",
    "mc_gram_entry",
    "mc_gram",
    "synthesize_output",
    "write_matrix",
    "read_matrix",
    "write_spike_set",
    "read_spike_set",
]


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    """Full-rank ``M x N`` mixing matrix with its pseudo-inverse and range projector."""

    A: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2:
            raise DimensionError("mixing matrix must be 2-D")
        M, N = A.shape
        if M < N:
            raise PreconditionError(f"need M >= N, got {M} x {N}")
        if np.linalg.matrix_rank(A) != N:
            raise PreconditionError("mixing matrix must have full column rank")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def shape(self) -> tuple:
        return self.A.shape

    @cached_property
    def A_pinv(self) -> np.ndarray:
        p = np.linalg.pinv(self.A)
        p.setflags(write=False)
        return p

    @cached_property
    def P(self) -> np.ndarray:
        p = self.A @ self.A_pinv
        p = 0.5 * (p + p.T)
        p.setflags(write=False)
        return p

    def space(self, spec: GridSpec) -> SignalSpace:
        return SignalSpace(spec, self.P)

    def mix(self, y) -> MultiSignal:
        y = as_multi(y)
        if y.n_channels != self.shape[1]:
            raise DimensionError(f"expected {self.shape[1]} sources, got {y.n_channels}")
        return MultiSignal(y.spec, self.A @ y.values)

    def unmix(self, x) -> MultiSignal:
        x = as_multi(x)
        if x.n_channels != self.shape[0]:
            raise DimensionError(f"expected {self.shape[0]} channels, got {x.n_channels}")
        return MultiSignal(x.spec, self.A_pinv @ x.values)


def tight_frame(M: int, N: int, rotation: float = 0.0) -> MixingMatrix:
    """
    Equal-norm tight frame of ``M`` vectors in ``R^N`` with ``A^T A = (M/N) I``.

    For ``N = 2`` row ``i`` is the unit vector at angle ``2 pi i / M +
    rotation`` (``M = 3`` gives the Mercedes-Benz frame).  Other ``N`` use
    the real harmonic frame built from the first columns of the orthonormal
    real DFT basis of ``R^M``.  ``M = N`` returns the identity.
    """
    if N < 1 or M < N:
        raise PreconditionError(f"need M >= N >= 1, got M={M}, N={N}")
    if M == N:
        return MixingMatrix(np.eye(M))
    i = np.arange(M)
    if N == 2:
        ang = 2 * np.pi * i / M + rotation
        return MixingMatrix(np.column_stack([np.cos(ang), np.sin(ang)]))
    cols = []
    if N % 2:
        cols.append(np.full(M, 1.0 / np.sqrt(M)))
    for m in range(1, N // 2 + 1):
        cols.append(np.sqrt(2.0 / M) * np.cos(2 * np.pi * m * i / M))
        cols.append(np.sqrt(2.0 / M) * np.sin(2 * np.pi * m * i / M))
    return MixingMatrix(np.sqrt(M / N) * np.column_stack(cols))


def project_A_multichannel(u, mix: MixingMatrix) -> MultiSignal:
    """Lowpass every channel, then apply ``P`` at every instant."""
    u = as_multi(u)
    if u.n_channels != mix.shape[0]:
        raise DimensionError(f"expected {mix.shape[0]} channels, got {u.n_channels}")
    return mix.space(u.spec).project(u)


@dataclass(frozen=True, eq=False)
class ChannelSpikeSet:
    """
    One spike train per channel.

    Kernels are flattened channel-major: all intervals of channel 0 in
    time order, then channel 1, and so on.
    """

    trains: tuple

    def __post_init__(self):
        trains = tuple(self.trains)
        if not trains:
            raise DimensionError("at least one channel is required")
        if any(not isinstance(t, SpikeTrain) for t in trains):
            raise PreconditionError("channels must be SpikeTrain instances")
        if len({t.period for t in trains}) != 1:
            raise PreconditionError("all channels must share one period")
        object.__setattr__(self, "trains", trains)

    @property
    def n_channels(self) -> int:
        return len(self.trains)

    @property
    def period(self) -> float:
        return self.trains[0].period

    def __len__(self):
        return sum(len(t) for t in self.trains)

    @property
    def index_map(self) -> list:
        return [(i, j) for i, t in enumerate(self.trains) for j in range(len(t))]

    @property
    def samples(self) -> np.ndarray:
        return np.concatenate([t.samples for t in self.trains])

    @property
    def per_channel_rate(self) -> np.ndarray:
        """Spikes per unit time in each channel."""
        return np.array([len(t) / t.period for t in self.trains])


def encode_channels(x, bias, threshold) -> ChannelSpikeSet:
    """Integrate-and-fire encoding of every channel (scalar or per-channel bias/threshold)."""
    x = as_multi(x)
    M = x.n_channels
    bias = np.broadcast_to(np.asarray(bias, dtype=float), (M,))
    threshold = np.broadcast_to(np.asarray(threshold, dtype=float), (M,))
    trains = [encode_if(GridSignal(x.spec, x.values[i], True), bias[i], threshold[i])
              for i in range(M)]
    return ChannelSpikeSet(tuple(trains))


def mc_kernels(spikes: ChannelSpikeSet, spec: GridSpec, M: int | None = None,
               alpha: float = 0.0) -> KernelFamily:
    """
    Kernel family ``h^i_j(t) e_i`` over all channels (channel-major order).

    ``h^i_j`` is the indicator (``alpha > 0``: exponentially weighted) of
    the interval ending at spike ``j`` of channel ``i``.
    """
    M = spikes.n_channels if M is None else M
    if M != spikes.n_channels:
        raise DimensionError(f"spike set has {spikes.n_channels} channels, expected {M}")
    if spikes.period != spec.period_T:
        raise DimensionError("spike period differs from the grid period")
    K = len(spikes)
    bk = np.zeros((K, M, spec.grid_len))
    norms = np.empty(K)
    times = np.empty(K)
    intervals = np.empty((K, 2))
    channels = np.empty(K, dtype=int)
    k = 0
    for i, train in enumerate(spikes.trains):
        iv = train.intervals
        if np.any(iv[:, 1] - iv[:, 0] <= 0):
            raise PreconditionError(f"overlapping intervals in channel {i}")
        if np.any(iv[:, 1] - iv[:, 0] < spec.dt):
            raise PreconditionError("interval shorter than one grid step; raise rate_R")
        for j, (a, b) in enumerate(iv):
            bk[k, i], norms[k] = interval_band_kernel(a, b, alpha, spec)
            times[k] = b
            intervals[k] = (a, b)
            channels[k] = i
            k += 1
    return KernelFamily(
        spec=spec,
        band_kernels=bk,
        norms=norms,
        orthogonal=True,
        index_map=spikes.index_map,
        scheme="multichannel_tem",
        bandlimited=False,
        times=times,
        intervals=intervals,
        channels=channels,
    )


def _channel_rows(family: KernelFamily) -> np.ndarray:
    """Scalar bandlimited kernel of each entry, taken from its own channel."""
    return family.band_kernels[np.arange(len(family)), family.channels]


def mc_gram_entry(k: int, k2: int, family: KernelFamily, mix: MixingMatrix,
                  normalized: bool = True) -> float:
    """
    ``<P_A h_k2, h_k>`` as the product of the scalar cross-correlation of the
    two channel kernels and the projector entry ``p_{i i'}``.
    """
    i, i2 = family.channels[k], family.channels[k2]
    p = mix.P[i, i2]
    if p == 0.0:
        return 0.0
    a = family.band_kernels[k, i]
    b = family.band_kernels[k2, i2]
    val = family.spec.dt * np.dot(a, b) * p
    if normalized:
        val /= family.norms[k] * family.norms[k2]
    return float(val)


def mc_gram(family: KernelFamily, mix: MixingMatrix, normalized: bool = True) -> np.ndarray:
    """Full Gram matrix from one scalar correlation block scaled by ``P``."""
    rows = _channel_rows(family)
    scalar = family.spec.dt * rows @ rows.T
    g = scalar * mix.P[np.ix_(family.channels, family.channels)]
    if normalized:
        g = g / np.outer(family.norms, family.norms)
    return g


def synthesize_output(c, family: KernelFamily, mix: MixingMatrix,
                      normalized: bool = True) -> tuple:
    """
    Mixed-signal and source estimates from a coefficient vector.

    Each channel's coefficients form the bandlimited signal
    ``c^i = sum_j c_ij P_B h^i_j`` (normalized kernels by default), and

        x^ = sum_i c^i P e_i,        y^ = sum_i c^i A^+ e_i.

    Returns ``(x_hat, y_hat)``.
    """
    c = np.asarray(c, dtype=float)
    if c.shape != (len(family),):
        raise DimensionError(f"expected {len(family)} coefficients, got {c.shape}")
    w = c / family.norms if normalized else c
    M = family.n_channels
    if M != mix.shape[0]:
        raise DimensionError("family and mixing matrix disagree on channel count")
    rows = _channel_rows(family)
    per_channel = np.zeros((M, family.spec.grid_len))
    np.add.at(per_channel, family.channels, w[:, None] * rows)
    x_hat = mix.P @ per_channel
    y_hat = mix.A_pinv @ per_channel
    return MultiSignal(family.spec, x_hat), MultiSignal(family.spec, y_hat)


# ---------------------------------------------------------------------------
# text formats

def write_matrix(path, A) -> None:
    A = A.A if isinstance(A, MixingMatrix) else np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w") as fh:
        fh.write(f"matrix,{A.shape[0]},{A.shape[1]}\n")
        for row in A:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_matrix(path) -> np.ndarray:
    with open(path) as fh:
        head = fh.readline().strip().split(",")
        if head[0] != "matrix":
            raise DimensionError("not a matrix file")
        r, c = int(head[1]), int(head[2])
        rows = [line.strip().split(",") for line in fh if line.strip()]
    m = np.array(rows, dtype=float)
    if m.shape != (r, c):
        raise DimensionError(f"header announces {r}x{c}, found {m.shape}")
    return m


def write_spike_set(path, spikes: ChannelSpikeSet, spec: GridSpec) -> None:
    """Header ``multichannel_tem,T,R,count`` then ``channel,time,sample`` rows."""
    with open(path, "w") as fh:
        fh.write(f"multichannel_tem,{spec.period_T},{spec.rate_R},{len(spikes)}\n")
        for i, train in enumerate(spikes.trains):
            for t, s in zip(train.times, train.samples):
                fh.write(f"{i},{t:.17g},{s:.17g}\n")


def read_spike_set(path) -> tuple:
    """Returns ``(spikes, spec)``."""
    with open(path) as fh:
        head = fh.readline().strip().split(",")
        T, R, count = int(head[1]), int(head[2]), int(head[3])
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if len(rows) != count:
        raise DimensionError(f"header announces {count} rows, found {len(rows)}")
    arr = np.array(rows, dtype=float).reshape(count, 3)
    ch = arr[:, 0].astype(int)
    trains = tuple(SpikeTrain(arr[ch == i, 1], arr[ch == i, 2], T) for i in range(ch.max() + 1))
    return ChannelSpikeSet(trains), GridSpec(T, R)
