"""
Serial and parallel POCS iterations over sample hyperplanes.

Each sample defines the affine hyperplane ``S_k = {v in A : <v, h_k> = s_k}``
of the reconstruction subspace ``A``.  Its orthogonal projection is

    P_k u = u~ + (s_k - <u~, h_k>) / ||h~_k||^2 * h~_k,    u~ = P_A u,

and relaxed projections ``u + lam (P_k u - u)`` keep reducing the distance to
any signal inside the hyperplane while ``0 < lam < 2``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DegenerateHyperplaneError, DimensionError, PreconditionError
from .samplers import KernelFamily, SampleRecord
from .signal_space import GridSpec, MultiSignal, SignalSpace, as_multi, bandlimited_space, project_B

__all__ = [
    "ControlSequence",
    "RelaxationSchedule",
    "IterationTrace",
    "project_k",
    "relax",
    "parallel_step",
    "greedy_index",
    "run_serial",
    "interpolation_estimate",
]

log = logging.getLogger(__name__)

DEGENERATE_NORM = 1e-12


def _default_space(family: KernelFamily, space: Optional[SignalSpace]) -> SignalSpace:
    if space is None:
        return bandlimited_space(family.spec, family.n_channels)
    return space


def _raw(samples) -> np.ndarray:
    return samples.raw if isinstance(samples, SampleRecord) else np.asarray(samples, dtype=float)


@dataclass(frozen=True)
class ControlSequence:
    """
    Order in which hyperplanes are visited.

    kind : ``cyclic`` (``k = n mod K``), ``almost_cyclic`` (a fixed block
    ``pattern`` repeated, or shuffled blocks when ``pattern`` is None),
    ``random`` (i.i.d. uniform) or ``greedy`` (most remote hyperplane).
    """

    kind: str = "cyclic"
    pattern: Optional[tuple] = None
    seed: Optional[int] = None
    horizon: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("cyclic", "almost_cyclic", "random", "greedy"):
            raise ConfigError(f"unknown control kind {self.kind!r}")

    def stream(self, n_sets: int):
        """Yield indices forever (greedy yields None: the driver picks)."""
        if self.kind == "cyclic":
            n = 0
            while True:
                yield n % n_sets
                n += 1
        elif self.kind == "almost_cyclic":
            if self.pattern is not None:
                block = list(self.pattern)
                if sorted(set(block)) != list(range(n_sets)):
                    raise ConfigError("almost-cyclic pattern must cover every index")
                while True:
                    yield from block
            rng = np.random.default_rng(self.seed)
            while True:
                yield from rng.permutation(n_sets).tolist()
        elif self.kind == "random":
            rng = np.random.default_rng(self.seed)
            while True:
                yield int(rng.integers(n_sets))
        else:
            while True:
                yield None


@dataclass(frozen=True)
class RelaxationSchedule:
    """
    Relaxation coefficients ``lambda^(n)``.

    ``constant`` uses ``values[0]``; ``alternating`` uses ``values[0]`` on
    even steps and ``values[1]`` on odd steps; ``per_index`` uses
    ``values[k]`` for hyperplane ``k``.  Guarded schedules keep every
    coefficient in ``[epsilon, 2 - epsilon]``.
    """

    kind: str = "constant"
    values: tuple = (1.0,)
    epsilon_guard: float = 1e-3
    guarded: bool = True

    def __post_init__(self):
        if self.kind not in ("constant", "alternating", "per_index"):
            raise ConfigError(f"unknown relaxation kind {self.kind!r}")
        if not 0 < self.epsilon_guard <= 1:
            raise ConfigError("epsilon_guard must lie in (0, 1]")
        need = {"constant": 1, "alternating": 2}.get(self.kind)
        if need is not None and len(self.values) != need:
            raise ConfigError(f"{self.kind} schedule takes {need} value(s)")
        if self.guarded:
            for v in self.values:
                if not self.epsilon_guard <= v <= 2 - self.epsilon_guard:
                    raise ConfigError(
                        f"lambda={v} outside [{self.epsilon_guard}, {2 - self.epsilon_guard}]; "
                        "mark the schedule unguarded to allow it")

    def at(self, n: int, k: int) -> float:
        if self.kind == "constant":
            return self.values[0]
        if self.kind == "alternating":
            return self.values[n % 2]
        return self.values[k]

    @property
    def within_open_interval(self) -> bool:
        return all(0 < v < 2 for v in self.values)


@dataclass
class IterationTrace:
    """
    Logged state of an iteration.

    ``rows`` hold ``(iter, rel_mse, max_residual, k, lambda)``; ``rel_mse`` is
    NaN when no ground truth was supplied and ``k`` is -1 for parallel steps.
    """

    rows: list = field(default_factory=list)
    estimate: Optional[MultiSignal] = None
    config: dict = field(default_factory=dict)
    state: object = None
    debug_synthesis: bool = False

    def log(self, it, rel_mse, max_residual, k, lam):
        self.rows.append((int(it), float(rel_mse), float(max_residual), int(k), float(lam)))

    @property
    def iterations(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows], dtype=int)

    @property
    def rel_mse(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    @property
    def max_residual(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])

    def is_monotone(self, slack: float = 1e-12) -> bool:
        e = self.rel_mse
        return bool(np.all(np.diff(e) <= slack))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            for key, val in self.config.items():
                fh.write(f"# {key}={val}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "rel_mse", "max_residual", "k", "lambda"])
            for it, e, r, k, lam in self.rows:
                w.writerow([it, repr(e), repr(r), k, repr(lam)])


class _Hyperplanes:
    """Projected kernels of a family inside a space, flattened for fast updates."""

    def __init__(self, family: KernelFamily, space: SignalSpace, samples):
        if family.spec != space.spec or family.n_channels != space.n_channels:
            raise DimensionError("family and space disagree on grid or channel count")
        self.shape = (family.n_channels, family.spec.grid_len)
        self.dt = family.spec.dt
        self.raw = family.band_kernels.reshape(len(family), -1)
        self.proj = family.projected(space).reshape(len(family), -1)
        self.norm2 = self.dt * np.einsum("kl,kl->k", self.proj, self.proj)
        self.s = _raw(samples)
        if self.s.shape != (len(family),):
            raise DimensionError(f"expected {len(family)} samples, got {self.s.shape}")
        self.degenerate = self.norm2 <= DEGENERATE_NORM ** 2 * np.maximum(
            1.0, self.dt * np.einsum("kl,kl->k", self.raw, self.raw))

    def residuals(self, u: np.ndarray) -> np.ndarray:
        return self.s - self.dt * (self.raw @ u)


def project_k(u, family: KernelFamily, k: int, s_k: float,
              space: Optional[SignalSpace] = None) -> MultiSignal:
    """Orthogonal projection of ``u`` onto the hyperplane ``{v in A : <v, h_k> = s_k}``."""
    space = _default_space(family, space)
    u = space.project(as_multi(u))
    hk = family.projected(space)[k]
    n2 = family.spec.dt * np.vdot(hk, hk)
    if n2 <= DEGENERATE_NORM ** 2:
        raise DegenerateHyperplaneError(f"kernel {k} is orthogonal to the subspace")
    # <u~, h_k> = <u~, P_B h_k> since u~ is bandlimited
    resid = s_k - family.spec.dt * np.vdot(family.band_kernels[k], u.values)
    return MultiSignal(u.spec, u.values + (resid / n2) * hk)


def relax(P_u, u, lam: float):
    """``u + lam (P_u - u)``."""
    P_u, u = as_multi(P_u), as_multi(u)
    if lam == 1:
        return P_u
    if lam == 0:
        return u
    return MultiSignal(u.spec, u.values + lam * (P_u.values - u.values))


def parallel_step(u, family: KernelFamily, samples, K: Sequence[int], mu,
                  space: Optional[SignalSpace] = None, guard: Optional[float] = None) -> MultiSignal:
    """
    ``u + sum_{k in K} mu_k (P_k u - u)``.

    With ``guard`` set, coefficients must be positive and sum to at most
    ``2 - guard``.
    """
    K = list(K)
    if not K:
        raise PreconditionError("empty index set")
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (len(K),))
    if guard is not None and (np.any(mu <= 0) or mu.sum() > 2 - guard):
        raise PreconditionError("guarded parallel step needs mu_k > 0 and sum(mu) <= 2 - eps")
    s = _raw(samples)
    u = as_multi(u)
    acc = u.values.copy()
    for k, m in zip(K, mu):
        acc += m * (project_k(u, family, k, s[k], space).values - u.values)
    return MultiSignal(u.spec, acc)


def greedy_index(u, family: KernelFamily, samples, space: Optional[SignalSpace] = None) -> int:
    """Index of the most remote hyperplane, ``argmax |s_k - <u, h_k>| / ||h~_k||`` (lowest on ties)."""
    space = _default_space(family, space)
    hp = _Hyperplanes(family, space, samples)
    u = space.project(as_multi(u)).values.ravel()
    with np.errstate(divide="ignore", invalid="ignore"):
        disp = np.abs(hp.residuals(u)) / np.sqrt(hp.norm2)
    disp[hp.degenerate] = -np.inf
    return int(np.argmax(disp))


def run_serial(x0, family: KernelFamily, samples, control: ControlSequence = ControlSequence(),
               schedule: RelaxationSchedule = RelaxationSchedule(), n_iter: int = 1,
               truth=None, space: Optional[SignalSpace] = None,
               log_every: Optional[int] = None) -> IterationTrace:
    """
    Iterate ``u <- u + lam^(n) (P_{k^(n)} u - u)`` for ``n_iter`` steps.

    Rows are logged every ``log_every`` steps (default: once per cycle of
    ``len(family)`` steps) and after the last step.  Degenerate hyperplanes
    are skipped with a warning.
    """
    if n_iter < 1:
        raise PreconditionError("n_iter must be >= 1")
    space = _default_space(family, space)
    hp = _Hyperplanes(family, space, samples)
    for k in np.nonzero(hp.degenerate)[0]:
        log.warning("skipping degenerate hyperplane %d (kernel orthogonal to subspace)", k)
    n_sets = len(family)
    every = n_sets if log_every is None else log_every
    u = space.project(as_multi(x0)).values.ravel().copy()
    xt = None
    if truth is not None:
        xt = as_multi(truth).values.ravel()
        x2 = hp.dt * np.dot(xt, xt)

    trace = IterationTrace(config={
        "scheme": family.scheme, "control": control.kind, "relaxation": schedule.kind,
        "lambda": ",".join(f"{v:g}" for v in schedule.values), "n_iter": n_iter,
    })

    def record(n, k, lam):
        e = np.nan if xt is None else hp.dt * np.dot(u - xt, u - xt) / x2
        trace.log(n, e, np.abs(hp.residuals(u)).max(), k, lam)

    record(0, -1, np.nan)
    stream = control.stream(n_sets)
    proj, raw, s, n2, dt = hp.proj, hp.raw, hp.s, hp.norm2, hp.dt
    k = -1
    lam = np.nan
    for n in range(n_iter):
        k = next(stream)
        if k is None:
            with np.errstate(divide="ignore", invalid="ignore"):
                disp = np.abs(hp.residuals(u)) / np.sqrt(n2)
            disp[hp.degenerate] = -np.inf
            k = int(np.argmax(disp))
        lam = schedule.at(n, k)
        if hp.degenerate[k] or lam == 0:
            pass
        else:
            r = s[k] - dt * np.dot(raw[k], u)
            u += (lam * r / n2[k]) * proj[k]
        if (n + 1) % every == 0 or n + 1 == n_iter:
            record(n + 1, k, lam)
    trace.estimate = MultiSignal(family.spec, u.reshape(hp.shape))
    return trace


def interpolation_estimate(times, values, spec: GridSpec) -> MultiSignal:
    """Bandlimited version of the periodic piecewise-linear interpolation through ``(times, values)``."""
    T = spec.period_T
    order = np.argsort(times)
    t = np.asarray(times, dtype=float)[order]
    v = np.asarray(values, dtype=float)[order]
    lin = np.interp(spec.times, t, v, period=T)
    return as_multi(project_B(MultiSignal(spec, lin)))
