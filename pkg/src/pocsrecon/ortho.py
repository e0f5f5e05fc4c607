"""
Reconstruction engine for families of mutually orthogonal kernels.

When the kernels ``h_k`` are orthogonal, the intersection ``C_s`` of all
sample hyperplanes (taken in the full L2 space) has the closed-form
projection ``u + sum_k (s_k - <u, h_k>) h_k / ||h_k||^2``.  Alternating it
with the projection onto the subspace ``A`` gives the iteration

    u <- u + S^*(s^ - S u)                                   (normalized)

whose iterates are all of the form ``u0 + S^* c``.  The coefficient vector
follows a pure discrete-time recursion driven by the Gram matrix
``G = S S^*``, so the signal only has to be synthesized once at the end.

The unnormalized operators ``S u = (<u, h_k>)`` and ``S^* c = sum c_k h~_k``
are used internally; the normalized ones differ by the diagonal ``H`` of
kernel norms.  Relaxation and the multiplierless (power-of-two) variant
only change how the update vector ``b`` is formed from the residual ``r``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import (
    DegenerateSamplingError,
    DimensionError,
    DivergenceError,
    PreconditionError,
)
from .pocs import IterationTrace, RelaxationSchedule
from .samplers import KernelFamily, SampleRecord
from .signal_space import MultiSignal, SignalSpace, as_multi, bandlimited_space

__all__ = [
    "SamplingOperator",
    "GramMatrix",
    "DiscreteState",
    "apply_S",
    "apply_S_star",
    "gram",
    "papcs_step",
    "run_discrete",
    "rho",
    "multiplierless_update",
    "PseudoInverse",
    "pseudo_inverse",
    "pinv_solve",
    "write_gram",
    "read_gram",
]

log = logging.getLogger(__name__)

PINV_RTOL = 1e-10
WATCHDOG_CYCLES = 50


@dataclass(frozen=True, eq=False)
class SamplingOperator:
    """
    Sampling operator of an orthogonal family restricted to a subspace.

    Attributes
    ----------
    family : KernelFamily
        Must be orthogonal.
    space : SignalSpace
        Reconstruction subspace (defaults to the bandlimited space).
    normalized : bool
        Use the unit-norm kernels ``h_k / ||h_k||``.
    """

    family: KernelFamily
    space: Optional[SignalSpace] = None
    normalized: bool = True

    def __post_init__(self):
        if not self.family.orthogonal:
            raise PreconditionError(
                "closed-form projection onto C_s requires mutually orthogonal kernels")
        if self.space is None:
            object.__setattr__(self, "space",
                               bandlimited_space(self.family.spec, self.family.n_channels))
        if self.space.spec != self.family.spec or self.space.n_channels != self.family.n_channels:
            raise DimensionError("family and space disagree on grid or channel count")

    def __len__(self):
        return len(self.family)

    @property
    def spec(self):
        return self.family.spec

    @property
    def norms(self) -> np.ndarray:
        return self.family.norms

    @property
    def scale(self) -> np.ndarray:
        """Per-kernel factor applied to the raw kernels (1 or ``1/||h_k||``)."""
        return 1.0 / self.norms if self.normalized else np.ones(len(self))

    @property
    def projected_kernels(self) -> np.ndarray:
        """``P_A h_k`` as an array ``(K, M, L)`` (unnormalized)."""
        return self.family.projected(self.space)

    def with_space(self, space: SignalSpace) -> "SamplingOperator":
        return replace(self, space=space)

    def with_normalization(self, normalized: bool) -> "SamplingOperator":
        return replace(self, normalized=normalized)


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """
    ``[<h~_k', h_k>]`` with ``h~ = P_A h`` (normalized: divided by both norms).

    ``diag_norms`` holds ``||h_k||^2``.
    """

    matrix: np.ndarray
    normalized: bool
    diag_norms: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError("Gram matrix must be square")
        scale = max(np.abs(m).max(initial=0.0), 1.0)
        if np.abs(m - m.T).max(initial=0.0) > 1e-12 * scale:
            raise PreconditionError("Gram matrix is not symmetric")
        m.setflags(write=False)
        d = np.array(self.diag_norms, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "diag_norms", d)

    def __len__(self):
        return self.matrix.shape[0]

    def as_normalized(self) -> "GramMatrix":
        if self.normalized:
            return self
        h = np.sqrt(self.diag_norms)
        return GramMatrix(self.matrix / np.outer(h, h), True, self.diag_norms)

    def as_unnormalized(self) -> "GramMatrix":
        if not self.normalized:
            return self
        h = np.sqrt(self.diag_norms)
        return GramMatrix(self.matrix * np.outer(h, h), False, self.diag_norms)

    @property
    def spectral_norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


@dataclass(frozen=True)
class DiscreteState:
    """Coefficients ``c``, residual ``r``, last update ``b`` and step counter ``n``."""

    c: np.ndarray
    r: np.ndarray
    b: np.ndarray
    n: int = 0


def _u_values(op: SamplingOperator, u) -> np.ndarray:
    u = as_multi(u)
    if u.spec != op.spec or u.n_channels != op.family.n_channels:
        raise DimensionError("signal does not match the sampling operator")
    return u.values


def apply_S(op: SamplingOperator, u) -> np.ndarray:
    """``(<P_A u, h_k>)_k`` (divided by ``||h_k||`` when normalized)."""
    v = op.space.project_array(_u_values(op, u))
    # <P_A u, h_k> = <P_A u, P_B h_k> because P_A u is bandlimited
    s = op.spec.dt * np.einsum("kml,ml->k", op.family.band_kernels, v)
    return s * op.scale


def apply_S_star(op: SamplingOperator, c) -> MultiSignal:
    """``sum_k c_k P_A h_k`` (with normalized kernels when ``op.normalized``)."""
    c = np.asarray(c, dtype=float)
    if c.shape != (len(op),):
        raise DimensionError(f"expected {len(op)} coefficients, got {c.shape}")
    vals = np.einsum("k,kml->ml", c * op.scale, op.projected_kernels)
    return MultiSignal(op.spec, vals)


def gram(op: SamplingOperator) -> GramMatrix:
    """Gram matrix ``S S^*`` of the operator."""
    K = len(op)
    proj = op.projected_kernels.reshape(K, -1)
    raw = op.family.band_kernels.reshape(K, -1)
    g = op.spec.dt * raw @ proj.T
    g = 0.5 * (g + g.T)
    norms2 = op.norms ** 2
    G = GramMatrix(g, False, norms2)
    return G.as_normalized() if op.normalized else G


def papcs_step(u, op: SamplingOperator, s_hat) -> MultiSignal:
    """One parallel update ``u + S^*(s^ - S u)`` with normalized operators."""
    op = op.with_normalization(True)
    s_hat = np.asarray(s_hat, dtype=float)
    if s_hat.shape != (len(op),):
        raise DimensionError(f"expected {len(op)} samples, got {s_hat.shape}")
    u = as_multi(u)
    corr = apply_S_star(op, s_hat - apply_S(op, u))
    return MultiSignal(u.spec, u.values + corr.values)


# ---------------------------------------------------------------------------
# power-of-two quantization

def rho(r):
    """
    Signed largest power of two not exceeding ``|r|`` in magnitude; ``rho(0) = 0``.

    Obtained from the binary exponent alone (``frexp``/``ldexp``), so no
    multiplication is involved.
    """
    a = np.asarray(r, dtype=float)
    if np.any(np.isnan(a)) or np.any(np.isinf(a)):
        raise PreconditionError("rho needs finite input")
    mant, expo = np.frexp(a)
    mag = np.ldexp(1.0, expo - 1)
    out = np.where(mant > 0, mag, np.where(mant < 0, -mag, 0.0))
    return float(out) if np.ndim(r) == 0 else out


def _exponents(a: np.ndarray) -> tuple:
    """Sign and exponent with ``rho(a) = sign * 2**e`` (sign 0 for a == 0)."""
    mant, expo = np.frexp(a)
    return np.sign(mant).astype(int), expo - 1


def _is_power_of_two(b: np.ndarray) -> np.ndarray:
    mant, _ = np.frexp(b)
    return (b == 0) | (np.abs(mant) == 0.5)


def _shift_add_product(G: np.ndarray, sign: np.ndarray, expo: np.ndarray) -> np.ndarray:
    """``G @ b`` for ``b_k = sign_k 2**expo_k`` using exponent shifts, negation and sums only."""
    nz = sign != 0
    cols = np.ldexp(G[:, nz], expo[nz][None, :])
    cols = np.where(sign[nz][None, :] > 0, cols, -cols)
    return cols.sum(axis=1)


def multiplierless_update(state: DiscreteState, diag_rho_norms, gram_matrix) -> DiscreteState:
    """
    One step with ``b_k = rho(r_k) / rho(||h_k||^2)``, then ``c += b``, ``r -= G b``.

    Parameters
    ----------
    state : DiscreteState
    diag_rho_norms : array
        ``rho(||h_k||^2)``, precomputed once.
    gram_matrix : GramMatrix or ndarray
        Unnormalized Gram ``S S^*``.
    """
    G = gram_matrix.matrix if isinstance(gram_matrix, GramMatrix) else np.asarray(gram_matrix)
    if isinstance(gram_matrix, GramMatrix) and gram_matrix.normalized:
        raise PreconditionError("multiplierless update runs on the unnormalized Gram")
    dn = np.asarray(diag_rho_norms, dtype=float)
    if not np.all(_is_power_of_two(dn)) or np.any(dn == 0):
        raise PreconditionError("diag_rho_norms must be nonzero powers of two")
    sr, er = _exponents(np.asarray(state.r, dtype=float))
    _, eh = _exponents(dn)
    # quotient of two powers of two: subtract exponents
    eb = er - eh
    b = np.where(sr != 0, np.ldexp(sr.astype(float), eb), 0.0)
    assert np.all(_is_power_of_two(b)), "b left the signed power-of-two set"
    r = state.r - _shift_add_product(G, sr, eb)
    return DiscreteState(state.c + b, r, b, state.n + 1)


# ---------------------------------------------------------------------------
# discrete-time iteration

def _mode_parts(mode):
    if isinstance(mode, RelaxationSchedule):
        return "relaxed", mode
    if isinstance(mode, tuple) and mode[0] == "relaxed":
        return "relaxed", mode[1]
    if mode in ("plain", "multiplierless"):
        return mode, None
    raise PreconditionError(f"unknown mode {mode!r}")


def run_discrete(op: SamplingOperator, record, u0, n: int, mode="plain", truth=None,
                 measure_space: Optional[SignalSpace] = None, debug: bool = False,
                 tol: Optional[float] = None, log_every: int = 1,
                 watchdog="auto") -> tuple:
    """
    Iterate the coefficient recursion and synthesize ``u0 + S^* c`` once.

    Parameters
    ----------
    op : SamplingOperator
    record : SampleRecord or array
        Raw (unnormalized) samples ``s_k``.
    u0 : signal in the space of ``op``.
    n : int
        Number of steps.
    mode : ``"plain"``, ``"multiplierless"``, a ``RelaxationSchedule`` or
        ``("relaxed", schedule)``.  Relaxed coefficients are indexed by step
        (``alternating``/``constant``) or by kernel (``per_index``).
    truth : signal, optional
        Enables the relative-MSE column, computed from vectors only:
        ``||u0 - x||^2 + 2 c.S(u0 - x) + c.G c``.
    measure_space : SignalSpace, optional
        Space onto which the estimate is projected before measuring the
        error.  Defaults to the operator's space.
    debug : bool
        Check the residual identity ``r = s - S u0 - G c`` every step and
        cross-check the MSE against an explicitly synthesized signal.
    tol : float, optional
        Stop early once ``||r|| <= tol ||s||``.
    watchdog : int, None or "auto"
        Abort when the error (or residual norm without truth) rises for
        this many consecutive steps.  ``"auto"`` arms it with 50 steps for
        the multiplierless mode only, whose implied relaxation is not
        guaranteed to stay inside (0, 2); noisy samples can make the error
        rise legitimately in the other modes.

    Returns
    -------
    (MultiSignal, IterationTrace)
    """
    if n < 0:
        raise PreconditionError("n must be non-negative")
    kind, schedule = _mode_parts(mode)
    if watchdog == "auto":
        watchdog = WATCHDOG_CYCLES if kind == "multiplierless" else None
    opu = op.with_normalization(False)
    s = record.raw if isinstance(record, SampleRecord) else np.asarray(record, dtype=float)
    if s.shape != (len(op),):
        raise DimensionError(f"expected {len(op)} samples, got {s.shape}")
    spec = op.spec
    u0v = op.space.project_array(_u_values(op, u0))
    G = gram(opu).matrix
    h2 = opu.norms ** 2
    rho_h2 = rho(h2)
    Su0 = apply_S(opu, MultiSignal(spec, u0v))
    r0 = s - Su0
    c = np.zeros(len(op))
    r = r0.copy()
    state = DiscreteState(c, r, np.zeros(len(op)), 0)

    err = None
    if truth is not None:
        mspace = op.space if measure_space is None else measure_space
        xv = _u_values(op, truth)
        om = opu.with_space(mspace)
        Gm = G if mspace is op.space else gram(om).matrix
        u0m = mspace.project_array(u0v)
        d0 = u0m - xv
        e0 = spec.dt * np.vdot(d0, d0)
        cross = apply_S(opu, MultiSignal(spec, d0))
        x2 = spec.dt * np.vdot(xv, xv)

        def err(c):
            # cancellation can leave a tiny negative value at the rounding floor
            return max(float(e0 + 2 * c @ cross + c @ Gm @ c) / x2, 0.0)

    trace = IterationTrace(config={
        "scheme": op.family.scheme, "mode": kind, "n": n, "normalized": op.normalized,
        "lambda": "" if schedule is None else ",".join(f"{v:g}" for v in schedule.values),
    }, debug_synthesis=debug)
    s_norm = np.linalg.norm(s)

    def record_row(st, lam):
        e = np.nan if err is None else err(st.c)
        trace.log(st.n, e, np.abs(st.r).max(initial=0.0), -1, lam)
        return e

    prev = record_row(state, np.nan)
    prev_r = np.linalg.norm(r)
    rising = 0
    for it in range(n):
        if kind == "multiplierless":
            state = multiplierless_update(state, rho_h2, G)
            lam = np.nan
        else:
            if kind == "plain":
                lam_vec = np.ones(len(op))
            elif schedule.kind == "per_index":
                lam_vec = np.asarray(schedule.values, dtype=float)
            else:
                lam_vec = np.full(len(op), schedule.at(it, 0))
            b = lam_vec * state.r / h2
            state = DiscreteState(state.c + b, state.r - G @ b, b, state.n + 1)
            lam = float(lam_vec[0]) if np.all(lam_vec == lam_vec[0]) else np.nan
        if not (np.all(np.isfinite(state.c)) and np.all(np.isfinite(state.r))):
            raise DivergenceError(
                f"non-finite coefficients at step {state.n}; the Gram matrix is badly scaled")
        if debug:
            expect = r0 - G @ state.c
            if np.linalg.norm(state.r - expect) > 1e-9 * max(np.linalg.norm(r0), 1e-300):
                raise AssertionError(f"residual identity violated at step {state.n}")
        last = it + 1 == n
        stop = tol is not None and np.linalg.norm(state.r) <= tol * s_norm
        e = None
        if err is not None:
            e = err(state.c)
            if debug:
                u_dbg = mspace.project_array(u0v + apply_S_star(opu, state.c).values)
                e_dbg = spec.dt * np.vdot(u_dbg - xv, u_dbg - xv) / x2
                if abs(e_dbg - e) > 1e-9 * max(e_dbg, 1e-300) + 1e-13:
                    raise AssertionError(f"vector-space MSE {e} disagrees with synthesized {e_dbg}")
        if (state.n % log_every == 0) or last or stop:
            record_row(state, lam)
        if watchdog is not None:
            cur = e if e is not None else np.linalg.norm(state.r)
            ref = prev if e is not None else prev_r
            rising = rising + 1 if cur > ref else 0
            if e is not None:
                prev = e
            else:
                prev_r = cur
            if rising >= watchdog:
                raise DivergenceError(f"error rose for {watchdog} consecutive steps (step {state.n})")
        if stop:
            break
    trace.state = state
    estimate = MultiSignal(spec, u0v + apply_S_star(opu, state.c).values)
    trace.estimate = estimate
    return estimate, trace


# ---------------------------------------------------------------------------
# pseudo-inverse oracle

@dataclass(frozen=True, eq=False)
class PseudoInverse:
    """
    Dense SVD of the normalized operator written over an orthonormal basis of ``A``.

    ``matrix[k, d] = <e_d, h^_k>``; ``pinv`` is its thresholded pseudo-inverse.
    """

    basis: np.ndarray
    matrix: np.ndarray
    pinv: np.ndarray
    singular_values: np.ndarray
    rank: int
    u_range: np.ndarray

    @property
    def norm(self) -> float:
        """Operator norm of the pseudo-inverse (``1 / smallest kept singular value``)."""
        return float(1.0 / self.singular_values[self.rank - 1])

    def coefficients_to_signal(self, coef, spec) -> MultiSignal:
        return MultiSignal(spec, np.einsum("d,dml->ml", coef, self.basis))

    def project_range(self, v) -> np.ndarray:
        """Orthogonal projection of a sample vector onto ``ran(S)``."""
        return self.u_range @ (self.u_range.T @ np.asarray(v, dtype=float))


def pseudo_inverse(op: SamplingOperator, rtol: float = PINV_RTOL) -> PseudoInverse:
    """Materialize the normalized operator over the basis of its space and take its SVD."""
    op = op.with_normalization(True)
    basis = op.space.basis
    dim = basis.shape[0]
    raw = op.family.band_kernels.reshape(len(op), -1)
    mat = op.spec.dt * (raw @ basis.reshape(dim, -1).T) * op.scale[:, None]
    U, sv, Vt = np.linalg.svd(mat, full_matrices=False)
    if sv.size == 0 or sv[0] == 0:
        raise DegenerateSamplingError("sampling operator is identically zero on the space")
    keep = sv > rtol * sv[0]
    rank = int(keep.sum())
    if rank < 1:
        raise DegenerateSamplingError("rank collapsed below 1")
    pinv = (Vt[:rank].T / sv[:rank]) @ U[:, :rank].T
    return PseudoInverse(basis, mat, pinv, sv, rank, U[:, :rank])


def pinv_solve(op: SamplingOperator, s_hat, u0=None, rtol: float = PINV_RTOL,
               factor: Optional[PseudoInverse] = None) -> MultiSignal:
    """
    Minimum-norm least-squares solution ``S^+ s^`` (normalized samples).

    With ``u0`` given, returns ``u0 + S^+(s^ - S u0)``, the point of the
    least-squares set closest to ``u0``.
    """
    op = op.with_normalization(True)
    s_hat = np.asarray(s_hat, dtype=float)
    if s_hat.shape != (len(op),):
        raise DimensionError(f"expected {len(op)} samples, got {s_hat.shape}")
    pi = pseudo_inverse(op, rtol) if factor is None else factor
    if u0 is None:
        return pi.coefficients_to_signal(pi.pinv @ s_hat, op.spec)
    u0v = op.space.project_array(_u_values(op, u0))
    corr = pi.coefficients_to_signal(pi.pinv @ (s_hat - apply_S(op, MultiSignal(op.spec, u0v))),
                                     op.spec)
    return MultiSignal(op.spec, u0v + corr.values)


# ---------------------------------------------------------------------------
# text format

def write_gram(path, G: GramMatrix) -> None:
    """Row-major text with header ``gram,normalized,n`` then the diagonal norms line."""
    n = len(G)
    with open(path, "w") as fh:
        fh.write(f"gram,{int(G.normalized)},{n}\n")
        fh.write(",".join(f"{v:.17g}" for v in G.diag_norms) + "\n")
        for row in G.matrix:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_gram(path) -> GramMatrix:
    with open(path) as fh:
        head = fh.readline().strip().split(",")
        if head[0] != "gram":
            raise DimensionError("not a Gram matrix file")
        normalized, n = bool(int(head[1])), int(head[2])
        diag = np.array(fh.readline().strip().split(","), dtype=float)
        rows = [line.strip().split(",") for line in fh if line.strip()]
    m = np.array(rows, dtype=float)
    if m.shape != (n, n) or diag.shape != (n,):
        raise DimensionError(f"header announces n={n}, found {m.shape}")
    return GramMatrix(m, normalized, diag)
