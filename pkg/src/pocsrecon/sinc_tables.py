"""
Lookup-table assembly of sinc-filtered interval correlations.

For indicator kernels on the real line and ideal lowpass filtering with
``sinc(t) = sin(pi t) / (pi t)``,

    <sinc * 1_[c,d], 1_[a,b]> = f(b - c) - f(a - c) - f(b - d) + f(a - d)

where ``f`` is the second antiderivative of ``sinc`` vanishing with its
slope at 0,

    f(t) = int_0^t (t - tau) sinc(tau) dtau = t psi(t) - (1 - cos(pi t)) / pi^2,
    psi(t) = int_0^t sinc = Si(pi t) / pi.

``psi`` is odd, so ``f`` is even.  One table of ``f`` therefore serves
every entry with four lookups.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import sici

from .errors import DimensionError, PreconditionError, TableRangeError

__all__ = [
    "psi",
    "f_exact",
    "LookupTable",
    "build_table",
    "f_eval",
    "gram_entry_f",
    "table_gram",
    "write_table",
    "read_table",
]

MAX_STEP = 1.0 / 64


def psi(t):
    """``int_0^t sinc(s) ds`` (odd, tends to 1/2)."""
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise PreconditionError("psi needs finite input")
    si, _ = sici(np.pi * t)
    out = si / np.pi
    return float(out) if out.ndim == 0 else out


def f_exact(t):
    """Closed form of ``int_0^t (t - tau) sinc(tau) dtau``."""
    t = np.asarray(t, dtype=float)
    # (1 - cos x) written as 2 sin^2(x/2) to keep precision near 0
    out = t * psi(t) - 2.0 * np.sin(0.5 * np.pi * t) ** 2 / np.pi ** 2
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class LookupTable:
    """
    Samples of ``f`` on ``[0, t_max]`` with spacing ``step``, read back by
    clamped cubic interpolation; negative arguments use ``f(-t) = f(t)``.
    """

    t_max: float
    step: float
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if self.step <= 0 or self.step > MAX_STEP + 1e-15:
            raise PreconditionError(f"step must lie in (0, {MAX_STEP}]")
        n = int(round(self.t_max / self.step)) + 1
        if v.shape != (n,):
            raise DimensionError(f"expected {n} table values, got {v.shape}")
        if v[0] != 0.0:
            raise PreconditionError("f(0) must be 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    @cached_property
    def _spline(self) -> CubicSpline:
        x = np.arange(len(self.values)) * self.step
        # f'(0) = psi(0) = 0 and f'(t_max) = psi(t_max)
        return CubicSpline(x, self.values, bc_type=((1, 0.0), (1, psi(x[-1]))))

    def __call__(self, t):
        return f_eval(self, t)


def build_table(t_max: float, step: float = MAX_STEP) -> LookupTable:
    """Tabulate ``f`` on ``[0, t_max]`` (``t_max`` is rounded up to a whole step)."""
    if t_max <= 0:
        raise PreconditionError("t_max must be positive")
    n = int(np.ceil(t_max / step - 1e-12))
    x = np.arange(n + 1) * step
    return LookupTable(n * step, step, f_exact(x))


def f_eval(table: LookupTable, t):
    """Interpolated ``f(t)``; raises ``TableRangeError`` beyond ``t_max``."""
    a = np.abs(np.asarray(t, dtype=float))
    if np.any(a > table.t_max * (1 + 1e-12)):
        raise TableRangeError(f"|t| = {a.max():.6g} exceeds the table range {table.t_max:.6g}")
    out = table._spline(a)
    return float(out) if np.ndim(out) == 0 else out


def gram_entry_f(t_end, t_start, u_end, u_start, table):
    """
    ``<sinc * 1_[u_start, u_end], 1_[t_start, t_end]>`` from four lookups.

    Four subtractions form the time differences, and three additions or
    subtractions combine the looked-up values.
    """
    d_ee = t_end - u_end
    d_es = t_end - u_start
    d_se = t_start - u_end
    d_ss = t_start - u_start
    return table(d_es) - table(d_ss) - table(d_ee) + table(d_se)


def table_gram(intervals, table: LookupTable) -> np.ndarray:
    """Unnormalized Gram matrix of indicator kernels over ``intervals`` (shape ``(K, 2)``)."""
    iv = np.asarray(intervals, dtype=float)
    if iv.ndim != 2 or iv.shape[1] != 2:
        raise DimensionError("intervals must have shape (K, 2)")
    s, e = iv[:, 0], iv[:, 1]
    return gram_entry_f(e[:, None], s[:, None], e[None, :], s[None, :], table)


def write_table(path, table: LookupTable) -> None:
    """Header ``ftable,t_max,step,n`` followed by one value per line."""
    with open(path, "w") as fh:
        fh.write(f"ftable,{table.t_max:.17g},{table.step:.17g},{len(table)}\n")
        for v in table.values:
            fh.write(f"{v:.17g}\n")


def read_table(path) -> LookupTable:
    with open(path) as fh:
        head = fh.readline().strip().split(",")
        if head[0] != "ftable":
            raise DimensionError("not an f-table file")
        t_max, step, n = float(head[1]), float(head[2]), int(head[3])
        vals = np.array([line.strip() for line in fh if line.strip()], dtype=float)
    if vals.shape != (n,):
        raise DimensionError(f"header announces {n} values, found {vals.shape}")
    return LookupTable(t_max, step, vals)
