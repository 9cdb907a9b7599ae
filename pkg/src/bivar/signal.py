"""Exact calculus for compactly supported step functions on R and finite signals on Z.

A :class:`StepFunction` is stored as ``breakpoints x_0 < ... < x_n`` and ``values
v_1..v_n`` with ``v_i`` taken on the half-open cell ``[x_{i-1}, x_i)`` and zero
outside ``[x_0, x_n)``.  Every averaging operator in the package reduces to
prefix integrals of these objects, so they are computed exactly (up to the
floating representation of the breakpoints).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "StepFunction",
    "DiscreteSignal",
    "DyadicInterval",
    "prefix_integral",
    "lp_norm",
    "dilate",
    "dyadic_scale",
]


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _fmt(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x!r}")
    return format(float(x), ".17g")


class StepFunction:
    """Compactly supported piecewise-constant function on the real line."""

    __slots__ = ("breakpoints", "values", "_cum")

    def __init__(self, breakpoints: Sequence[float], values: Sequence[float]):
        bp = _frozen(breakpoints).ravel()
        vals = _frozen(values).ravel()
        if bp.size == 0:
            if vals.size:
                raise ValueError("values given without breakpoints")
        elif vals.size != bp.size - 1:
            raise ValueError(
                f"need len(values) == len(breakpoints) - 1, got {vals.size} and {bp.size}"
            )
        if bp.size == 1:
            bp = _frozen([])
        if not np.all(np.isfinite(bp)) or not np.all(np.isfinite(vals)):
            raise ValueError("breakpoints and values must be finite")
        if bp.size and np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        self.breakpoints = bp
        self.values = vals
        cum = np.concatenate(([0.0], np.cumsum(vals * np.diff(bp)))) if bp.size else np.zeros(1)
        cum.setflags(write=False)
        self._cum = cum

    # construction helpers -------------------------------------------------
    @classmethod
    def zero(cls) -> "StepFunction":
        return cls([], [])

    @classmethod
    def indicator(cls, a: float, b: float, height: float = 1.0) -> "StepFunction":
        """``height * chi_[a, b)``."""
        if not b > a:
            raise ValueError("indicator needs b > a")
        return cls([a, b], [height])

    @classmethod
    def from_pieces(cls, pieces: Iterable[tuple[float, float, float]]) -> "StepFunction":
        """Sum of ``c * chi_[a, b)`` over ``(a, b, c)`` triples."""
        out = cls.zero()
        for a, b, c in pieces:
            out = out + cls.indicator(a, b, c)
        return out

    # basic structure ------------------------------------------------------
    @property
    def n_cells(self) -> int:
        return int(self.values.size)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values != 0.0)

    @property
    def support(self) -> tuple[float, float] | None:
        """Hull ``[lo, hi)`` of the nonzero cells, or ``None`` for the zero function."""
        nz = np.flatnonzero(self.values != 0.0)
        if nz.size == 0:
            return None
        return float(self.breakpoints[nz[0]]), float(self.breakpoints[nz[-1] + 1])

    @property
    def cell_lengths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def normalize(self) -> "StepFunction":
        """Canonical form: zero end cells stripped, equal neighbours merged."""
        if self.is_zero:
            return StepFunction.zero()
        bp, vals = self.breakpoints, self.values
        nz = np.flatnonzero(vals != 0.0)
        lo, hi = nz[0], nz[-1]
        bp = bp[lo : hi + 2]
        vals = vals[lo : hi + 1]
        keep = np.concatenate(([True], vals[1:] != vals[:-1]))
        new_vals = vals[keep]
        starts = bp[:-1][keep]
        new_bp = np.concatenate((starts, bp[-1:]))
        return StepFunction(new_bp, new_vals)

    def __eq__(self, other) -> bool:
        if not isinstance(other, StepFunction):
            return NotImplemented
        a, b = self.normalize(), other.normalize()
        return np.array_equal(a.breakpoints, b.breakpoints) and np.array_equal(a.values, b.values)

    def __hash__(self):
        n = self.normalize()
        return hash((n.breakpoints.tobytes(), n.values.tobytes()))

    def __repr__(self) -> str:
        return f"StepFunction(breakpoints={self.breakpoints.tolist()}, values={self.values.tolist()})"

    # evaluation -----------------------------------------------------------
    def __call__(self, x):
        """Point values with the half-open convention (right-continuous)."""
        x = np.asarray(x, dtype=float)
        if self.n_cells == 0:
            return np.zeros_like(x) if x.ndim else 0.0
        k = np.searchsorted(self.breakpoints, x, side="right") - 1
        inside = (k >= 0) & (k < self.n_cells)
        out = np.where(inside, self.values[np.clip(k, 0, self.n_cells - 1)], 0.0)
        return out if out.ndim else float(out)

    def left_limit(self, x):
        """``f(x-)``."""
        x = np.asarray(x, dtype=float)
        if self.n_cells == 0:
            return np.zeros_like(x) if x.ndim else 0.0
        k = np.searchsorted(self.breakpoints, x, side="left") - 1
        inside = (k >= 0) & (k < self.n_cells)
        out = np.where(inside, self.values[np.clip(k, 0, self.n_cells - 1)], 0.0)
        return out if out.ndim else float(out)

    def prefix(self, x):
        """Vectorised ``int_{-inf}^x f``."""
        x = np.asarray(x, dtype=float)
        if self.n_cells == 0:
            return np.zeros_like(x) if x.ndim else 0.0
        bp, cum = self.breakpoints, self._cum
        k = np.searchsorted(bp, x, side="right") - 1
        kc = np.clip(k, 0, self.n_cells - 1)
        partial = cum[kc] + self.values[kc] * (np.clip(x, bp[0], bp[-1]) - bp[kc])
        out = np.where(k < 0, 0.0, np.where(k >= self.n_cells, cum[-1], partial))
        return out if out.ndim else float(out)

    def integral(self) -> float:
        return float(self._cum[-1])

    # algebra --------------------------------------------------------------
    def _on_grid(self, grid: np.ndarray) -> np.ndarray:
        mids = 0.5 * (grid[:-1] + grid[1:])
        return np.asarray(self(mids))

    def __add__(self, other: "StepFunction") -> "StepFunction":
        if not isinstance(other, StepFunction):
            return NotImplemented
        if self.n_cells == 0:
            return other
        if other.n_cells == 0:
            return self
        grid = np.union1d(self.breakpoints, other.breakpoints)
        return StepFunction(grid, self._on_grid(grid) + other._on_grid(grid))

    def __neg__(self) -> "StepFunction":
        return StepFunction(self.breakpoints, -self.values)

    def __sub__(self, other: "StepFunction") -> "StepFunction":
        return self + (-other)

    def __mul__(self, c: float) -> "StepFunction":
        if isinstance(c, StepFunction):
            grid = np.union1d(self.breakpoints, c.breakpoints)
            if grid.size < 2:
                return StepFunction.zero()
            return StepFunction(grid, self._on_grid(grid) * c._on_grid(grid))
        return StepFunction(self.breakpoints, self.values * float(c))

    __rmul__ = __mul__

    def abs(self) -> "StepFunction":
        return StepFunction(self.breakpoints, np.abs(self.values))

    def translate(self, s: float) -> "StepFunction":
        """``x -> f(x - s)``."""
        return StepFunction(self.breakpoints + s, self.values)

    def restrict(self, a: float, b: float) -> "StepFunction":
        """``f * chi_[a, b)``."""
        if self.n_cells == 0 or b <= a:
            return StepFunction.zero()
        return self * StepFunction.indicator(a, b)

    # serialization --------------------------------------------------------
    def to_json(self) -> str:
        bp = ",".join(_fmt(x) for x in self.breakpoints)
        vals = ",".join(_fmt(x) for x in self.values)
        return f'{{"breakpoints":[{bp}],"values":[{vals}]}}'

    @classmethod
    def from_json(cls, text: str) -> "StepFunction":
        d = json.loads(text)
        return cls(d["breakpoints"], d["values"])


def prefix_integral(f: StepFunction, x: float) -> float:
    """``int_{-inf}^x f(y) dy``; exact sum of full cells plus the partial cell."""
    if x == math.inf:
        return f.integral()
    if x == -math.inf:
        return 0.0
    return float(f.prefix(x))


def lp_norm(f: StepFunction, p: float) -> float:
    """``L^p`` norm, ``p`` in ``[1, inf]``."""
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if f.n_cells == 0:
        return 0.0
    a = np.abs(f.values)
    if p == math.inf:
        return float(a.max())
    if p == 1:
        # same summation order as the prefix table, so prefix(+inf) == ||f||_1 for f >= 0
        return float(np.cumsum(a * f.cell_lengths)[-1])
    return float(np.sum(a**p * f.cell_lengths) ** (1.0 / p))


def dilate(f: StepFunction, delta: float, mode: str = "amplitude") -> StepFunction:
    """``x -> f(delta x)`` (``mode="amplitude"``) or ``x -> delta f(delta x)`` (``mode="l1"``)."""
    if not delta > 0:
        raise ValueError(f"dilation factor must be positive, got {delta}")
    if mode not in ("amplitude", "l1"):
        raise ValueError(f"unknown dilation mode {mode!r}")
    vals = f.values * delta if mode == "l1" else f.values
    return StepFunction(f.breakpoints / delta, vals)


def dyadic_scale(x: float) -> float:
    """Largest integer ``j`` with ``x`` a multiple of ``2**j`` (``inf`` for zero)."""
    if x == 0:
        return math.inf
    m, e = math.frexp(x)
    # x = m * 2**e with 0.5 <= |m| < 1; strip trailing zero bits of the mantissa
    mant = int(m * (1 << 53))
    tz = (mant & -mant).bit_length() - 1
    return e - 53 + tz


@dataclass(frozen=True)
class DiscreteSignal:
    """Finitely supported signal on Z: ``values[k]`` sits at ``offset + k``."""

    offset: int
    values: tuple[float, ...]

    def __init__(self, offset: int, values: Sequence[float]):
        vals = tuple(float(v) for v in values)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("signal values must be finite")
        # trim zeros so that equality is equality of functions
        lo, hi = 0, len(vals)
        while lo < hi and vals[lo] == 0.0:
            lo += 1
        while hi > lo and vals[hi - 1] == 0.0:
            hi -= 1
        object.__setattr__(self, "offset", int(offset) + lo if hi > lo else 0)
        object.__setattr__(self, "values", vals[lo:hi])

    @classmethod
    def delta(cls, at: int = 0, height: float = 1.0) -> "DiscreteSignal":
        return cls(at, [height])

    @property
    def support(self) -> tuple[int, int] | None:
        if not self.values:
            return None
        return self.offset, self.offset + len(self.values) - 1

    def __call__(self, i):
        i = np.asarray(i)
        arr = np.asarray(self.values, dtype=float)
        k = i - self.offset
        inside = (k >= 0) & (k < arr.size)
        if arr.size == 0:
            out = np.zeros(i.shape)
        else:
            out = np.where(inside, arr[np.clip(k, 0, arr.size - 1)], 0.0)
        return out if out.ndim else float(out)

    def window_sum(self, lo: int, hi: int) -> float:
        """``sum_{lo <= i <= hi} phi(i)``, compensated."""
        if hi < lo or not self.values:
            return 0.0
        a = max(lo - self.offset, 0)
        b = min(hi - self.offset, len(self.values) - 1)
        if b < a:
            return 0.0
        return math.fsum(self.values[a : b + 1])

    def lp_norm(self, p: float) -> float:
        if not p >= 1:
            raise ValueError(f"p must be >= 1, got {p}")
        if not self.values:
            return 0.0
        a = np.abs(np.asarray(self.values))
        if p == math.inf:
            return float(a.max())
        return float(np.sum(a**p) ** (1.0 / p))

    def to_json(self) -> str:
        vals = ",".join(_fmt(v) for v in self.values)
        return f'{{"offset":{self.offset},"values":[{vals}]}}'

    @classmethod
    def from_json(cls, text: str) -> "DiscreteSignal":
        d = json.loads(text)
        return cls(int(d["offset"]), d["values"])


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """``[m 2^j, (m+1) 2^j)``."""

    j: int
    m: int

    @classmethod
    def containing(cls, x: float, j: int) -> "DyadicInterval":
        return cls(j, math.floor(math.ldexp(x, -j)))

    @property
    def left(self) -> float:
        return math.ldexp(self.m, self.j)

    @property
    def right(self) -> float:
        return math.ldexp(self.m + 1, self.j)

    @property
    def length(self) -> float:
        return math.ldexp(1.0, self.j)

    def contains(self, x: float) -> bool:
        return self.left <= x < self.right

    def contains_interval(self, other: "DyadicInterval") -> bool:
        return other.j <= self.j and self.left <= other.left and other.right <= self.right

    def disjoint(self, other: "DyadicInterval") -> bool:
        return self.right <= other.left or other.right <= self.left

    @property
    def parent(self) -> "DyadicInterval":
        return DyadicInterval(self.j + 1, self.m >> 1)

    @property
    def children(self) -> tuple["DyadicInterval", "DyadicInterval"]:
        return DyadicInterval(self.j - 1, 2 * self.m), DyadicInterval(self.j - 1, 2 * self.m + 1)

    def tripled(self) -> tuple[float, float]:
        """Concentric interval of three times the length."""
        return self.left - self.length, self.right + self.length

    def distance(self, x: float) -> float:
        if x < self.left:
            return self.left - x
        if x >= self.right:
            return x - self.right
        return 0.0
