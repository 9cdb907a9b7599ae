"""Measure-preserving systems and bilinear ergodic averages over squares of the orbit."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .averages import discrete_average
from .signal import DiscreteSignal, StepFunction
from .variation import VariationResult, variation_norm

__all__ = [
    "GOLDEN",
    "DynamicalSystem",
    "rotation",
    "rational_rotation",
    "cyclic_shift",
    "interval_exchange",
    "as_observable",
    "space_mean",
    "window_means",
    "square_average",
    "square_average_sequence",
    "ergodic_variation",
    "DiagnosticRow",
    "convergence_diagnostic",
    "measure_preservation_defect",
    "cyclic_transference_check",
    "exact_window_mean",
    "lattice_mean",
]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _split(a: float) -> tuple[float, float]:
    """``a = hi + lo`` with ``hi`` carrying 26 bits, so ``k * hi`` is exact for ``|k| < 2**27``."""
    m, e = math.frexp(a)
    hi = math.ldexp(math.floor(math.ldexp(m, 26)), e - 26)
    return hi, a - hi


@dataclass(frozen=True)
class DynamicalSystem:
    """An invertible measure-preserving map with exactly computable orbits.

    ``kind`` is ``"rotation"`` (irrational angle), ``"rational-rotation"``
    (angle ``p/q``), ``"cyclic"`` (``i -> i + 1`` on ``Z/N``) or ``"iet"``
    (exchange of ``[0, lam)`` and ``[lam, 1)``).
    """

    kind: str
    alpha: float = 0.0
    p: int = 0
    q: int = 1
    n: int = 0
    lam: float = 0.0

    @property
    def on_circle(self) -> bool:
        return self.kind != "cyclic"

    @property
    def ergodic(self) -> bool:
        return self.kind != "rational-rotation"

    def forward(self, x):
        return self._step(x, 1)

    def backward(self, x):
        return self._step(x, -1)

    def _step(self, x, k: int):
        if self.kind == "cyclic":
            return (x + k) % self.n
        if self.kind == "iet":
            x = np.asarray(x, dtype=float)
            if k == 1:
                return np.where(x < self.lam, x + (1.0 - self.lam), x - self.lam)
            return np.where(x < 1.0 - self.lam, x + self.lam, x - (1.0 - self.lam))
        return self.orbit(x, 1)[1 + k] if np.ndim(x) == 0 else np.array([self.orbit(v, 1)[1 + k] for v in x])

    def orbit(self, x, L: int) -> np.ndarray:
        """``S**l x`` for ``l = -L, ..., L``."""
        ks = np.arange(-L, L + 1)
        if self.kind == "cyclic":
            return (int(x) + ks) % self.n
        if self.kind == "rational-rotation":
            shift = ((ks * self.p) % self.q) / self.q
            y = float(x) + shift
            return y - np.floor(y)
        if self.kind == "rotation":
            hi, lo = _split(self.alpha)
            kh = ks * hi
            kh = kh - np.floor(kh)
            y = float(x) + kh + ks * lo
            return y - np.floor(y)
        if self.kind == "iet":
            out = np.empty(2 * L + 1)
            out[L] = float(x)
            fwd = bwd = float(x)
            for l in range(1, L + 1):
                fwd = float(self.forward(fwd))
                bwd = float(self.backward(bwd))
                out[L + l] = fwd
                out[L - l] = bwd
            return out
        raise ValueError(f"unknown system kind {self.kind!r}")

    def pieces(self) -> list[tuple[float, float, float]]:
        """The map as translations ``(a, b, shift)`` of the pieces ``[a, b)`` (circle systems)."""
        if self.kind in ("rotation", "rational-rotation"):
            a = self.alpha if self.kind == "rotation" else self.p / self.q
            return [(0.0, 1.0 - a, a), (1.0 - a, 1.0, a - 1.0)]
        if self.kind == "iet":
            return [(0.0, self.lam, 1.0 - self.lam), (self.lam, 1.0, -self.lam)]
        raise ValueError("piecewise description only exists for circle systems")


def rotation(alpha: float | str = "golden") -> DynamicalSystem:
    if alpha == "golden":
        alpha = GOLDEN
    alpha = float(alpha)
    if not 0 < alpha < 1:
        raise ValueError("rotation angle must lie in (0, 1)")
    return DynamicalSystem("rotation", alpha=alpha)


def rational_rotation(p: int, q: int) -> DynamicalSystem:
    if q < 1 or not 0 <= p < q:
        raise ValueError("need 0 <= p < q")
    return DynamicalSystem("rational-rotation", alpha=p / q, p=p, q=q)


def cyclic_shift(n: int) -> DynamicalSystem:
    if n < 1:
        raise ValueError("N must be >= 1")
    return DynamicalSystem("cyclic", n=n)


def interval_exchange(lam: float) -> DynamicalSystem:
    if not 0 < lam < 1:
        raise ValueError("the exchanged interval lengths must be positive")
    return DynamicalSystem("iet", lam=float(lam))


def as_observable(sys: DynamicalSystem, f):
    """Step function on ``[0, 1)`` for circle systems, tuple of ``N`` values for ``Z/N``."""
    if sys.on_circle:
        if not isinstance(f, StepFunction):
            raise TypeError("circle systems take StepFunction observables")
        sup = f.support
        if sup is not None and (sup[0] < 0 or sup[1] > 1):
            raise ValueError("observable must live on [0, 1)")
        return f
    if isinstance(f, DiscreteSignal):
        sup = f.support
        if sup is not None and (sup[0] < 0 or sup[1] >= sys.n):
            raise ValueError("observable must live on {0, ..., N-1}")
        return tuple(float(v) for v in f(np.arange(sys.n)))
    vals = tuple(float(v) for v in f)
    if len(vals) != sys.n:
        raise ValueError(f"expected {sys.n} values, got {len(vals)}")
    return vals


def space_mean(sys: DynamicalSystem, f) -> float:
    f = as_observable(sys, f)
    if sys.on_circle:
        return f.integral()
    return math.fsum(f) / sys.n


def _values(sys: DynamicalSystem, f, pts: np.ndarray) -> np.ndarray:
    if sys.on_circle:
        return np.asarray(f(pts), dtype=float)
    return np.asarray(f, dtype=float)[pts]


def _guard(sys: DynamicalSystem, fs, pts: np.ndarray, L: int, guard: float) -> None:
    if not sys.on_circle or guard <= 0 or sys.kind == "rational-rotation":
        return
    bps = np.unique(np.concatenate([np.mod(f.breakpoints, 1.0) for f in fs]))
    if bps.size == 0:
        return
    others = np.delete(pts, L)
    d = np.abs(others[:, None] - bps[None, :])
    d = np.minimum(d, 1.0 - d)
    if np.any(d < guard):
        raise ValueError(f"an orbit point lies within {guard} of a breakpoint; cell lookup is not certified")


def exact_window_mean(sys: DynamicalSystem, f, x, L: int) -> Fraction:
    """Exact rational ``(2L+1)**-1 sum_{|l| <= L} f(S**l x)`` for ``Z/N`` and rational rotations."""
    if sys.kind not in ("cyclic", "rational-rotation"):
        raise ValueError("exact window means need a finite orbit")
    f = as_observable(sys, f)
    pts = sys.orbit(x, L)
    vals = _values(sys, f, pts)
    return sum((Fraction(float(v)) for v in vals), Fraction(0)) / (2 * L + 1)


def lattice_mean(f: StepFunction, q: int) -> Fraction:
    """``q**-1 sum_k f((k + 1/2) / q)``: the space mean of an ``f`` constant on the cells ``[k/q, (k+1)/q)``."""
    pts = (np.arange(q) + 0.5) / q
    return sum((Fraction(float(v)) for v in f(pts)), Fraction(0)) / q


def window_means(sys: DynamicalSystem, f, x, L_max: int, guard: float = 1e-12) -> np.ndarray:
    """Symmetric Birkhoff means ``A_L f(x)`` for ``L = 0, ..., L_max`` from one orbit segment.

    On ``Z/N`` the window sums are exact rationals rounded once, matching
    :func:`discrete_average` bit for bit.
    """
    if L_max < 0:
        raise ValueError("L must be >= 0")
    f = as_observable(sys, f)
    pts = sys.orbit(x, L_max)
    _guard(sys, [f] if sys.on_circle else [], pts, L_max, guard)
    v = _values(sys, f, pts)
    n = 2 * np.arange(L_max + 1) + 1
    if sys.kind == "cyclic":
        sums = np.empty(L_max + 1)
        acc = Fraction(v[L_max])
        sums[0] = float(acc)
        for L in range(1, L_max + 1):
            acc += Fraction(v[L_max + L]) + Fraction(v[L_max - L])
            sums[L] = float(acc)
        return sums / n
    pairs = v[L_max + 1 :] + v[:L_max][::-1]
    sums = v[L_max] + np.concatenate(([0.0], np.cumsum(pairs)))
    return sums / n


def square_average_sequence(sys: DynamicalSystem, f, g, x, L_max: int, guard: float = 1e-12) -> np.ndarray:
    """``Q_L(f, g)(x) = A_L f(x) A_L g(x)`` for ``L = 0, ..., L_max``."""
    return window_means(sys, f, x, L_max, guard) * window_means(sys, g, x, L_max, guard)


def square_average(sys: DynamicalSystem, f, g, L: int, x, guard: float = 1e-12) -> float:
    return float(square_average_sequence(sys, f, g, x, L, guard)[L])


def ergodic_variation(sys: DynamicalSystem, f, g, x, rho: float, L_max: int) -> VariationResult:
    """Exact variation of ``Q_0, ..., Q_{L_max}``; flagged ``truncated`` (no limit appended)."""
    if L_max < 1:
        raise ValueError("L_max must be >= 1")
    res = variation_norm(square_average_sequence(sys, f, g, x, L_max), rho)
    return VariationResult(res.value, res.witness, ("truncated",))


@dataclass(frozen=True)
class DiagnosticRow:
    x: float
    L: int
    QL: float
    deviation: float
    var_tail: float
    reference: str


def _orbit_mean(sys: DynamicalSystem, f, x) -> float:
    pts = sys.orbit(x, 0)[0] + np.arange(sys.q) / sys.q
    pts = pts - np.floor(pts)
    return float(np.mean(f(pts)))


def convergence_diagnostic(sys: DynamicalSystem, f, g, xs: Sequence, rho: float, L_schedule: Sequence[int]) -> list[DiagnosticRow]:
    """``Q_L`` at the scheduled ``L`` for every sample point, its deviation from the a.e. limit
    and the variation of ``Q_l`` over ``l`` in ``[L // 2, L]``.

    The limit is ``int f * int g`` for the ergodic systems and the product of
    orbit means for rational rotations (labelled ``orbit-mean``).
    """
    L_schedule = sorted(int(L) for L in L_schedule)
    if not L_schedule:
        return []
    L_max = L_schedule[-1]
    rows = []
    ref_kind = "space-mean" if sys.ergodic else "orbit-mean"
    if sys.ergodic:
        ref_all = space_mean(sys, f) * space_mean(sys, g)
    for x in xs:
        q = square_average_sequence(sys, f, g, x, L_max)
        ref = ref_all if sys.ergodic else _orbit_mean(sys, f, x) * _orbit_mean(sys, g, x)
        for L in L_schedule:
            tail = variation_norm(q[L // 2 : L + 1], rho).value if L >= 1 else 0.0
            rows.append(DiagnosticRow(float(x), L, float(q[L]), float(q[L] - ref), tail, ref_kind))
    return rows


def measure_preservation_defect(sys: DynamicalSystem, n_cells: int = 64) -> float:
    """``max | m(S^-1 A) - m(A) |`` over the cells ``A`` of a uniform partition.

    For ``Z/N`` the map is checked to be a bijection; the defect is then 0.
    """
    if sys.kind == "cyclic":
        img = np.sort(sys.forward(np.arange(sys.n)))
        return 0.0 if np.array_equal(img, np.arange(sys.n)) else 1.0
    edges = np.linspace(0.0, 1.0, n_cells + 1)
    worst = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        pre = 0.0
        for c, d, s in sys.pieces():
            lo, hi = max(c, a - s), min(d, b - s)
            pre += max(0.0, hi - lo)
        worst = max(worst, abs(pre - (b - a)))
    return worst


def cyclic_transference_check(sys: DynamicalSystem, f, g, x: int, L: int) -> tuple[float, float]:
    """``(Q_L(f, g)(x)`` on ``Z/N``, ``discrete_average`` of the periodised signals on ``Z)``."""
    if sys.kind != "cyclic":
        raise ValueError("transference check is for cyclic shifts")
    fv = as_observable(sys, f)
    gv = as_observable(sys, g)
    idx = [(x + l) % sys.n for l in range(-L, L + 1)]
    phi = DiscreteSignal(x - L, [fv[i] for i in idx])
    psi = DiscreteSignal(x - L, [gv[i] for i in idx])
    return square_average(sys, f, g, L, x), discrete_average(phi, psi, L, x)
