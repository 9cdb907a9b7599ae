"""Dyadic conditional expectations, their bilinear products and martingale variation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .signal import DyadicInterval, StepFunction, dyadic_scale
from .variation import SampledFamily, VariationResult, variation_norm

__all__ = [
    "MIN_DYADIC_SCALE",
    "finest_scale",
    "require_dyadic",
    "conditional_expectation",
    "expectation_at",
    "bilinear_expectation",
    "default_j_range",
    "MartingaleTrace",
    "martingale_trace",
    "martingale_variation",
    "martingale_product_bound",
    "cz_vanishing_check",
    "lp_of_martingale_variation",
]

# breakpoints must be multiples of 2**MIN_DYADIC_SCALE; 0.1 or 1/3 are not
MIN_DYADIC_SCALE = -40


def finest_scale(*fs: StepFunction) -> int | None:
    """Smallest dyadic scale among the breakpoints, ``None`` if there are none."""
    scales = [dyadic_scale(float(b)) for f in fs for b in f.breakpoints]
    finite = [s for s in scales if s != math.inf]
    if not scales:
        return None
    return int(min(finite)) if finite else 0


def require_dyadic(*fs: StepFunction, min_scale: int = MIN_DYADIC_SCALE) -> None:
    for f in fs:
        for b in f.breakpoints:
            if dyadic_scale(float(b)) < min_scale:
                raise ValueError(
                    f"breakpoint {float(b)!r} is not dyadic of scale >= {min_scale}"
                )


def _cell_means(f: StepFunction, j: int, m: np.ndarray) -> np.ndarray:
    left = np.ldexp(m.astype(float), j)
    right = np.ldexp((m + 1).astype(float), j)
    return (np.asarray(f.prefix(right)) - np.asarray(f.prefix(left))) / math.ldexp(1.0, j)


def conditional_expectation(f: StepFunction, j: int, max_cells: int = 10**7) -> StepFunction:
    """``E_j f``: the scale-``j`` dyadic cell means of ``f``."""
    sup = f.support
    if sup is None:
        return StepFunction.zero()
    if all(dyadic_scale(float(b)) >= j for b in f.breakpoints):
        return f.normalize()
    lo, hi = sup
    m_lo = math.floor(math.ldexp(lo, -j))
    m_hi = math.ceil(math.ldexp(hi, -j))
    if m_hi - m_lo > max_cells:
        raise ValueError(f"E_{j} would need {m_hi - m_lo} cells")
    m = np.arange(m_lo, m_hi)
    means = _cell_means(f, j, m)
    bps = np.ldexp(np.arange(m_lo, m_hi + 1).astype(float), j)
    return StepFunction(bps, means).normalize()


def expectation_at(f: StepFunction, j: int, x: float) -> float:
    """``E_j f(x)`` without building the whole step function."""
    m = np.array([math.floor(math.ldexp(x, -j))])
    return float(_cell_means(f, j, m)[0])


def bilinear_expectation(f: StepFunction, g: StepFunction, j: int, x: float) -> float:
    """``E_j(f, g)(x) = E_j f(x) E_j g(x)``."""
    return expectation_at(f, j, x) * expectation_at(g, j, x)


def _cover_scale(lo: float, hi: float) -> int:
    """Smallest ``j`` with ``[lo, hi) within [-2**j, 2**j)``."""
    r = max(-lo, hi, 0.0)
    if r == 0:
        return 0
    j = math.ceil(math.log2(r))
    while math.ldexp(1.0, j) < r:
        j += 1
    while j > -1100 and math.ldexp(1.0, j - 1) >= r:
        j -= 1
    # hi is an open end, lo a closed one
    if -lo > math.ldexp(1.0, j):
        j += 1
    return j


def default_j_range(f: StepFunction, g: StepFunction, x: float | None = None) -> tuple[int, int]:
    """``(j_min, j_hi)``: below ``j_min`` the sequence is constant, above ``j_hi`` geometric."""
    require_dyadic(f, g)
    j_min = finest_scale(f, g)
    if j_min is None:
        return 0, 0
    sups = [s for s in (f.support, g.support) if s is not None]
    if not sups:
        return j_min, j_min
    lo = min(s[0] for s in sups)
    hi = max(s[1] for s in sups)
    j_hi = _cover_scale(lo, hi)
    if x is not None:
        while not (-math.ldexp(1.0, j_hi) <= x < math.ldexp(1.0, j_hi)):
            j_hi += 1
    return j_min, max(j_hi, j_min)


@dataclass(frozen=True)
class MartingaleTrace:
    x: float
    j_range: tuple[int, int]
    ef: np.ndarray
    eg: np.ndarray
    exact: bool

    @property
    def values(self) -> np.ndarray:
        return self.ef * self.eg

    def family(self) -> SampledFamily:
        js = np.arange(self.j_range[0], self.j_range[1] + 1, dtype=float)
        if self.exact:
            return SampledFamily.with_limits(js, self.values, at_inf=0.0)
        return SampledFamily(js, self.values)


def martingale_trace(f: StepFunction, g: StepFunction, x: float, j_range: tuple[int, int] | None = None) -> MartingaleTrace:
    """``E_j f(x)`` and ``E_j g(x)`` for ``j`` in the range.

    With the automatic range the sequence is constant for ``j <= j_min`` and
    geometric (factor 1/4, fixed sign) for ``j >= j_hi``, so appending the limit 0
    gives the whole bi-infinite sequence.
    """
    auto = default_j_range(f, g, x)
    if j_range is None:
        j_range = auto
        exact = True
    else:
        require_dyadic(f, g)
        exact = j_range[0] <= auto[0] and j_range[1] >= auto[1]
    j0, j1 = j_range
    if j1 < j0:
        raise ValueError("empty j-range")
    js = range(j0, j1 + 1)
    ef = np.array([expectation_at(f, j, x) for j in js])
    eg = np.array([expectation_at(g, j, x) for j in js])
    return MartingaleTrace(float(x), (j0, j1), ef, eg, exact)


def martingale_variation(f: StepFunction, g: StepFunction, x: float, rho: float, j_range: tuple[int, int] | None = None) -> VariationResult:
    """``V_rho({E_j(f, g)(x)}_j)``; exact for the automatic range, flagged ``truncated`` otherwise."""
    tr = martingale_trace(f, g, x, j_range)
    res = variation_norm(tr.family(), rho)
    if not tr.exact:
        return VariationResult(res.value, res.witness, ("truncated",))
    return res


def martingale_product_bound(f: StepFunction, g: StepFunction, x: float, rho: float) -> tuple[float, float]:
    """``(V(E f E g), sup|E g| V(E f) + sup|E f| V(E g))`` along the chain of ``x``."""
    tr = martingale_trace(f, g, x)
    ef = np.append(tr.ef, 0.0)
    eg = np.append(tr.eg, 0.0)
    lhs = variation_norm(ef * eg, rho).value
    rhs = np.max(np.abs(eg)) * variation_norm(ef, rho).value + np.max(np.abs(ef)) * variation_norm(eg, rho).value
    return lhs, float(rhs)


def cz_vanishing_check(b: StepFunction, interval: DyadicInterval, g2: StepFunction, x: float) -> float:
    """``max_j |E_j(b, g2)(x)|`` for a mean-zero ``b`` supported in ``interval``, ``x`` off its triple."""
    lo3, hi3 = interval.tripled()
    if lo3 <= x < hi3:
        raise ValueError(f"x = {x} lies inside the tripled interval [{lo3}, {hi3})")
    if b.is_zero:
        return 0.0
    sup = b.support
    if sup[0] < interval.left or sup[1] > interval.right:
        raise ValueError("b is not supported in the given interval")
    tr = martingale_trace(b, g2, x)
    return float(np.max(np.abs(tr.values)))


def lp_of_martingale_variation(f: StepFunction, g: StepFunction, rho: float, p: float) -> float:
    """``||V_rho({E_j(f, g)}_j)||_{L^p(R)}``, exactly.

    Inside ``[-2**J, 2**J)`` (``J`` the cover scale) the variation is constant on
    every scale-``j_min`` cell.  For ``x`` in ``[2**k, 2**(k+1))``, ``k >= J``, the
    sequence is 0 until ``j = k+1``, then ``F_+ G_+ 4**-j``: its variation is
    ``2**(1/rho) |F_+ G_+| 4**-(k+1)``; the sum over ``k`` is geometric.
    """
    if not p > 0:
        raise ValueError("p must be positive")
    j_min, _ = default_j_range(f, g)
    sups = [s for s in (f.support, g.support) if s is not None]
    if not sups or f.is_zero or g.is_zero:
        return 0.0
    J = _cover_scale(min(s[0] for s in sups), max(s[1] for s in sups))
    width = math.ldexp(1.0, j_min)
    n_cells = 2 ** (J - j_min + 1)
    if n_cells > 2**22:
        raise ValueError("too many dyadic cells for exact integration")
    m = np.arange(-(2 ** (J - j_min)), 2 ** (J - j_min))
    centers = (m + 0.5) * width
    total = 0.0
    for x in centers:
        total += martingale_variation(f, g, float(x), rho).value ** p * width
    fp = f.prefix(math.inf) - f.prefix(0.0)
    gp = g.prefix(math.inf) - g.prefix(0.0)
    fm = f.prefix(0.0)
    gm = g.prefix(0.0)
    amp = 2.0 ** (1.0 / rho)
    for side in ((fp, gp), (fm, gm)):
        c = abs(side[0] * side[1])
        if c == 0:
            continue
        # sum_{k>=J} 2**k (amp c 4**-(k+1))**p
        first = 2.0**J * (amp * c * 4.0 ** (-(J + 1))) ** p
        ratio = 2.0 * 4.0 ** (-p)
        if ratio >= 1.0:
            return math.inf
        total += first / (1.0 - ratio)
    return total ** (1.0 / p)
