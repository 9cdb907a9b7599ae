"""Calderon-Zygmund decomposition of dyadic step functions and the weak-endpoint experiment."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .averages import _hull, far_field_constant, variation_of_averages, variation_of_averages_many
from .martingale import finest_scale, require_dyadic
from .signal import DyadicInterval, StepFunction, lp_norm

__all__ = [
    "CZDecomposition",
    "cz_decompose",
    "CZReport",
    "verify_cz",
    "WeakRow",
    "WeakRatio",
    "weak_ratio",
    "bad_part_pointwise_bound",
    "merge_intervals",
]


def merge_intervals(intervals) -> list[tuple[float, float]]:
    out: list[list[float]] = []
    for a, b in sorted(intervals):
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


@dataclass(frozen=True)
class CZDecomposition:
    """``f = good + sum(b for _, b in bad_parts)`` at height ``lam``."""

    lam: float
    good: StepFunction
    bad_parts: tuple[tuple[DyadicInterval, StepFunction], ...]
    omega: tuple[tuple[float, float], ...]

    @property
    def intervals(self) -> list[DyadicInterval]:
        return [I for I, _ in self.bad_parts]

    def scaled(self, c: float) -> "CZDecomposition":
        return CZDecomposition(
            self.lam * c,
            self.good * c,
            tuple((I, b * c) for I, b in self.bad_parts),
            self.omega,
        )


def _abs_means(absf: StepFunction, j: int, m: np.ndarray) -> np.ndarray:
    left = np.ldexp(m.astype(float), j)
    right = np.ldexp((m + 1).astype(float), j)
    return (np.asarray(absf.prefix(right)) - np.asarray(absf.prefix(left))) / math.ldexp(1.0, j)


def _root_scale(absf: StepFunction, lam: float) -> int:
    """Smallest ``J`` with every scale-``J`` mean of ``|f|`` at most ``lam``.

    Parent means average the two children, so the property is inherited upward.
    """
    lo, hi = absf.support
    total = absf.integral()
    J = max(math.ceil(math.log2(total / lam)) if total > lam else 0, 0)
    J = max(J, math.ceil(math.log2(hi - lo)) + 1)

    def ok(j):
        m = np.arange(math.floor(math.ldexp(lo, -j)), math.ceil(math.ldexp(hi, -j)))
        return bool(np.all(_abs_means(absf, j, m) <= lam))

    while not ok(J):
        J += 1
    while ok(J - 1) and J - 1 >= (finest_scale(absf) or 0) - 1:
        J -= 1
    return J


def cz_decompose(f: StepFunction, lam: float) -> CZDecomposition:
    """Stopping-time decomposition: maximal dyadic intervals with ``|f|``-mean above ``lam``."""
    if not lam > 0:
        raise ValueError("height lambda must be positive")
    require_dyadic(f)
    f = f.normalize()
    if f.is_zero:
        return CZDecomposition(lam, StepFunction.zero(), (), ())
    absf = f.abs()
    j_fine = finest_scale(f)
    J = _root_scale(absf, lam)
    lo, hi = f.support
    active = np.arange(math.floor(math.ldexp(lo, -J)), math.ceil(math.ldexp(hi, -J)))
    selected: list[DyadicInterval] = []
    j = J
    while active.size and j > j_fine:
        j -= 1
        kids = np.concatenate((2 * active, 2 * active + 1))
        kids.sort()
        means = _abs_means(absf, j, kids)
        big = means > lam
        selected += [DyadicInterval(j, int(m)) for m in kids[big]]
        # only cells that meet the support can still contain a stopping interval
        rest = kids[~big & (means > 0)]
        active = rest
    selected.sort(key=lambda I: I.left)
    bad = []
    good = f
    for I in selected:
        piece = f.restrict(I.left, I.right)
        mean = piece.integral() / I.length
        b = (piece - StepFunction.indicator(I.left, I.right, mean)).normalize()
        bad.append((I, b))
        good = good - b
    omega = merge_intervals(I.tripled() for I in selected)
    return CZDecomposition(lam, good.normalize(), tuple(bad), tuple(omega))


@dataclass(frozen=True)
class CZReport:
    """Per-property pass flag with the measured slack (bound minus value)."""

    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.checks.values())

    def failures(self) -> list[str]:
        return [k for k, (ok, _) in self.checks.items() if not ok]


def verify_cz(d: CZDecomposition, f: StepFunction, zero_mean_tol: float = 1e-12) -> CZReport:
    lam = d.lam
    f1 = lp_norm(f, 1)
    checks = {}
    recon = d.good
    for _, b in d.bad_parts:
        recon = recon + b
    diff = (recon - f).normalize()
    err = lp_norm(diff, math.inf)
    checks["reconstruction"] = (err == 0.0, -err)
    worst_support = 0.0
    worst_mean = 0.0
    worst_l1 = math.inf
    for I, b in d.bad_parts:
        s = b.support
        if s is not None:
            worst_support = max(worst_support, I.left - s[0], s[1] - I.right)
        worst_mean = max(worst_mean, abs(b.integral()))
        worst_l1 = min(worst_l1, 4 * lam * I.length - lp_norm(b, 1))
    checks["support"] = (worst_support <= 0.0, -worst_support)
    checks["zero_mean"] = (worst_mean <= zero_mean_tol, zero_mean_tol - worst_mean)
    checks["bad_l1"] = (worst_l1 >= 0.0, worst_l1 if d.bad_parts else math.inf)
    measure = sum(I.length for I in d.intervals)
    checks["measure"] = (measure <= f1 / lam, f1 / lam - measure)
    ginf = lp_norm(d.good, math.inf)
    checks["good_sup"] = (ginf <= 2 * lam, 2 * lam - ginf)
    g1 = lp_norm(d.good, 1)
    checks["good_l1"] = (g1 <= f1, f1 - g1)
    absf = f.abs()
    worst_parent = math.inf
    for I in d.intervals:
        P = I.parent
        worst_parent = min(worst_parent, lam - (absf.prefix(P.right) - absf.prefix(P.left)) / P.length)
    checks["maximality"] = (worst_parent >= 0.0, worst_parent)
    return CZReport(checks)


# --- weak endpoint ratio -------------------------------------------------------


@dataclass(frozen=True)
class WeakRow:
    lam: float
    measure_lo: float
    measure_hi: float
    ratio: float


@dataclass(frozen=True)
class WeakRatio:
    sup_ratio: float
    rows: tuple[WeakRow, ...]


def _level_set_bracket(v_of, lam, edges, v_edges, depth):
    """Inner and outer measure of ``{v > lam}`` from samples at cell ends and midpoints.

    Cells whose samples disagree are bisected ``depth`` times.
    """
    lo_meas = 0.0
    hi_meas = 0.0
    a, b = edges[:-1], edges[1:]
    va, vb = v_edges[:-1], v_edges[1:]
    for level in range(depth + 1):
        mids = 0.5 * (a + b)
        vm = v_of(mids)
        above = (va > lam).astype(int) + (vb > lam) + (vm > lam)
        full = above == 3
        lo_meas += float(np.sum((b - a)[full]))
        hi_meas += float(np.sum((b - a)[full]))
        mixed = (above > 0) & (above < 3)
        if level == depth:
            hi_meas += float(np.sum((b - a)[mixed]))
            break
        a_m, b_m, va_m, vb_m, vm_m = a[mixed], b[mixed], va[mixed], vb[mixed], vm[mixed]
        mid_m = 0.5 * (a_m + b_m)
        a = np.concatenate((a_m, mid_m))
        b = np.concatenate((mid_m, b_m))
        va = np.concatenate((va_m, vm_m))
        vb = np.concatenate((vm_m, vb_m))
        if a.size == 0:
            break
    return lo_meas, hi_meas


def weak_ratio(
    f1: StepFunction,
    f2: StepFunction,
    rho: float,
    lam_grid,
    n_cells: int = 2048,
    depth: int = 10,
) -> WeakRatio:
    """``sup_lam lam |{V_rho(Q(f1, f2)) > lam}|**2 / (||f1||_1 ||f2||_1)`` with bracketed measures.

    The x-range extends to where the far-field bound ``C / d**2`` drops below the
    smallest ``lam``, so nothing outside it can exceed any level.  Measures are
    bracketed from samples: cells entirely above the level count toward the
    lower value, cells with any sample above it toward the upper one.
    """
    lam_grid = np.asarray(lam_grid, dtype=float)
    if lam_grid.size == 0:
        raise ValueError("empty lambda grid")
    if np.any(lam_grid <= 0):
        raise ValueError("levels must be positive")
    if not rho >= 1:
        raise ValueError("rho must be >= 1")
    n1, n2 = lp_norm(f1, 1), lp_norm(f2, 1)
    if n1 == 0 or n2 == 0:
        return WeakRatio(0.0, tuple(WeakRow(float(l), 0.0, 0.0, 0.0) for l in lam_grid))
    lo, hi = _hull(f1, f2)
    reach = math.sqrt(far_field_constant(f1, f2) / lam_grid.min())
    r = max(hi - lo, reach)
    edges = np.union1d(np.linspace(lo - r, hi + r, n_cells + 1), np.union1d(f1.breakpoints, f2.breakpoints))
    cache: dict[float, float] = {}

    def v_of(xs):
        xs = np.asarray(xs)
        out = np.empty(xs.size)
        todo = [i for i, x in enumerate(xs) if x not in cache]
        if todo:
            vals = variation_of_averages_many(f1, f2, xs[todo], rho)
            for i, v in zip(todo, vals):
                cache[float(xs[i])] = float(v)
        for i, x in enumerate(xs):
            out[i] = cache[float(x)]
        return out

    v_edges = v_of(edges)
    rows = []
    for lam in lam_grid:
        m_lo, m_hi = _level_set_bracket(v_of, lam, edges, v_edges, depth)
        rows.append(WeakRow(float(lam), m_lo, m_hi, float(lam * m_hi**2 / (n1 * n2))))
    return WeakRatio(max(r.ratio for r in rows), tuple(rows))


def bad_part_pointwise_bound(
    b: StepFunction, interval: DyadicInterval, g2: StepFunction, x: float, rho: float
) -> tuple[float, float]:
    """``(V_rho(Q(b, g2))(x), ||b||_1 (d + |I|) / d**2)`` with ``d = d(x, I)``, ``x`` off ``3I``."""
    lo3, hi3 = interval.tripled()
    if lo3 <= x < hi3:
        raise ValueError(f"x = {x} lies inside the tripled interval [{lo3}, {hi3})")
    if b.is_zero:
        return 0.0, 0.0
    d = interval.distance(x)
    v = variation_of_averages(b, g2, x, rho).value
    return v, lp_norm(b, 1) * (d + interval.length) / d**2
