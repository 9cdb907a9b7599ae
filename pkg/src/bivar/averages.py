"""Linear and bilinear averages over windows, their exact t-variation, and the Z <-> R embedding.

``M_t f(x) = t^{-1} int_{x-t/2}^{x+t/2} f`` and ``Q_t(f, g)(x) = M_t f(x) M_t g(x)``.
For step functions, on every t-interval between two window-edge crossings
``t = 2|x - beta|`` each factor has the form ``(a t + b) / t``, so ``Q_t`` has at
most one interior critical point there.  Sampling ``Q_t`` at the crossings and
those critical points (plus the limits t -> 0+, t -> inf) therefore captures
every local extremum and the rho-variation is exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .quadrature import panel_nodes
from .signal import DiscreteSignal, StepFunction, lp_norm
from .variation import SampledFamily, VariationResult, variation_norm, variation_values

__all__ = [
    "linear_average",
    "bilinear_average",
    "AverageFamilyTrace",
    "trace_family",
    "variation_of_averages",
    "variation_of_averages_many",
    "sample_family",
    "XGrid",
    "lp_of_variation",
    "far_field_constant",
    "discrete_average",
    "embed",
    "TransferenceCalibration",
    "calibrate_transference",
    "TRANSFERENCE_CANDIDATES",
]


def linear_average(f: StepFunction, t, x):
    """``M_t f(x)``; broadcasts over ``t`` and ``x``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("window length t must be positive")
    x = np.asarray(x, dtype=float)
    out = (f.prefix(x + 0.5 * t) - f.prefix(x - 0.5 * t)) / t
    return out if np.ndim(out) else float(out)


def bilinear_average(f: StepFunction, g: StepFunction, t, x):
    """``Q_t(f, g)(x) = M_t f(x) * M_t g(x)``."""
    return linear_average(f, t, x) * linear_average(g, t, x)


def _limit_at_zero(f: StepFunction, g: StepFunction, x):
    fm = 0.5 * (np.asarray(f.left_limit(x)) + np.asarray(f(x)))
    gm = 0.5 * (np.asarray(g.left_limit(x)) + np.asarray(g(x)))
    return fm * gm


def _hull(f: StepFunction, g: StepFunction) -> tuple[float, float] | None:
    sups = [s for s in (f.support, g.support) if s is not None]
    if not sups:
        return None
    return min(s[0] for s in sups), max(s[1] for s in sups)


def _t_max(f: StepFunction, g: StepFunction, x: np.ndarray) -> np.ndarray:
    hull = _hull(f, g)
    if hull is None:
        return np.full(x.shape, 4.0)
    lo, hi = hull
    dist = np.maximum(np.maximum(lo - x, x - hi), 0.0)
    return 4.0 * ((hi - lo) + dist + 1.0)


def _jumps(f: StepFunction, bps: np.ndarray) -> np.ndarray:
    return np.asarray(f(bps), dtype=float) - np.asarray(f.left_limit(bps), dtype=float)


def _trace_arrays(f: StepFunction, g: StepFunction, xs: np.ndarray):
    """Candidate extremum parameters for every x (rows), NaN where absent.

    Returns ``(edges, seg_coeffs, t_seq, q_seq)``.  ``t_seq`` interleaves the
    interior critical point of each segment with the segment's right end.

    Integrating by parts, ``t M_t f(x) = a t + b`` with ``a`` the mean of ``f`` at
    the two window ends and ``b = -sum (beta - x) J(beta)`` over the jumps
    ``J`` strictly inside the window.  This avoids differencing prefix
    integrals, which loses all accuracy for small ``t``.
    """
    bps = np.union1d(f.breakpoints, g.breakpoints)
    n = xs.size
    tmax = _t_max(f, g, xs)
    if bps.size:
        dist = np.abs(xs[:, None] - bps[None, :])
        order = np.argsort(dist, axis=1, kind="stable")
        cross = 2.0 * np.take_along_axis(dist, order, axis=1)
        off = bps[order] - xs[:, None]
        zero = np.zeros((n, 1))
        b1 = np.concatenate((zero, -np.cumsum(off * _jumps(f, bps)[order], axis=1)), axis=1)
        b2 = np.concatenate((zero, -np.cumsum(off * _jumps(g, bps)[order], axis=1)), axis=1)
    else:
        cross = np.zeros((n, 0))
        b1 = b2 = np.zeros((n, 1))
    edges = np.concatenate((np.zeros((n, 1)), cross, tmax[:, None]), axis=1)
    lo, hi = edges[:, :-1], edges[:, 1:]
    valid = hi > lo
    mid = np.where(valid, 0.5 * (lo + hi), 1.0)
    xb = np.broadcast_to(xs[:, None], mid.shape)
    r, l = xb + 0.5 * mid, xb - 0.5 * mid
    a1 = 0.5 * (np.asarray(f(r)) + np.asarray(f(l)))
    a2 = 0.5 * (np.asarray(g(r)) + np.asarray(g(l)))
    denom = a1 * b2 + a2 * b1
    with np.errstate(divide="ignore", invalid="ignore"):
        tstar = np.where(denom != 0, -2.0 * b1 * b2 / denom, np.nan)
    ok = valid & (tstar > lo) & (tstar < hi)
    tstar = np.where(ok, tstar, np.nan)
    # zero-length segments (equidistant breakpoints) carry placeholder coefficients
    right = np.where(valid & (hi > 0), hi, np.nan)
    t_seq = np.empty((n, 2 * mid.shape[1]))
    t_seq[:, 0::2] = tstar
    t_seq[:, 1::2] = right
    coef = [np.repeat(c, 2, axis=1) for c in (a1, b1, a2, b2)]
    with np.errstate(divide="ignore", invalid="ignore"):
        q = (coef[0] + coef[1] / t_seq) * (coef[2] + coef[3] / t_seq)
    q = np.where(np.isnan(t_seq), np.nan, q)
    return edges, (a1, b1, a2, b2, valid), t_seq, q


@dataclass(frozen=True)
class AverageFamilyTrace:
    """Closed-form description of ``t -> Q_t(f, g)(x)``.

    ``segments`` holds ``(t_lo, t_hi, a1, b1, a2, b2)`` with ``M_t f = (a1 t + b1)/t``
    and ``M_t g = (a2 t + b2)/t`` on ``(t_lo, t_hi]``; ``extrema`` samples ``Q_t``
    at every segment end, interior critical point and at the two limits.
    """

    x: float
    segments: tuple[tuple[float, float, float, float, float, float], ...]
    extrema: SampledFamily


def trace_family(f: StepFunction, g: StepFunction, x: float) -> AverageFamilyTrace:
    xs = np.array([float(x)])
    edges, (a1, b1, a2, b2, valid), t_seq, q = _trace_arrays(f, g, xs)
    segs = []
    for k in np.flatnonzero(valid[0]):
        segs.append(
            (float(edges[0, k]), float(edges[0, k + 1]),
             float(a1[0, k]), float(b1[0, k]), float(a2[0, k]), float(b2[0, k]))
        )
    t_row, q_row = t_seq[0], q[0]
    keep = ~np.isnan(t_row)
    t_row, q_row = t_row[keep], q_row[keep]
    # equidistant breakpoints give repeated crossings
    uniq = np.concatenate(([True], np.diff(t_row) > 0)) if t_row.size else np.zeros(0, bool)
    fam = SampledFamily.with_limits(
        t_row[uniq],
        q_row[uniq],
        at_zero=float(_limit_at_zero(f, g, xs)[0]),
        at_inf=0.0,
    )
    return AverageFamilyTrace(float(x), tuple(segs), fam)


def variation_of_averages(f: StepFunction, g: StepFunction, x: float, rho: float) -> VariationResult:
    """``V_rho({Q_t(f, g)(x)}_{t>0})`` exactly; witness indexes ``trace_family(...).extrema``."""
    if not rho >= 1:
        raise ValueError(f"rho must be >= 1, got {rho}")
    return variation_norm(trace_family(f, g, x).extrema, rho)


def variation_of_averages_many(f: StepFunction, g: StepFunction, xs, rho: float, chunk: int = 4096) -> np.ndarray:
    """Vectorised :func:`variation_of_averages` values over many points."""
    xs = np.asarray(xs, dtype=float).ravel()
    out = np.empty(xs.size)
    for s in range(0, xs.size, chunk):
        xc = xs[s : s + chunk]
        _, _, _, q = _trace_arrays(f, g, xc)
        lim0 = _limit_at_zero(f, g, xc)
        rows = np.concatenate((lim0[:, None], q, np.zeros((xc.size, 1))), axis=1)
        out[s : s + chunk] = variation_values(rows, rho)
    return out


def sample_family(f: StepFunction, g: StepFunction, x: float, t_params, with_limits: bool = True) -> SampledFamily:
    """``Q_t(f, g)(x)`` on a strictly increasing grid of ``t``, limits tagged."""
    t = np.asarray(t_params, dtype=float)
    vals = bilinear_average(f, g, t, x)
    if not with_limits:
        return SampledFamily(t, vals)
    return SampledFamily.with_limits(t, vals, at_zero=float(_limit_at_zero(f, g, x)), at_inf=0.0)


def far_field_constant(f: StepFunction, g: StepFunction) -> float:
    """``C`` with ``V_rho(Q(f, g))(x) <= C / d(x)**2`` off the hull of the supports.

    For x at distance d to the right, ``Q_t = N_f(t) N_g(t) / t**2`` vanishes for
    ``t < 2d``; ``N_f`` has total variation ``||f||_1`` and ``|N_f| <= ||f||_1``, so
    ``V_1 <= 2 F G / (4 d^2) + F G / (4 d^2)``.
    """
    return 0.75 * lp_norm(f, 1) * lp_norm(g, 1)


@dataclass(frozen=True)
class XGrid:
    """Composite Gauss-Legendre rule on ``[lo, hi]``; breakpoints are added as panel edges."""

    lo: float
    hi: float
    panels: int = 2048
    order: int = 2

    @classmethod
    def around(cls, f: StepFunction, g: StepFunction, margin: float = 8.0, panels: int = 2048, order: int = 2) -> "XGrid":
        hull = _hull(f, g)
        if hull is None:
            return cls(-1.0, 1.0, panels, order)
        lo, hi = hull
        r = margin * (hi - lo)
        return cls(lo - r, hi + r, panels, order)

    def refined(self, factor: int = 2) -> "XGrid":
        return XGrid(self.lo, self.hi, self.panels * factor, self.order)

    def shifted(self, s: float) -> "XGrid":
        return XGrid(self.lo + s, self.hi + s, self.panels, self.order)

    def scaled(self, c: float) -> "XGrid":
        return XGrid(self.lo * c, self.hi * c, self.panels, self.order)

    def nodes(self, extra_edges=()) -> tuple[np.ndarray, np.ndarray]:
        base = np.linspace(self.lo, self.hi, self.panels + 1)
        extra = np.asarray(extra_edges, dtype=float)
        extra = extra[(extra > self.lo) & (extra < self.hi)]
        return panel_nodes(np.union1d(base, extra), self.order)


def _tail_integral(c: float, p: float, r: float) -> float:
    """``int_r^inf (c / d**2)**p dd``."""
    if c == 0:
        return 0.0
    return c**p * r ** (1.0 - 2.0 * p) / (2.0 * p - 1.0)


def lp_of_variation(
    f: StepFunction,
    g: StepFunction,
    rho: float,
    p: float,
    x_grid: XGrid | None = None,
    return_parts: bool = False,
):
    """``||V_rho(Q(f, g))||_{L^p(R)}``: quadrature on the grid plus the far-field tail bound.

    With ``return_parts`` the pair ``(core, tail)`` of ``int V^p`` contributions
    is returned instead of the p-th root of their sum.
    """
    if not p > 0.5:
        raise ValueError("the far-field tail is integrable only for p > 1/2")
    hull = _hull(f, g)
    if hull is None:
        return (0.0, 0.0) if return_parts else 0.0
    grid = x_grid or XGrid.around(f, g)
    lo, hi = hull
    if not (grid.lo < lo and grid.hi > hi):
        raise ValueError(f"x-grid [{grid.lo}, {grid.hi}] does not cover the supports [{lo}, {hi})")
    xs, w = grid.nodes(np.union1d(f.breakpoints, g.breakpoints))
    v = variation_of_averages_many(f, g, xs, rho)
    core = float(np.dot(w, v**p))
    c = far_field_constant(f, g)
    tail = _tail_integral(c, p, lo - grid.lo) + _tail_integral(c, p, grid.hi - hi)
    if return_parts:
        return core, tail
    return (core + tail) ** (1.0 / p)


# --- the integer lattice -----------------------------------------------------------


def discrete_average(phi: DiscreteSignal, psi: DiscreteSignal, L: int, i: int) -> float:
    """``(2L+1)^{-2} sum_{|l|,|k| <= L} phi(i-l) psi(i-k)`` as a product of window means."""
    if L < 0:
        raise ValueError("L must be >= 0")
    n = 2 * L + 1
    return (phi.window_sum(i - L, i + L) / n) * (psi.window_sum(i - L, i + L) / n)


def embed(phi: DiscreteSignal) -> StepFunction:
    """Step function equal to ``phi(m)`` on ``[m + 1/4, m + 1/2)`` and zero elsewhere."""
    if not phi.values:
        return StepFunction.zero()
    bps, vals = [], []
    for k, v in enumerate(phi.values):
        m = phi.offset + k
        bps += [m + 0.25, m + 0.5]
        vals += [v, 0.0]
    return StepFunction(bps, vals[:-1]).normalize()


TRANSFERENCE_CANDIDATES: dict[str, Callable[[int], float]] = {
    "L+1/2": lambda L: L + 0.5,
    "2L+1": lambda L: 2.0 * L + 1.0,
    "2L+3/2": lambda L: 2.0 * L + 1.5,
}


@dataclass(frozen=True)
class TransferenceCalibration:
    label: str
    t_of_L: Callable[[int], float]
    c: float
    residual: float
    residuals: dict


def _transference_samples(max_L: int, seed: int, n_signals: int, t_of_L):
    rng = np.random.default_rng(seed)
    disc, cont = [], []
    for _ in range(n_signals):
        phi = DiscreteSignal(-3, rng.integers(-4, 5, size=7).astype(float))
        psi = DiscreteSignal(-3, rng.integers(-4, 5, size=7).astype(float))
        f, g = embed(phi), embed(psi)
        for L in range(max_L + 1):
            for i in range(-4 - L, 5 + L):
                x = i + rng.uniform(0.0, 0.75)
                if x <= i:
                    continue
                disc.append(discrete_average(phi, psi, L, i))
                cont.append(bilinear_average(f, g, t_of_L(L), x))
    return np.array(disc), np.array(cont)


def calibrate_transference(max_L: int = 6, seed: int = 0, n_signals: int = 12, tol: float = 1e-10) -> TransferenceCalibration:
    """Find the window length ``t(L)`` and constant ``c`` with ``Q_L(phi, psi)(i) = c Q_{t(L)}(f, g)(x)``.

    ``f, g`` are the embeddings of ``phi, psi`` and ``x`` ranges over the open
    cell ``(i, i + 3/4)``.  Each candidate scaling gets a least-squares ``c``;
    the candidate whose identity holds to ``tol`` is returned.
    """
    if max_L < 2:
        raise ValueError("max_L must be >= 2")
    fits = {}
    for label, t_of_L in TRANSFERENCE_CANDIDATES.items():
        d, q = _transference_samples(max_L, seed, n_signals, t_of_L)
        denom = float(np.dot(q, q))
        c = float(np.dot(d, q) / denom) if denom > 0 else 0.0
        fits[label] = (c, float(np.max(np.abs(d - c * q))))
    residuals = {k: v[1] for k, v in fits.items()}
    passing = [k for k, (c, r) in fits.items() if r < tol]
    if len(passing) != 1:
        raise RuntimeError(f"no unique transference scaling; residuals {residuals}")
    label = passing[0]
    c, r = fits[label]
    return TransferenceCalibration(label, TRANSFERENCE_CANDIDATES[label], c, r, residuals)
