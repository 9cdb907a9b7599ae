"""Bilinear approximate identities, the psi-split, square functions and kernel conditions.

A plane kernel ``K`` acts on step functions by

    K_t(f, g)(x) = int int t**-2 K((x - y)/t, (x - z)/t) f(y) g(z) dy dz
                 = int int K(u, v) f(x - t u) g(x - t v) du dv.

The second form is evaluated with a tensor Gauss-Legendre rule whose panels
never straddle a breakpoint of ``f`` or ``g``, so the integrand is smooth on
every panel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, special

from .quadrature import gauss_legendre, panel_nodes
from .signal import StepFunction, lp_norm
from .variation import (
    SampledFamily,
    VariationResult,
    dyadic_grid,
    long_variation,
    short_variation,
    variation_norm,
)

__all__ = [
    "Kernel1D",
    "PlaneKernel",
    "Kernel2D",
    "PsiKernel",
    "KERNEL_FAMILIES",
    "gaussian_1d",
    "bump_1d",
    "gaussian_2d",
    "gaussian_product",
    "bump_product",
    "make_kernel",
    "make_psi_kernel",
    "bilinear_convolution",
    "linear_convolution",
    "factorized_convolution",
    "default_t_params",
    "identity_family",
    "linear_family",
    "variation_of_identity_family",
    "product_rule_check",
    "triangle_split_check",
    "long_variation_domination",
    "SquareFunctionResult",
    "square_function",
    "short_variation_square_bound",
    "derivative_kernel_identity_check",
    "richardson_slope",
    "kernel_size_condition",
    "kernel_regularity_condition",
    "direction_grid",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)


# --- one-dimensional kernels ----------------------------------------------------


def _gauss(u):
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / _SQRT2PI


@lru_cache(maxsize=None)
def _bump_constant() -> float:
    val, _ = integrate.quad(lambda u: math.exp(-1.0 / (1.0 - u * u)), -1.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=400)
    return 1.0 / val


def _bump_raw(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ui * ui))
    return out


def _bump_raw_deriv(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    w = 1.0 - ui * ui
    out[inside] = np.exp(-1.0 / w) * (-2.0 * ui / (w * w))
    return out


@dataclass(frozen=True, eq=False)
class Kernel1D:
    """Symmetric unit-mass kernel on the line."""

    name: str
    fn: Callable
    deriv: Callable
    cdf: Callable
    cutoff: float
    sup: float

    def __call__(self, u):
        return self.fn(u)


def gaussian_1d() -> Kernel1D:
    return Kernel1D("gaussian", _gauss, lambda u: -np.asarray(u, dtype=float) * _gauss(u), special.ndtr, 12.0, 1.0 / _SQRT2PI)


def bump_1d() -> Kernel1D:
    c = _bump_constant()
    x_ref, w_ref = gauss_legendre(16)

    def cdf(u):
        u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
        flat = u.ravel()
        # 64 panels of order 16 on [-1, u]
        edges = -1.0 + (flat[:, None] + 1.0) * np.linspace(0.0, 1.0, 65)[None, :]
        half = 0.5 * np.diff(edges, axis=1)
        mid = 0.5 * (edges[:, :-1] + edges[:, 1:])
        nodes = mid[:, :, None] + half[:, :, None] * x_ref[None, None, :]
        vals = _bump_raw(nodes) * half[:, :, None] * w_ref[None, None, :]
        return (c * vals.sum(axis=(1, 2))).reshape(u.shape)

    return Kernel1D("bump", lambda u: c * _bump_raw(u), lambda u: c * _bump_raw_deriv(u), cdf, 1.0, c * math.exp(-1.0))


# --- plane kernels --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PlaneKernel:
    """A kernel on the plane, vectorised in ``(u, v)``.

    ``quadrant_masses`` are the integrals over ``(u>0, v>0)``, ``(u>0, v<0)``,
    ``(u<0, v>0)``, ``(u<0, v<0)``; they give the ``t -> 0`` limit at a jump.
    ``cutoff`` bounds the box outside which the kernel is negligible (or zero)
    and ``panel`` is the quadrature panel width in kernel units.
    """

    name: str
    fn: Callable
    cutoff: float
    quadrant_masses: tuple[float, float, float, float]
    sup: float
    panel: float = 0.5

    def __call__(self, u, v):
        return self.fn(np.asarray(u, dtype=float), np.asarray(v, dtype=float))

    def limit_at_zero(self, f: StepFunction, g: StepFunction, x: float) -> float:
        """``lim_{t -> 0} K_t(f, g)(x)``; ``u > 0`` looks left of ``x``."""
        fl, fr = float(f.left_limit(x)), float(f(x))
        gl, gr = float(g.left_limit(x)), float(g(x))
        pp, pm, mp, mm = self.quadrant_masses
        return pp * fl * gl + pm * fl * gr + mp * fr * gl + mm * fr * gr

    def tilde(self, dy: Callable, dz: Callable, name: str | None = None) -> "PlaneKernel":
        """``2K + u K_u + v K_v``, which has zero integral over every quadrant."""
        fn = self.fn

        def tfn(u, v):
            return 2.0 * fn(u, v) + u * dy(u, v) + v * dz(u, v)

        sup = _grid_sup(tfn, self.cutoff)
        return PlaneKernel(name or self.name + "~", tfn, self.cutoff, (0.0, 0.0, 0.0, 0.0), sup, self.panel)


@dataclass(frozen=True, eq=False)
class Kernel2D(PlaneKernel):
    """Unit-mass kernel with closed-form partial derivatives."""

    partial_y: Callable = None
    partial_z: Callable = None
    decay_order: int = 2
    decay_constant: float = math.nan
    mass: float = math.nan
    marginal: str = "gaussian"

    @property
    def phi_tilde(self) -> PlaneKernel:
        return self.tilde(self.partial_y, self.partial_z)


def _grid_sup(fn, cutoff, n=801) -> float:
    s = np.linspace(-cutoff, cutoff, n)
    U, V = np.meshgrid(s, s, indexing="ij")
    return float(np.max(np.abs(fn(U, V))))


def _box_rule(cutoff: float, panel: float, order: int = 8):
    n = max(1, math.ceil(2 * cutoff / panel))
    return panel_nodes(np.linspace(-cutoff, cutoff, n + 1), order)


def _box_integral(fn, cutoff: float, panel: float) -> float:
    """Tensor Gauss-Legendre integral of ``fn`` over ``[-cutoff, cutoff]**2``."""
    nodes, w = _box_rule(cutoff, panel)
    U, V = np.meshgrid(nodes, nodes, indexing="ij")
    return float(w @ fn(U, V) @ w)


def _decay_constant(fn, cutoff: float, order: int) -> float:
    s = np.linspace(-cutoff, cutoff, 481)
    U, V = np.meshgrid(s, s, indexing="ij")
    return float(np.max(np.abs(fn(U, V)) * (1 + np.abs(U)) ** order * (1 + np.abs(V)) ** order))


def _finish(kernel: Kernel2D) -> Kernel2D:
    mass = _box_integral(kernel.fn, kernel.cutoff, kernel.panel)
    if abs(mass - 1.0) > 1e-10:
        raise ValueError(f"kernel {kernel.name} has mass {mass!r}, not 1")
    object.__setattr__(kernel, "mass", mass)
    object.__setattr__(kernel, "decay_constant", _decay_constant(kernel.fn, kernel.cutoff, kernel.decay_order))
    return kernel


def gaussian_product(decay_order: int = 2) -> Kernel2D:
    def fn(u, v):
        return np.exp(-0.5 * (u * u + v * v)) / (2.0 * math.pi)

    def dy(u, v):
        return -u * fn(u, v)

    def dz(u, v):
        return -v * fn(u, v)

    return _finish(
        Kernel2D("gaussian-product", fn, 12.0, (0.25, 0.25, 0.25, 0.25), 1.0 / (2 * math.pi), 0.5, dy, dz, decay_order, marginal="gaussian")
    )


def gaussian_2d(r: float = 0.5, decay_order: int = 2) -> Kernel2D:
    """Correlated standard bivariate normal density; not a tensor product for ``r != 0``."""
    if not -1 < r < 1:
        raise ValueError("correlation must lie in (-1, 1)")
    s = 1.0 - r * r
    norm = 1.0 / (2.0 * math.pi * math.sqrt(s))

    # written so that fn(u, v) and fn(v, u) agree bitwise
    def fn(u, v):
        return norm * np.exp(-((u * u + v * v) - 2.0 * r * (u * v)) / (2.0 * s))

    def dy(u, v):
        return -(u - r * v) / s * fn(u, v)

    def dz(u, v):
        return -(v - r * u) / s * fn(u, v)

    a = math.asin(r) / (2.0 * math.pi)
    quad = (0.25 + a, 0.25 - a, 0.25 - a, 0.25 + a)
    # the marginal variance is 1, so a box of half-width 12 keeps all but ~1e-32 of the mass
    return _finish(Kernel2D("gaussian-2d", fn, 12.0, quad, norm, 0.5, dy, dz, decay_order, marginal="gaussian"))


def bump_product(decay_order: int = 2) -> Kernel2D:
    b = bump_1d()

    def fn(u, v):
        return b.fn(u) * b.fn(v)

    def dy(u, v):
        return b.deriv(u) * b.fn(v)

    def dz(u, v):
        return b.fn(u) * b.deriv(v)

    return _finish(Kernel2D("bump-product", fn, 1.0, (0.25, 0.25, 0.25, 0.25), b.sup**2, 1.0 / 32, dy, dz, decay_order, marginal="bump"))


KERNEL_FAMILIES = {
    "gaussian-2d": gaussian_2d,
    "gaussian-product": gaussian_product,
    "bump-product": bump_product,
}


@lru_cache(maxsize=None)
def make_kernel(name: str) -> Kernel2D:
    try:
        return KERNEL_FAMILIES[name]()
    except KeyError:
        raise ValueError(f"unknown kernel family {name!r}; choose from {sorted(KERNEL_FAMILIES)}") from None


def _marginal(name: str) -> Kernel1D:
    if name == "gaussian":
        return gaussian_1d()
    if name == "bump":
        return bump_1d()
    raise ValueError(f"unknown one-dimensional kernel {name!r}")


@dataclass(frozen=True, eq=False)
class PsiKernel:
    """``psi = phi - varphi (x) varphi`` and ``psi~ = 2 psi + y psi_y + z psi_z``."""

    phi: Kernel2D
    varphi: Kernel1D
    product: PlaneKernel = field(init=False)
    psi: PlaneKernel = field(init=False)
    psi_tilde: PlaneKernel = field(init=False)
    cancellation: float = field(init=False)

    def __post_init__(self):
        phi, vp = self.phi, self.varphi
        cutoff = max(phi.cutoff, vp.cutoff)
        panel = min(phi.panel, 0.5 if vp.name == "gaussian" else 1.0 / 32)

        def prod(u, v):
            return vp.fn(u) * vp.fn(v)

        def prod_dy(u, v):
            return vp.deriv(u) * vp.fn(v)

        def prod_dz(u, v):
            return vp.fn(u) * vp.deriv(v)

        def psi(u, v):
            return phi.fn(u, v) - prod(u, v)

        def psi_dy(u, v):
            return phi.partial_y(u, v) - prod_dy(u, v)

        def psi_dz(u, v):
            return phi.partial_z(u, v) - prod_dz(u, v)

        quarter = (0.25, 0.25, 0.25, 0.25)
        product = PlaneKernel(f"{vp.name}(x){vp.name}", prod, vp.cutoff, quarter, vp.sup**2, panel)
        psi_k = PlaneKernel(
            f"psi[{phi.name}]",
            psi,
            cutoff,
            tuple(a - b for a, b in zip(phi.quadrant_masses, quarter)),
            phi.sup + vp.sup**2,
            panel,
        )
        object.__setattr__(self, "product", product)
        object.__setattr__(self, "psi", psi_k)
        object.__setattr__(self, "psi_tilde", psi_k.tilde(psi_dy, psi_dz, f"psi~[{phi.name}]"))
        c = _box_integral(psi, cutoff, panel)
        if abs(c) > 1e-10:
            raise ValueError(f"psi kernel does not cancel: integral {c!r}")
        object.__setattr__(self, "cancellation", c)

    def select(self, which: str) -> PlaneKernel:
        try:
            return {"phi": self.phi, "product": self.product, "psi": self.psi, "psi_tilde": self.psi_tilde}[which]
        except KeyError:
            raise ValueError(f"unknown kernel selector {which!r}") from None


@lru_cache(maxsize=None)
def make_psi_kernel(name: str, marginal: str | None = None) -> PsiKernel:
    phi = make_kernel(name)
    return PsiKernel(phi, _marginal(marginal or phi.marginal))


# --- convolutions ---------------------------------------------------------------


def _axis_rule(f: StepFunction, x: float, t: float, cutoff: float, panel: float, order: int):
    """Nodes, weights and ``f``-weighted weights along one kernel axis."""
    sup = f.support
    if sup is None:
        return None
    # u = (x - y) / t, so y in [lo, hi) maps to u in ((x - hi)/t, (x - lo)/t]
    lo = max(-cutoff, (x - sup[1]) / t)
    hi = min(cutoff, (x - sup[0]) / t)
    if not hi > lo:
        return None
    n = max(1, math.ceil((hi - lo) / panel))
    mapped = (x - f.breakpoints) / t
    mapped = mapped[(mapped > lo) & (mapped < hi)]
    edges = np.unique(np.concatenate((np.linspace(lo, hi, n + 1), mapped)))
    nodes, w = panel_nodes(edges, order)
    mids = 0.5 * (edges[:-1] + edges[1:])
    vals = np.repeat(np.asarray(f(x - t * mids), dtype=float), order)
    return nodes, w * vals


def bilinear_convolution(
    K: PlaneKernel, f: StepFunction, g: StepFunction, t: float, x: float, order: int = 8, panel: float | None = None
) -> float:
    """``K_t(f, g)(x)`` by tensor Gauss-Legendre on panels split at every breakpoint."""
    if not t > 0:
        raise ValueError("t must be positive")
    if order < 1 or (panel is not None and not panel > 0):
        raise ValueError("degenerate quadrature rule")
    panel = K.panel if panel is None else panel
    ru = _axis_rule(f, x, t, K.cutoff, panel, order)
    rv = _axis_rule(g, x, t, K.cutoff, panel, order)
    if ru is None or rv is None:
        return 0.0
    (nu, wu), (nv, wv) = ru, rv
    # chunk to keep the kernel matrix small
    total = 0.0
    step = max(1, 2_000_000 // max(nv.size, 1))
    for s in range(0, nu.size, step):
        total += float(wu[s : s + step] @ K(nu[s : s + step, None], nv[None, :]) @ wv)
    return total


def factorized_convolution(k: Kernel1D, f: StepFunction, t: float, x) -> np.ndarray:
    """``k_t * f (x) = sum_i v_i (F((x - a_i)/t) - F((x - b_i)/t))`` through the kernel's distribution function."""
    if not t > 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    if f.n_cells == 0:
        return np.zeros_like(x)
    a, b, v = f.breakpoints[:-1], f.breakpoints[1:], f.values
    xa = (x[..., None] - a) / t
    xb = (x[..., None] - b) / t
    return np.sum(v * (k.cdf(xa) - k.cdf(xb)), axis=-1)


def linear_convolution(k: Kernel1D, f: StepFunction, t: float, x: float) -> float:
    return float(factorized_convolution(k, f, t, x))


# --- families in t --------------------------------------------------------------


def _nearest_other_breakpoint(x: float, *fs: StepFunction) -> float:
    bps = np.concatenate([f.breakpoints for f in fs]) if fs else np.empty(0)
    d = np.abs(bps - x)
    d = d[d > 0]
    return float(d.min()) if d.size else math.inf


def _scale(f: StepFunction, g: StepFunction, x: float) -> float:
    sups = [s for s in (f.support, g.support) if s is not None]
    if not sups:
        return 1.0
    lo = min(s[0] for s in sups)
    hi = max(s[1] for s in sups)
    return (hi - lo) + max(lo - x, x - hi, 0.0) + 1.0


def default_t_params(f: StepFunction, g: StepFunction, x: float, per_octave: int = 16, cutoff: float = 12.0, reach: float = 64.0) -> np.ndarray:
    """Dyadic t-grid from where the kernel box sees no breakpoint to far beyond the supports."""
    delta = _nearest_other_breakpoint(x, f, g)
    big = _scale(f, g, x)
    small = min(delta, big) / cutoff / 2
    j_lo = math.floor(math.log2(small))
    j_hi = math.ceil(math.log2(reach * big))
    return dyadic_grid(j_lo, j_hi, per_octave)


def identity_family(
    K: PlaneKernel, f: StepFunction, g: StepFunction, x: float, t_params, with_limits: bool = True
) -> SampledFamily:
    t_params = np.asarray(t_params, dtype=float)
    vals = np.array([bilinear_convolution(K, f, g, float(t), x) for t in t_params])
    if not with_limits:
        return SampledFamily(t_params, vals)
    return SampledFamily.with_limits(t_params, vals, at_zero=K.limit_at_zero(f, g, x), at_inf=0.0)


def linear_family(k: Kernel1D, f: StepFunction, x: float, t_params, with_limits: bool = True) -> SampledFamily:
    t_params = np.asarray(t_params, dtype=float)
    vals = np.array([linear_convolution(k, f, float(t), x) for t in t_params])
    if not with_limits:
        return SampledFamily(t_params, vals)
    mid = 0.5 * (float(f.left_limit(x)) + float(f(x)))
    return SampledFamily.with_limits(t_params, vals, at_zero=mid, at_inf=0.0)


def variation_of_identity_family(
    K: PlaneKernel,
    f: StepFunction,
    g: StepFunction,
    x: float,
    rho: float,
    per_octave: int = 16,
    t_params=None,
    estimate: bool = True,
) -> VariationResult:
    """DP variation of ``t -> K_t(f, g)(x)`` on a dyadic grid plus the two limits.

    Every finite sub-family bounds the true variation from below.  With
    ``estimate`` the grid is refined once and the change is reported as
    ``error_estimate``.
    """
    if f.is_zero or g.is_zero:
        return VariationResult(0.0, error_estimate=0.0 if estimate else None)
    if t_params is None:
        t_params = default_t_params(f, g, x, per_octave, K.cutoff)
    res = variation_norm(identity_family(K, f, g, x, t_params), rho)
    if not estimate:
        return res
    t = np.asarray(t_params, dtype=float)
    finer = np.union1d(t, np.sqrt(t[:-1] * t[1:]))
    fine = variation_norm(identity_family(K, f, g, x, finer), rho)
    return VariationResult(res.value, res.witness, res.flags, abs(fine.value - res.value))


def product_rule_check(psi_k: PsiKernel, f: StepFunction, g: StepFunction, x: float, rho: float, t_params) -> tuple[float, float]:
    """``(V(k_t f k_t g), sup|k_t g| V(k_t f) + sup|k_t f| V(k_t g))`` on one grid."""
    ff = linear_family(psi_k.varphi, f, x, t_params)
    gg = linear_family(psi_k.varphi, g, x, t_params)
    lhs = variation_norm(ff.values * gg.values, rho).value
    rhs = np.max(np.abs(gg.values)) * variation_norm(ff, rho).value + np.max(np.abs(ff.values)) * variation_norm(gg, rho).value
    return lhs, float(rhs)


def triangle_split_check(psi_k: PsiKernel, f: StepFunction, g: StepFunction, x: float, rho: float, t_params) -> tuple[float, float]:
    """``(V(phi-family), V(product family) + V(psi-family))`` on one common grid."""
    phi = identity_family(psi_k.phi, f, g, x, t_params)
    prod = identity_family(psi_k.product, f, g, x, t_params)
    psi = SampledFamily(phi.params, phi.values - prod.values, phi.tags)
    lhs = variation_norm(phi, rho).value
    rhs = variation_norm(prod, rho).value + variation_norm(psi, rho).value
    return lhs, rhs


def long_variation_domination(psi_k: PsiKernel, f: StepFunction, g: StepFunction, x: float, rho: float, j_range: tuple[int, int]) -> tuple[float, float]:
    """``(V^L_rho(psi-family), (sum_j |psi_{2^j}(f, g)(x)|**2)**(1/2))`` over ``2**j``, ``j`` in range."""
    t = np.exp2(np.arange(j_range[0], j_range[1] + 1, dtype=float))
    fam = identity_family(psi_k.psi, f, g, x, t)
    vl = long_variation(fam, rho).value
    sq = math.sqrt(float(np.sum(fam.samples_only.values**2)))
    return vl, sq


# --- square functions -----------------------------------------------------------


@dataclass(frozen=True)
class SquareFunctionResult:
    value: float
    budget: float
    window: tuple[float, float]
    flags: tuple[str, ...] = ()


@lru_cache(maxsize=None)
def _outside_mass_table(K: PlaneKernel) -> tuple[np.ndarray, np.ndarray]:
    """``R -> int int_{max(|u|,|v|) > R} |K|`` on a grid of ``R``; model-based."""
    radii = np.linspace(0.0, K.cutoff, 49)
    absk = lambda u, v: np.abs(K(u, v))
    total = _box_integral(absk, K.cutoff, K.panel)
    masses = np.array([total - (_box_integral(absk, r, K.panel) if r > 0 else 0.0) for r in radii])
    masses = np.maximum.accumulate(np.maximum(masses, 0.0)[::-1])[::-1]
    return radii, masses


def _outside_mass(K: PlaneKernel, R: np.ndarray) -> np.ndarray:
    radii, masses = _outside_mass_table(K)
    # step up to the next tabulated radius below R: a majorant for a decreasing function
    idx = np.searchsorted(radii, np.asarray(R), side="right") - 1
    idx = np.clip(idx, 0, radii.size - 1)
    out = 1.1 * masses[idx]
    return np.where(np.asarray(R) >= K.cutoff, 0.0, out)


def square_function(
    psi_k: PsiKernel,
    f: StepFunction,
    g: StepFunction,
    x: float,
    which: str = "psi",
    t_window: tuple[float, float] | None = None,
    panels_per_octave: int = 2,
    order: int = 8,
) -> SquareFunctionResult:
    """``(int_0^inf |K_t(f, g)(x)|**2 dt/t)**(1/2)`` for ``K`` in ``{psi, psi_tilde}``.

    The window integral uses ``s = log t`` and composite Gauss-Legendre.  The
    tails are bounded by ``|K_t| <= sup|K| ||f||_1 ||g||_1 / t**2`` for large
    ``t`` and by ``2 ||f||_inf ||g||_inf`` times the kernel mass outside the
    box the breakpoint-free neighbourhood of ``x`` maps to, for small ``t``.
    Both tails are added to ``budget``; the value itself is the window part.
    """
    if which not in ("psi", "psi_tilde"):
        raise ValueError("square functions are defined for psi and psi_tilde")
    K = psi_k.select(which)
    if f.is_zero or g.is_zero:
        return SquareFunctionResult(0.0, 0.0, t_window or (0.0, 0.0))
    delta = _nearest_other_breakpoint(x, f, g)
    big = _scale(f, g, x)
    if t_window is None:
        t_window = (min(delta, big) / K.cutoff, 256.0 * big)
    t_lo, t_hi = t_window
    if not 0 < t_lo < t_hi:
        raise ValueError("empty t-window")
    if abs(K.limit_at_zero(f, g, x)) > 1e-14:
        return SquareFunctionResult(math.inf, math.inf, t_window, ("divergent",))
    s_lo, s_hi = math.log(t_lo), math.log(t_hi)
    n = max(1, math.ceil((s_hi - s_lo) / math.log(2.0) * panels_per_octave))
    nodes, w = panel_nodes(np.linspace(s_lo, s_hi, n + 1), order)
    vals = np.array([bilinear_convolution(K, f, g, math.exp(s), x) for s in nodes])
    inner = float(np.dot(w, vals * vals))
    # large-t tail
    a = K.sup * lp_norm(f, 1) * lp_norm(g, 1)
    tail_hi = a * a / (4.0 * t_hi**4)
    # small-t tail, integrated in log R where R = delta / t
    tail_lo = 0.0
    s_inf = lp_norm(f, math.inf) * lp_norm(g, math.inf)
    r_lo = delta / t_lo
    if r_lo < K.cutoff:
        rn, rw = panel_nodes(np.linspace(math.log(r_lo), math.log(K.cutoff), 17), 8)
        tail_lo = float(np.dot(rw, (2.0 * s_inf * _outside_mass(K, np.exp(rn))) ** 2))
    value = math.sqrt(inner)
    budget = math.sqrt(inner + tail_hi + tail_lo) - value
    return SquareFunctionResult(value, budget, (t_lo, t_hi))


def short_variation_square_bound(psi_k: PsiKernel, f: StepFunction, g: StepFunction, x: float, per_octave: int = 16) -> tuple[float, float]:
    """``(S_2(psi-family)**2, G * G~)`` at ``x``; their quotient is the chain's constant."""
    t = default_t_params(f, g, x, per_octave, psi_k.psi.cutoff)
    fam = identity_family(psi_k.psi, f, g, x, t)
    s2 = short_variation(fam)
    G = square_function(psi_k, f, g, x, "psi").value
    Gt = square_function(psi_k, f, g, x, "psi_tilde").value
    return s2 * s2, G * Gt


# --- derivative identity --------------------------------------------------------


def derivative_kernel_identity_check(
    psi_k: PsiKernel, f: StepFunction, g: StepFunction, x: float, t: float, h_rel: float = 1e-4
) -> tuple[float, float]:
    """``(t d/dt psi_t(f, g)(x), -psi~_t(f, g)(x))`` with a central difference of step ``h_rel t``."""
    if not t > 0:
        raise ValueError("t must be positive")
    h = h_rel * t
    up = bilinear_convolution(psi_k.psi, f, g, t + h, x)
    dn = bilinear_convolution(psi_k.psi, f, g, t - h, x)
    lhs = t * (up - dn) / (2.0 * h)
    rhs = -bilinear_convolution(psi_k.psi_tilde, f, g, t, x)
    return lhs, rhs


def richardson_slope(psi_k: PsiKernel, f: StepFunction, g: StepFunction, x: float, t: float, h_rels=(1e-2, 5e-3, 2.5e-3, 1.25e-3)) -> tuple[float, np.ndarray]:
    """Fitted exponent of ``|lhs - rhs|`` against ``h`` and the mismatches."""
    mism = []
    for h in h_rels:
        lhs, rhs = derivative_kernel_identity_check(psi_k, f, g, x, t, h)
        mism.append(abs(lhs - rhs))
    mism = np.array(mism)
    slope = float(np.polyfit(np.log(h_rels), np.log(mism), 1)[0])
    return slope, mism


# --- kernel size and regularity -------------------------------------------------


def direction_grid(radii=(1.0, 2.0, 4.0, 8.0), n_dir: int = 32) -> np.ndarray:
    """Points with ``|y| + |z| = r`` for each radius, ``n_dir`` directions each.

    With ``n_dir`` a multiple of 8 the axes and diagonals are always included,
    so refining the directions keeps every earlier point.
    """
    theta = 2.0 * math.pi * np.arange(n_dir) / n_dir
    c, s = np.cos(theta), np.sin(theta)
    d = np.abs(c) + np.abs(s)
    pts = [(r * c / d, r * s / d) for r in radii]
    return np.concatenate([np.column_stack(p) for p in pts])


def _kernel_t_grid(scale: float, per_octave: int) -> np.ndarray:
    j = math.floor(math.log2(scale))
    return dyadic_grid(j - 8, j + 12, per_octave)


def _point_family(fn: Callable, y: float, z: float, t: np.ndarray) -> np.ndarray:
    return fn(y / t, z / t) / (t * t)


def _v1_majorant(fn_tilde: Callable, y: float, z: float, scale: float) -> float:
    """``int_0^inf |d/dt K_t(y, z)| dt = int |K~(y/t, z/t)| t**-2 d(log t)``."""
    j = math.floor(math.log2(scale))
    nodes, w = panel_nodes(np.linspace((j - 10) * math.log(2), (j + 30) * math.log(2), 641), 8)
    t = np.exp(nodes)
    return float(np.dot(w, np.abs(_point_family(fn_tilde, y, z, t))))


def _check_grid(points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any((pts[:, 0] == 0) & (pts[:, 1] == 0)):
        raise ValueError("the origin is not allowed in the (y, z) grid")
    return pts


def kernel_size_condition(phi: Kernel2D, rho: float, points=None, per_octave: int = 32) -> tuple[float, list[dict]]:
    """``sup (|y| + |z|)**2 V_rho({phi_t(y, z)}_t)`` over a point grid.

    Each row also carries the weighted ``V_1`` majorant and the change of the
    weighted value when the t-grid is refined twofold.
    """
    pts = _check_grid(direction_grid() if points is None else points)
    tilde = phi.phi_tilde.fn
    rows = []
    for y, z in pts:
        s = abs(y) + abs(z)
        vals = []
        for m in (per_octave, 2 * per_octave):
            t = _kernel_t_grid(s, m)
            fam = SampledFamily.with_limits(t, _point_family(phi.fn, y, z, t), at_zero=0.0, at_inf=0.0)
            vals.append(variation_norm(fam, rho).value)
        rows.append(
            {
                "y": float(y),
                "z": float(z),
                "weighted_value": s * s * vals[0],
                "v1_weighted": s * s * _v1_majorant(tilde, y, z, s),
                "refinement_delta": s * s * (vals[1] - vals[0]),
            }
        )
    return max(r["weighted_value"] for r in rows), rows


def kernel_regularity_condition(
    phi: Kernel2D, rho: float, points=None, h_schedule=(0.1, 0.05), axis: str = "y", per_octave: int = 32
) -> tuple[float, list[dict]]:
    """``sup (|y| + |z|)**3 V_rho({phi_t(y, z) - phi_t(y', z)}_t) / |h|`` with ``y' = y + h``.

    ``axis = "z"`` perturbs the second argument instead.  Steps must satisfy
    ``|h| <= max(|y|, |z|) / 2``.
    """
    if axis not in ("y", "z"):
        raise ValueError("axis must be 'y' or 'z'")
    pts = _check_grid(direction_grid() if points is None else points)
    tilde = phi.phi_tilde.fn
    rows = []
    for y, z in pts:
        s = abs(y) + abs(z)
        for h in h_schedule:
            if abs(h) > max(abs(y), abs(z)) / 2:
                raise ValueError(f"step {h} too large at ({y}, {z})")
            if h == 0:
                rows.append({"y": float(y), "z": float(z), "h": 0.0, "axis": axis, "weighted_value": 0.0, "v1_weighted": 0.0})
                continue
            y2, z2 = (y + h, z) if axis == "y" else (y, z + h)
            t = _kernel_t_grid(s, per_octave)
            diff = _point_family(phi.fn, y, z, t) - _point_family(phi.fn, y2, z2, t)
            fam = SampledFamily.with_limits(t, diff, at_zero=0.0, at_inf=0.0)
            v = variation_norm(fam, rho).value
            j = math.floor(math.log2(s))
            nodes, w = panel_nodes(np.linspace((j - 10) * math.log(2), (j + 30) * math.log(2), 641), 8)
            tt = np.exp(nodes)
            v1 = float(np.dot(w, np.abs(_point_family(tilde, y, z, tt) - _point_family(tilde, y2, z2, tt))))
            rows.append(
                {
                    "y": float(y),
                    "z": float(z),
                    "h": float(h),
                    "axis": axis,
                    "weighted_value": s**3 * v / abs(h),
                    "v1_weighted": s**3 * v1 / abs(h),
                }
            )
    return max(r["weighted_value"] for r in rows), rows
