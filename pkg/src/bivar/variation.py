"""Exact rho-variation of sampled families, long/short variation and their comparison."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _dp
from .quadrature import composite_gauss_legendre

__all__ = [
    "SampledFamily",
    "VariationResult",
    "variation_norm",
    "sup_bound_check",
    "long_variation",
    "short_variation",
    "compare_long_short",
    "LongShortComparison",
    "bergh_peetre_ratio",
    "is_power_of_two",
    "dyadic_grid",
    "variation_values",
]

LIMIT_ZERO = "limit0"
LIMIT_INF = "limitinf"


@dataclass(frozen=True)
class SampledFamily:
    """Values of a family on a strictly increasing parameter grid.

    ``tags`` marks pseudo-samples: analytically known limits appended at
    ``params = 0`` / ``-inf`` (tag ``"limit0"``) or ``params = inf``
    (tag ``"limitinf"``).  Ordinary samples carry ``None``.
    """

    params: np.ndarray
    values: np.ndarray
    tags: tuple = ()

    def __post_init__(self):
        p = np.array(self.params, dtype=float).ravel()
        v = np.array(self.values, dtype=float).ravel()
        if p.shape != v.shape:
            raise ValueError(f"params and values differ in length ({p.size} vs {v.size})")
        if p.size > 1 and np.any(np.diff(p) <= 0):
            raise ValueError("params must be strictly increasing")
        tags = tuple(self.tags) if self.tags else (None,) * p.size
        if len(tags) != p.size:
            raise ValueError("tags must match params")
        p.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "tags", tags)

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "SampledFamily":
        v = np.asarray(values, dtype=float)
        return cls(np.arange(v.size, dtype=float), v)

    @classmethod
    def with_limits(
        cls,
        params,
        values,
        at_zero: float | None = None,
        at_inf: float | None = None,
        zero_param: float = 0.0,
    ) -> "SampledFamily":
        """Samples plus tagged limit pseudo-samples at ``zero_param`` and ``inf``."""
        p = list(np.asarray(params, dtype=float))
        v = list(np.asarray(values, dtype=float))
        tags: list = [None] * len(p)
        if at_zero is not None:
            p.insert(0, zero_param)
            v.insert(0, at_zero)
            tags.insert(0, LIMIT_ZERO)
        if at_inf is not None:
            p.append(math.inf)
            v.append(at_inf)
            tags.append(LIMIT_INF)
        return cls(np.array(p), np.array(v), tuple(tags))

    def __len__(self) -> int:
        return int(self.params.size)

    def subset(self, mask) -> "SampledFamily":
        idx = np.flatnonzero(mask)
        return SampledFamily(self.params[idx], self.values[idx], tuple(self.tags[i] for i in idx))

    @property
    def samples_only(self) -> "SampledFamily":
        return self.subset([t is None for t in self.tags])


@dataclass(frozen=True)
class VariationResult:
    value: float
    witness: tuple[int, ...] = ()
    flags: tuple[str, ...] = ()
    error_estimate: float | None = field(default=None, compare=False)

    def __float__(self) -> float:
        return self.value


def _as_values(seq) -> np.ndarray:
    if isinstance(seq, SampledFamily):
        return np.asarray(seq.values, dtype=float)
    return np.asarray(seq, dtype=float).ravel()


def _check_rho(rho: float) -> None:
    if not rho >= 1:
        raise ValueError(f"rho must be >= 1, got {rho}")


def variation_norm(seq, rho: float) -> VariationResult:
    """Exact ``sup (sum |a_{n_i} - a_{n_{i+1}}|**rho)**(1/rho)`` over increasing index systems.

    ``seq`` is a :class:`SampledFamily` or a plain sequence.  The witness lists
    indices (into ``seq``) of an optimal subsequence; ties go to the shortest
    witness, then the lexicographically smallest.
    """
    _check_rho(rho)
    a = _as_values(seq)
    if not np.all(np.isfinite(a)):
        raise ValueError("sequence contains non-finite values")
    if a.size < 2:
        return VariationResult(0.0)
    idx = _dp.turning_points(a)
    sub = a[idx]
    best, length, nxt = _dp.suffix_dp(sub, float(rho))
    top = best.max()
    if top <= 0.0:
        return VariationResult(0.0)
    cands = np.flatnonzero(best == top)
    start = cands[np.argmin(length[cands])]
    path = [int(start)]
    while nxt[path[-1]] >= 0:
        path.append(int(nxt[path[-1]]))
    return VariationResult(float(top ** (1.0 / rho)), tuple(int(idx[k]) for k in path))


def variation_values(rows: np.ndarray, rho: float) -> np.ndarray:
    """Variation of each row of a 2-D array (NaN entries ignored); values only."""
    _check_rho(rho)
    rows = np.ascontiguousarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[None, :]
    return _dp.row_variations(rows, float(rho))


def sup_bound_check(seq, rho: float, t0_index: int) -> tuple[float, float]:
    """``(sup |a|, |a_{t0}| + V_rho(a))``; the first never exceeds the second."""
    a = _as_values(seq)
    if not 0 <= t0_index < a.size:
        raise IndexError(f"t0_index {t0_index} out of range for length {a.size}")
    lhs = float(np.max(np.abs(a)))
    rhs = float(abs(a[t0_index]) + variation_norm(a, rho).value)
    return lhs, rhs


def is_power_of_two(t: float) -> bool:
    if not (t > 0 and math.isfinite(t)):
        return False
    return math.frexp(t)[0] == 0.5


def _dyadic_mask(family: SampledFamily) -> np.ndarray:
    return np.array(
        [tag is not None or is_power_of_two(t) for t, tag in zip(family.params, family.tags)]
    )


def long_variation(family: SampledFamily, rho: float) -> VariationResult:
    """rho-variation along the dyadic parameters ``t = 2**n`` (limit tags kept)."""
    mask = _dyadic_mask(family)
    n_dyadic = sum(1 for t, tag in zip(family.params, family.tags) if tag is None and is_power_of_two(t))
    if n_dyadic == 0:
        return VariationResult(0.0, flags=("no-dyadic-points",))
    idx = np.flatnonzero(mask)
    res = variation_norm(family.values[idx], rho)
    return VariationResult(res.value, tuple(int(idx[k]) for k in res.witness))


def _blocks(family: SampledFamily):
    fam = family.samples_only
    t = fam.params
    pos = t > 0
    if not np.any(pos):
        return
    t_pos = t[pos]
    v_pos = fam.values[pos]
    j_lo = math.floor(math.log2(t_pos[0]))
    j_hi = math.floor(math.log2(t_pos[-1]))
    for j in range(j_lo, j_hi + 1):
        a, b = math.ldexp(1.0, j), math.ldexp(1.0, j + 1)
        sel = (t_pos >= a) & (t_pos <= b)
        if np.count_nonzero(sel) >= 2:
            yield j, v_pos[sel]


def short_variation(family: SampledFamily) -> float:
    """``(sum_j V_2(block_j)**2)**(1/2)`` over closed blocks ``[2**j, 2**(j+1)]``."""
    total = 0.0
    for _, vals in _blocks(family):
        total += variation_norm(vals, 2.0).value ** 2
    return math.sqrt(total)


@dataclass(frozen=True)
class LongShortComparison:
    v: float
    vl: float
    s2: float
    ratio: float


def compare_long_short(family: SampledFamily, rho: float) -> LongShortComparison:
    """Full, long and short variation of one family and ``v / (vl + s2)``."""
    v = variation_norm(family, rho).value
    vl = long_variation(family, rho).value
    s2 = short_variation(family)
    denom = vl + s2
    if denom == 0:
        if v > 0:
            raise ValueError("inconsistent sampling: positive variation with zero long and short parts")
        return LongShortComparison(0.0, 0.0, 0.0, 0.0)
    return LongShortComparison(v, vl, s2, v / denom)


def bergh_peetre_ratio(
    a: Callable[[np.ndarray], np.ndarray],
    da: Callable[[np.ndarray], np.ndarray],
    rho: float,
    window: tuple[float, float],
    n_samples: int = 200_001,
    panels: int = 2000,
    order: int = 8,
) -> tuple[float, float]:
    """``(V_rho(a), ||a||_rho**(1/rho') * ||a'||_rho**(1/rho))`` on ``window``.

    The variation is taken over ``n_samples`` equispaced samples; the norms by
    composite Gauss-Legendre with ``panels`` panels of ``order`` nodes.
    """
    if not rho > 1:
        raise ValueError("rho must be > 1")
    lo, hi = window
    t = np.linspace(lo, hi, n_samples)
    lhs = variation_norm(a(t), rho).value
    na = composite_gauss_legendre(lambda s: np.abs(a(s)) ** rho, lo, hi, panels, order)
    nda = composite_gauss_legendre(lambda s: np.abs(da(s)) ** rho, lo, hi, panels, order)
    if not (math.isfinite(na) and math.isfinite(nda)):
        raise ValueError("non-finite quadrature in Bergh-Peetre estimate")
    rho_conj = rho / (rho - 1.0)
    rhs = (na ** (1.0 / rho)) ** (1.0 / rho_conj) * (nda ** (1.0 / rho)) ** (1.0 / rho)
    return float(lhs), float(rhs)


def dyadic_grid(j_lo: int, j_hi: int, per_octave: int) -> np.ndarray:
    """``2**(k/per_octave)`` for ``j_lo <= k/per_octave <= j_hi``; contains every ``2**j`` exactly."""
    if per_octave < 1 or j_hi < j_lo:
        raise ValueError("empty dyadic grid")
    k = np.arange(j_lo * per_octave, j_hi * per_octave + 1)
    return np.exp2(k / per_octave)
