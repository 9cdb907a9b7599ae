"""Seeded corpora, ratio sweeps and deterministic reports."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .approx_identity import make_kernel, variation_of_identity_family
from .averages import XGrid, lp_of_variation, sample_family
from .czd import weak_ratio
from .martingale import lp_of_martingale_variation
from .signal import StepFunction, dilate, lp_norm
from .variation import compare_long_short, dyadic_grid

__all__ = [
    "EXPERIMENTS",
    "CORPUS_KINDS",
    "CorpusSpec",
    "GridSpec",
    "ExperimentConfig",
    "generate_corpus",
    "ReportRow",
    "run_case",
    "run_sweep",
    "emit_report",
    "load_report",
    "format_rows",
    "with_dilation",
]

EXPERIMENTS = ("averages-lp", "martingale-lp", "identity-lp", "weak-endpoint", "long-short")
CORPUS_KINDS = ("dyadic-random", "bump-train", "near-delta")
HOLDER_TOL = 1e-12


@dataclass(frozen=True)
class CorpusSpec:
    count: int = 10
    kind: str = "dyadic-random"
    radius: float = 4.0
    value_range: tuple[float, float] = (-2.0, 2.0)
    scale: int = -2
    max_cells: int = 8

    def __post_init__(self):
        object.__setattr__(self, "value_range", tuple(float(v) for v in self.value_range))
        if self.count < 0:
            raise ValueError("corpus count must be >= 0")
        if self.kind not in CORPUS_KINDS:
            raise ValueError(f"unknown corpus kind {self.kind!r}; choose from {CORPUS_KINDS}")
        if not self.radius > 0:
            raise ValueError("support radius must be positive")
        lo, hi = self.value_range
        if not hi > lo:
            raise ValueError("value range must be a nonempty interval")
        if self.max_cells < 1:
            raise ValueError("max_cells must be >= 1")
        if math.ldexp(1.0, self.scale) > self.radius:
            raise ValueError("dyadic scale is coarser than the support radius")


@dataclass(frozen=True)
class GridSpec:
    x_panels: int = 512
    x_margin: float = 8.0
    per_octave: int = 8
    x_points: int = 24
    lam_count: int = 16
    lam_range: tuple[float, float] = (1e-3, 2.0)
    weak_cells: int = 512
    weak_depth: int = 8

    def __post_init__(self):
        object.__setattr__(self, "lam_range", tuple(float(v) for v in self.lam_range))
        if min(self.x_panels, self.per_octave, self.x_points, self.lam_count, self.weak_cells) < 1 or self.weak_depth < 0:
            raise ValueError("grid resolutions must be positive")
        if not 0 < self.lam_range[0] < self.lam_range[1]:
            raise ValueError("lambda range must satisfy 0 < lo < hi")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep depends on; ``(config, seed)`` fixes the report bytes."""

    seed: int = 0
    experiment: str = "averages-lp"
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    exponents: tuple[tuple[float, float, float, float], ...] = ((2.0, 2.0, 1.0, 3.0),)
    grids: GridSpec = field(default_factory=GridSpec)
    refine: bool = False
    dilation: float = 1.0
    kernel: str = "gaussian-2d"

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if not self.dilation > 0:
            raise ValueError("dilation must be positive")
        exps = tuple(tuple(float(v) for v in e) for e in self.exponents)
        for e in exps:
            if len(e) != 4:
                raise ValueError(f"exponent tuple {e} must be (p1, p2, p, rho)")
            p1, p2, p, rho = e
            if min(p1, p2) < 1 or not p > 0 or rho < 1:
                raise ValueError(f"exponents out of range in {e}")
            if abs(1.0 / p - 1.0 / p1 - 1.0 / p2) > HOLDER_TOL:
                raise ValueError(f"exponents {e} violate 1/p = 1/p1 + 1/p2")
        object.__setattr__(self, "exponents", exps)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        if "corpus" in d:
            d["corpus"] = CorpusSpec(**d["corpus"])
        if "grids" in d:
            d["grids"] = GridSpec(**d["grids"])
        if "exponents" in d:
            d["exponents"] = tuple(tuple(e) for e in d["exponents"])
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return asdict(self)


# --- corpora --------------------------------------------------------------------


def _dyadic_random(rng: np.random.Generator, cs: CorpusSpec) -> StepFunction:
    unit = math.ldexp(1.0, cs.scale)
    n_slots = int(2 * cs.radius / unit)
    while True:
        n = int(rng.integers(1, cs.max_cells + 1))
        cuts = np.sort(rng.choice(n_slots + 1, size=n + 1, replace=False))
        bps = -cs.radius + cuts * unit
        vals = rng.uniform(*cs.value_range, size=n)
        f = StepFunction(bps, vals).normalize()
        if not f.is_zero:
            return f


def _bump_train(rng: np.random.Generator, cs: CorpusSpec) -> StepFunction:
    k = int(rng.integers(1, min(4, cs.max_cells) + 1))
    unit = math.ldexp(1.0, cs.scale)
    slots = int(2 * cs.radius / unit)
    starts = np.sort(rng.choice(slots, size=k, replace=False))
    pieces = []
    for i, s in enumerate(starts):
        room = (starts[i + 1] if i + 1 < k else slots) - s
        width = int(2 ** rng.integers(0, max(1, int(math.log2(room))) + 1))
        width = min(width, room)
        h = rng.uniform(*cs.value_range)
        if h == 0:
            h = cs.value_range[1]
        a = -cs.radius + s * unit
        pieces.append((a, a + width * unit, float(h)))
    return StepFunction.from_pieces(pieces).normalize()


def _near_delta(rng: np.random.Generator, cs: CorpusSpec) -> StepFunction:
    k = int(rng.integers(0, 21))
    width = math.ldexp(1.0, -k)
    slots = int(2 * cs.radius / width)
    a = -cs.radius + int(rng.integers(0, slots)) * width
    return StepFunction.indicator(a, a + width, math.ldexp(1.0, k))


_GENERATORS = {"dyadic-random": _dyadic_random, "bump-train": _bump_train, "near-delta": _near_delta}


def generate_corpus(cfg: ExperimentConfig) -> list[tuple[StepFunction, StepFunction]]:
    """One generator per case, seeded by ``(seed, case_id)``, so cases are independent of order."""
    gen = _GENERATORS[cfg.corpus.kind]
    out = []
    for case_id in range(cfg.corpus.count):
        rng = np.random.default_rng([cfg.seed, case_id])
        f, g = gen(rng, cfg.corpus), gen(rng, cfg.corpus)
        if cfg.dilation != 1.0:
            f, g = dilate(f, cfg.dilation, "l1"), dilate(g, cfg.dilation, "l1")
        out.append((f, g))
    return out


# --- reports --------------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    experiment: str
    seed: int
    case_id: int
    p1: float
    p2: float
    p: float
    rho: float
    value: float
    error_budget: float
    refinement_delta: float
    flags: str = ""


_COLUMNS = tuple(f.name for f in fields(ReportRow))
_INT_COLS = {"seed", "case_id"}
_STR_COLS = {"experiment", "flags"}


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def _parse(col: str, s: str):
    if col in _STR_COLS:
        return s
    if col in _INT_COLS:
        return int(s)
    return float(s)


def format_rows(rows, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in _COLUMNS])
        return buf.getvalue()
    if fmt == "json":
        items = []
        for r in rows:
            parts = []
            for c in _COLUMNS:
                v = getattr(r, c)
                if c in _STR_COLS:
                    parts.append(f"{json.dumps(c)}: {json.dumps(v)}")
                else:
                    s = _fmt(v)
                    if s in ("nan", "inf", "-inf"):
                        s = json.dumps(s)
                    parts.append(f"{json.dumps(c)}: {s}")
            items.append("  {" + ", ".join(parts) + "}")
        return "[\n" + ",\n".join(items) + ("\n" if items else "") + "]\n"
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(rows, fmt: str, path) -> None:
    """Stable column order, 17 significant digits; JSON mirrors the CSV fields."""
    text = format_rows(rows, fmt)
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report {path}: {exc}") from exc


def load_report(path, fmt: str | None = None) -> list[ReportRow]:
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read report {path}: {exc}") from exc
    if fmt == "json":
        # keep number tokens as text: json.loads reads -0 as the integer 0
        data = json.loads(text, parse_int=str, parse_float=str)
        return [ReportRow(**{c: _parse(c, d[c]) for c in _COLUMNS}) for d in data]
    reader = csv.DictReader(io.StringIO(text))
    return [ReportRow(**{c: _parse(c, d[c]) for c in _COLUMNS}) for d in reader]


# --- experiments ----------------------------------------------------------------


def _lam_grid(cfg: ExperimentConfig) -> np.ndarray:
    lo, hi = cfg.grids.lam_range
    # lambda scales like delta**2 under the L1-preserving dilation
    return np.geomspace(lo, hi, cfg.grids.lam_count) * cfg.dilation**2


def _norm_product(f, g, p1, p2) -> float:
    return lp_norm(f, p1) * lp_norm(g, p2)


def _averages_lp(cfg, f, g, e):
    p1, p2, p, rho = e
    grid = XGrid.around(f, g, cfg.grids.x_margin, cfg.grids.x_panels)
    core, tail = lp_of_variation(f, g, rho, p, grid, return_parts=True)
    denom = _norm_product(f, g, p1, p2)
    val = (core + tail) ** (1 / p) / denom
    budget = ((core + tail) ** (1 / p) - core ** (1 / p)) / denom
    delta = math.nan
    if cfg.refine:
        delta = lp_of_variation(f, g, rho, p, grid.refined()) / denom - val
    return val, budget, delta


def _martingale_lp(cfg, f, g, e):
    p1, p2, p, rho = e
    return lp_of_martingale_variation(f, g, rho, p) / _norm_product(f, g, p1, p2), 0.0, 0.0


def _identity_lp(cfg, f, g, rho, p, n):
    K = make_kernel(cfg.kernel)
    grid = XGrid.around(f, g, 1.0, n, order=2)
    xs, w = grid.nodes()
    v = np.array([variation_of_identity_family(K, f, g, float(x), rho, cfg.grids.per_octave, estimate=False).value for x in xs])
    return float(np.dot(w, v**p)) ** (1 / p)


def _identity_lp_ratio(cfg, f, g, e):
    # no far-field majorant for the smooth kernels: the budget is left open
    p1, p2, p, rho = e
    denom = _norm_product(f, g, p1, p2)
    n = max(1, cfg.grids.x_points // 2)
    val = _identity_lp(cfg, f, g, rho, p, n) / denom
    delta = _identity_lp(cfg, f, g, rho, p, 2 * n) / denom - val if cfg.refine else math.nan
    return val, math.nan, delta


def _weak_endpoint(cfg, f, g, e):
    rho = e[3]
    lam = _lam_grid(cfg)
    w = weak_ratio(f, g, rho, lam, cfg.grids.weak_cells, cfg.grids.weak_depth)
    lo_ratio = max((r.lam * r.measure_lo**2 for r in w.rows), default=0.0) / (lp_norm(f, 1) * lp_norm(g, 1))
    delta = math.nan
    if cfg.refine:
        delta = weak_ratio(f, g, rho, lam, 2 * cfg.grids.weak_cells, cfg.grids.weak_depth).sup_ratio - w.sup_ratio
    return w.sup_ratio, w.sup_ratio - lo_ratio, delta


def _long_short(cfg, f, g, e):
    rho = e[3]
    lo = min(f.support[0], g.support[0])
    hi = max(f.support[1], g.support[1])
    xs = np.linspace(lo - 1.0, hi + 1.0, cfg.grids.x_points + 2)[1:-1]
    width = hi - lo + 4.0

    def worst(m):
        t = dyadic_grid(math.floor(math.log2(width)) - 12, math.ceil(math.log2(width)) + 6, m)
        return max(compare_long_short(sample_family(f, g, float(x), t), rho).ratio for x in xs)

    val = worst(cfg.grids.per_octave)
    delta = worst(2 * cfg.grids.per_octave) - val if cfg.refine else math.nan
    return val, 0.0, delta


_DISPATCH = {"averages-lp": _averages_lp, "martingale-lp": _martingale_lp, "identity-lp": _identity_lp_ratio, "weak-endpoint": _weak_endpoint, "long-short": _long_short}


def run_case(cfg: ExperimentConfig, case_id: int, pair) -> list[ReportRow]:
    f, g = pair
    fn = _DISPATCH[cfg.experiment]
    rows = []
    for e in cfg.exponents:
        val, budget, delta = fn(cfg, f, g, e)
        flags = "diagnostic" if e[3] <= 2 else ""
        rows.append(ReportRow(cfg.experiment, cfg.seed, case_id, *e, float(val), float(budget), float(delta), flags))
    return rows


def run_sweep(cfg: ExperimentConfig, threads: int = 1) -> list[ReportRow]:
    """One row per (case, exponent tuple) in case order, whatever the thread count."""
    if cfg.experiment not in _DISPATCH:
        raise ValueError(f"unknown experiment {cfg.experiment!r}")
    corpus = generate_corpus(cfg)
    if threads <= 1:
        chunks = [run_case(cfg, i, pair) for i, pair in enumerate(corpus)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda a: run_case(cfg, *a), enumerate(corpus)))
    return [r for chunk in chunks for r in chunk]


def with_dilation(cfg: ExperimentConfig, delta: float) -> ExperimentConfig:
    return replace(cfg, dilation=cfg.dilation * delta)
