import itertools
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from bivar.signal import StepFunction

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def dyadic_steps(draw, scale=-2, radius=4, max_cells=6, nonzero=True):
    """Step functions with breakpoints on the ``2**scale`` lattice inside ``[-radius, radius]``."""
    unit = math.ldexp(1.0, scale)
    slots = int(2 * radius / unit)
    cuts = draw(st.lists(st.integers(0, slots), min_size=2, max_size=max_cells + 1, unique=True))
    cuts.sort()
    vals = draw(
        st.lists(
            st.integers(-8, 8).map(lambda k: k / 4),
            min_size=len(cuts) - 1,
            max_size=len(cuts) - 1,
        )
    )
    if nonzero and all(v == 0 for v in vals):
        vals[0] = 1.0
    return StepFunction(-radius + np.array(cuts) * unit, vals)


def random_step(rng, scale=-2, radius=4, max_cells=6, dyadic_values=False):
    """Random step function with breakpoints on the ``2**scale`` lattice.

    ``dyadic_values`` draws values from multiples of 1/16, so every dyadic mean is a float.
    """
    unit = math.ldexp(1.0, scale)
    slots = int(2 * radius / unit)
    n = int(rng.integers(1, max_cells + 1))
    cuts = np.sort(rng.choice(slots + 1, size=n + 1, replace=False))
    if dyadic_values:
        vals = rng.integers(-128, 129, size=n) / 16.0
    else:
        vals = rng.uniform(-2, 2, size=n)
    return StepFunction(-radius + cuts * unit, vals)


def brute_force_variation(a, rho):
    """Enumerate every index subsequence of length >= 2."""
    a = np.asarray(a, dtype=float)
    n = a.size
    best = 0.0
    for k in range(2, n + 1):
        for idx in itertools.combinations(range(n), k):
            s = float(np.sum(np.abs(np.diff(a[list(idx)])) ** rho))
            best = max(best, s)
    return best ** (1.0 / rho)


class SubsetOracle:
    """Vectorised enumeration: one row per index subset, summing its consecutive pair weights."""

    def __init__(self):
        self._mats = {}

    def _matrix(self, n):
        if n not in self._mats:
            rows = []
            for mask in range(1, 1 << n):
                idx = [i for i in range(n) if mask >> i & 1]
                if len(idx) < 2:
                    continue
                row = np.zeros(n * n)
                for i, j in zip(idx[:-1], idx[1:]):
                    row[i * n + j] = 1.0
                rows.append(row)
            self._mats[n] = np.array(rows)
        return self._mats[n]

    def __call__(self, a, rho):
        a = np.asarray(a, dtype=float)
        n = a.size
        if n < 2:
            return 0.0
        D = np.abs(a[:, None] - a[None, :]) ** rho
        return float(np.max(self._matrix(n) @ D.ravel())) ** (1.0 / rho)


@pytest.fixture(scope="session")
def subset_oracle():
    return SubsetOracle()


@pytest.fixture
def chi():
    return StepFunction.indicator(0.0, 1.0)


def window_mean_oracle(f, t, x):
    """``M_t f(x)`` from cell overlaps measured relative to ``x``.

    Offsets ``lo - x``, ``hi - x`` are formed first, so a fully covered window
    has overlap exactly ``t`` and small windows keep full relative accuracy.
    Arithmetic runs in extended precision and is rounded once at the end; the
    rounding is monotone, so a monotone stretch of the family stays monotone.
    """
    ld = np.longdouble
    t = np.asarray(t, dtype=ld)[:, None]
    lo = f.breakpoints[:-1].astype(ld)[None, :] - ld(x)
    hi = f.breakpoints[1:].astype(ld)[None, :] - ld(x)
    ov = np.clip(np.minimum(hi, t / 2) - np.maximum(lo, -t / 2), ld(0), None)
    return np.sum(ov * f.values.astype(ld)[None, :], axis=1) / t[:, 0]


def dense_trace(f, g, x, t):
    """Oracle samples of the bilinear average family with both limits appended."""
    from bivar.variation import SampledFamily

    q = (window_mean_oracle(f, t, x) * window_mean_oracle(g, t, x)).astype(float)
    lim = 0.25 * (f(x) + f.left_limit(x)) * (g(x) + g.left_limit(x))
    return SampledFamily.with_limits(t, q, at_zero=float(lim), at_inf=0.0)


# --- acceptance reporting ------------------------------------------------------------

ACCEPTANCE: dict[str, list] = {}


@pytest.fixture
def criterion(request):
    """``criterion(cid, text)`` registers a result line that is filled in when the test ends."""
    entry = {}

    def register(cid, text):
        entry.update(cid=cid, text=text, detail="")
        ACCEPTANCE.setdefault(cid, []).append(entry)
        return entry

    yield register
    if "cid" in entry:
        rep = getattr(request.node, "rep_call", None)
        entry["ok"] = bool(rep is not None and rep.passed and not getattr(rep, "wasxfail", None))


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    if rep.when == "call":
        item.rep_call = rep
    return rep


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[cid]
        ok = all(p.get("ok", False) for p in parts)
        text = parts[0]["text"]
        details = "; ".join(p["detail"] for p in parts if p["detail"])
        tr.write_line(f"{cid} {'PASS' if ok else 'FAIL'}  {text}" + (f"  [{details}]" if details else ""))
