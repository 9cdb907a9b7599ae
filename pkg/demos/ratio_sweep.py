"""Seeded L^p ratio sweep and its dilation check.

Each row is ||V_rho(Q(f, g))||_p / (||f||_p1 ||g||_p2) for one random dyadic pair.
Rescaling both inputs so that their L^p1 and L^p2 norms are preserved leaves every ratio unchanged.
"""
from bivar.experiments import CorpusSpec, ExperimentConfig, run_sweep, with_dilation

cfg = ExperimentConfig(seed=11, experiment="averages-lp", corpus=CorpusSpec(count=6), exponents=((2.0, 2.0, 1.0, 3.0),))
rows = run_sweep(cfg, threads=2)
dil = run_sweep(with_dilation(cfg, 8.0), threads=2)
for r, s in zip(rows, dil):
    print(f"case {r.case_id}: ratio {r.value:.9f}   dilated {s.value:.9f}")
print("corpus max", max(r.value for r in rows))
