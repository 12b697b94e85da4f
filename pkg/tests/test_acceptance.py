"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines print even under capture).
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermegauss

from gplb.adversaries import xi_regret
from gplb.algorithms import beta_t
from gplb.bounds import gpucb_constant, kl_gaussian
from gplb.hard_instances import cells_per_axis, eps_optimal_overlap, lemma7_sums, support_overlap, vbar_table
from gplb.harness import experiment
from gplb.harness.cli import main
from gplb.harness.config import load_config
from gplb.harness.emit import emit
from gplb.harness.experiment import build_class, kernel_of, run_experiment, scaling_sweep, sweep_point_config
from gplb.harness.verify import FAIL, PASS, overlap_grid, verify_lemmas
from gplb.kernels import unit_grid
from gplb.rkhs import fourier_norm, matern_width, min_norm_certificate

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

# tolerances and bands
FORMULA_TOL = 1e-9
N_DRAWS = 50
CERT_GRID_PER_AXIS = 256
OVERLAP_POINTS = 10_000
LEMMA7_SPREAD = 2.0
SLOPE_C = (0.3, 0.7)
SLOPE_EPS = (1.5, 3.5)


def cfg(name):
    return load_config(CONFIGS / f"{name}.json")


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail, elapsed, limit=None):
        tag = "PASS" if ok else "FAIL"
        budget = f" (limit {limit:.0f} s)" if limit is not None else ""
        with capsys.disabled():
            print(f"\ncriterion {n}: {tag} {detail} [{elapsed:.1f} s{budget}]")
    return _report


def close(a, b):
    return abs(a - b) <= FORMULA_TOL * max(1.0, abs(b))


def kl_by_quadrature(m1, m2, s2):
    # E_p[log p - log q] with Gauss-Hermite nodes; exact for the quadratic integrand
    z, wts = hermegauss(20)
    x = m1 + math.sqrt(s2) * z
    integrand = ((x - m2) ** 2 - (x - m1) ** 2) / (2 * s2)
    return float(wts @ integrand / math.sqrt(2 * math.pi))


def test_criterion_1_exact_formulas(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    bad, bad_d1 = {}, 0
    for _ in range(N_DRAWS):
        m1, m2 = rng.uniform(-2, 2, 2)
        s2 = rng.uniform(0.01, 4)
        bad["kl"] = bad.get("kl", 0) + (not close(kl_gaussian(m1, m2, s2), kl_by_quadrature(m1, m2, s2)))
    for _ in range(N_DRAWS):
        B, s2, g = rng.uniform(0.1, 10), rng.uniform(0.01, 4), rng.uniform(0, 500)
        delta = rng.uniform(1e-6, 0.99)
        ref = (B + math.sqrt(s2) * math.sqrt(2 * (g + 1 - math.log(delta)))) ** 2
        bad["beta"] = bad.get("beta", 0) + (not close(beta_t(B, s2, g, delta), ref))
    for _ in range(N_DRAWS):
        s2 = rng.uniform(0.01, 10)
        bad["C1"] = bad.get("C1", 0) + (not close(gpucb_constant(s2), 8 / math.log(1 + 1 / s2)))
    for _ in range(N_DRAWS):
        eps, B, kappa = rng.uniform(0.005, 0.1), rng.uniform(0.5, 5), rng.uniform(0.5, 3)
        nu = rng.choice([0.5, 1.0, 1.5, 2.5])
        bad["w"] = bad.get("w", 0) + (not close(matern_width(eps, B, nu, kappa),
                                                (2 * eps * kappa / B) ** (1 / nu)))
    for _ in range(N_DRAWS):
        w, d = rng.uniform(0.05, 0.6), int(rng.integers(1, 4))
        miss = cells_per_axis(w) ** d != math.floor((1 / w) ** d)
        bad["M"] = bad.get("M", 0) + miss
        bad_d1 += miss and d == 1
    elapsed = time.perf_counter() - t0
    ok = not any(bad.values()) and elapsed < 1.0
    report(1, ok, "mismatches per formula " + ", ".join(f"{k}={v}/{N_DRAWS}" for k, v in bad.items())
           + f" (M mismatches at d=1: {bad_d1})",
           elapsed, 1)
    assert not any(bad.values()), bad
    assert elapsed < 1.0


def test_criterion_2_certification(report):
    t0 = time.perf_counter()
    lines, ok = [], True
    for name in ("standard_se_d1", "simplified_matern_d1", "simplified_matern_d2",
                 "final_point_robust_d1"):
        c = cfg(name)
        cls = build_class(c)
        k = kernel_of(c)
        if cls.d == 1:
            grid = unit_grid(CERT_GRID_PER_AXIS, 1)
            worst = max(min_norm_certificate(k, f, grid) for f in cls.members)
            route = "grid256"
        else:
            # a 256^2 Gram matrix does not fit in memory; the Fourier norm bounds the
            # certificate on every grid from above, and the 64^2 certificate is stored
            worst = max(max(fourier_norm(k, f, cls.d), f.norm_certificate) for f in cls.members)
            route = "fourier+grid64"
        good = worst <= cls.B
        if cls.kind.value == "simplified_matern":
            n = support_overlap(cls, overlap_grid(cls.d, OVERLAP_POINTS))
            good = good and n == 0
            lines.append(f"{name} max={worst:.4f}<=B={cls.B} ({route}) overlap={n}")
        else:
            lines.append(f"{name} max={worst:.4f}<=B={cls.B} ({route})")
        ok = ok and good
    elapsed = time.perf_counter() - t0
    report(2, ok and elapsed < 60, "; ".join(lines), elapsed, 60)
    assert ok and elapsed < 60


def test_criterion_3_lemma7_shape(report):
    t0 = time.perf_counter()
    base = cfg("c3_lemma7_se")
    sums = []
    for e in base.sweep.values:
        cls = build_class(sweep_point_config(base, e))
        sums.append(lemma7_sums(vbar_table(cls, base.grid.region), cls.eps))
    spread = {k: max(s[k] for s in sums) / min(s[k] for s in sums) for k in sums[0]}
    elapsed = time.perf_counter() - t0
    ok = all(v < LEMMA7_SPREAD for v in spread.values()) and elapsed < 60
    report(3, ok, "max/min " + ", ".join(f"{k}={v:.3f}" for k, v in spread.items()), elapsed, 60)
    assert ok


def test_criterion_4_eps_optimal_unique(report):
    t0 = time.perf_counter()
    counts = {}
    for name in ("standard_se_d1", "standard_matern_d1", "simplified_matern_d1",
                 "simplified_matern_d2"):
        cls = build_class(cfg(name))
        counts[name] = eps_optimal_overlap(cls, overlap_grid(cls.d, OVERLAP_POINTS))
    elapsed = time.perf_counter() - t0
    ok = not any(counts.values()) and elapsed < 60
    report(4, ok, "shared eps-optimal points " + ", ".join(f"{k}={v}" for k, v in counts.items()),
           elapsed, 60)
    assert ok


def test_criterion_5_corruptible_count(report):
    t0 = time.perf_counter()
    rep = verify_lemmas(cfg("c5_corruptible"))
    (chk,) = [c for c in rep.checks if c.name == "corruptible_count"]
    m = chk.measured
    elapsed = time.perf_counter() - t0
    ok = chk.status == PASS and m["T"] <= 2000 and elapsed < 300
    report(5, ok, f"T={m['T']} corruptible={m['corruptible']}/{m['M']} "
                  f"large-regret members={m['members_with_large_regret']}", elapsed, 300)
    assert ok


def test_criterion_6_relating_check(report):
    t0 = time.perf_counter()
    rep = verify_lemmas(cfg("c6_relating"))
    by = {c.name: c for c in rep.checks}
    rel, tv = by["relating_lemma"], by["tv_divergence"]
    elapsed = time.perf_counter() - t0
    ok = rel.status != FAIL and tv.status == PASS and elapsed < 900
    m = rel.measured
    detail = (f"relating={rel.status} (delta_hat={m['delta_hat']:.3f}, "
              f"lhs={m.get('lhs', math.nan):.3f} rhs={m.get('rhs', math.nan):.3f}); "
              f"6b={tv.status} (gap={tv.measured['gap']:.3f} <= "
              f"{tv.measured['sqrt_bound'] + 3 * tv.measured['mc_se']:.3f})")
    report(6, ok, detail, elapsed, 900)
    assert ok


@pytest.fixture(scope="module")
def c7_sweep():
    t0 = time.perf_counter()
    res = scaling_sweep(cfg("c7_corrupted_sweep"))
    return res, time.perf_counter() - t0


def test_criterion_7_corrupted_scaling(report, c7_sweep):
    res, elapsed = c7_sweep
    ys = ", ".join(f"C={p.value:g}:{p.y:.3g}" for p in res.points)
    ok = res.slope is not None and SLOPE_C[0] <= res.slope <= SLOPE_C[1] and elapsed < 1800
    report(7, ok, f"slope={res.slope:.3f} in {list(SLOPE_C)} ({ys})", elapsed, 1800)
    assert ok


def test_criterion_8_time_to_eps_scaling(report):
    t0 = time.perf_counter()
    res = scaling_sweep(cfg("c8_time_to_eps"))
    elapsed = time.perf_counter() - t0
    ys = ", ".join(f"eps={p.value:g}:{p.y:g}" for p in res.points)
    ok = res.slope is not None and SLOPE_EPS[0] <= res.slope <= SLOPE_EPS[1] and elapsed < 1800
    report(8, ok, f"slope={res.slope} in {list(SLOPE_EPS)} ({ys})", elapsed, 1800)
    assert ok


def test_criterion_9_final_point_class(report, monkeypatch):
    t0 = time.perf_counter()
    cls = build_class(cfg("final_point_robust_d1"))
    eps, xi = cls.eps, cls.params["xi"]
    centre = np.full(cls.d, 0.5)
    r0 = xi_regret(cls.members[0], centre, xi)
    rm = [xi_regret(f, centre, xi) for f in cls.members[1:]]
    centre_ok = r0 == pytest.approx(0.0, abs=1e-12) and min(rm) >= 2 * eps - 1e-9

    calls = {}
    real = experiment.xi_regret

    def counting(f, *a, **kw):
        calls[id(f)] = calls.get(id(f), 0) + 1
        return real(f, *a, **kw)

    monkeypatch.setattr(experiment, "xi_regret", counting)
    c9 = cfg("c9_final_point")
    res = run_experiment(c9)
    per_run = max(calls.values()) if calls else 0
    runs_ok = all(not r.error for r in res.rows) and per_run <= c9.T
    elapsed = time.perf_counter() - t0
    ok = centre_ok and runs_ok and elapsed < 60
    report(9, ok, f"centre xi-regret f0={r0:.3g}, min over f_m={min(rm):.4f} >= {2 * eps - 1e-9:.4f}; "
                  f"xi_regret evaluations per run={per_run} <= T={c9.T}", elapsed, 60)
    assert ok


def test_criterion_10_reproducible_csv(report, c7_sweep, tmp_path):
    t0 = time.perf_counter()
    first, _ = c7_sweep
    emit(first, "csv", tmp_path / "a")
    assert main(["emit", "--config", str(CONFIGS / "c7_corrupted_sweep.json"),
                 "--out", str(tmp_path / "b")]) == 0
    same = {n: (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
            for n in ("rows.csv", "aggregates.csv")}
    elapsed = time.perf_counter() - t0
    ok = all(same.values())
    report(10, ok, "byte-identical " + ", ".join(f"{k}={v}" for k, v in same.items()), elapsed)
    assert ok
