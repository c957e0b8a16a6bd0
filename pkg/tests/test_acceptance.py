"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary
under "acceptance criteria". Run only these with ``pytest -m acceptance``.
"""
import csv
import math
import time
import xml.etree.ElementTree as ET
from fractions import Fraction

import numpy as np
import pytest

from conftest import VERDICTS
from psprog import cli
from psprog import discrepancy as dc
from psprog import experiments as ex
from psprog import functions as fn
from psprog import polytope as poly
from psprog import progressions as pg
from psprog.exactmath import binomial

pytestmark = pytest.mark.acceptance

GRID = [(k, d) for d in (1, 2, 3) for k in range(d + 2, d + 7)]


def verdict(num: int, ok: bool, detail: str):
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)
    assert ok, line


def query(spec, k, r=1):
    f = fn.parse_function(spec)
    return pg.ProgressionQuery(k, f.d, r, f)


def test_exact_volumes():
    t = time.perf_counter()
    bad = []
    for k in range(3, 11):
        if poly.volume_exact(poly.build_C(k, 1)).volume != Fraction(1, k - 1):
            bad.append(("C", k, 1))
    for k, d in GRID:
        expect = Fraction(1, math.prod(binomial(k - 1, i) for i in range(1, d + 1)))
        if poly.volume_exact(poly.build_C(k, d, "Cprime")).volume != expect:
            bad.append(("Cprime", k, d))
    dt = time.perf_counter() - t
    verdict(1, not bad and dt < 1.0, f"mismatches={bad} time={dt:.3f}s (limit 1s)")


def test_lower_bound():
    t = time.perf_counter()
    bad = []
    for k, d in GRID:
        vol = poly.volume_exact(poly.build_C(k, d)).volume
        lb = poly.lower_bound(k, d)
        if vol < lb or (vol == lb) != (d == 1):
            bad.append((k, d, vol, lb))
    dt = time.perf_counter() - t
    verdict(2, not bad and dt < 1.0, f"violations={bad} time={dt:.3f}s (limit 1s)")


def test_volume_cross_oracle():
    t = time.perf_counter()
    worst = 0.0
    for k, d in GRID:
        p = poly.build_C(k, d)
        mc = poly.volume_montecarlo(p, 10 ** 7, seed=20240601)
        z = abs(mc.estimate - float(poly.volume_exact(p).volume)) / mc.stderr
        worst = max(worst, z)
    dt = time.perf_counter() - t
    verdict(3, worst <= 4 and dt < 120, f"max |z|={worst:.2f} (limit 4) time={dt:.1f}s (limit 120s)")


def test_density_convergence():
    t = time.perf_counter()
    grid = [10 ** 4, 10 ** 5, 10 ** 6]
    parts, ok = [], True
    for k in (3, 4):
        rep = ex.density_fixed_r(query("pow:3/2", k), grid)
        dev = [abs(float(v - Fraction(1, k - 1))) for v in rep.densities]
        close = dev[-1] <= 0.02
        # non-increasing up to a factor 2 of noise
        trend = all(dev[j] <= 2 * dev[i] for i in range(3) for j in range(i + 1, 3))
        ok &= close and trend
        parts.append(f"k={k} deviations={[round(v, 5) for v in dev]}")
    dt = time.perf_counter() - t
    ok &= dt < 600
    verdict(4, ok, f"{'; '.join(parts)} (limit 0.02 at 1e6, trend within 2x) time={dt:.1f}s")


def test_criterion_soundness():
    t = time.perf_counter()
    start, span = 10 ** 4, 10 ** 5
    parts, ok = [], True
    for spec, k in (("pow:3/2", 3), ("pow:5/2", 4)):
        q = query(spec, k)
        mask = pg.brute_force_mask(q, start, start + span + 1)
        wrong = 0
        unc_second = 0
        for i in range(span + 1):
            v = pg.criterion_classify(q, start + i).verdict
            if v == pg.UNCERTAIN:
                unc_second += i > span // 2
            elif (v == pg.CERTAINLY_IN) != bool(mask[i]):
                wrong += 1
        frac = unc_second / (span - span // 2)
        ok &= wrong == 0 and frac < 0.05
        parts.append(f"{spec} k={k}: disagreements={wrong} uncertain(2nd half)={frac:.4f}")
    dt = time.perf_counter() - t
    ok &= dt < 600
    verdict(5, ok, f"{'; '.join(parts)} (limit 0, 5%) time={dt:.1f}s")


def test_variable_r_scaling():
    t = time.perf_counter()
    a = Fraction(3, 2)
    A, _ = ex.A_tilde(a, 3, 1)
    B = ex.B_tilde(a, 3, 1)
    rep = ex.count_variable_r(a, 3, 1, [10 ** 3, 10 ** 4, 10 ** 5])
    inside = all(0.5 * A <= v <= 2 * B for v in rep.normalized)
    same = all(ex.pair_count(a, 3, 1, N, prune=True) == ex.pair_count(a, 3, 1, N, prune=False)
               for N in (10, 100, 500, 1000, 1500, 2000))
    dt = time.perf_counter() - t
    verdict(6, inside and same and dt < 900,
            f"normalized={[round(v, 4) for v in rep.normalized]} window=[{0.5 * A:.4f}, {2 * B:.4f}] "
            f"pruned==unpruned(N<=2000)={same} time={dt:.1f}s")


def test_gap_lengths():
    t = time.perf_counter()
    a, k, r = Fraction(3, 2), 4, 1
    xs = sorted({int(round(v)) for v in np.geomspace(10 ** 3, 10 ** 6, 13)})
    rep = ex.gap_lengths(a, k, r, xs)
    recorded = float(ex.gap_bound_constant(a, r))
    lower = 0.5 * (k - 3) / (float(a) * float(a - 1) * r * (k - 1))
    uncensored = not any(rep.censored)
    top = max(rep.ratios)
    dense = ex.k3_dense_fraction(a, r, 10 ** 5)
    dt = time.perf_counter() - t
    ok = uncensored and top <= recorded and top >= lower and dense > 0.95 and dt < 900
    verdict(7, ok, f"max L/x^(1/2)={top:.4f} (recorded constant {recorded:.4f}, need some >= {lower:.4f}) "
                   f"k=3 short-gap fraction={dense:.5f} (limit 0.95) time={dt:.1f}s")


def test_discrepancy():
    t = time.perf_counter()
    rng = np.random.default_rng(8)
    mism = 0
    for _ in range(50):
        L = int(rng.integers(1, 33))
        xy = rng.random((L, 2))
        mism += abs(dc.extreme_discrepancy_array(xy) - dc.naive_discrepancy(xy)) > 1e-9
    f = fn.power(Fraction(3, 2))
    Ds, sandwich = [], True
    for e in range(10, 15):
        N = 2 ** e
        ps = dc.orbit(f, 1, N, N)
        # exact mode is capped at 2048 points; larger sets use the grid scan
        D = dc.extreme_discrepancy(ps, "exact" if N <= dc.EXACT_CAP else "grid")
        Ds.append(D.value)
        for H in (2, 4, 8, 16, 32):
            val, rad = dc.etk_bound(ps, H)
            sandwich &= D.value - D.error_radius <= dc.C_ETK * (val + rad)
    decay = all(Ds[j] <= 2 * Ds[i] for i in range(len(Ds)) for j in range(i + 1, len(Ds))) and Ds[-1] < Ds[0]
    dt = time.perf_counter() - t
    ok = mism == 0 and decay and sandwich and dt < 600
    verdict(8, ok, f"oracle mismatches={mism}/50 D(2^10..2^14)={[round(v, 4) for v in Ds]} "
                   f"D<=C_etk*etk={sandwich} time={dt:.1f}s")


def test_xlogx_band():
    t = time.perf_counter()
    rep = ex.xlogx_band(3, 1, [10 ** 6])
    inside = rep.inside()[0]
    dist = []
    for r in range(1, 21):
        lo, hi = ex.xlogx_band_limits(3, r)
        dist.append(max(0.5 - lo.mid, hi.mid - 0.5))
    shrinking = all(b < a for a, b in zip(dist, dist[1:]))
    dt = time.perf_counter() - t
    verdict(9, inside and shrinking and dist[-1] < 0.02 and dt < 300,
            f"density(1e6)={float(rep.densities[0]):.5f} band=[{rep.band_lower.mid:.5f}, {rep.band_upper.mid:.5f}] "
            f"max |endpoint - 1/2| at r=1: {dist[0]:.4f}, r=20: {dist[-1]:.4f} time={dt:.1f}s")


def test_alpha_sweep(tmp_path):
    csv_path, svg_path = tmp_path / "sweep.csv", tmp_path / "sweep.svg"
    t = time.perf_counter()
    code = cli.main(["sweep", "--k", "3", "--r", "1", "--n", "1000", "--alpha-grid", "1+i/1000,i=1..999",
                     "--format", "csv", "--output", str(csv_path), "--svg", str(svg_path)])
    dt = time.perf_counter() - t
    with open(csv_path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    valid_csv = len(rows) == 999 and all(0 <= float(r["density_dec"]) <= 1 for r in rows)
    valid_svg = ET.parse(svg_path).getroot().tag.endswith("svg")
    mean = sum(Fraction(r["density"]) for r in rows) / len(rows)
    close = abs(mean - Fraction(1, 2)) <= Fraction(1, 20)
    verdict(10, code == 0 and valid_csv and valid_svg and close and dt < 120,
            f"rows={len(rows)} svg={valid_svg} grid mean={float(mean):.6f} (need within 0.05 of 1/2) time={dt:.1f}s")
