"""Acceptance criteria 1-11, each judged at its stated tolerance.

The full CLI suite runs twice (module fixture); criteria 2-10 read the first
run's reports.json and recompute their checks from the reported numbers,
criterion 1 times the maximal oracle on its own, criterion 11 compares the two
runs byte for byte and times them.  Every criterion prints one PASS/FAIL line.
"""

import json
import math
import time
from pathlib import Path

import pytest

from czlab import cli
from czlab import experiments as ex

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "default.ini"
OUTPUTS = ("reports.json", "reports.csv", "summary.txt")


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    runs = []
    for name in ("first", "second"):
        out = tmp_path_factory.mktemp(name)
        t0 = time.perf_counter()
        code = cli.main(["--config", str(CONFIG), "--out", str(out), "--seed", "0", "--json"])
        runs.append({"out": out, "code": code, "seconds": time.perf_counter() - t0})
    results = json.loads((runs[0]["out"] / "reports.json").read_text())
    return {"runs": runs, "results": {r["experiment"]: r for r in results}}


def _report(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def _rows(res, case=None, p=None):
    return [r for r in res["reports"]
            if (case is None or r["extra"].get("case") == case) and (p is None or r["p"] == p)]


def _by_level(rows):
    return [r for r in sorted(rows, key=lambda r: r["level"])]


def _rules_pass(res, prefix=""):
    return all(r["passed"] for r in res["rules"] if r["name"].startswith(prefix))


def test_criterion_01_maximal_oracle(capsys):
    t0 = time.perf_counter()
    out = ex.BY_NAME["maximal_oracle"].run(ex.Settings(), ex.Options(seeds="50", grid="32", parabolic_grid="16"))
    dt = time.perf_counter() - t0
    rules = {r.name: r.passed for r in out.rules}
    ok = (rules["elliptic mask == brute (bitwise)"] and rules["parabolic mask == brute (bitwise)"]
          and out.reports[0].extra["seeds"] == 50 and dt < 30.0)
    _report(capsys, 1, ok, f"50 seeds on 32^2 and 16^2x16 bitwise equal: {ok}; {dt:.1f} s (< 30 s)")


def test_criterion_02_closed_forms(capsys, suite):
    res = suite["results"]["closed_form_oscillation"]
    gaps = []
    ok = True
    for r in _rows(res, "w = x1"):
        gap = abs(r["lhs"] - r["rhs_terms"]["closed_form"])
        ok &= gap <= 3 * r["grid"]["h"] ** 2
        gaps.append(gap)
    for r in _rows(res, "w = t"):
        g = r["grid"]
        gap = abs(r["lhs"] - r["rhs_terms"]["closed_form"])
        ok &= gap <= 3 * (g["h"] ** 2 + g["tau"])
        gaps.append(gap)
    grids = sorted({r["grid"]["m"] for r in _rows(res, "w = x1")})
    ok &= grids == [64, 128]
    _report(capsys, 2, ok, f"grids {grids}, gaps {[f'{v:.2e}' for v in gaps]}")


def test_criterion_03_p2_identity(capsys, suite):
    rows = _by_level(_rows(suite["results"]["p2_identity_check"], "(1-|x|^2)_+^4"))
    err = {r["grid"]["m"]: abs(r["ratio"] - 1) for r in rows}
    c = err[128] / err[256]
    ok = err[128] <= 2e-2 and err[256] <= 5e-3 and 3 <= c <= 5
    _report(capsys, 3, ok, f"|ratio-1| = {err[128]:.2e} (128), {err[256]:.2e} (256), contraction {c:.2f}")


def test_criterion_04_fefferman_stein(capsys, suite):
    res = suite["results"]["fefferman_stein_report"]
    ok = True
    parts = []
    for p in (1.5, 2.0, 3.0, 4.0):
        rows = _by_level(_rows(res, "corpus max", p))
        lo = [r["extra"]["c_emp"] for r in rows]
        hi = [r["extra"]["C_emp"] for r in rows]
        ok &= len(rows) == 2 and rows[0]["extra"]["corpus"] == 20
        ok &= min(lo) > 0 and all(math.isfinite(v) for v in hi)
        ok &= ex.drift(lo) < 0.2 and ex.drift(hi) < 0.2
        parts.append(f"p={p}: c {lo[-1]:.3f} ({ex.drift(lo):.1%}), C {hi[-1]:.3f} ({ex.drift(hi):.1%})")
    _report(capsys, 4, ok, "; ".join(parts))


def test_criterion_05_pointwise(capsys, suite):
    res = suite["results"]["pointwise_estimate_report"]
    ratios = [r["ratio"] for r in _by_level(_rows(res, "corpus max"))]
    zero = _rules_pass(res, "quadratic") and _rules_pass(res, "harmonic")
    ok = len(ratios) == 2 and ex.drift(ratios) < 0.25 and zero
    _report(capsys, 5, ok, f"max ratios {[f'{v:.4g}' for v in ratios]} drift {ex.drift(ratios):.1%}; "
                           f"trivial cases zero: {zero}")


def test_criterion_06_cz_and_sharpness(capsys, suite):
    ok = True
    parts = []
    cases = (("cz_elliptic_report", "f = |x|^-0.25 capped"), ("cz_parabolic_report", "f = -|x|^-0.25 capped"))
    for name, sing in cases:
        res = suite["results"][name]
        for p in (1.5, 3.0):
            for case in ("corpus max", sing):
                ratios = [r["ratio"] for r in _by_level(_rows(res, case, p))]
                ok &= len(ratios) >= 2 and all(math.isfinite(v) for v in ratios) and ex.drift(ratios) < 0.25
                parts.append(f"{ex.drift(ratios):.1%}")
    sharp = _rows(suite["results"]["sharpness_demo_pinf"])
    sup = [r["ratio"] for r in sharp]
    fin = [r["extra"]["finite_p_ratio"] for r in sharp]
    inc = len(sup) == 4 and all(b > a for a, b in zip(sup, sup[1:]))
    ok &= inc and ex.drift(fin) < 0.25
    _report(capsys, 6, ok, f"CZ drifts {', '.join(parts)}; sup ratios {[f'{v:.3f}' for v in sup]} "
                           f"increasing: {inc}; p=4 drift {ex.drift(fin):.1%}")


def test_criterion_07_blowup(capsys, suite):
    blow = suite["results"]["blowup_rescale"]
    theta = suite["results"]["theta_profile"]
    corpus_row = _rows(blow, "corpus")[0]
    avg = corpus_row["lhs"]
    nmin, nmax = corpus_row["extra"]["normalisation_min"], corpus_row["extra"]["normalisation_max"]
    mono = all(all(b <= a for a, b in zip(r["extra"]["theta"], r["extra"]["theta"][1:]))
               for r in theta["reports"] if "theta" in r["extra"])
    sel = _rules_pass(theta, "selection inequality") and _rules_pass(theta, "theta nonincreasing")
    ok = corpus_row["extra"]["states"] > 0 and avg <= 1e-8 and 0.49 <= nmin and nmax <= 0.51 and mono and sel
    _report(capsys, 7, ok, f"{corpus_row['extra']['states']} states, averages <= {avg:.1e}, "
                           f"normalisation [{nmin:.6f}, {nmax:.6f}], monotone {mono}, selection {sel}")


def test_criterion_08_poly_growth(capsys, suite):
    res = suite["results"]["poly_growth_check"]
    mono = [r for r in res["reports"] if r["extra"]["case"].startswith("monomial")]
    worst = max(abs(r["extra"]["sigma"] - 2 * r["extra"]["N"]) for r in mono)
    degs = {r["extra"]["parabolic_degree"] for r in mono}
    t = [r for r in mono if r["extra"]["case"] == "monomial (0, 0, 1)"][0]
    c = t["extra"]["constant"]
    ok = degs == set(range(1, 7)) and worst <= 0.1 and abs(c * 12 - 1) <= 0.05
    _report(capsys, 8, ok, f"{len(mono)} monomials, max |sigma-2N| = {worst:.4f}; p=t constant {c:.5f} vs 1/12")


def test_criterion_09_duality(capsys, suite):
    ell = suite["results"]["duality_identity_check"]
    par = suite["results"]["parabolic_duality_check"]
    ce = ex._contractions([r["lhs"] for r in _by_level(_rows(ell, "u bump, v solved"))])
    cp = ex._contractions([r["lhs"] for r in _by_level(_rows(par, "u = t bump, v heat-solved"))])
    sym = max(r["lhs"] for r in _rows(ell, "v = u"))
    ok = all(3.4 <= c <= 4.6 for c in ce + cp) and len(ce) >= 2 and len(cp) >= 2 and sym <= 1e-10
    _report(capsys, 9, ok, f"elliptic {[f'{c:.3f}' for c in ce]}, parabolic {[f'{c:.3f}' for c in cp]}, "
                           f"symmetric defect {sym:.1e}")


def test_criterion_10_harmonic(capsys, suite):
    mv = suite["results"]["mean_value_check"]
    gb = suite["results"]["growth_bound_check"]
    mv_ok = all(r["lhs"] <= r["rhs_terms"]["h2"] for r in mv["reports"])
    spreads = {r["extra"]["case"]: r["extra"]["spread"] for r in gb["reports"] if r["extra"]["case"] != "x1"}
    gb_ok = all(s <= 0.05 for s in spreads.values()) and list(gb["reports"][0]["extra"]["R"]) == [1.0, 1.5, 2.0]
    ok = mv_ok and gb_ok and "Re z^4" in spreads
    _report(capsys, 10, ok, f"mean value defects <= h^2: {mv_ok}; C_n spreads "
                            + ", ".join(f"{k} {v:.2%}" for k, v in spreads.items()))


def test_criterion_11_determinism(capsys, suite):
    a, b = suite["runs"]
    same = all((a["out"] / f).read_bytes() == (b["out"] / f).read_bytes() for f in OUTPUTS)
    slowest = max(a["seconds"], b["seconds"])
    ok = same and a["code"] == b["code"] == 0 and slowest < 600
    _report(capsys, 11, ok, f"byte-identical outputs: {same}; exit codes {a['code']}, {b['code']}; "
                            f"full suite {slowest:.0f} s (< 600 s)")
