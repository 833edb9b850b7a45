"""Acceptance criteria, one test each.  Every test prints one PASS/FAIL line before asserting."""

import subprocess
import sys

import numpy as np
import pytest

from weightlab.geometry import Cube, cover_count, cz_decompose, dyadic_pyramid, enumerate_dyadic, whitney_decompose, whitney_ratios
from weightlab.sawyer import GoodLambdaConfig, cfi_ratio, decay_fit, fit_cfi_constant, good_lambda_measure, signal_from_spec
from weightlab.tails import cp_constant
from weightlab.verify import (
    check_monotonicity,
    check_rhi_ainfty,
    check_rhi_cp,
    check_tail_equivalence,
    combine,
    default_family,
    sweep_power_weights,
    sweep_verdict,
)
from weightlab.weights import ConstantWeight, GridWeight, PowerWeight, gallery, gallery_weights, random_grid_weight

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys):
    def report(label: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        assert ok, detail

    return report


def test_c1_closed_form_cp(verdict):
    fam = default_family(1, 8)
    w = ConstantWeight(1.0, 1)
    got = {p: cp_constant(w, p, fam, resolution=4096).value for p in (2.0, 3.0)}
    err = {p: abs(got[p] - (p - 1) / (p + 1)) / ((p - 1) / (p + 1)) for p in got}
    verdict(
        "C1 closed-form cp",
        max(err.values()) <= 0.02,
        f"cp(2)={got[2.0]:.6f} cp(3)={got[3.0]:.6f} max rel err={max(err.values()):.2e} (tol 2%)",
    )


def test_c2_tail_sandwich(verdict):
    rng = np.random.default_rng(2024)
    failures, runs, worst, trunc = 0, 0, np.inf, 0.0
    for n, res, depth in ((1, 256, 8), (2, 16, 4)):
        for _ in range(100):
            w = random_grid_weight(rng, n, res)
            fam = enumerate_dyadic(w.box, depth)
            for p in (1.5, 2.0, 3.0):
                v = check_tail_equivalence(w, fam, p)
                failures += not v.passed
                runs += v.tests_run
                worst = min(worst, v.worst_margin)
                trunc = max(trunc, v.notes["max_truncation_bound"])
    verdict(
        "C2 tail sandwich",
        failures == 0 and trunc <= 1e-9,
        f"{runs} inequalities, {failures} failing verdicts, worst margin {worst:.2e}, max truncation bound {trunc:.1e}",
    )


def test_c3_rhi_cp(verdict):
    rng = np.random.default_rng(2025)
    parts = []
    fam = default_family(1, 8)
    for wid, w in gallery_weights(1).items():
        parts.append(check_rhi_cp(w, fam, 2.0, resolution=4096, weight_id=wid))
    for i in range(100):
        w = random_grid_weight(rng, 1, 64)
        parts.append(check_rhi_cp(w, enumerate_dyadic(w.box, 8), 2.0, resolution=256, weight_id=f"random_{i}"))
    v = combine("rhi-cp", parts)
    guards = all(p.notes.get("guard_passed", True) for p in parts)
    verdict(
        "C3 Cp reverse Hoelder",
        v.passed and guards,
        f"{v.tests_run} cube tests over {len(parts)} weights, {v.notes['failed_parts']} failing, "
        f"halved-exponent guard {'passed' if guards else 'FAILED'}, worst margin {v.worst_margin:.3e}",
    )


def test_c4_rhi_ainfty(verdict):
    fam = enumerate_dyadic(Cube.from_bounds(-2.0, 2.0), 8)
    parts = [check_rhi_ainfty(PowerWeight(a, 1), fam, resolution=4096, weight_id=f"|x|^{a:g}") for a in (-0.5, 0.0, 0.5, 1.0, 2.0)]
    v = combine("rhi-ainfty", parts)
    verdict("C4 A_inf reverse Hoelder", v.passed, f"{v.tests_run} cube tests, worst margin {v.worst_margin:.3e} at {v.witness['weight']}")


def test_c5_monotonicity_chain(verdict):
    parts = []
    for n, depth, res in ((1, 8, 4096), (2, 4, 256)):
        fam = default_family(n, depth)
        for wid, w in gallery_weights(n).items():
            parts.append(check_monotonicity(w, fam, pairs=((1.5, 2.0), (2.0, 3.0)), resolution=res, slack=1e-9, weight_id=f"{wid}/{n}d"))
    v = combine("monotonicity", parts)
    verdict("C5 constant chain", v.passed, f"{len(parts)} weights, worst margin {v.worst_margin:.3e} at {v.witness.get('weight')}")


def test_c6_power_sweep(verdict):
    rows = sweep_power_weights(2.0, (0.2, 0.1, 0.05), default_family(1, 8), resolution=4096)
    v = sweep_verdict(rows)
    band = v.notes["ratio_band"]
    table = ", ".join(f"eps={r.eps:g}: cp={r.cp:.4g} ratio={r.ratio:.3g}" for r in rows)
    verdict("C6 power sweep", v.passed and band <= 10, f"{table}; ratio band {band:.3g}")


def _random_open_set(rng, n, level):
    size = 2**level
    shape = (size,) * n
    if rng.random() < 0.5:
        omega = rng.random(shape) < rng.uniform(0.3, 0.95)
    else:
        omega = np.zeros(shape, dtype=bool)
        for _ in range(rng.integers(1, 5)):
            lo = rng.integers(0, size, n)
            hi = np.minimum(lo + rng.integers(1, size // 2 + 1, n), size)
            omega[tuple(slice(a, b) for a, b in zip(lo, hi))] = True
    return omega


def test_c7_whitney_and_cz(verdict):
    rng = np.random.default_rng(7)
    R = 2.0
    problems = {"overlap": 0, "cover": 0, "band": 0, "cz": 0}
    max_overlap = 0
    lowest = np.inf
    for i in range(50):
        n = 1 + i % 2
        level = 8 if n == 1 else 5
        omega = _random_open_set(rng, n, level)
        cubes = whitney_decompose(omega, R)
        count = cover_count(cubes, n, level)
        # disjoint and exact cover, cell by cell
        problems["cover"] += int(not np.array_equal(count, omega.astype(int)))
        ratios = whitney_ratios(cubes, omega)
        lowest = min(lowest, float(ratios.min()))
        problems["band"] += int(np.any(ratios < 5 * R) or np.any(ratios > 15 * R))
        dil = cover_count(cubes, n, level + 2, dilation=R)
        max_overlap = max(max_overlap, int(dil.max()))
        problems["overlap"] += int(dil.max() > 4**n)

        box = Cube((0.5,) * n, 0.5)
        vals = rng.lognormal(0, 1.5, (16,) * n) * (rng.random((16,) * n) < 0.7)
        vals.flat[0] += 1.0
        w = GridWeight(box, vals)
        lam = rng.uniform(1.001, 8.0) * w.total / box.volume
        cz = cz_decompose(w, box, lam, depth=6)
        pyr = dyadic_pyramid(cz_cells(w, 6, n))
        for c, mass, vol in zip(cz.cubes, cz.integrals, cz.volumes):
            ok = lam * vol < mass <= 2**n * lam * vol
            if c.level:
                par = c.parent()
                ok &= pyr[par.level][par.index] <= lam * vol * 2**n
            problems["cz"] += int(not ok)
    detail = (
        f"cover violations {problems['cover']}, CZ violations {problems['cz']}, "
        f"overlap of R-dilates max {max_overlap} (bound 4^n, violations {problems['overlap']}), "
        f"sets outside the [5R, 15R] gap band {problems['band']}/50 (smallest ratio {lowest:g}: "
        "boundary cells of a finite exact cover touch the complement)"
    )
    verdict("C7 Whitney and CZ", not any(problems.values()), detail)


def cz_cells(w, depth, n):
    extra = depth - 4
    out = w.cell_integrals()
    for axis in range(n):
        out = np.repeat(out, 2**extra, axis=axis)
    return out / 2 ** (n * extra)


def test_c8_good_lambda_decay(verdict):
    box = Cube.from_bounds(-4.0, 4.0)
    w = ConstantWeight(1.0, 1)
    gammas = [1 / 2, 1 / 4, 1 / 8, 1 / 16, 1 / 32]
    lines, ok = [], True
    for kind in ("bump", "step", "chirp"):
        f = signal_from_spec({"type": kind}, box, 4096)
        rows = good_lambda_measure(f, w, GoodLambdaConfig(gammas=gammas))
        _, fr, fit = decay_fit(rows)
        good = fit.defined and fit.slope < 0 and fit.r2 >= 0.9
        ok &= good
        lines.append(
            f"{kind}: max fractions {[round(x, 4) for x in fr]} "
            + (f"slope {fit.slope:.3g} R2 {fit.r2:.3f}" if fit.defined else f"fit undefined ({fit.zeros} empty bad sets)")
        )
    verdict("C8 good-lambda decay", ok, "; ".join(lines))


def test_c9_cfi_one_sided(verdict):
    fam = default_family(1, 8)
    box = Cube.from_bounds(-1.0, 1.0)
    rows = []
    for kind in ("bump", "step", "chirp"):
        f = signal_from_spec({"type": kind}, box, 4096)
        for eps in (0.3, 0.2, 0.1):
            w = gallery("power_eps", 1, p=3.0, eps=eps)
            rows.append(cfi_ratio(f, w, 2.0, 3.0, fam, weight_id=f"eps={eps}", f_id=kind, resolution=4096))
    fit = fit_cfi_constant(rows)
    verdict(
        "C9 CFI one-sidedness",
        fit["holds"] and all(np.isfinite(r.ratio) for r in rows),
        f"{len(rows)} rows, fitted c={fit['c']:.4g}, spread of ratio/Phi {fit['spread']:.3g}",
    )


def test_c10_determinism(verdict, tmp_path):
    outs, codes = [], []
    for name in ("a", "b"):
        out = tmp_path / name
        res = subprocess.run(
            [sys.executable, "-m", "weightlab", "verify", "all", "--seed", "7", "--out", str(out)],
            check=False,
            capture_output=True,
        )
        outs.append(out)
        codes.append(res.returncode)
    files = sorted(p.name for p in outs[0].iterdir())
    same = files == sorted(p.name for p in outs[1].iterdir()) and all(
        (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files
    )
    verdict(
        "C10 determinism",
        same and "report.json" in files and codes == [0, 0],
        f"exit codes {codes}; {len(files)} files compared byte for byte: {', '.join(files)}",
    )
