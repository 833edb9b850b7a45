"""Theorem checkers.  Each returns a Verdict with the worst normalized margin and its witness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Cube, CubeFamily, enumerate_dyadic
from .tails import (
    ConstantEstimate,
    TailDivergence,
    ainfty_constant,
    beta_const,
    continuous_tails,
    cp_constant,
    cps_constant,
    delta_ainfty,
    delta_cp,
    delta_dilation,
    discrete_tails,
    epsilon_remark,
    family_numerators,
    ball_integrals,
    cube_arrays,
)
from .weights import Weight, gallery, local_cell_integrals


TAIL_SLACK = 1e-12


@dataclass
class Verdict:
    theorem: str
    passed: bool
    worst_margin: float
    witness: dict
    tests_run: int
    slack: float = 0.0
    skipped: int = 0
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "witness": self.witness,
            "tests_run": self.tests_run,
            "slack": self.slack,
            "skipped": self.skipped,
            "notes": self.notes,
        }


def _verdict(theorem, lhs, rhs, cubes, weight_id, slack=0.0, params=None, skipped=0, notes=None) -> Verdict:
    """margin = (rhs - lhs) / rhs per test; the verdict passes iff the worst margin >= -slack."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if lhs.size == 0:
        return Verdict(theorem, True, float("inf"), {"weight": weight_id}, 0, slack, skipped, notes or {})
    denom = np.where(rhs > 0, rhs, 1.0)
    margin = np.where(rhs > 0, (rhs - lhs) / denom, np.where(lhs <= 0, 0.0, -np.inf))
    i = int(np.argmin(margin))
    worst = float(margin[i])
    witness = {
        "weight": weight_id,
        "cube": cubes[i].to_dict() if cubes is not None else None,
        "lhs": float(lhs[i]),
        "rhs": float(rhs[i]),
        "params": params or {},
    }
    return Verdict(theorem, worst >= -slack, worst, witness, int(lhs.size), slack, skipped, notes or {})


def combine(theorem: str, verdicts: list[Verdict]) -> Verdict:
    """Deterministic min-reduction over verdicts run on different weights or parameters."""
    if not verdicts:
        return Verdict(theorem, True, float("inf"), {}, 0)
    worst = min(verdicts, key=lambda v: v.worst_margin)
    return Verdict(
        theorem,
        all(v.passed for v in verdicts),
        worst.worst_margin,
        worst.witness,
        sum(v.tests_run for v in verdicts),
        worst.slack,
        sum(v.skipped for v in verdicts),
        {"parts": len(verdicts), "failed_parts": sum(not v.passed for v in verdicts)},
    )


def _rhi_lhs(w: Weight, cubes, delta: float) -> np.ndarray:
    centers, halves = cube_arrays(cubes)
    vol = (2 * halves) ** w.n
    return (ball_integrals(w.pow(1 + delta), centers, halves) / vol) ** (1 / (1 + delta))


def check_tail_equivalence(w: Weight, family: CubeFamily, p: float, tol: float = 1e-9, weight_id: str = "w") -> Verdict:
    """a/beta <= tail/|Q| <= 4^(np) a/beta, each side at its adverse certified endpoint."""
    n = w.n
    try:
        a = discrete_tails(w, family.cubes, p, 2.0, tol)
        T = continuous_tails(w, family.cubes, p, tol)
    except TailDivergence:
        return Verdict("tail-equivalence", True, float("inf"), {"weight": weight_id}, 0, skipped=len(family))
    beta = beta_const(n, p)
    vol = np.array([q.volume for q in family.cubes])
    low = _verdict("tail-equivalence", a.upper / beta, T.lower / vol, family.cubes, weight_id, params={"p": p, "side": "lower"})
    high = _verdict(
        "tail-equivalence", T.upper / vol, 4 ** (n * p) * a.lower / beta, family.cubes, weight_id, params={"p": p, "side": "upper"}
    )
    # the two sides coincide when the root cube already holds all the mass; allow rounding
    low.passed = low.worst_margin >= -TAIL_SLACK
    high.passed = high.worst_margin >= -TAIL_SLACK
    v = combine("tail-equivalence", [low, high])
    v.slack = TAIL_SLACK
    v.notes["max_truncation_bound"] = float(max(a.truncation.max(), T.truncation.max()))
    return v


def _guarded(theorem, w, cubes, delta, rhs, weight_id, params, slack) -> Verdict:
    """Run at delta and at delta/2; flag when only the halved exponent passes."""
    full = _verdict(theorem, _rhi_lhs(w, cubes, delta), rhs, cubes, weight_id, slack, {**params, "delta": delta})
    half = _verdict(theorem, _rhi_lhs(w, cubes, delta / 2), rhs, cubes, weight_id, slack, {**params, "delta": delta / 2})
    full.notes.update(
        {
            "delta": delta,
            "guard_passed": half.passed,
            "guard_margin": half.worst_margin,
            "estimator_bias_flag": (not full.passed) and half.passed,
        }
    )
    full.passed = full.passed and half.passed
    return full


def check_rhi_cp(
    w: Weight,
    family: CubeFamily,
    p: float,
    cp: ConstantEstimate | None = None,
    tol: float = 1e-9,
    resolution: int = 256,
    slack: float = 1e-9,
    weight_id: str = "w",
) -> Verdict:
    """(avg_Q w^(1+delta))^(1/(1+delta)) <= 4 tail(Q)/|Q| with delta = 1/(B max([w]_Cp, 1))."""
    try:
        T = continuous_tails(w, family.cubes, p, tol)
    except TailDivergence:
        return Verdict("rhi-cp", True, float("inf"), {"weight": weight_id, "divergent": True}, 0, skipped=len(family))
    cp = cp or cp_constant(w, p, family, tol, resolution, tails=T)
    delta = delta_cp(w.n, p, cp.upper)
    vol = np.array([q.volume for q in family.cubes])
    v = _guarded("rhi-cp", w, family.cubes, delta, 4 * T.lower / vol, weight_id, {"p": p, "cp": cp.upper}, slack)
    v.notes["cp"] = cp.upper
    return v


def check_rhi_ainfty(
    w: Weight,
    family: CubeFamily,
    ainfty: ConstantEstimate | None = None,
    resolution: int = 256,
    slack: float = 1e-9,
    weight_id: str = "w",
) -> Verdict:
    """(avg_Q w^(1+delta))^(1/(1+delta)) <= 2 avg_Q w with delta = 1/(2^(n+1)[w]_Ainf - 1)."""
    ainfty = ainfty or ainfty_constant(w, family, resolution)
    delta = delta_ainfty(w.n, ainfty.upper)
    centers, halves = cube_arrays(family.cubes)
    avg = ball_integrals(w, centers, halves) / (2 * halves) ** w.n
    v = _guarded("rhi-ainfty", w, family.cubes, delta, 2 * avg, weight_id, {"ainfty": ainfty.upper}, slack)
    v.notes["ainfty"] = ainfty.upper
    return v


def check_rhi_dilation(
    w: Weight,
    family: CubeFamily,
    p: float,
    s: float,
    cps: ConstantEstimate | None = None,
    tol: float = 1e-9,
    resolution: int = 256,
    slack: float = 1e-9,
    weight_id: str = "w",
) -> Verdict:
    """(avg_Q w^(1+delta))^(1/(1+delta)) <= (2^n + 1) a_{Cp,s}(sQ) with delta = 1/(A_sp max(1, [w]_Cp,s))."""
    dilated = [q.dilate(s) for q in family.cubes]
    try:
        a = discrete_tails(w, dilated, p, s, tol)
    except TailDivergence:
        return Verdict("rhi-dilation", True, float("inf"), {"weight": weight_id, "divergent": True}, 0, skipped=len(family))
    cps = cps or cps_constant(w, p, s, family, tol, resolution)
    delta = delta_dilation(w.n, p, s, cps.upper)
    rhs = (2**w.n + 1) * a.lower
    v = _guarded("rhi-dilation", w, family.cubes, delta, rhs, weight_id, {"p": p, "s": s, "cps": cps.upper}, slack)
    v.notes["cps"] = cps.upper
    return v


def dilation_limit_ratio(w: Weight, family: CubeFamily, p: float, s: float, tol: float = 1e-9) -> float:
    """max over the family of a_{Cp,s}(sQ) / avg_{sQ} w; tends to 1 as p grows."""
    dilated = [q.dilate(s) for q in family.cubes]
    a = discrete_tails(w, dilated, p, s, tol)
    centers, halves = cube_arrays(dilated)
    avg = ball_integrals(w, centers, halves) / (2 * halves) ** w.n
    pos = avg > 0
    return float(np.max(a.upper[pos] / avg[pos]))


def subset_sampler(n: int, cells: int, rng: np.random.Generator, dyadic_depth: int = 6, random_sets: int = 100):
    """All dyadic sub-cubes to ``dyadic_depth`` plus seeded random cell unions, as masks on a cells^n grid."""
    level = int(np.log2(cells))
    masks = []
    for k in range(min(dyadic_depth, level) + 1):
        size = cells >> k
        for idx in np.ndindex(*(2**k,) * n):
            m = np.zeros((cells,) * n, dtype=bool)
            m[tuple(slice(i * size, (i + 1) * size) for i in idx)] = True
            masks.append(m)
    for _ in range(random_sets):
        frac = rng.uniform(0.01, 0.9)
        masks.append(rng.random((cells,) * n) < frac)
    masks.append(np.zeros((cells,) * n, dtype=bool))
    return masks


def check_cp_definition(
    w: Weight,
    Q: Cube,
    p: float,
    subsets: list[np.ndarray],
    cp: float,
    tol: float = 1e-9,
    slack: float = 1e-9,
    weight_id: str = "w",
) -> Verdict:
    """w(E) <= 2 (|E|/|Q|)^eps tail(Q) for grid-cell unions E inside Q, eps quantified by [w]_Cp."""
    try:
        T = continuous_tails(w, [Q], p, tol)
    except TailDivergence:
        return Verdict("cp-definition", True, float("inf"), {"weight": weight_id, "divergent": True}, 0, skipped=len(subsets))
    eps = epsilon_remark(w.n, p, cp)
    tail = float(T.lower[0])
    lhs, rhs = [], []
    cache: dict[int, np.ndarray] = {}
    for mask in subsets:
        cells = mask.shape[0]
        if cells not in cache:
            cache[cells] = local_cell_integrals(w, Q, cells)
        frac = float(mask.sum()) / mask.size
        lhs.append(math.fsum(cache[cells][mask].tolist()))
        rhs.append(2 * frac**eps * tail if frac > 0 else 0.0)
    v = _verdict("cp-definition", lhs, rhs, [Q] * len(lhs), weight_id, slack, {"p": p, "epsilon": eps})
    v.notes["epsilon"] = eps
    return v


def check_monotonicity(
    w: Weight,
    family: CubeFamily,
    pairs=((1.5, 2.0), (2.0, 3.0)),
    tol: float = 1e-9,
    resolution: int = 256,
    slack: float = 1e-9,
    weight_id: str = "w",
    numerators: np.ndarray | None = None,
) -> Verdict:
    """[w]_Cq <= [w]_Cp <= [w]_Ainf for q <= p, comparing favourable and adverse ends of the intervals."""
    num = family_numerators(w, family, resolution) if numerators is None else numerators
    ainf = ainfty_constant(w, family, resolution, numerators=num)
    parts = []
    cache: dict[float, ConstantEstimate] = {}

    def cp(p):
        if p not in cache:
            cache[p] = cp_constant(w, p, family, tol, resolution, numerators=num)
        return cache[p]

    for q, p in pairs:
        cq, cpp = cp(q), cp(p)
        parts.append(_verdict("monotonicity", [cq.value], [cpp.upper], None, weight_id, slack, {"q": q, "p": p}))
        parts.append(_verdict("monotonicity", [cpp.value], [ainf.value], None, weight_id, slack, {"p": p, "ainfty": True}))
    v = combine("monotonicity", parts)
    v.notes["constants"] = {f"cp[{p:g}]": [e.value, e.upper] for p, e in sorted(cache.items())}
    v.notes["ainfty"] = ainf.value
    return v


@dataclass
class SweepRow:
    eps: float
    cp: float
    cp_upper: float
    ratio: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def sweep_power_weights(
    p: float, eps_list, family: CubeFamily, n: int = 1, tol: float = 1e-9, resolution: int = 256
) -> list[SweepRow]:
    """cp_constant of |x|^(n(p-1-eps)) across eps, with the ratio to eps."""
    rows = []
    for eps in eps_list:
        w = gallery("power_eps", n, p=p, eps=eps)
        est = cp_constant(w, p, family, tol, resolution)
        rows.append(SweepRow(eps, est.value, est.upper, est.value / eps))
    return rows


def sweep_verdict(rows: list[SweepRow], decade: float = 10.0) -> Verdict:
    """Strict decrease in eps (as eps shrinks) is asserted; the ratio band is reported."""
    rows = sorted(rows, key=lambda r: -r.eps)
    # strict decrease as eps shrinks, at the adverse ends: each upper end below the previous lower end
    lhs = [r.cp_upper for r in rows[1:]]
    rhs = [r.cp for r in rows[:-1]]
    v = _verdict("power-sweep", lhs, rhs, None, "power_eps", 0.0, {"eps": [r.eps for r in rows]})
    v.passed = v.passed and all(l < r for l, r in zip(lhs, rhs))
    ratios = [r.ratio for r in rows]
    band = max(ratios) / min(ratios) if min(ratios) > 0 else float("inf")
    v.notes.update({"ratio_band": band, "within_decade": band <= decade, "rows": [r.to_dict() for r in rows]})
    return v


def default_family(n: int, depth: int, half: float = 1.0) -> CubeFamily:
    return enumerate_dyadic(Cube((0.0,) * n, half), depth)
