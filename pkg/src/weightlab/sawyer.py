"""Level-set machinery around the Coifman-Fefferman inequality.

Exponential level-set profiles, the Marcinkiewicz-type operator M_{p,q},
the maximally truncated Hilbert transform on a grid, good-lambda
measurements, and the CFI ratio experiment.  Everything singular-integral
related is one-dimensional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .geometry import Cube, CubeFamily, DyadicCube, whitney_decompose
from .maximal import GridFunction, hl_maximal, m_chi_cube
from .tails import ConstantEstimate, cp_constant
from .weights import Weight, local_cell_integrals

MAX_LEVELS = 64


class SignalError(ValueError):
    pass


def phi(t: float) -> float:
    """t log(e + t)."""
    return t * math.log(math.e + t)


def cfi_factor(p: float, q: float) -> float:
    return q + q * p**2 / (q - p)


@dataclass
class Fit:
    slope: float
    intercept: float
    r2: float
    points: int
    zeros: int = 0

    @property
    def defined(self) -> bool:
        return self.zeros == 0 and self.points >= 2 and math.isfinite(self.r2)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def log_linear_fit(x, y) -> Fit:
    """Least-squares line through (x, log y).  Zero values have no logarithm: the fit is then undefined."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    zeros = int(np.sum(y <= 0))
    if zeros or x.size < 2:
        return Fit(float("nan"), float("nan"), float("nan"), int(x.size), zeros)
    res = stats.linregress(x, np.log(y))
    r2 = float(res.rvalue**2) if np.isfinite(res.rvalue) else float("nan")
    return Fit(float(res.slope), float(res.intercept), r2, int(x.size), 0)


# ---------------------------------------------------------------------------
# signals


def signal_from_spec(spec: dict, box: Cube, resolution: int) -> GridFunction:
    """bump: smooth bump; step: height on [a, b); chirp: sin(omega (x - c)^2) under a bump window."""
    kind = spec.get("type")
    params = spec.get("params", {})
    center = float(params.get("center", 0.0))
    width = float(params.get("width", 0.5))

    def bump(x):
        t = (x - center) / width
        out = np.zeros_like(x)
        inside = np.abs(t) < 1
        out[inside] = np.exp(1 - 1 / (1 - t[inside] ** 2))
        return out

    if kind == "bump":
        height = float(params.get("height", 1.0))
        return GridFunction.sample(lambda x: height * bump(x), box, resolution)
    if kind == "step":
        a = float(params.get("a", 0.0))
        b = float(params.get("b", 0.5))
        height = float(params.get("height", 1.0))
        return GridFunction.sample(lambda x: np.where((x >= a) & (x < b), height, 0.0), box, resolution)
    if kind == "chirp":
        omega = float(params.get("omega", 40.0))
        return GridFunction.sample(lambda x: np.sin(omega * (x - center) ** 2) * bump(x), box, resolution)
    raise SignalError(f"unknown signal type {kind!r}; valid: bump, step, chirp")


# ---------------------------------------------------------------------------
# T*: maximally truncated Hilbert transform


def truncated_hilbert_maximal(f: GridFunction) -> GridFunction:
    """sup over truncation radii (grid multiples) of |sum_{|i-j| > m} f_j h / (x_i - x_j)|.

    With x_i - x_j = (i - j) h the cell width cancels, so the truncated sum
    at radius m is sum_{d > m} (f_{i-d} - f_{i+d}) / d.  The self-cell is
    always excluded.  Accumulating d from the largest radius down gives
    every truncation in O(N^2).
    """
    if f.n != 1:
        raise ValueError("T* is implemented for n = 1 only")
    v = f.values
    N = v.size
    padded = np.concatenate([np.zeros(N), v, np.zeros(N)])
    running = np.zeros(N)
    best = np.zeros(N)
    idx = np.arange(N) + N
    for d in range(N - 1, 0, -1):
        running += (padded[idx - d] - padded[idx + d]) / d
        np.maximum(best, np.abs(running), out=best)
    return f.with_values(best)


def truncated_hilbert_at(f: GridFunction, i: int, m: int) -> float:
    """One truncated sum, by direct summation (test oracle)."""
    v = f.values
    total = 0.0
    for j in range(v.size):
        if abs(i - j) > m:
            total += v[j] / (i - j)
    return total


# ---------------------------------------------------------------------------
# M_{p,q}


def _dyadic_cube_in(box: Cube, d: DyadicCube) -> Cube:
    return d.to_cube(box)


def _cube_field(box: Cube, cubes: list[DyadicCube], pts: np.ndarray, q: float) -> np.ndarray:
    total = np.zeros(pts.shape[:-1])
    for d in cubes:
        total += m_chi_cube(_dyadic_cube_in(box, d), pts) ** q
    return total


def required_levels(h: GridFunction) -> tuple[int, int]:
    pos = h.values[h.values > 0]
    return int(math.floor(math.log2(pos.min()))), int(math.ceil(math.log2(pos.max())))


def marcinkiewicz_mpq(h: GridFunction, p: float, q: float, k_range: tuple[int, int] | None = None, R: float = 1.0) -> GridFunction:
    """M_{p,q} h with M_{p,q} h(x)^p = sum_k sum_{Q in W(k)} 2^{kp} (M chi_Q(x))^q.

    W(k) is the Whitney decomposition of {h > 2^k}.  Levels below the
    smallest positive value all see the same set {h > 0}; their geometric
    sum is added in closed form.
    """
    if np.any(h.values < 0):
        raise ValueError("M_{p,q} needs a nonnegative function")
    if not np.any(h.values > 0):
        return h.with_values(np.zeros_like(h.values))
    lo_req, hi_req = required_levels(h)
    if k_range is None:
        k_range = (lo_req, hi_req)
    if k_range[0] > lo_req or k_range[1] < hi_req:
        raise ValueError(f"k_range {k_range} does not cover the required levels [{lo_req}, {hi_req}]")
    if k_range[1] - k_range[0] + 1 > MAX_LEVELS:
        raise ValueError(f"{k_range[1] - k_range[0] + 1} dyadic levels exceed the cap of {MAX_LEVELS}")
    pts = h.centers()
    total = np.zeros(h.values.shape)
    # every level k < k_range[0] has 2^k < min h / 2, so its set is {h > 0}
    base = _cube_field(h.box, whitney_decompose(h.values > 0, R), pts, q)
    total += base * 2.0 ** (k_range[0] * p) / (2.0**p - 1)
    for k in range(k_range[0], k_range[1] + 1):
        omega = h.values > 2.0**k
        if not omega.any():
            continue
        total += 2.0 ** (k * p) * _cube_field(h.box, whitney_decompose(omega, R), pts, q)
    return h.with_values(total ** (1 / p))


# ---------------------------------------------------------------------------
# Fefferman-Stein exponential profile


@dataclass
class LevelSetProfile:
    lambdas: list[float]
    measures: list[float]
    fit: Fit

    def to_dict(self) -> dict:
        return {"lambdas": self.lambdas, "measures": self.measures, "fit": self.fit.to_dict()}


def fefferman_stein_profile(
    Q: Cube,
    subcubes: list[Cube],
    q: float = 1.0,
    R: float = 2.0,
    resolution: int = 4096,
    lambdas=None,
) -> LevelSetProfile:
    """lambda -> |{x in RQ : sum_j (M chi_{Q_j}(x))^q > lambda}| measured on a grid over RQ.

    Default levels run from 1 to 0.9 max F: below 1 the set is mostly the
    saturated bulk of RQ, and near the top the finite family flattens the
    profile.  The log-linear fit uses the levels with positive measure.
    """
    big = Q.dilate(R)
    grid = GridFunction(big, np.zeros((resolution,) * Q.n))
    pts = grid.centers()
    F = np.zeros(grid.values.shape)
    for c in subcubes:
        F += m_chi_cube(c, pts) ** q
    if lambdas is None:
        top = 0.9 * float(F.max())
        lambdas = np.linspace(1.0, top, 20) if top > 1 else np.linspace(0.0, float(F.max()), 22)[1:-1]
    lambdas = [float(l) for l in lambdas]
    measures = [float(np.count_nonzero(F > l)) * grid.cell_volume for l in lambdas]
    pos = [i for i, m in enumerate(measures) if m > 0]
    fit = log_linear_fit([lambdas[i] for i in pos], [measures[i] for i in pos])
    return LevelSetProfile(lambdas, measures, fit)


def tiling(Q: Cube, d: int) -> list[Cube]:
    """The 2^(dn) dyadic subcubes of level d of Q."""
    box = Q
    if Q.n == 1:
        idx = [(i,) for i in range(2**d)]
    else:
        idx = [(i, j) for i in range(2**d) for j in range(2**d)]
    return [DyadicCube(d, t).to_cube(box) for t in idx]


def accumulating_cubes(Q: Cube, d: int) -> list[Cube]:
    """Disjoint subcubes of Q shrinking geometrically toward its lower corner.

    Cube j has side 2^-(j+1) s and sits on the diagonal at offset 2^-(j+1) s,
    so sum_j M chi_{Q_j} grows like the number of scales near the corner: the
    extremal configuration for the exponential level-set estimate.
    """
    out = []
    for j in range(d):
        a = Q.lo + Q.side * 2.0 ** -(j + 1)
        out.append(Cube.from_bounds(tuple(a), tuple(a + Q.side * 2.0 ** -(j + 1))))
    return out


# ---------------------------------------------------------------------------
# good-lambda


@dataclass
class GoodLambdaConfig:
    gammas: list[float] = field(default_factory=lambda: [1 / 2, 1 / 4, 1 / 8, 1 / 16, 1 / 32])
    levels: list[int] | None = None
    R: float = 1.0

    def __post_init__(self):
        if any(g <= 0 for g in self.gammas):
            raise ValueError("gammas must be positive")
        self.gammas = sorted(self.gammas, reverse=True)


@dataclass
class GoodLambdaRow:
    k: int
    gamma: float
    fraction: float
    weighted_fraction: float
    cubes: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def good_lambda_measure(
    f: GridFunction,
    w: Weight,
    config: GoodLambdaConfig,
    Tf: GridFunction | None = None,
    Mf: GridFunction | None = None,
) -> list[GoodLambdaRow]:
    """Per level 2^k and gamma: the largest fraction of a Whitney cube of {T*f > 2^k} where
    T*f > 2^(k+1) while Mf <= gamma 2^k, in Lebesgue and in w measure."""
    Tf = Tf or truncated_hilbert_maximal(f)
    Mf = Mf or hl_maximal(f)
    T, M = Tf.values, Mf.values
    wcells = local_cell_integrals(w, f.box, f.resolution)
    levels = config.levels
    if levels is None:
        top = T.max()
        if top <= 0:
            return []
        kmax = int(math.floor(math.log2(top)))
        levels = list(range(kmax - 6, kmax + 1))
    rows = []
    for k in levels:
        lam = 2.0**k
        omega = T > lam
        if not omega.any():
            continue
        cubes = whitney_decompose(omega, config.R)
        grid_level = int(round(math.log2(f.resolution)))
        slices = [c.cell_slices(grid_level) for c in cubes]
        high = T > 2 * lam
        for g in config.gammas:
            bad = high & (M <= g * lam)
            frac = max(float(np.mean(bad[s])) for s in slices)
            wfrac = 0.0
            for s in slices:
                mass = wcells[s].sum()
                if mass > 0:
                    wfrac = max(wfrac, float(wcells[s][bad[s]].sum() / mass))
            rows.append(GoodLambdaRow(k, g, frac, wfrac, len(cubes)))
    return rows


def decay_fit(rows: list[GoodLambdaRow], weighted: bool = False) -> tuple[list[float], list[float], Fit]:
    """Max fraction over levels for each gamma, and the fit of its logarithm against 1/gamma."""
    gammas = sorted({r.gamma for r in rows}, reverse=True)
    fr = []
    for g in gammas:
        vals = [r.weighted_fraction if weighted else r.fraction for r in rows if r.gamma == g]
        fr.append(max(vals))
    return gammas, fr, log_linear_fit([1 / g for g in gammas], fr)


def fractions_monotone(rows: list[GoodLambdaRow]) -> bool:
    """Fractions non-increasing in 1/gamma at every level (the bad set shrinks with gamma)."""
    by_k: dict[int, list[GoodLambdaRow]] = {}
    for r in rows:
        by_k.setdefault(r.k, []).append(r)
    for rs in by_k.values():
        rs = sorted(rs, key=lambda r: -r.gamma)
        if any(b.fraction > a.fraction for a, b in zip(rs, rs[1:])):
            return False
    return True


def discrete_hilbert_ceiling(N: int) -> float:
    """C with T*f <= C Mf on an N-cell grid: sum_{d<N} (|f_{i-d}| + |f_{i+d}|)/d by summation by parts."""
    D = np.arange(1, N, dtype=float)
    return float(np.sum((2 * D + 1) / (D * (D + 1))) + (2 * N - 1) / N)


# ---------------------------------------------------------------------------
# CFI ratio


@dataclass
class CfiRow:
    weight_id: str
    f_id: str
    p: float
    q: float
    ratio: float
    bound_value: float
    phi_cp: float
    factor: float
    cq: float
    cp: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def cfi_ratio(
    f: GridFunction,
    w: Weight,
    p: float,
    q: float,
    family: CubeFamily,
    weight_id: str = "w",
    f_id: str = "f",
    cq: ConstantEstimate | None = None,
    cp: ConstantEstimate | None = None,
    resolution: int = 256,
) -> CfiRow:
    """||T*f||_{L^p(w)} / ||Mf||_{L^p(w)} on the grid box, next to Phi(max([w]_Cq, 1))."""
    if not q > p > 1:
        raise ValueError(f"the CFI bound needs q > p > 1, got p={p}, q={q}")
    cq = cq or cp_constant(w, q, family, resolution=resolution)
    cp = cp or cp_constant(w, p, family, resolution=resolution)
    wcells = local_cell_integrals(w, f.box, f.resolution)
    T = truncated_hilbert_maximal(f)
    M = hl_maximal(f)
    num = T.lp_norm(p, wcells)
    den = M.lp_norm(p, wcells)
    degenerate = den == 0
    ratio = num / den if den > 0 else 0.0
    return CfiRow(
        weight_id,
        f_id,
        p,
        q,
        ratio,
        phi(max(cq.value, 1.0)),
        phi(max(cp.value, 1.0)),
        cfi_factor(p, q),
        cq.value,
        cp.value,
        degenerate,
    )


def fit_cfi_constant(rows: list[CfiRow]) -> dict:
    """Smallest c with ratio <= c Phi over the rows, plus the spread of ratio / Phi."""
    live = [r for r in rows if not r.degenerate]
    if not live:
        return {"c": 0.0, "spread": float("nan"), "holds": True}
    q = [r.ratio / r.bound_value for r in live]
    c = max(q)
    return {
        "c": c,
        "spread": max(q) / min(q) if min(q) > 0 else float("inf"),
        "holds": all(r.ratio <= c * r.bound_value for r in live),
    }
