"""C_p-tails with certified error, weight-constant estimators, and the explicit theorem constants.

Tails are computed for many cubes at once.  Every tail is returned as a
certified interval [value, upper]: ``truncation_bound`` covers the part of
the sum or integral beyond the last term, ``discretization`` the width of the
monotone bracketing used where no closed form is available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import hyp2f1

from .geometry import Cube, CubeFamily
from .maximal import hl_maximal_batch, m_chi_gaps
from .weights import (
    ConstantWeight,
    GridWeight,
    PowerWeight,
    ProductWeight,
    RadialProductWeight,
    Weight,
    abs_pow_box_integral,
    local_cell_integrals,
)

DEFAULT_TOL = 1e-9
MAX_TERMS = 64


class TailDivergence(ArithmeticError):
    """The C_p-tail is infinite for every cube."""


class TailError(RuntimeError):
    pass


@dataclass(frozen=True)
class TailReport:
    value: float
    truncation_bound: float
    terms_used: int
    kind: str
    discretization: float = 0.0

    @property
    def upper(self) -> float:
        return self.value + self.discretization + self.truncation_bound

    @property
    def interval(self) -> tuple[float, float]:
        return self.value, self.upper

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "upper": self.upper,
            "truncation_bound": self.truncation_bound,
            "discretization": self.discretization,
            "terms_used": self.terms_used,
            "kind": self.kind,
        }


@dataclass
class TailBatch:
    """Tails of many cubes: certified lower bounds ``lower`` and upper bounds ``upper``."""

    lower: np.ndarray
    upper: np.ndarray
    truncation: np.ndarray
    terms: np.ndarray
    kind: str

    def report(self, i: int = 0) -> TailReport:
        disc = float(self.upper[i] - self.lower[i] - self.truncation[i])
        return TailReport(float(self.lower[i]), float(self.truncation[i]), int(self.terms[i]), self.kind, max(disc, 0.0))


# ---------------------------------------------------------------------------
# far-field description of a weight


@dataclass(frozen=True)
class FarField:
    """Beyond |x|_inf >= radius the weight equals coef * |x|^a."""

    coef: float
    a: float
    radius: float


def far_field(w: Weight) -> FarField:
    if isinstance(w, ConstantWeight):
        return FarField(w.c, 0.0, 0.0)
    if isinstance(w, PowerWeight):
        return FarField(w.coef, w.a, 0.0)
    if isinstance(w, GridWeight):
        return FarField(0.0, 0.0, float(np.max(np.abs([w.box.lo, w.box.hi]))))
    if isinstance(w, ProductWeight):
        return FarField(w.outside * w.base.coef, w.base.a, float(np.max(np.abs([w.box.lo, w.box.hi]))))
    if isinstance(w, RadialProductWeight):
        return FarField(w.outside * w.base.coef, w.base.a, float(w.radii[-1]))
    raise TypeError(f"no far-field description for {type(w).__name__}")


def check_finite_tails(w: Weight, p: float) -> FarField:
    ff = far_field(w)
    if ff.coef > 0 and ff.a >= w.n * (p - 1):
        raise TailDivergence(
            f"|x|^{ff.a:g} growth at infinity gives infinite C_p-tails for p={p:g} (needs exponent < {w.n * (p - 1):g})"
        )
    return ff


def cube_arrays(cubes) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(cubes, Cube):
        cubes = [cubes]
    centers = np.array([c.center for c in cubes], dtype=float)
    halves = np.array([c.half_side for c in cubes], dtype=float)
    return centers, halves


def ball_integrals(w: Weight, centers: np.ndarray, r: np.ndarray) -> np.ndarray:
    """w over the cubes centred at ``centers`` (m, n) with half-sides r (m, ...)."""
    c = centers.reshape(centers.shape[:1] + (1,) * (r.ndim - 1) + centers.shape[1:])
    return w.integral_boxes(c - r[..., None], c + r[..., None])


def _envelope_error(u: np.ndarray, m: float, a: float) -> np.ndarray:
    """E(u) bounding |A(v)/A(0) - 1| for an offset |v| = u < 1 of a unit cube; E(u/s) <= E(u)/s."""
    if a == 0:
        return np.zeros_like(u)
    if a > 0:
        return (1 + u) ** m - 1
    if m < 1:
        return 1 - (1 - u) ** m
    return m * u


# ---------------------------------------------------------------------------
# discrete tails


def discrete_tails(
    w: Weight, cubes, p: float, s: float = 2.0, tol: float = DEFAULT_TOL, max_terms: int | None = None
) -> TailBatch:
    """sum_k s^(-n(p-1)k) avg_{s^k Q} w for every cube, with a certified remainder.

    Once s^K Q swallows the region where the weight differs from its power
    far field, the remainder splits into an exact geometric series plus a
    power-envelope term whose deviation from its centred value decays like
    s^-K.
    """
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if not 1 < s <= 2:
        raise ValueError(f"dilation base s must lie in (1, 2], got {s}")
    s = float(s)
    if max_terms is None:
        # the cap is a reach of 2^MAX_TERMS side lengths, whatever the base
        max_terms = math.ceil(MAX_TERMS * math.log(2) / math.log(s))
    ff = check_finite_tails(w, p)
    n = w.n
    centers, halves = cube_arrays(cubes)
    m = len(halves)
    k = np.arange(max_terms + 1)
    r = halves[:, None] * s ** k[None, :]
    mass = ball_integrals(w, centers, r)
    avg = mass / (2 * r) ** n
    terms = s ** (-n * (p - 1) * k)[None, :] * avg
    partial = np.concatenate([np.zeros((m, 1)), np.cumsum(terms, axis=1)], axis=1)  # partial[:, K] = sum_{k<K}

    cnorm = np.max(np.abs(centers), axis=1)
    if ff.radius > 0:
        D = ball_integrals(w, np.zeros_like(centers), np.full((m,), ff.radius))
        if ff.coef:
            D = D - ff.coef * abs_pow_box_integral(np.full((m, n), -ff.radius), np.full((m, n), ff.radius), ff.a)
    else:
        D = np.zeros(m)
    covers = r >= (cnorm + ff.radius)[:, None]
    geo = D[:, None] / (2 * halves[:, None]) ** n * s ** (-n * p * k)[None, :] / (1 - s ** (-n * p))
    lo_rem = geo.copy()
    hi_rem = geo.copy()
    if ff.coef:
        a = ff.a
        rho = s ** (a - n * (p - 1))
        A0 = n / (a + n)
        main = ff.coef * halves[:, None] ** a * A0 * rho ** k[None, :] / (1 - rho)
        u = np.where(covers, cnorm[:, None] / np.where(covers, r, 1.0), 1.0)
        err = ff.coef * halves[:, None] ** a * A0 * rho ** k[None, :] * _envelope_error(u, n + a, a) / (1 - rho / s)
        if a >= 0:
            lo_rem += main
            hi_rem += main + err
        else:
            lo_rem += main - err
            hi_rem += main
    width = np.where(covers, hi_rem - lo_rem, np.inf)
    ok = covers & (width <= tol)
    if not np.all(ok.any(axis=1)):
        bad = int(np.argmin(ok.any(axis=1)))
        raise TailError(f"remainder bound above tol={tol:g} after {max_terms} terms for cube {bad}")
    K = np.argmax(ok, axis=1)
    rows = np.arange(m)
    lower = partial[rows, K] + lo_rem[rows, K]
    upper = partial[rows, K] + hi_rem[rows, K]
    trunc = upper - lower
    return TailBatch(lower, upper, trunc, K, "discrete_2" if s == 2 else "discrete_s")


def discrete_tail(w: Weight, Q: Cube, p: float, tol: float = DEFAULT_TOL) -> TailReport:
    return discrete_tails(w, [Q], p, 2.0, tol).report()


def discrete_tail_s(w: Weight, Q: Cube, p: float, s: float, tol: float = DEFAULT_TOL) -> TailReport:
    return discrete_tails(w, [Q], p, s, tol).report()


# ---------------------------------------------------------------------------
# continuous tails: closed forms in 1-D


def _power_right_tail(lo: np.ndarray, hi: np.ndarray, a: float, p: float) -> np.ndarray:
    """Integral over x > hi of |x|^a (x - lo)^(-p), for lo < hi."""
    out = np.zeros_like(lo)

    def from_nonneg(X0, c):
        Y0 = X0 - c
        return Y0 ** (a - p + 1) / (p - a - 1) * hyp2f1(-a, p - a - 1, p - a, -c / Y0)

    pos = hi >= 0
    out[pos] = from_nonneg(hi[pos], lo[pos])
    neg = ~pos
    if neg.any():
        B = -hi[neg]
        e = -lo[neg]
        near = e ** (-p) * B ** (a + 1) / (a + 1) * hyp2f1(p, a + 1, a + 2, B / e)
        out[neg] = near + from_nonneg(np.zeros_like(B), lo[neg])
    return out


def _tails_power_1d(w: PowerWeight, centers: np.ndarray, halves: np.ndarray, p: float) -> np.ndarray:
    c = centers[:, 0]
    lo, hi = c - halves, c + halves
    s = 2 * halves
    inside = abs_pow_box_integral(lo[:, None], hi[:, None], w.a)
    right = _power_right_tail(lo, hi, w.a, p)
    left = _power_right_tail(-hi, -lo, w.a, p)
    return w.coef * (inside + s**p * (right + left))


def _tails_grid_1d(w: GridWeight, centers: np.ndarray, halves: np.ndarray, p: float) -> np.ndarray:
    e = w.box.lo[0] + w.h * np.arange(w.resolution + 1)
    a, b = e[None, :-1], e[None, 1:]
    c = centers[:, 0][:, None]
    h = halves[:, None]
    lo, hi, s = c - h, c + h, 2 * h
    inside = np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0, None)
    ra, rb = np.maximum(a, hi), np.maximum(b, hi)
    right = s**p / (p - 1) * ((ra - lo) ** (1 - p) - (rb - lo) ** (1 - p))
    la, lb = np.minimum(a, lo), np.minimum(b, lo)
    left = s**p / (p - 1) * ((hi - lb) ** (1 - p) - (hi - la) ** (1 - p))
    return np.sum(w.values[None, :] * (inside + right + left), axis=1)


# ---------------------------------------------------------------------------
# continuous tails: certified brackets


def _inner_shell_bounds(w: Weight, centers: np.ndarray, halves: np.ndarray, p: float, pieces: int):
    """Bracket of the integral of (M chi_Q)^p w over 3Q minus Q in 2-D, by corner values on a rectangle grid."""
    t = np.linspace(1.0, 3.0, pieces + 1)  # offsets in half-sides, right band
    edges = np.concatenate([-t[::-1], t])  # 2*pieces + 2 edges, the gap between -1 and 1 is the middle piece
    u0, u1 = edges[:-1], edges[1:]
    gmin = np.where(u1 <= -1, -1 - u1, np.where(u0 >= 1, u0 - 1, 0.0))
    gmax = np.where(u1 <= -1, -1 - u0, np.where(u0 >= 1, u1 - 1, 0.0))
    I, J = np.meshgrid(np.arange(u0.size), np.arange(u0.size), indexing="ij")
    dmin = np.stack([gmin[I], gmin[J]], axis=-1)
    dmax = np.stack([gmax[I], gmax[J]], axis=-1)
    # gaps in half-side units, side 2; the middle rectangle is Q itself and is dropped
    phi_hi = m_chi_gaps(dmin, 2.0) ** p
    phi_lo = m_chi_gaps(dmax, 2.0) ** p
    phi_hi[pieces, pieces] = phi_lo[pieces, pieces] = 0.0
    h = halves[:, None]
    mass = np.maximum(w.lattice_integrals(centers[:, :1] + h * edges, centers[:, 1:2] + h * edges), 0.0)
    mass = mass.reshape(len(halves), -1)
    return mass @ phi_lo.reshape(-1), mass @ phi_hi.reshape(-1)


def _power_remainder(ff: FarField, n: int, p: float, centers, halves, R):
    """Bracket of the integral over |x - c|_inf > R of (M chi_Q)^p coef |x|^a, valid for R >= |c| + radius."""
    a = ff.a
    cnorm = np.max(np.abs(centers), axis=1)
    u = cnorm / R
    V = n * 2**n * R ** (a - n * p + n) / (n * p - n - a)
    base = ff.coef * (2 * halves) ** (n * p) * V
    if a >= 0:
        f_lo, f_hi = (1 - u) ** a, (1 + u) ** a
    else:
        f_lo, f_hi = (1 + u) ** a, (1 - u) ** a
    return base * (1 + halves / R) ** (-n * p) * f_lo, base * f_hi


def _bracket_tails(
    w: Weight, centers: np.ndarray, halves: np.ndarray, p: float, tol: float, rings_per_octave: int, shell_pieces: int
) -> TailBatch:
    n = w.n
    ff = check_finite_tails(w, p)
    m = len(halves)
    inside = ball_integrals(w, centers, halves)
    lower = inside.copy()
    upper = inside.copy()
    if n == 2:
        lo_s, hi_s = _inner_shell_bounds(w, centers, halves, p, shell_pieces)
        lower += lo_s
        upper += hi_s
        r0 = 3 * halves
    else:
        r0 = halves.copy()
    cnorm = np.max(np.abs(centers), axis=1)
    reach = cnorm + ff.radius
    # outer radius: cover the support, then grow until the far-field remainder is below tol
    octaves = np.maximum(np.ceil(np.log2(np.maximum(reach, r0) / r0)), 0) + 1
    trunc = np.zeros(m)
    rem_lo = np.zeros(m)
    rem_hi = np.zeros(m)
    if ff.coef:
        for _ in range(MAX_TERMS):
            R = r0 * 2.0**octaves
            rlo, rhi = _power_remainder(ff, n, p, centers, halves, R)
            grow = (rhi - rlo) > tol
            if not grow.any():
                break
            octaves = np.where(grow, octaves + 1, octaves)
        else:
            raise TailError(f"far-field remainder above tol={tol:g} after {MAX_TERMS} octaves")
        if np.any(octaves > MAX_TERMS):
            raise TailError(f"far-field remainder above tol={tol:g} within {MAX_TERMS} octaves")
        rem_lo, rem_hi = rlo, rhi
        trunc = rhi - rlo
    nr = int(octaves.max()) * rings_per_octave
    j = np.arange(nr + 1)
    frac = 2.0 ** (j / rings_per_octave)
    radii = r0[:, None] * np.minimum(frac[None, :], 2.0 ** octaves[:, None])
    mass = ball_integrals(w, centers, radii)
    ring = np.maximum(np.diff(mass, axis=1), 0.0)
    h = halves[:, None]
    phi = (2 * h / (h + radii)) ** (n * p)
    lower += np.sum(ring * phi[:, 1:], axis=1) + rem_lo
    upper += np.sum(ring * phi[:, :-1], axis=1) + rem_hi
    return TailBatch(lower, upper, trunc, octaves.astype(int), "continuous")


def continuous_tails(
    w: Weight,
    cubes,
    p: float,
    tol: float = DEFAULT_TOL,
    rings_per_octave: int = 64,
    shell_pieces: int = 32,
    exact: bool = True,
) -> TailBatch:
    """Integral of (M chi_Q)^p w over the whole space for every cube.

    Closed forms in 1-D for constant, grid, and power weights; otherwise a
    certified bracket from exact ring masses and monotone bounds on M chi_Q,
    plus an analytic far-field remainder.
    """
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    centers, halves = cube_arrays(cubes)
    check_finite_tails(w, p)
    m = len(halves)
    zero = np.zeros(m)
    if exact and w.n == 1:
        val = None
        if isinstance(w, ConstantWeight):
            val = w.c * 2 * halves * (p + 1) / (p - 1)
        elif isinstance(w, PowerWeight):
            val = _tails_power_1d(w, centers, halves, p)
        elif isinstance(w, GridWeight):
            val = _tails_grid_1d(w, centers, halves, p)
        if val is not None:
            return TailBatch(val, val.copy(), zero, zero.astype(int), "continuous")
    return _bracket_tails(w, centers, halves, p, tol, rings_per_octave, shell_pieces)


def continuous_tail(w: Weight, Q: Cube, p: float, tol: float = DEFAULT_TOL, **kw) -> TailReport:
    return continuous_tails(w, [Q], p, tol, **kw).report()


# ---------------------------------------------------------------------------
# theorem constants


@dataclass(frozen=True)
class TheoremConstants:
    n: int
    p: float
    s: float | None
    alpha: float
    beta: float
    B: float
    A: float
    A_sp: float | None
    delta_cp: float | None = None
    delta_ainfty: float | None = None
    delta_dilation: float | None = None
    epsilon_remark: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def alpha_const(n: int, p: float) -> float:
    return 1 / (1 - 2 ** (-n * (p - 1)))


def beta_const(n: int, p: float) -> float:
    return 1 / (1 - 2 ** (-n * p))


def B_const(n: int, p: float) -> float:
    return 2 ** (1 + 4 * n * p + 3 * n) * 20**n / (1 - 2 ** (-n * (p - 1)))


def A_const(n: int, p: float) -> float:
    return 20**n * 2 ** (1 + 3 * n) / (1 - 2 ** (-n * (p - 1)))


def A_sp_const(n: int, p: float, s: float) -> float:
    return 5**n * 2 ** (1 + 5 * n) / (1 - s ** (-n * (p - 1)))


def delta_cp(n: int, p: float, cp: float) -> float:
    """Exponent of the C_p reverse Hoelder inequality: 1 / (B max([w]_Cp, 1))."""
    return 1 / (B_const(n, p) * max(cp, 1.0))


def delta_ainfty(n: int, ainfty: float) -> float:
    """Largest exponent allowed in the sharp A_infinity reverse Hoelder inequality."""
    if ainfty < 1:
        raise ValueError(f"an A_infinity constant is at least 1, got {ainfty}")
    return 1 / (2 ** (n + 1) * ainfty - 1)


def delta_dilation(n: int, p: float, s: float, cps: float) -> float:
    return 1 / (A_sp_const(n, p, s) * max(1.0, cps))


def epsilon_remark(n: int, p: float, cp: float) -> float:
    """Exponent epsilon (with C = 2) in the C_p condition, as quantified by the constant."""
    base = (1 - 2 ** (-n * (p - 1))) / (2 ** (2 * n * p + 3 * n) * 20**n)
    return base * min(1.0, 1 / cp) if cp > 0 else base


def theorem_constants(
    n: int,
    p: float,
    s: float | None = None,
    cp: float | None = None,
    ainfty: float | None = None,
    cps: float | None = None,
) -> TheoremConstants:
    if n not in (1, 2):
        raise ValueError(f"dimension must be 1 or 2, got {n}")
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if s is not None and not 1 < s <= 2:
        raise ValueError(f"s must lie in (1, 2], got {s}")
    return TheoremConstants(
        n=n,
        p=p,
        s=s,
        alpha=alpha_const(n, p),
        beta=beta_const(n, p),
        B=B_const(n, p),
        A=A_const(n, p),
        A_sp=A_sp_const(n, p, s) if s is not None else None,
        delta_cp=delta_cp(n, p, cp) if cp is not None else None,
        delta_ainfty=delta_ainfty(n, ainfty) if ainfty is not None else None,
        delta_dilation=delta_dilation(n, p, s, cps) if (cps is not None and s is not None) else None,
        epsilon_remark=epsilon_remark(n, p, cp) if cp is not None else None,
    )


# ---------------------------------------------------------------------------
# constant estimators


@dataclass
class ConstantEstimate:
    """Sup of a cube functional over a finite family.

    ``value`` uses the adverse end of every certified denominator; ``upper``
    the favourable end.  The trace lists the running sup by family depth.
    """

    name: str
    value: float
    upper: float
    argmax_cube: Cube | None
    family_size: int
    refinement_trace: list[tuple[int, float]] = field(default_factory=list)
    skipped: int = 0
    divergent: bool = False
    ratios: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "upper": self.upper,
            "argmax_cube": self.argmax_cube.to_dict() if self.argmax_cube else None,
            "family_size": self.family_size,
            "skipped": self.skipped,
            "divergent": self.divergent,
            "refinement_trace": [[d, v] for d, v in self.refinement_trace],
        }


def numerator_cells(level: int, resolution: int, min_cells: int = 16) -> int:
    """Local grid size for a cube at ``level``: the family grid resolution inherited from the box."""
    return max(min_cells, resolution >> level)


def family_numerators(w: Weight, family: CubeFamily, resolution: int, min_cells: int = 16) -> np.ndarray:
    """Lower bounds for int_Q M(chi_Q w) for every cube of the family.

    Dyadic members at one level share a grid, so their local maximal
    functions are evaluated as one batch.
    """
    n = family.cubes[0].n
    out = np.empty(len(family))
    by_level: dict[int, list[int]] = {}
    for i, d in enumerate(family.dyadic):
        if d is not None and family.box is not None and (resolution >> d.level) >= min_cells:
            by_level.setdefault(d.level, []).append(i)
    done = np.zeros(len(family), dtype=bool)
    for level, idx in by_level.items():
        mcells = resolution >> level
        cells = local_cell_integrals(w, family.box, resolution)
        if n == 1:
            blocks = cells.reshape(2**level, mcells)
            keys = [family.dyadic[i].index[0] for i in idx]
            batch = blocks[keys]
        else:
            blocks = cells.reshape(2**level, mcells, 2**level, mcells).transpose(0, 2, 1, 3)
            batch = np.stack([blocks[family.dyadic[i].index] for i in idx])
        hcell = family.box.side / resolution
        dens = batch / hcell**n
        M = hl_maximal_batch(dens, n)
        out[idx] = M.reshape(len(idx), -1).sum(axis=1) * hcell**n
        done[idx] = True
    for i in np.flatnonzero(~done):
        Q = family.cubes[i]
        mcells = numerator_cells(family.depths[i], resolution, min_cells)
        cells = local_cell_integrals(w, Q, mcells)
        hcell = Q.side / mcells
        M = hl_maximal_batch(cells / hcell**n, n)
        out[i] = float(M.sum()) * hcell**n
    return out


def _trace(ratios: np.ndarray, depths: list[int]) -> list[tuple[int, float]]:
    depths = np.asarray(depths)
    trace = []
    best = 0.0
    for d in range(int(depths.max()) + 1):
        sel = ratios[depths == d]
        if sel.size:
            best = max(best, float(np.max(sel)))
        trace.append((d, best))
    return trace


def _estimate(name, lo_ratio, hi_ratio, family, skipped, divergent=False) -> ConstantEstimate:
    valid = np.isfinite(lo_ratio)
    if not valid.any():
        raise ValueError(f"{name}: every cube in the family has zero mass")
    lo = np.where(valid, lo_ratio, -np.inf)
    i = int(np.argmax(lo))
    return ConstantEstimate(
        name=name,
        value=float(lo[i]),
        upper=float(np.max(np.where(valid, hi_ratio, -np.inf))),
        argmax_cube=family.cubes[i],
        family_size=len(family),
        refinement_trace=_trace(np.where(valid, lo_ratio, 0.0), family.depths),
        skipped=skipped,
        divergent=divergent,
        ratios=lo_ratio,
    )


def _masses(w: Weight, family: CubeFamily) -> np.ndarray:
    centers, halves = cube_arrays(family.cubes)
    return ball_integrals(w, centers, halves)


def ainfty_constant(
    w: Weight, family: CubeFamily, resolution: int = 256, numerators: np.ndarray | None = None
) -> ConstantEstimate:
    num = family_numerators(w, family, resolution) if numerators is None else numerators
    mass = _masses(w, family)
    pos = mass > 0
    ratio = np.where(pos, num / np.where(pos, mass, 1.0), np.nan)
    # the own-cube competitor already gives M(chi_Q w) >= w on Q; guard the ratio >= 1 against rounding
    ratio = np.where(pos, np.maximum(ratio, 1.0), np.nan)
    return _estimate("ainfty", ratio, ratio, family, int((~pos).sum()))


def _tail_ratio_estimate(name, num, tails: TailBatch, family) -> ConstantEstimate:
    pos = num > 0
    lo = np.where(pos, num / np.where(tails.upper > 0, tails.upper, np.inf), np.nan)
    hi = np.where(pos, num / np.where(tails.lower > 0, tails.lower, np.inf), np.nan)
    return _estimate(name, lo, hi, family, int((~pos).sum()))


def _zero_estimate(name: str, family: CubeFamily) -> ConstantEstimate:
    return ConstantEstimate(name, 0.0, 0.0, None, len(family), [(d, 0.0) for d in range(family.max_depth + 1)], 0, True)


def cp_constant(
    w: Weight,
    p: float,
    family: CubeFamily,
    tol: float = DEFAULT_TOL,
    resolution: int = 256,
    numerators: np.ndarray | None = None,
    tails: TailBatch | None = None,
) -> ConstantEstimate:
    """[w]_{C_p} over the family; 0 with ``divergent`` set when the tails are infinite."""
    try:
        tails = tails or continuous_tails(w, family.cubes, p, tol)
    except TailDivergence:
        return _zero_estimate(f"cp[p={p:g}]", family)
    num = family_numerators(w, family, resolution) if numerators is None else numerators
    return _tail_ratio_estimate(f"cp[p={p:g}]", num, tails, family)


def cps_constant(
    w: Weight,
    p: float,
    s: float,
    family: CubeFamily,
    tol: float = DEFAULT_TOL,
    resolution: int = 256,
    numerators: np.ndarray | None = None,
) -> ConstantEstimate:
    """[w]_{C_p,s}: sup of the average of M(chi_Q w) over Q against a_{C_p,s}(Q)."""
    try:
        tails = discrete_tails(w, family.cubes, p, s, tol)
    except TailDivergence:
        return _zero_estimate(f"cps[p={p:g},s={s:g}]", family)
    num = family_numerators(w, family, resolution) if numerators is None else numerators
    # the numerator enters as an average so that the quotient is dilation invariant, like the tail
    vol = np.array([q.volume for q in family.cubes])
    return _tail_ratio_estimate(f"cps[p={p:g},s={s:g}]", num / vol, tails, family)


def rh_constant(w: Weight, r: float, family: CubeFamily) -> ConstantEstimate:
    """Sup of (avg w^r)^(1/r) / avg w."""
    if not r > 1:
        raise ValueError(f"r must exceed 1, got {r}")
    mass = _masses(w, family)
    mass_r = _masses(w.pow(r), family)
    vol = np.array([q.volume for q in family.cubes])
    pos = mass > 0
    ratio = np.where(pos, (mass_r / vol) ** (1 / r) / np.where(pos, mass / vol, 1.0), np.nan)
    ratio = np.where(pos, np.maximum(ratio, 1.0), np.nan)
    return _estimate(f"rh[r={r:.12g}]", ratio, ratio, family, int((~pos).sum()))
