"""Maximal operators on grids and the exact maximal function of a cube indicator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import Cube, as_points, dyadic_pyramid
from .weights import Weight, local_cell_integrals


@dataclass(frozen=True)
class GridFunction:
    """Function constant on each of the N^n half-open cells of ``box``.

    Weights and maximal functions are nonnegative; signals fed to T* may be signed.
    """

    box: Cube
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != self.box.n or any(s != v.shape[0] for s in v.shape):
            raise ValueError(f"values of shape {v.shape} do not fit a {self.box.n}-d square grid")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.box.n

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return self.box.side / self.resolution

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    def centers(self) -> np.ndarray:
        c = [self.box.lo[i] + self.h * (np.arange(self.resolution) + 0.5) for i in range(self.n)]
        if self.n == 1:
            return c[0][:, None]
        X, Y = np.meshgrid(c[0], c[1], indexing="ij")
        return np.stack([X, Y], axis=-1)

    def integral(self) -> float:
        return float(np.sum(self.values)) * self.cell_volume

    def lp_norm(self, p: float, weight_cells: np.ndarray | None = None) -> float:
        """(sum |f|^p * w(cell))^(1/p); Lebesgue measure when ``weight_cells`` is None."""
        mass = self.cell_volume if weight_cells is None else weight_cells
        return float(np.sum(np.abs(self.values) ** p * mass)) ** (1 / p)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.box, values)

    @classmethod
    def sample(cls, f, box: Cube, resolution: int) -> "GridFunction":
        """Evaluate the callable ``f`` at cell centres."""
        proto = cls(box, np.zeros((resolution,) * box.n))
        x = proto.centers()
        return cls(box, f(x[..., 0] if box.n == 1 else x))


# ---------------------------------------------------------------------------
# M(chi_Q)


def m_chi_cube(Q: Cube, x) -> np.ndarray:
    """Uncentred maximal function of the indicator of Q, at points of shape (..., n).

    A competitor cube of side L containing x meets Q in a box with sides
    clamp(L - d_i, 0, s), d_i the gap between x and Q along axis i, so the
    value is max_L prod_i clamp(L - d_i, 0, s) / L^n.  The maximiser is one of
    L = d_i, d_i + s, 2 d_i, s, since the objective is monotone between them.  In 1-D this is s / (s + d).
    """
    x = as_points(x, Q.n)
    d = np.maximum(np.maximum(Q.lo - x, x - Q.hi), 0.0)
    return m_chi_gaps(d, Q.side)


def m_chi_gaps(d: np.ndarray, s: float) -> np.ndarray:
    """M(chi_Q) as a function of the per-axis gaps d (shape (..., n)) to a cube of side s.

    Non-increasing in every gap, which is what makes corner evaluations of a
    rectangle certified bounds.
    """
    d = np.asarray(d, dtype=float)
    n = d.shape[-1]
    dmax = d.max(axis=-1)
    cands = [d[..., i] for i in range(n)]
    cands += [d[..., i] + s for i in range(n)]
    cands += [2 * d[..., i] for i in range(n)]
    cands.append(np.full(dmax.shape, s))
    best = np.zeros(dmax.shape)
    for L in cands:
        L = np.maximum(L, dmax)
        Ls = np.where(L > 0, L, 1.0)
        val = np.prod(np.clip(Ls[..., None] - d, 0, s), axis=-1) / Ls**n
        best = np.maximum(best, np.where(L > 0, val, 1.0))
    return np.where(dmax == 0, 1.0, np.minimum(best, 1.0))


def m_chi_radial(Q: Cube, r) -> np.ndarray:
    """M(chi_Q) at L-infinity distance r >= 3 half-sides from the centre, where it is (2h/(h+r))^n."""
    h = Q.half_side
    return (2 * h / (h + np.asarray(r, dtype=float))) ** Q.n


# ---------------------------------------------------------------------------
# Hardy-Littlewood maximal function on grids


def _prefix(values: np.ndarray, n: int) -> np.ndarray:
    """Inclusive prefix sums over the last n axes, with a leading zero row per axis."""
    P = values
    for axis in range(values.ndim - n, values.ndim):
        P = np.cumsum(P, axis=axis)
        pad = [(0, 0)] * values.ndim
        pad[axis] = (1, 0)
        P = np.pad(P, pad)
    return P


def _window_sums(P: np.ndarray, L: int, n: int) -> np.ndarray:
    if n == 1:
        return P[..., L:] - P[..., :-L]
    return P[..., L:, L:] - P[..., :-L, L:] - P[..., L:, :-L] + P[..., :-L, :-L]


def hl_maximal(f: GridFunction, sides=None) -> GridFunction:
    """Sup of averages of |f| over grid-aligned cubes containing each cell.

    ``sides`` restricts the competitor side lengths (in cells); the default
    uses every side 1..N, which is exact for piecewise-constant data.  A
    smaller family gives a pointwise smaller result.
    """
    return f.with_values(hl_maximal_batch(np.abs(f.values), f.n, sides))


def hl_maximal_batch(values: np.ndarray, n: int, sides=None) -> np.ndarray:
    """hl_maximal over the last n axes of ``values``; leading axes index independent grids."""
    N = values.shape[-1]
    sides = range(1, N + 1) if sides is None else sorted({int(L) for L in sides if 1 <= L <= N})
    P = _prefix(values, n)
    out = values.copy()
    for L in sides:
        if L == 1:
            continue
        avg = _window_sums(P, L, n) / L**n
        np.maximum(out, _covering_max(avg, L, n), out=out)
    return out


def _covering_max(avg: np.ndarray, L: int, n: int) -> np.ndarray:
    """For each cell c, max of avg[i] over window starts i with i <= c <= i + L - 1."""
    out = avg
    for axis in range(avg.ndim - n, avg.ndim):
        cells = out.shape[axis] + L - 1
        widths = [(L - 1, L - 1) if a == axis else (0, 0) for a in range(avg.ndim)]
        padded = np.pad(out, widths, constant_values=-np.inf)
        # size-L filter at index j spans j - L//2 .. j - L//2 + L - 1
        m = ndimage.maximum_filter1d(padded, size=L, axis=axis, mode="constant", cval=-np.inf)
        sl = [slice(None)] * avg.ndim
        sl[axis] = slice(L // 2, L // 2 + cells)
        out = m[tuple(sl)]
    return out


def power_of_two_sides(N: int) -> list[int]:
    return [2**k for k in range(int(np.log2(N)) + 1)] + [N]


# ---------------------------------------------------------------------------
# dyadic and localized maximal functions


def dyadic_local_maximal(w: Weight, Q: Cube, depth: int) -> GridFunction:
    """M_{d,Q} w on the 2^depth grid over Q: running max of averages down the dyadic ancestor chain."""
    cells = local_cell_integrals(w, Q, 2**depth)
    pyr = dyadic_pyramid(cells)
    vol = Q.volume
    best = np.array(pyr[0] / vol)
    for k in range(1, depth + 1):
        avg = pyr[k] / (vol / 2 ** (Q.n * k))
        for axis in range(Q.n):
            best = np.repeat(best, 2, axis=axis)
        best = np.maximum(best, avg)
    return GridFunction(Q, best.reshape((2**depth,) * Q.n))


def maximal_of_localized(w: Weight, Q: Cube, resolution: int, sides=None) -> GridFunction:
    """M(chi_Q w) restricted to Q, on a resolution^n grid over Q.

    For x in Q a competitor cube poking out of Q can be slid or shrunk into Q
    without losing mass or gaining volume, so cubes inside Q suffice.  Cell
    integrals are exact, so every grid value is a lower bound for M(chi_Q w)
    throughout its cell.
    """
    cells = local_cell_integrals(w, Q, resolution)
    h = Q.side / resolution
    f = GridFunction(Q, cells / h**Q.n)
    return hl_maximal(f, sides)


def localized_numerator(w: Weight, Q: Cube, resolution: int, sides=None) -> float:
    """Lower bound for the integral over Q of M(chi_Q w)."""
    return maximal_of_localized(w, Q, resolution, sides).integral()
