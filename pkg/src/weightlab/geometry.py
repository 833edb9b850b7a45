"""Cubes, dyadic families, and the Whitney / Calderon-Zygmund decompositions.

Everything here works with axis-parallel cubes in dimension 1 or 2.  Open
sets are unions of half-open grid cells over an ambient box, stored as
boolean masks, so every geometric postcondition is checkable cell by cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_DEPTH = 14


class GeometryError(ValueError):
    pass


def as_points(x, n: int) -> np.ndarray:
    """Coerce ``x`` to an array of points of shape (..., n); scalars and 1-D arrays are 1-D points."""
    x = np.asarray(x, dtype=float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != n:
        raise GeometryError(f"points of shape {x.shape} are not {n}-dimensional")
    return x


@dataclass(frozen=True)
class Cube:
    center: tuple[float, ...]
    half_side: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if not self.half_side > 0:
            raise GeometryError(f"half_side must be positive, got {self.half_side}")
        if self.n not in (1, 2):
            raise GeometryError(f"dimension must be 1 or 2, got {self.n}")

    @classmethod
    def from_bounds(cls, lo: Sequence[float] | float, hi: Sequence[float] | float) -> "Cube":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        sides = hi - lo
        if not np.allclose(sides, sides[0], rtol=1e-12, atol=0):
            raise GeometryError(f"bounds {lo}..{hi} do not describe a cube")
        return cls(tuple((lo + hi) / 2), float(sides[0]) / 2)

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def side(self) -> float:
        return 2 * self.half_side

    @property
    def volume(self) -> float:
        return self.side**self.n

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - self.half_side

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center) + self.half_side

    def dilate(self, t: float) -> "Cube":
        if not t > 0:
            raise GeometryError(f"dilation factor must be positive, got {t}")
        return Cube(self.center, self.half_side * t)

    def translate(self, shift: Sequence[float]) -> "Cube":
        return Cube(tuple(np.asarray(self.center) + np.asarray(shift, dtype=float)), self.half_side)

    def contains(self, x) -> np.ndarray:
        """Membership in the half-open cube, vectorised over points of shape (..., n)."""
        x = as_points(x, self.n)
        return np.all((x >= self.lo) & (x < self.hi), axis=-1)

    def contains_cube(self, other: "Cube") -> bool:
        return bool(np.all(other.lo >= self.lo) and np.all(other.hi <= self.hi))

    def to_dict(self) -> dict:
        return {"center": list(self.center), "half_side": self.half_side}


@dataclass(frozen=True, order=True)
class DyadicCube:
    """Dyadic cube of ``level`` k and integer ``index`` m relative to an ambient box.

    With the box rescaled to [0, 1)^n it is the product of [m_i 2^-k, (m_i+1) 2^-k).
    Ordering is lexicographic by (level, index).
    """

    level: int
    index: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.index)

    def children(self) -> list["DyadicCube"]:
        base = [2 * m for m in self.index]
        if self.n == 1:
            offsets = [(0,), (1,)]
        else:
            offsets = [(0, 0), (0, 1), (1, 0), (1, 1)]
        return [DyadicCube(self.level + 1, tuple(b + o for b, o in zip(base, off))) for off in offsets]

    def parent(self) -> "DyadicCube":
        if self.level == 0:
            raise GeometryError("level-0 cube has no parent")
        return DyadicCube(self.level - 1, tuple(m // 2 for m in self.index))

    def contains(self, other: "DyadicCube") -> bool:
        if other.level < self.level:
            return False
        shift = other.level - self.level
        return all(m >> shift == s for m, s in zip(other.index, self.index))

    def intersects(self, other: "DyadicCube") -> bool:
        return self.contains(other) or other.contains(self)

    def cell_slices(self, grid_level: int) -> tuple[slice, ...]:
        """Index ranges of the grid cells (at ``grid_level``) making up this cube."""
        if grid_level < self.level:
            raise GeometryError(f"cube level {self.level} is finer than grid level {grid_level}")
        k = 1 << (grid_level - self.level)
        return tuple(slice(m * k, (m + 1) * k) for m in self.index)

    def to_cube(self, box: Cube) -> Cube:
        side = box.side / 2**self.level
        lo = box.lo + side * np.asarray(self.index, dtype=float)
        return Cube(tuple(lo + side / 2), side / 2)

    def bounds(self, box: Cube) -> tuple[np.ndarray, np.ndarray]:
        side = box.side / 2**self.level
        lo = box.lo + side * np.asarray(self.index, dtype=float)
        return lo, lo + side


@dataclass
class CubeFamily:
    """Finite stand-in for "all cubes": a list of cubes plus the depth each was generated at."""

    cubes: list[Cube]
    depths: list[int]
    policy: str
    box: Cube | None = None
    dyadic: list[DyadicCube | None] = field(default_factory=list)

    def __post_init__(self):
        if not self.cubes:
            raise GeometryError("cube family must be nonempty")
        if len(self.depths) != len(self.cubes):
            raise GeometryError("depths and cubes differ in length")
        if not self.dyadic:
            self.dyadic = [None] * len(self.cubes)

    def __len__(self) -> int:
        return len(self.cubes)

    def __iter__(self):
        return iter(self.cubes)

    @property
    def max_depth(self) -> int:
        return max(self.depths)


def _indices(n: int, count: int) -> Iterable[tuple[int, ...]]:
    if n == 1:
        return ((i,) for i in range(count))
    return ((i, j) for i in range(count) for j in range(count))


def enumerate_dyadic(box: Cube, depth: int, max_depth: int = MAX_DEPTH) -> CubeFamily:
    """All dyadic subcubes of ``box`` of levels 0..depth, ordered by level then index."""
    if depth < 0:
        raise GeometryError(f"depth must be nonnegative, got {depth}")
    if depth > max_depth:
        raise GeometryError(f"depth {depth} exceeds the configured maximum {max_depth}")
    cubes, depths, dyadic = [], [], []
    for k in range(depth + 1):
        for idx in _indices(box.n, 2**k):
            d = DyadicCube(k, idx)
            dyadic.append(d)
            cubes.append(d.to_cube(box))
            depths.append(k)
    return CubeFamily(cubes, depths, f"dyadic-to-depth-{depth}", box=box, dyadic=dyadic)


def cube_family(
    box: Cube,
    depth: int,
    dilations: Sequence[float] = (),
    translations: Sequence[float] = (),
    max_depth: int = MAX_DEPTH,
) -> CubeFamily:
    """Dyadic family of ``box`` extended by dilates and by translates (in units of the cube side)."""
    fam = enumerate_dyadic(box, depth, max_depth)
    cubes, depths, dyadic = list(fam.cubes), list(fam.depths), list(fam.dyadic)
    for q, d in zip(fam.cubes, fam.depths):
        for t in dilations:
            cubes.append(q.dilate(t))
            depths.append(d)
            dyadic.append(None)
        for frac in translations:
            for axis in range(box.n):
                shift = np.zeros(box.n)
                shift[axis] = frac * q.side
                cubes.append(q.translate(shift))
                depths.append(d)
                dyadic.append(None)
    tag = fam.policy
    if dilations:
        tag += "+dilations" + ",".join(f"{t:g}" for t in dilations)
    if translations:
        tag += "+translations" + ",".join(f"{t:g}" for t in translations)
    return CubeFamily(cubes, depths, tag, box=box, dyadic=dyadic)


# ---------------------------------------------------------------------------
# Grid open sets and the Whitney decomposition


def _grid_level(mask: np.ndarray) -> int:
    size = mask.shape[0]
    level = int(round(math.log2(size)))
    if 2**level != size or any(s != size for s in mask.shape):
        raise GeometryError(f"grid shape {mask.shape} must be a square power of two")
    if mask.ndim not in (1, 2):
        raise GeometryError(f"grid dimension must be 1 or 2, got {mask.ndim}")
    return level


def _complement_distance(mask: np.ndarray) -> np.ndarray:
    """Per-cell L-infinity gap (in cells) between each cell and the complement of ``mask``.

    The complement includes everything outside the grid, so a cell on the
    grid edge has gap 0.  The gap between two closed cells at index offset
    (di, dj) is max(|di|-1, |dj|-1, 0).
    """
    from scipy import ndimage

    padded = np.pad(~mask, 1, constant_values=True)
    # chessboard distance between cell centres, minus one, is the boundary gap
    dist = ndimage.distance_transform_cdt(~padded, metric="chessboard")
    inner = tuple(slice(1, -1) for _ in range(mask.ndim))
    return np.maximum(dist[inner].astype(np.int64) - 1, 0)


def _block_min(a: np.ndarray, k: int) -> np.ndarray:
    if k == 1:
        return a
    if a.ndim == 1:
        return a.reshape(-1, k).min(axis=1)
    m = a.shape[0] // k
    return a.reshape(m, k, m, k).min(axis=(1, 3))


def _block_all(a: np.ndarray, k: int) -> np.ndarray:
    if k == 1:
        return a
    if a.ndim == 1:
        return a.reshape(-1, k).all(axis=1)
    m = a.shape[0] // k
    return a.reshape(m, k, m, k).all(axis=(1, 3))


def whitney_decompose(
    omega: np.ndarray,
    R: float = 1.0,
    gap_band: tuple[float, float] | None = None,
    finest_level: int | None = None,
    strict: bool = False,
) -> list[DyadicCube]:
    """Whitney decomposition of a grid open set.

    ``omega`` is a boolean mask of 2^L (or 2^L x 2^L) cells over an ambient
    box; the box is the level-0 dyadic cube.  A dyadic cube is selected when
    its L-infinity distance to the complement is at least ``gap_band[0]``
    times its side and no ancestor was selected.  Parents of selected cubes
    failed the test, which caps the ratio at 2*lower + 1 (<= 15R for the
    default band [5R, 15R]).

    Points of omega arbitrarily close to the complement need arbitrarily
    small cubes, so a finite decomposition cannot meet the lower bound near
    the boundary.  The cells of ``finest_level`` (default: the grid level)
    left uncovered form a boundary layer: with ``strict=False`` they are
    returned as-is so the cover is exact, with ``strict=True`` the first such
    cell is reported in a GeometryError.
    """
    omega = np.asarray(omega, dtype=bool)
    level = _grid_level(omega)
    if R < 1:
        raise GeometryError(f"R must be >= 1, got {R}")
    lower, upper = gap_band if gap_band is not None else (5 * R, 15 * R)
    if not 0 <= lower <= upper:
        raise GeometryError(f"invalid gap band {gap_band}")
    if finest_level is None:
        finest_level = level
    if finest_level < level:
        raise GeometryError(f"finest_level {finest_level} is coarser than the grid level {level}")
    if finest_level > MAX_DEPTH + 6:
        raise GeometryError(f"finest_level {finest_level} too deep")
    if not omega.any():
        return []

    extra = finest_level - level
    if extra:
        omega_f = omega
        for axis in range(omega.ndim):
            omega_f = np.repeat(omega_f, 2**extra, axis=axis)
    else:
        omega_f = omega
    gap = _complement_distance(omega_f)  # in finest cells
    inside = omega_f

    covered = np.zeros_like(omega_f)
    result: list[DyadicCube] = []
    for k in range(finest_level + 1):
        size = 2 ** (finest_level - k)  # cube side in finest cells
        full = _block_all(inside, size)
        gmin = _block_min(gap, size)
        free = ~_block_all(covered, size) if k else np.ones_like(full)
        ok = full & free & (gmin >= lower * size)
        if k == finest_level:
            layer = inside & ~covered & ~ok
            if strict and layer.any():
                bad = tuple(int(i) for i in np.argwhere(layer)[0])
                raise GeometryError(
                    f"gap band [{lower}, {upper}] unachievable at level {finest_level}: "
                    f"cell {bad} has distance/side ratio {float(gap[bad])}"
                )
            ok = ok | layer
        for idx in np.argwhere(ok):
            d = DyadicCube(k, tuple(int(i) for i in idx))
            result.append(d)
            covered[d.cell_slices(finest_level)] = True
    for d in result:
        if d.level == finest_level:
            continue
        r = whitney_ratio(d, gap, finest_level)
        if r > upper:
            raise GeometryError(f"cube {d} has distance/side ratio {r} above the band upper bound {upper}")
    result.sort()
    return result


def whitney_ratio(cube: DyadicCube, gap: np.ndarray, finest_level: int) -> float:
    """dist(cube, complement) / side, from the per-cell gap table at ``finest_level``."""
    sl = cube.cell_slices(finest_level)
    size = 2 ** (finest_level - cube.level)
    return float(gap[sl].min()) / size


def whitney_ratios(cubes: Sequence[DyadicCube], omega: np.ndarray, finest_level: int | None = None) -> np.ndarray:
    omega = np.asarray(omega, dtype=bool)
    level = _grid_level(omega)
    finest_level = level if finest_level is None else finest_level
    omega_f = omega
    for axis in range(omega.ndim):
        omega_f = np.repeat(omega_f, 2 ** (finest_level - level), axis=axis)
    gap = _complement_distance(omega_f)
    return np.array([whitney_ratio(c, gap, finest_level) for c in cubes])


def cover_count(cubes: Sequence[DyadicCube], n: int, grid_level: int, dilation: float = 1.0) -> np.ndarray:
    """Pointwise sum of indicators of the dilated cubes, sampled at cell centres of ``grid_level``."""
    size = 2**grid_level
    centers = (np.arange(size) + 0.5) / size
    if n == 1:
        pts = centers[:, None]
    else:
        X, Y = np.meshgrid(centers, centers, indexing="ij")
        pts = np.stack([X, Y], axis=-1)
    count = np.zeros(pts.shape[:-1], dtype=np.int64)
    for c in cubes:
        side = 2.0**-c.level
        mid = (np.asarray(c.index) + 0.5) * side
        half = dilation * side / 2
        count += np.all((pts >= mid - half) & (pts < mid + half), axis=-1)
    return count


# ---------------------------------------------------------------------------
# Dyadic pyramids and the Calderon-Zygmund decomposition


def dyadic_pyramid(cell_integrals: np.ndarray) -> list[np.ndarray]:
    """Integrals over every dyadic cube, finest level last.

    Parents are formed by adding children, so a parent sum is never smaller
    than any child sum in floating point when the data are nonnegative.
    """
    levels = [np.asarray(cell_integrals, dtype=float)]
    while levels[-1].shape[0] > 1:
        a = levels[-1]
        if a.ndim == 1:
            levels.append(a[0::2] + a[1::2])
        else:
            levels.append((a[0::2, 0::2] + a[1::2, 0::2]) + (a[0::2, 1::2] + a[1::2, 1::2]))
    return levels[::-1]


@dataclass
class CZDecomposition:
    cubes: list[DyadicCube]
    integrals: list[float]
    volumes: list[float]
    lam: float
    depth: int

    @property
    def omega_volume(self) -> float:
        return math.fsum(self.volumes)

    @property
    def omega_mass(self) -> float:
        return math.fsum(self.integrals)


def cz_decompose(w, Q: Cube, lam: float, depth: int = 8) -> CZDecomposition:
    """Maximal dyadic subcubes of Q (down to ``depth``) whose average of w exceeds ``lam``."""
    from .weights import local_cell_integrals

    if depth > MAX_DEPTH:
        raise GeometryError(f"depth {depth} exceeds the configured maximum {MAX_DEPTH}")
    cells = local_cell_integrals(w, Q, 2**depth)
    pyr = dyadic_pyramid(cells)
    if not lam > 0:
        raise GeometryError(f"lambda must be positive, got {lam}")
    vol0 = Q.volume
    if pyr[0].reshape(-1)[0] > lam * vol0:
        raise GeometryError(
            f"lambda {lam} is below the average of w over Q ({pyr[0].reshape(-1)[0] / vol0}); "
            "the decomposition is undefined at this height"
        )
    n = Q.n
    cubes, integrals, volumes = [], [], []
    blocked = np.zeros(pyr[-1].shape, dtype=bool)
    for k in range(depth + 1):
        vol = vol0 / 2 ** (n * k)
        size = 2 ** (depth - k)
        free = ~_block_all(blocked, size) if k else np.ones(pyr[k].shape, dtype=bool)
        hits = free & (pyr[k] > lam * vol)
        for idx in np.argwhere(hits):
            d = DyadicCube(k, tuple(int(i) for i in idx))
            cubes.append(d)
            integrals.append(float(pyr[k][tuple(idx)]))
            volumes.append(vol)
            blocked[d.cell_slices(depth)] = True
    return CZDecomposition(cubes, integrals, volumes, lam, depth)
