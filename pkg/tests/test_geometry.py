import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from weightlab.geometry import (
    Cube,
    DyadicCube,
    GeometryError,
    cover_count,
    cube_family,
    cz_decompose,
    dyadic_pyramid,
    enumerate_dyadic,
    whitney_decompose,
    whitney_ratios,
)
from weightlab.weights import ConstantWeight, GridWeight

coords = st.floats(-10, 10, allow_nan=False)
halves = st.floats(1e-3, 10)


def masks(n, level):
    size = 2**level
    return st.lists(st.booleans(), min_size=size**n, max_size=size**n).map(lambda b: np.array(b).reshape((size,) * n))


# ---------------------------------------------------------------- cubes


@given(coords, coords, halves, st.floats(0.1, 10))
def test_cube_volume_and_dilate(x, y, h, t):
    Q = Cube((x, y), h)
    assert Q.volume == pytest.approx((2 * h) ** 2)
    D = Q.dilate(t)
    assert np.array_equal(D.center, Q.center)
    assert D.half_side == pytest.approx(h * t)


def test_cube_rejects_bad_input():
    with pytest.raises(GeometryError):
        Cube((0.0,), 0.0)
    with pytest.raises(GeometryError):
        Cube((0.0, 0.0, 0.0), 1.0)


def test_from_bounds_roundtrip():
    Q = Cube.from_bounds((0.0, 1.0), (2.0, 3.0))
    assert np.allclose(Q.center, (1.0, 2.0)) and Q.half_side == 1.0
    with pytest.raises(GeometryError):
        Cube.from_bounds((0.0, 0.0), (1.0, 2.0))


# ---------------------------------------------------------------- dyadic


@pytest.mark.parametrize("n,depth,count", [(1, 0, 1), (1, 2, 7), (2, 1, 5), (2, 3, 85)])
def test_enumerate_dyadic_counts(n, depth, count):
    fam = enumerate_dyadic(Cube((0.5,) * n, 0.5), depth)
    assert len(fam) == count == sum(2 ** (n * k) for k in range(depth + 1))


def test_enumerate_dyadic_order_and_root():
    fam = enumerate_dyadic(Cube((0.5,), 0.5), 2)
    assert fam.cubes[0] == Cube((0.5,), 0.5)
    assert fam.dyadic == sorted(fam.dyadic)
    assert fam.depths == [0, 1, 1, 2, 2, 2, 2]


def test_enumerate_dyadic_depth_cap():
    with pytest.raises(GeometryError, match="exceeds"):
        enumerate_dyadic(Cube((0.0,), 1.0), 15)
    with pytest.raises(GeometryError):
        enumerate_dyadic(Cube((0.0,), 1.0), -1)


def test_cube_family_stays_in_dilated_box():
    box = Cube((0.0,), 1.0)
    fam = cube_family(box, 3, dilations=(2.0,), translations=(0.5,))
    big = box.dilate(4.0)
    assert all(big.contains_cube(q) for q in fam)
    assert "dilations" in fam.policy and "translations" in fam.policy


@st.composite
def dyadic_cubes(draw, n=2, max_level=5):
    k = draw(st.integers(0, max_level))
    idx = tuple(draw(st.integers(0, 2**k - 1)) for _ in range(n))
    return DyadicCube(k, idx)


@given(dyadic_cubes(), dyadic_cubes())
def test_dyadic_nesting_law(a, b):
    if a.intersects(b):
        assert a.contains(b) or b.contains(a)
    else:
        assert not a.contains(b) and not b.contains(a)


@given(dyadic_cubes())
def test_children_partition(d):
    kids = d.children()
    assert len(kids) == 4
    assert all(k.parent() == d for k in kids)
    level = d.level + 3
    mask = np.zeros((2**level,) * 2, dtype=int)
    for k in kids:
        mask[k.cell_slices(level)] += 1
    parent_cells = np.zeros_like(mask)
    parent_cells[d.cell_slices(level)] = 1
    assert np.array_equal(mask, parent_cells)


# ---------------------------------------------------------------- Whitney


def _check_whitney(omega, cubes, R=1.0):
    level = int(np.log2(omega.shape[0]))
    count = np.zeros(omega.shape, dtype=int)
    for c in cubes:
        count[c.cell_slices(level)] += 1
    assert count.max(initial=0) <= 1, "cubes overlap"
    assert np.array_equal(count == 1, omega), "cover is not exact"
    ratios = whitney_ratios(cubes, omega)
    interior = np.array([c.level < level for c in cubes], dtype=bool)
    assert np.all(ratios[interior] >= 5 * R)
    assert np.all(ratios[interior] <= 15 * R)
    return ratios, interior


def test_whitney_unit_interval_chain():
    omega = np.ones(256, dtype=bool)  # the open interval (0, 1) on a 256-cell grid
    cubes = whitney_decompose(omega)
    _check_whitney(omega, cubes)
    # symmetric under reflection, shrinking toward both ends
    reflected = sorted(DyadicCube(c.level, (2**c.level - 1 - c.index[0],)) for c in cubes)
    assert reflected == cubes
    coarse = [c for c in cubes if c.level < 8]
    left = sorted((c for c in coarse if c.index[0] < 2 ** (c.level - 1)), key=lambda c: c.index[0] / 2**c.level)
    sides = [2.0**-c.level for c in left]
    assert sides == sorted(sides)


def test_whitney_empty_and_strict():
    assert whitney_decompose(np.zeros(16, dtype=bool)) == []
    omega = np.zeros(16, dtype=bool)
    omega[5] = True
    with pytest.raises(GeometryError, match="cell"):
        whitney_decompose(omega, strict=True)
    # non-strict: the single cell is returned as boundary layer
    assert whitney_decompose(omega) == [DyadicCube(4, (5,))]


def test_whitney_single_cell_with_permissive_band():
    omega = np.zeros(16, dtype=bool)
    omega[4:8] = True
    cubes = whitney_decompose(omega, gap_band=(0.0, 15.0))
    assert cubes == [DyadicCube(2, (1,))]


@pytest.mark.parametrize("n,level", [(1, 7), (2, 5)])
@given(data=st.data())
def test_whitney_postconditions_random(n, level, data):
    omega = data.draw(masks(n, level))
    cubes = whitney_decompose(omega)
    if not omega.any():
        assert cubes == []
        return
    _check_whitney(omega, cubes)


@given(masks(2, 5))
def test_whitney_dilates_of_interior_cubes_stay_inside(omega):
    R = 1.0
    cubes = whitney_decompose(omega, R)
    interior = [c for c in cubes if c.level < 5]
    # distance >= 5R sides keeps R Q_j inside omega
    cnt = cover_count(interior, 2, 7, dilation=R)
    fine = np.repeat(np.repeat(omega, 4, axis=0), 4, axis=1)
    assert np.all(cnt[~fine] == 0)


def test_whitney_bounded_overlap_is_measured():
    omega = np.zeros((64, 64), dtype=bool)
    omega[8:56, 8:56] = True
    cubes = whitney_decompose(omega, 1.0)
    cnt = cover_count(cubes, 2, 8, dilation=2.0)
    # a finite, small overlap constant; value reported rather than compared with the unstated C(n, R)
    assert 1 <= cnt.max() <= 16


def test_whitney_rejects_bad_grid():
    with pytest.raises(GeometryError):
        whitney_decompose(np.ones(12, dtype=bool))
    with pytest.raises(GeometryError):
        whitney_decompose(np.ones(16, dtype=bool), R=0.5)


# ---------------------------------------------------------------- Calderon-Zygmund


def _left_half_weight():
    return GridWeight(Cube((0.5,), 0.5), [4.0, 0.0])


def test_cz_examples():
    unit = Cube((0.5,), 0.5)
    assert cz_decompose(ConstantWeight(1.0, 1), unit, 2.0, depth=6).cubes == []
    cz = cz_decompose(_left_half_weight(), unit, 3.0, depth=6)
    assert cz.cubes == [DyadicCube(1, (0,))]
    assert cz.integrals[0] / cz.volumes[0] == 4.0
    with pytest.raises(GeometryError, match="below the average"):
        cz_decompose(_left_half_weight(), unit, 1.0)


@pytest.mark.parametrize("n", [1, 2])
@given(seed=st.integers(0, 10_000), lam_factor=st.floats(1.001, 8.0))
def test_cz_sandwich_and_maximality(n, seed, lam_factor):
    rng = np.random.default_rng(seed)
    res = 16
    box = Cube((0.5,) * n, 0.5)
    vals = rng.lognormal(0, 1.5, (res,) * n) * (rng.random((res,) * n) < 0.7)
    vals.flat[0] += 1.0
    w = GridWeight(box, vals)
    depth = 5
    lam = lam_factor * w.total / box.volume
    cz = cz_decompose(w, box, lam, depth)
    pyr = dyadic_pyramid(w.cell_integrals() if depth == 4 else _refine(w.cell_integrals(), depth - 4, n))
    for c, mass, vol in zip(cz.cubes, cz.integrals, cz.volumes):
        assert lam * vol < mass <= 2**n * lam * vol
        if c.level:
            par = c.parent()
            assert pyr[par.level][par.index] <= lam * vol * 2**n
    assert lam * cz.omega_volume <= cz.omega_mass <= 2**n * lam * cz.omega_volume


def _refine(cells, extra, n):
    out = cells
    for axis in range(n):
        out = np.repeat(out, 2**extra, axis=axis)
    return out / 2 ** (n * extra)


def test_dyadic_pyramid_levels_add_up():
    cells = np.arange(16.0).reshape(4, 4)
    pyr = dyadic_pyramid(cells)
    assert [a.shape for a in pyr] == [(1, 1), (2, 2), (4, 4)]
    assert pyr[0][0, 0] == cells.sum()
    for a, b in itertools.pairwise(pyr):
        assert a.sum() == b.sum()
