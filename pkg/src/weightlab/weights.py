"""Weights behind a single box-integral oracle.

Every backend answers ``integral_boxes(lo, hi)`` exactly (closed form or exact
piecewise arithmetic); averages, cell integrals and set integrals are built on
top of it.  Grid weights are extended by zero outside their box.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Cube, GeometryError


class WeightError(ValueError):
    pass


def _as_boxes(lo, hi, n: int) -> tuple[np.ndarray, np.ndarray]:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if n == 1 and (lo.ndim == 0 or lo.shape[-1] != 1):
        lo, hi = lo[..., None], hi[..., None]
    return lo, hi


class Weight:
    """Abstract weight.  Subclasses implement ``integral_boxes`` and ``pow``."""

    n: int = 1
    support: Cube | None = None

    def integral_boxes(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def pow(self, r: float) -> "Weight":
        raise NotImplementedError

    def scaled(self, c: float) -> "Weight":
        raise NotImplementedError

    def to_spec(self) -> dict:
        raise NotImplementedError

    def integral(self, Q: Cube) -> float:
        return float(self.integral_boxes(Q.lo[None, :], Q.hi[None, :])[0])

    def avg(self, Q: Cube) -> float:
        return self.integral(Q) / Q.volume

    def lattice_integrals(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Integrals over the cells of per-batch rectangle lattices in the plane.

        ``xs`` and ``ys`` have shape (m, E) with increasing edges; the result
        has shape (m, E-1, E-1).
        """
        lo = np.stack(np.broadcast_arrays(xs[:, :-1, None], ys[:, None, :-1]), axis=-1)
        hi = np.stack(np.broadcast_arrays(xs[:, 1:, None], ys[:, None, 1:]), axis=-1)
        return self.integral_boxes(lo, hi)

    def __mul__(self, c: float) -> "Weight":
        return self.scaled(c)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# closed-form pieces for |x|^a (L-infinity norm in the plane)


def abs_pow_antiderivative(x: np.ndarray, a: float) -> np.ndarray:
    """sign(x)|x|^(a+1)/(a+1), an antiderivative of |x|^a for a > -1."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.abs(x) ** (a + 1) / (a + 1)


def _quadrant_pieces(x0: np.ndarray, x1: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split [x0, x1] into at most two nonnegative ranges of |x|."""
    neg = x1 <= 0
    pos = x0 >= 0
    mixed = ~neg & ~pos
    u0 = np.where(pos, x0, np.where(neg, -x1, 0.0))
    u1 = np.where(pos, x1, np.where(neg, -x0, -x0))
    v0 = np.zeros_like(x0)
    v1 = np.where(mixed, x1, 0.0)
    return [(u0, u1), (v0, v1)]


def _linf_corner_integral(X: np.ndarray, Y: np.ndarray, a: float) -> np.ndarray:
    """Integral of max(x, y)^a over [0, X] x [0, Y] for X, Y >= 0."""
    m = np.minimum(X, Y)
    M = np.maximum(X, Y)
    pos = m > 0
    ms = np.where(pos, m, 1.0)
    Ms = np.where(pos, M, 1.0)
    square = 2 * ms ** (a + 2) / (a + 2)
    if a == -1:
        strip = ms * np.log(Ms / ms)
    else:
        strip = (ms * Ms ** (a + 1) - ms ** (a + 2)) / (a + 1)
    return np.where(pos, square + strip, 0.0)


def abs_pow_box_integral(lo: np.ndarray, hi: np.ndarray, a: float) -> np.ndarray:
    """Exact integral of |x|^a over boxes of shape (..., n), n in {1, 2}."""
    n = lo.shape[-1]
    if n == 1:
        return abs_pow_antiderivative(hi[..., 0], a) - abs_pow_antiderivative(lo[..., 0], a)
    total = np.zeros(lo.shape[:-1])
    for u0, u1 in _quadrant_pieces(lo[..., 0], hi[..., 0]):
        for v0, v1 in _quadrant_pieces(lo[..., 1], hi[..., 1]):
            total += (
                _linf_corner_integral(u1, v1, a)
                - _linf_corner_integral(u0, v1, a)
                - _linf_corner_integral(u1, v0, a)
                + _linf_corner_integral(u0, v0, a)
            )
    return total


def linf_norm(x: np.ndarray) -> np.ndarray:
    return np.max(np.abs(x), axis=-1)


# ---------------------------------------------------------------------------
# backends


@dataclass(frozen=True)
class ConstantWeight(Weight):
    c: float = 1.0
    n: int = 1

    def __post_init__(self):
        if not self.c > 0:
            raise WeightError("constant weight must be positive")

    def integral_boxes(self, lo, hi):
        lo, hi = _as_boxes(lo, hi, self.n)
        return self.c * np.prod(np.maximum(hi - lo, 0.0), axis=-1)

    def pow(self, r):
        return ConstantWeight(self.c**r, self.n)

    def scaled(self, c):
        return ConstantWeight(self.c * c, self.n)

    def to_spec(self):
        return {"type": "constant", "value": self.c, "n": self.n}


@dataclass(frozen=True)
class PowerWeight(Weight):
    """w(x) = coef * |x|^a with |.| the absolute value (n=1) or the max norm (n=2)."""

    a: float
    n: int = 1
    coef: float = 1.0

    def __post_init__(self):
        if not self.a > -self.n:
            raise WeightError(f"|x|^{self.a} is not locally integrable in dimension {self.n}")
        if not self.coef > 0:
            raise WeightError("coefficient must be positive")

    def integral_boxes(self, lo, hi):
        lo, hi = _as_boxes(lo, hi, self.n)
        return self.coef * abs_pow_box_integral(lo, hi, self.a)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = np.abs(x) if self.n == 1 else linf_norm(x)
        return self.coef * r**self.a

    def pow(self, r):
        return PowerWeight(self.a * r, self.n, self.coef**r)

    def scaled(self, c):
        return PowerWeight(self.a, self.n, self.coef * c)

    def centered_average(self) -> float:
        """Average over the unit-half-side cube centred at the origin: n / (a + n)."""
        return self.coef * self.n / (self.a + self.n)

    def to_spec(self):
        return {"type": "power", "exponent": self.a, "n": self.n, "coef": self.coef}


class GridWeight(Weight):
    """Piecewise-constant weight on N^n cells of ``box``; zero outside."""

    def __init__(self, box: Cube, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != box.n or any(s != values.shape[0] for s in values.shape):
            raise WeightError(f"values of shape {values.shape} do not match a {box.n}-d square grid")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise WeightError("grid values must be finite and nonnegative")
        if not np.any(values > 0):
            raise WeightError("weight is identically zero")
        self.box = box
        self.values = values
        self.n = box.n
        self.support = box
        self.resolution = values.shape[0]
        self.h = box.side / self.resolution
        cells = values * self.h**self.n
        if self.n == 1:
            self._prefix = np.concatenate([[0.0], np.cumsum(cells)])
        else:
            p = np.zeros((self.resolution + 1,) * 2)
            p[1:, 1:] = cells.cumsum(0).cumsum(1)
            self._prefix = p

    @property
    def total(self) -> float:
        return float(self._prefix[(-1,) * self.n])

    def _cumulative(self, pts: np.ndarray) -> np.ndarray:
        """Integral of w over (-inf, x] (product of half-lines), exact for piecewise constants."""
        t = np.clip((pts - self.box.lo) / self.h, 0, self.resolution)
        if self.n == 1:
            t = t[..., 0]
            i = np.minimum(np.floor(t).astype(int), self.resolution - 1)
            f = t - i
            return self._prefix[i] * (1 - f) + self._prefix[i + 1] * f
        i = np.minimum(t.astype(np.intp), self.resolution - 1)
        f = t - i
        P = self._prefix.ravel()
        stride = self.resolution + 1
        k = i[..., 0] * stride + i[..., 1]
        f0, f1 = f[..., 0], f[..., 1]
        low = P.take(k) * (1 - f1) + P.take(k + 1) * f1
        high = P.take(k + stride) * (1 - f1) + P.take(k + stride + 1) * f1
        return low * (1 - f0) + high * f0

    def integral_boxes(self, lo, hi):
        lo, hi = _as_boxes(lo, hi, self.n)
        hi = np.maximum(hi, lo)
        if self.n == 1:
            return np.maximum(self._cumulative(hi) - self._cumulative(lo), 0.0)
        c = self._cumulative
        mixed1 = np.stack([hi[..., 0], lo[..., 1]], axis=-1)
        mixed2 = np.stack([lo[..., 0], hi[..., 1]], axis=-1)
        return np.maximum(c(hi) - c(mixed1) - c(mixed2) + c(lo), 0.0)

    def lattice_integrals(self, xs, ys):
        if self.n != 2:
            return super().lattice_integrals(xs, ys)
        pts = np.stack(np.broadcast_arrays(xs[:, :, None], ys[:, None, :]), axis=-1)
        C = self._cumulative(pts)
        return np.maximum(C[:, 1:, 1:] - C[:, :-1, 1:] - C[:, 1:, :-1] + C[:, :-1, :-1], 0.0)

    def cell_integrals(self) -> np.ndarray:
        return self.values * self.h**self.n

    def pow(self, r):
        v = np.where(self.values > 0, self.values, 0.0) ** r
        return GridWeight(self.box, v)

    def scaled(self, c):
        return GridWeight(self.box, self.values * c)

    def to_spec(self):
        return {
            "type": "grid",
            "box": [float(self.box.lo[0]), float(self.box.hi[0])],
            "resolution": self.resolution,
            "n": self.n,
        }


class ProductWeight(Weight):
    """g(x) * |x|^a where g is piecewise constant on a grid over ``box`` and equals ``outside`` beyond it."""

    def __init__(self, base: PowerWeight, box: Cube, g, outside: float = 0.0):
        g = np.asarray(g, dtype=float)
        if box.n != base.n or g.ndim != box.n:
            raise WeightError("bump grid and base weight dimensions differ")
        if np.any(g < 0) or not np.all(np.isfinite(g)) or outside < 0:
            raise WeightError("bump multiplier must be bounded and nonnegative")
        if not np.any(g > 0) and outside == 0:
            raise WeightError("weight is identically zero")
        self.base = base
        self.box = box
        self.g = g
        self.outside = float(outside)
        self.n = base.n
        self.resolution = g.shape[0]
        self.h = box.side / self.resolution
        self.support = box if outside == 0 else None
        self._edges = [box.lo[i] + self.h * np.arange(self.resolution + 1) for i in range(self.n)]
        if self.n == 1:
            e = self._edges[0]
            cellp = base.integral_boxes(e[:-1, None], e[1:, None])
            self._prefix = np.concatenate([[0.0], np.cumsum(g * cellp)])

    def _inside_integral_1d(self, x0: np.ndarray, x1: np.ndarray) -> np.ndarray:
        e = self._edges[0]
        a, coef = self.base.a, self.base.coef

        def cum(x):
            x = np.clip(x, e[0], e[-1])
            i = np.clip(np.searchsorted(e, x, side="right") - 1, 0, self.resolution - 1)
            part = coef * (abs_pow_antiderivative(x, a) - abs_pow_antiderivative(e[i], a))
            return self._prefix[i] + self.g[i] * part

        return cum(x1) - cum(x0)

    def _inside_integral_2d(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        ex, ey = self._edges
        out = np.zeros(lo.shape[:-1])
        flat_lo = lo.reshape(-1, 2)
        flat_hi = hi.reshape(-1, 2)
        res = out.reshape(-1)
        for q in range(flat_lo.shape[0]):
            x0, y0 = np.maximum(flat_lo[q], self.box.lo)
            x1, y1 = np.minimum(flat_hi[q], self.box.hi)
            if x1 <= x0 or y1 <= y0:
                continue
            i0 = max(int(np.searchsorted(ex, x0, side="right")) - 1, 0)
            i1 = min(int(np.searchsorted(ex, x1, side="left")), self.resolution)
            j0 = max(int(np.searchsorted(ey, y0, side="right")) - 1, 0)
            j1 = min(int(np.searchsorted(ey, y1, side="left")), self.resolution)
            cx0 = np.clip(ex[i0:i1], x0, x1)
            cx1 = np.clip(ex[i0 + 1 : i1 + 1], x0, x1)
            cy0 = np.clip(ey[j0:j1], y0, y1)
            cy1 = np.clip(ey[j0 + 1 : j1 + 1], y0, y1)
            X0, Y0 = np.meshgrid(cx0, cy0, indexing="ij")
            X1, Y1 = np.meshgrid(cx1, cy1, indexing="ij")
            blo = np.stack([X0, Y0], axis=-1)
            bhi = np.stack([X1, Y1], axis=-1)
            res[q] = float(np.sum(self.g[i0:i1, j0:j1] * self.base.integral_boxes(blo, bhi)))
        return out

    def integral_boxes(self, lo, hi):
        lo, hi = _as_boxes(lo, hi, self.n)
        hi = np.maximum(hi, lo)
        if self.n == 1:
            inside = self._inside_integral_1d(lo[..., 0], hi[..., 0])
        else:
            inside = self._inside_integral_2d(lo, hi)
        if self.outside == 0:
            return inside
        clo = np.clip(lo, self.box.lo, self.box.hi)
        chi = np.clip(hi, self.box.lo, self.box.hi)
        full = self.base.integral_boxes(lo, hi)
        clipped = self.base.integral_boxes(clo, np.maximum(chi, clo))
        return inside + self.outside * (full - clipped)

    def pow(self, r):
        return ProductWeight(self.base.pow(r), self.box, self.g**r, self.outside**r)

    def scaled(self, c):
        return ProductWeight(self.base, self.box, self.g * c, self.outside * c)

    def to_spec(self):
        return {
            "type": "product",
            "exponent": self.base.a,
            "box": [float(self.box.lo[0]), float(self.box.hi[0])],
            "resolution": self.resolution,
            "outside": self.outside,
            "n": self.n,
        }


class RadialProductWeight(Weight):
    """g(|x|) * |x|^a with g piecewise constant on rings ``radii[j] <= |x| < radii[j+1]``.

    Beyond the last radius g equals ``outside``.  Each ring meets a box in a
    difference of two boxes, so integrals stay exact and vectorised.
    """

    def __init__(self, base: PowerWeight, radii, values, outside: float = 0.0):
        radii = np.asarray(radii, dtype=float)
        values = np.asarray(values, dtype=float)
        if radii.ndim != 1 or radii.size != values.size + 1 or radii[0] != 0 or np.any(np.diff(radii) <= 0):
            raise WeightError("radii must start at 0, increase, and have one more entry than values")
        if np.any(values < 0) or not np.all(np.isfinite(values)) or outside < 0:
            raise WeightError("radial multiplier must be bounded and nonnegative")
        if not np.any(values > 0) and outside == 0:
            raise WeightError("weight is identically zero")
        self.base = base
        self.radii = radii
        self.values = values
        self.outside = float(outside)
        self.n = base.n
        self.box = Cube((0.0,) * self.n, float(radii[-1]))
        self.support = self.box if outside == 0 else None

    def integral_boxes(self, lo, hi):
        lo, hi = _as_boxes(lo, hi, self.n)
        hi = np.maximum(hi, lo)
        shape = lo.shape[:-1]
        lo = lo.reshape(-1, self.n)
        hi = hi.reshape(-1, self.n)
        full = self.base.integral_boxes(lo, hi)
        # L-infinity radius range of each box: rings outside it are all-or-nothing
        rmax = np.max(np.maximum(np.abs(lo), np.abs(hi)), axis=-1)
        gap = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(np.abs(lo), np.abs(hi)))
        rmin = np.max(gap, axis=-1)

        total = np.zeros(lo.shape[0])
        prev = np.zeros_like(total)
        for g, r in zip(self.values, self.radii[1:]):
            cur = np.where(r >= rmax, full, 0.0)
            cut = (r > rmin) & (r < rmax)
            if cut.any():
                clo = np.clip(lo[cut], -r, r)
                chi = np.clip(hi[cut], -r, r)
                cur[cut] = self.base.integral_boxes(clo, np.maximum(chi, clo))
            total += g * (cur - prev)
            prev = cur
        if self.outside:
            total += self.outside * (full - prev)
        return np.maximum(total, 0.0).reshape(shape)

    def pow(self, r):
        return RadialProductWeight(self.base.pow(r), self.radii, self.values**r, self.outside**r)

    def scaled(self, c):
        return RadialProductWeight(self.base, self.radii, self.values * c, self.outside * c)

    def to_spec(self):
        return {
            "type": "radial_product",
            "exponent": self.base.a,
            "radii": self.radii.tolist(),
            "values": self.values.tolist(),
            "outside": self.outside,
            "n": self.n,
        }


# ---------------------------------------------------------------------------
# oracle helpers


def local_grid_bounds(Q: Cube, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper corners of the m^n cells of a uniform grid over Q, shape (m,)*n + (n,)."""
    e = [Q.lo[i] + Q.side * np.arange(m + 1) / m for i in range(Q.n)]
    if Q.n == 1:
        return e[0][:-1, None], e[0][1:, None]
    X0, Y0 = np.meshgrid(e[0][:-1], e[1][:-1], indexing="ij")
    X1, Y1 = np.meshgrid(e[0][1:], e[1][1:], indexing="ij")
    return np.stack([X0, Y0], axis=-1), np.stack([X1, Y1], axis=-1)


def local_cell_integrals(w: Weight, Q: Cube, m: int) -> np.ndarray:
    """Exact integrals of w over the cells of an m^n grid laid over Q."""
    lo, hi = local_grid_bounds(Q, m)
    return np.maximum(w.integral_boxes(lo, hi), 0.0)


def avg(w: Weight, Q: Cube) -> float:
    return w.avg(Q)


@dataclass(frozen=True)
class CellSet:
    """A union of half-open cells of an N^n grid over ``box``."""

    box: Cube
    mask: np.ndarray

    @property
    def resolution(self) -> int:
        return self.mask.shape[0]

    @property
    def cell_volume(self) -> float:
        return (self.box.side / self.resolution) ** self.box.n

    @property
    def volume(self) -> float:
        return float(self.mask.sum()) * self.cell_volume


def integral_over(w: Weight, E: CellSet) -> float:
    """w(E) for a union of grid cells; the empty set gives 0."""
    if not E.mask.any():
        return 0.0
    cells = local_cell_integrals(w, E.box, E.resolution)
    return math.fsum(cells[E.mask].tolist())


# ---------------------------------------------------------------------------
# gallery and spec files

GALLERY = ("constant", "power_eps", "ap_times_bump", "vanishing_patch")


def _cell_centers(box: Cube, N: int) -> np.ndarray:
    c = [box.lo[i] + box.side * (np.arange(N) + 0.5) / N for i in range(box.n)]
    if box.n == 1:
        return c[0][:, None]
    X, Y = np.meshgrid(c[0], c[1], indexing="ij")
    return np.stack([X, Y], axis=-1)


def unit_box(n: int, half: float = 1.0) -> Cube:
    return Cube((0.0,) * n, half)


def gallery(name: str, n: int = 1, **params) -> Weight:
    """Named example weights.

    power_eps(p, eps): |x|^(n(p-1-eps)).  ap_times_bump(p): |x|^(n(p-1)/2), an
    A_p power, times the tent 1 - |x| sampled on rings of width 1/resolution.  vanishing_patch: ones on
    [-1, 1]^n with a zero block [0, 1/2)^n.
    """
    if name == "constant":
        return ConstantWeight(float(params.get("value", 1.0)), n)
    if name == "power_eps":
        p = float(params.get("p", 2.0))
        eps = float(params.get("eps", 0.1))
        return PowerWeight(n * (p - 1 - eps), n)
    if name == "ap_times_bump":
        p = float(params.get("p", 2.0))
        res = int(params.get("resolution", 64))
        radii = np.linspace(0.0, 1.0, res + 1)
        g = 1 - (radii[:-1] + radii[1:]) / 2
        return RadialProductWeight(PowerWeight(n * (p - 1) / 2, n), radii, g, float(params.get("outside", 0.0)))
    if name == "vanishing_patch":
        res = int(params.get("resolution", 64))
        box = unit_box(n)
        x = _cell_centers(box, res)
        patch = np.all((x >= 0) & (x < 0.5), axis=-1)
        return GridWeight(box, np.where(patch, 0.0, 1.0))
    raise WeightError(f"unknown gallery weight {name!r}; valid names: {', '.join(GALLERY)}")


def gallery_weights(n: int = 1, p: float = 2.0) -> dict[str, Weight]:
    """The shipped gallery at default parameters."""
    return {
        "constant": gallery("constant", n),
        "power_eps_0.1": gallery("power_eps", n, p=p, eps=0.1),
        "ap_times_bump": gallery("ap_times_bump", n, p=p),
        "vanishing_patch": gallery("vanishing_patch", n),
    }


def random_grid_weight(rng: np.random.Generator, n: int = 1, resolution: int = 64, box: Cube | None = None) -> GridWeight:
    """Rough random grid weight: lognormal values with a random zero patch."""
    box = box or unit_box(n)
    shape = (resolution,) * n
    v = rng.lognormal(0.0, 1.5, size=shape)
    v[rng.random(shape) < 0.15] = 0.0
    if not np.any(v > 0):
        v.flat[0] = 1.0
    return GridWeight(box, v)


def load_grid_values(path: str | Path, resolution: int, n: int) -> np.ndarray:
    vals = np.loadtxt(path, dtype=float, ndmin=1)
    if vals.size != resolution**n:
        raise WeightError(f"{path}: expected {resolution ** n} values, found {vals.size}")
    return vals.reshape((resolution,) * n)


def weight_from_spec(spec: dict | str | Path, n: int | None = None, base_dir: Path | None = None) -> Weight:
    """Build a weight from a spec mapping or a JSON file path."""
    if not isinstance(spec, dict):
        path = Path(spec)
        try:
            spec = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise WeightError(f"cannot read weight spec {path}: {exc}") from exc
        base_dir = path.parent
    try:
        kind = spec["type"]
        dim = int(spec.get("n", n or 1))
        if kind == "constant":
            return ConstantWeight(float(spec.get("value", 1.0)), dim)
        if kind == "power":
            return PowerWeight(float(spec["exponent"]), dim)
        if kind == "radial_product":
            return RadialProductWeight(
                PowerWeight(float(spec["exponent"]), dim), spec["radii"], spec["values"], float(spec.get("outside", 0.0))
            )
        if kind == "gallery":
            return gallery(spec["name"], dim, **spec.get("params", {}))
        if kind in ("grid", "product"):
            lo, hi = (float(v) for v in spec["box"])
            box = Cube.from_bounds([lo] * dim, [hi] * dim)
            res = int(spec["resolution"])
            if "values" in spec:
                vals = np.asarray(spec["values"], dtype=float).reshape((res,) * dim)
            else:
                f = Path(spec["file"])
                if base_dir is not None and not f.is_absolute():
                    f = base_dir / f
                vals = load_grid_values(f, res, dim)
            if kind == "grid":
                return GridWeight(box, vals)
            return ProductWeight(PowerWeight(float(spec["exponent"]), dim), box, vals, float(spec.get("outside", 0.0)))
    except KeyError as exc:
        raise WeightError(f"weight spec missing field {exc}") from exc
    except (TypeError, ValueError, GeometryError) as exc:
        raise WeightError(f"malformed weight spec: {exc}") from exc
    raise WeightError(f"unknown weight type {kind!r}")
