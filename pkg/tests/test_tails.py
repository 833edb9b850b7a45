import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from weightlab.geometry import Cube, cube_family, enumerate_dyadic
from weightlab.tails import (
    TailDivergence,
    TailError,
    ainfty_constant,
    beta_const,
    continuous_tail,
    continuous_tails,
    cp_constant,
    cps_constant,
    discrete_tail,
    discrete_tail_s,
    discrete_tails,
    rh_constant,
    theorem_constants,
)
from weightlab.weights import ConstantWeight, GridWeight, PowerWeight, gallery, random_grid_weight

UNIT = Cube.from_bounds(0.0, 1.0)
SYM = Cube.from_bounds(-1.0, 1.0)

# frozen from mpmath quadrature / series at 30 digits
CONT_ORACLES = [
    (0.5, Cube.from_bounds(0.25, 0.75), 2.0, 1.62529488666562735929),
    (-0.5, SYM, 2.0, 2 * math.pi),
    (1.0, Cube.from_bounds(1.0, 3.0), 3.0, 32 / 3),
]
DISC_ORACLES = [
    (SYM, 2.0, 2.27614237491539669920),
    (UNIT, 2.0, 1.84324982829632037099),
]


def _contains(rep, ref, rel=1e-12):
    return rep.value * (1 - rel) <= ref <= rep.upper * (1 + rel)


@pytest.mark.parametrize("a,Q,p,ref", CONT_ORACLES)
def test_continuous_power_oracles(a, Q, p, ref):
    rep = continuous_tail(PowerWeight(a, 1), Q, p)
    assert rep.value == pytest.approx(ref, rel=1e-11)
    # the bracket backend must agree with the closed form
    br = continuous_tails(PowerWeight(a, 1), [Q], p, exact=False).report()
    assert _contains(br, ref, 1e-9)
    assert br.upper - br.value < 0.05 * ref


@pytest.mark.parametrize("Q,p,ref", DISC_ORACLES)
def test_discrete_power_oracles(Q, p, ref):
    rep = discrete_tail(PowerWeight(0.5, 1), Q, p)
    assert _contains(rep, ref) and rep.truncation_bound <= 1e-9
    assert rep.terms_used >= 0 and rep.kind == "discrete_2"


def test_discrete_s_oracle():
    rep = discrete_tail_s(PowerWeight(0.5, 1), UNIT, 2.0, 1.5)
    assert _contains(rep, 2.86730058900512464600)
    assert rep.kind == "discrete_s"


def test_constant_tails():
    w = ConstantWeight(1.0, 1)
    assert continuous_tail(w, UNIT, 2).value == pytest.approx(3.0, rel=1e-14)
    assert continuous_tail(w, UNIT, 3).value == pytest.approx(2.0, rel=1e-14)
    assert _contains(discrete_tail(w, UNIT, 2), 2.0)
    assert _contains(discrete_tail(w, UNIT, 3), 4 / 3)
    one = gallery("power_eps", 1, p=2, eps=1.0)
    assert discrete_tail(one, UNIT, 2).value == pytest.approx(discrete_tail(w, UNIT, 2).value, abs=2e-9)
    assert continuous_tail(one, UNIT, 2).value == pytest.approx(3.0, rel=1e-12)


def test_two_dimensional_constant_bracket():
    # brute-force scan of M chi_Q plus quadrature puts the value near 3.97-3.99
    rep = continuous_tail(ConstantWeight(1.0, 2), Cube((0.5, 0.5), 0.5), 2.0)
    assert rep.value <= 3.965 and rep.upper >= 3.99
    assert rep.upper - rep.value < 0.25
    d = discrete_tail(ConstantWeight(1.0, 2), Cube((0.5, 0.5), 0.5), 2.0)
    assert _contains(d, 1 / (1 - 2**-2))


def test_tail_sandwich_example():
    # beta^-1 a <= tail/|Q| <= 4^(np) beta^-1 a for w = 1, p = 2
    beta = beta_const(1, 2)
    a = discrete_tail(ConstantWeight(1.0, 1), UNIT, 2).value
    t = continuous_tail(ConstantWeight(1.0, 1), UNIT, 2).value
    assert a / beta == pytest.approx(1.5) and 1.5 <= t <= 16 * a / beta


def test_discrete_s_scaling():
    w = ConstantWeight(1.0, 1)
    for s in (1.5, 1.25, 1.125):
        assert _contains(discrete_tail_s(w, UNIT, 2, s), 1 / (1 - 1 / s), 1e-9)


def test_discrete_s_decreasing_in_s():
    w = PowerWeight(0.5, 1)
    vals = [discrete_tail_s(w, UNIT, 2, s).value for s in (1.25, 1.5, 2.0)]
    assert vals[0] > vals[1] > vals[2]


@given(st.floats(-0.9, 0.9), st.floats(1.1, 3), st.floats(0.05, 2), st.floats(-3, 3), st.floats(0.01, 2))
def test_discrete_tail_nonincreasing_in_p(a, p, dp, c, h):
    w = PowerWeight(a, 1)
    if a >= p - 1:
        return
    Q = Cube((c,), h)
    lo = discrete_tail(w, Q, p + dp)
    hi = discrete_tail(w, Q, p)
    assert lo.value <= hi.upper * (1 + 1e-12)


@given(st.floats(-0.9, 0.9), st.floats(1.2, 4), st.floats(-3, 3), st.floats(0.01, 2))
def test_tail_sandwich_random_power(a, p, c, h):
    if a >= p - 1 - 0.05:
        return
    w = PowerWeight(a, 1)
    Q = Cube((c,), h)
    beta = beta_const(1, p)
    d = discrete_tail(w, Q, p)
    t = continuous_tail(w, Q, p)
    assert d.upper / beta <= t.value / Q.volume * (1 + 1e-9)
    assert t.upper / Q.volume <= 4**p * d.value / beta * (1 + 1e-9)


def test_divergence():
    with pytest.raises(TailDivergence):
        discrete_tail(PowerWeight(1.0, 1), UNIT, 2)
    with pytest.raises(TailDivergence):
        continuous_tail(PowerWeight(2.0, 2), Cube((0.0, 0.0), 1.0), 2)
    with pytest.raises(ValueError):
        discrete_tail(ConstantWeight(1.0, 1), UNIT, 1.0)
    with pytest.raises(ValueError):
        discrete_tail_s(ConstantWeight(1.0, 1), UNIT, 2, 2.5)


def test_cap_error():
    with pytest.raises(TailError):
        discrete_tails(PowerWeight(0.999, 1), [UNIT], 2.0, tol=1e-15, max_terms=8)


def test_grid_weight_tail_truncation_is_exact():
    w = GridWeight(UNIT, np.ones(8))
    rep = discrete_tail(w, UNIT, 2)
    # w(R) = 1 for every dilate, so the tail is sum 2^(-k) 2^(-k) = 4/3
    assert _contains(rep, 4 / 3)
    # the closed form: 1 on Q, nothing outside
    assert continuous_tail(w, UNIT, 2).value == pytest.approx(1.0, rel=1e-14)


def test_theorem_constants():
    c = theorem_constants(1, 2)
    assert c.B == 163840
    # 20 * 2^4 / (1/2)
    assert c.A == 640
    assert theorem_constants(1, 2.5, ainfty=1.0).delta_ainfty == pytest.approx(1 / 3)
    for n in (1, 2):
        for p in (1.01, 1.5, 2, 10, 100):
            assert theorem_constants(n, p).beta < 2
    near = theorem_constants(1, 1 + 1e-6, s=1.5)
    assert min(near.A, near.B, near.A_sp) > 1e6
    with pytest.raises(ValueError):
        theorem_constants(3, 2)
    with pytest.raises(ValueError):
        theorem_constants(1, 2, s=1.0)


def test_constant_weight_estimates():
    fam = enumerate_dyadic(UNIT, 4)
    w = ConstantWeight(1.0, 1)
    assert cp_constant(w, 2, fam).value == pytest.approx(1 / 3, rel=1e-12)
    assert cp_constant(w, 3, fam).value == pytest.approx(1 / 2, rel=1e-12)
    cps = cps_constant(w, 2, 2.0, fam)
    assert cps.value == pytest.approx(1 / 2, rel=1e-8) and cps.upper == pytest.approx(1 / 2, rel=1e-8)
    assert ainfty_constant(w, fam).value == pytest.approx(1.0, rel=1e-12)
    assert rh_constant(w, 2.0, fam).value == pytest.approx(1.0, rel=1e-12)


def test_divergent_cp_is_zero():
    est = cp_constant(PowerWeight(1.0, 1), 2, enumerate_dyadic(UNIT, 3))
    assert est.value == 0 and est.divergent


def test_cp_beta_relation(rng):
    fam = cube_family(SYM, 5, dilations=(3.0,))
    for w in [PowerWeight(0.5, 1), random_grid_weight(rng, 1, 32)]:
        for p in (1.5, 2.0, 3.0):
            cp = cp_constant(w, p, fam, resolution=512)
            g = cps_constant(w, p, 2.0, fam, resolution=512)
            beta = beta_const(1, p)
            assert cp.value <= beta * g.upper * (1 + 1e-9)
            assert beta * g.value <= 4**p * cp.upper * (1 + 1e-9)


def test_cps_tends_below_ainfty():
    w = PowerWeight(1.0, 1)
    fam = enumerate_dyadic(SYM, 6)
    ainf = ainfty_constant(w, fam, resolution=1024)
    for p in (4, 8, 16):
        assert cps_constant(w, p, 2.0, fam, resolution=1024).value <= ainf.value + 1e-9


def test_ainfty_linear_example():
    # int_0^1 M(t chi)(x) dx = int_0^1 (1 + x)/2 dx = 3/4 against w(Q) = 1/2
    est = ainfty_constant(PowerWeight(1.0, 1), enumerate_dyadic(UNIT, 0), resolution=2**14)
    assert est.value == pytest.approx(1.5, rel=1e-3) and est.value <= 1.5


def test_ainfty_trace_monotone_and_at_least_one(rng):
    for w in [PowerWeight(1.0, 1), random_grid_weight(rng, 2, 16)]:
        est = ainfty_constant(w, enumerate_dyadic(w.box if isinstance(w, GridWeight) else SYM, 4))
        vals = [v for _, v in est.refinement_trace]
        assert all(a <= b for a, b in zip(vals, vals[1:]))
        assert est.value >= 1


def test_ainfty_zero_mass_error():
    w = GridWeight(UNIT, np.array([0.0, 0.0, 0.0, 1.0]))
    est = ainfty_constant(w, enumerate_dyadic(UNIT, 2))
    assert est.skipped == 4
    with pytest.raises(ValueError, match="zero mass"):
        ainfty_constant(w, enumerate_dyadic(Cube.from_bounds(0.0, 0.5), 1))


def test_rh_example_and_monotone_in_r(rng):
    w = GridWeight(UNIT, np.array([4.0, 0.0]))
    fam = enumerate_dyadic(UNIT, 0)
    assert rh_constant(w, 2.0, fam).value == pytest.approx(math.sqrt(2), rel=1e-14)
    for _ in range(5):
        g = random_grid_weight(rng, 1, 16)
        f = enumerate_dyadic(g.box, 3)
        vals = [rh_constant(g, r, f).value for r in (1.1, 1.5, 2.0, 4.0)]
        assert all(a <= b * (1 + 1e-12) for a, b in zip(vals, vals[1:]))


@given(st.sampled_from([0.25, 3.0, 1024.0]), st.integers(0, 50))
def test_constants_scale_invariant(c, seed):
    w = random_grid_weight(np.random.default_rng(seed), 1, 16)
    fam = enumerate_dyadic(w.box, 3)
    cw = w.scaled(c)
    for f in (
        lambda v: ainfty_constant(v, fam, 64).value,
        lambda v: cp_constant(v, 2.0, fam, resolution=64).value,
        lambda v: cps_constant(v, 2.0, 1.5, fam, resolution=64).value,
        lambda v: rh_constant(v, 2.0, fam).value,
    ):
        assert f(cw) == pytest.approx(f(w), rel=1e-9)


def test_ainfty_refinement_increases_then_stabilizes():
    # an off-centre box, so that the root is not already the worst cube
    box = Cube.from_bounds(-0.3, 1.7)
    est = ainfty_constant(PowerWeight(1.0, 1), enumerate_dyadic(box, 8), resolution=2048)
    vals = [v for _, v in est.refinement_trace]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] > vals[0]
    assert vals[-1] == vals[-4]
