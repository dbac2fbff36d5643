import numpy as np
import pytest

import dbarkit.expr as ex
from dbarkit.bezout import (
    BezoutProblem,
    CommonZeroError,
    CoveringError,
    FitRankError,
    FitToleranceError,
    VanishingError,
    bezout_poly,
    bezout_pou,
    generalized_division,
    partition_of_unity,
    q_fields,
    smoothstep,
    weierstrass_fit,
)
from dbarkit.cauchy import SampledField, dbar_fd, sample_field
from dbarkit.domains import Disk, build_mask
from dbarkit.expr import Const, Quotient, Z, as_callable, intpow, sub

ONE_MINUS_Z = sub(Const(1.0), Z)


@pytest.fixture(scope="module")
def linear_pair(disk_mask_64):
    return BezoutProblem.build(Disk(0j, 1.0), [Z, ONE_MINUS_Z],
                               mask=disk_mask_64)


@pytest.fixture(scope="module")
def quartic_pair(disk_mask_64):
    return BezoutProblem.build(Disk(0j, 1.0),
                               [intpow(Z, 2), intpow(ONE_MINUS_Z, 2)],
                               mask=disk_mask_64)


def residual(fields, problem, target=1.0):
    total = sum(x.values * g.values for x, g in zip(fields, problem.f_fields))
    return np.abs(total - target)[problem.mask.inside].max()


def test_problem_measures_delta(linear_pair):
    # |z| + |1-z| attains its minimum 1 on the segment [0, 1], and the
    # grid has nodes there
    assert linear_pair.delta == pytest.approx(1.0, abs=1e-12)
    assert linear_pair.sup_norms() == pytest.approx([1.0, 2.0], abs=0.05)


def test_q_fields_constant_singleton(disk_mask_64):
    p = BezoutProblem.build(Disk(0j, 1.0), [Const(2.0)], mask=disk_mask_64)
    q = q_fields(p)[0]
    assert np.abs(q.values[p.mask.inside] - 0.5).max() < 1e-14


@pytest.mark.parametrize("pair", ["linear_pair", "quartic_pair"])
def test_q_fields_identity(pair, request):
    p = request.getfixturevalue(pair)
    qs = q_fields(p)
    assert residual(qs, p) < 1e-12


def test_q_fields_common_zero(disk_mask_64):
    p = BezoutProblem.build(Disk(0j, 1.0), [Z, Z], mask=disk_mask_64)
    with pytest.raises(CommonZeroError) as err:
        q_fields(p)
    assert err.value.nodes[0] == 0


def test_weierstrass_recovers_monomial(disk_mask_64):
    q = sample_field(np.conj, disk_mask_64)
    fit = weierstrass_fit(q, 1, 1e-10)
    assert fit.sup_error <= 1e-10
    coeffs = {(a, b): c for a, b, c in fit.terms}
    assert abs(coeffs[(0, 1)] - 1) < 1e-10
    assert abs(coeffs[(0, 0)]) < 1e-10


def test_weierstrass_quality_improves_with_degree(disk_mask_64):
    q = sample_field(lambda z: 1 / (1 + np.abs(z) ** 2), disk_mask_64)
    sups = []
    for d in (4, 6, 8):
        fit = weierstrass_fit(q, d, 1.0)
        sups.append(fit.sup_error)
    assert sups[0] > sups[1] > sups[2]
    assert sups[2] <= 1e-3


def test_weierstrass_too_few_nodes(disk_mask_64):
    m = disk_mask_64
    empty = SampledField(m, np.zeros(m.inside.shape, complex),
                         support=np.zeros(m.inside.shape, bool))
    with pytest.raises(ValueError, match="node"):
        weierstrass_fit(empty, 2, 1.0)


def test_weierstrass_rank_deficiency(disk_mask_64):
    # three nodes on the real axis: there z = conj(z), so the d=1
    # columns 1, z, conj(z) are dependent
    m = disk_mask_64
    sel = np.zeros(m.inside.shape, bool)
    iy, ix = np.nonzero(m.inside & (np.abs(m.grid.zgrid().imag) < 1e-12))
    sel[iy[:3], ix[:3]] = True
    q = SampledField(m, np.where(sel, 1.0 + 0j, 0), support=sel)
    with pytest.raises(FitRankError, match="lower the degree"):
        weierstrass_fit(q, 1, 1.0)


def test_weierstrass_tolerance_failure(disk_mask_64):
    q = sample_field(lambda z: np.abs(z), disk_mask_64)
    with pytest.raises(FitToleranceError, match="increase degree") as err:
        weierstrass_fit(q, 2, 1e-12)
    assert err.value.sup_error > 1e-12


def test_bezout_poly_linear(linear_pair):
    xs = bezout_poly(linear_pair)
    z = linear_pair.mask.coords(linear_pair.mask.inside)
    total = sum(as_callable(x)(z) * as_callable(f)(z)
                for x, f in zip(xs, linear_pair.f_list))
    assert np.abs(total - 1).max() <= 1e-10
    # every x_j shares the combination denominator; certify its floor
    assert isinstance(xs[0], Quotient)
    denom = np.abs(as_callable(xs[0].den)(z))
    assert denom.min() >= 0.5


def test_bezout_poly_quartic(quartic_pair):
    xs = bezout_poly(quartic_pair)
    z = quartic_pair.mask.coords(quartic_pair.mask.inside)
    total = sum(as_callable(x)(z) * as_callable(f)(z)
                for x, f in zip(xs, quartic_pair.f_list))
    assert np.abs(total - 1).max() <= 1e-10
    assert np.abs(as_callable(xs[0].den)(z)).min() >= 0.5


def test_quartic_pair_has_exact_certificate():
    # z^2 (3 - 2z) + (1 - z)^2 (1 + 2z) = 1: integer coefficient check
    from numpy.polynomial import polynomial as P
    lhs = P.polyadd(P.polymul([0, 0, 3, -2], [1]),
                    P.polymul(P.polymul([1, -1], [1, -1]), [1, 2]))
    assert np.array_equal(lhs, [1])


def test_bezout_poly_rejects_common_zero(disk_mask_64):
    p = BezoutProblem.build(Disk(0j, 1.0), [Z, Z], mask=disk_mask_64)
    with pytest.raises(CommonZeroError):
        bezout_poly(p)


def test_bezout_poly_rejects_callables(disk_mask_64):
    p = BezoutProblem.build(Disk(0j, 1.0), [lambda z: z + 2], mask=disk_mask_64)
    with pytest.raises(TypeError):
        bezout_poly(p)


def test_smoothstep_shape():
    assert smoothstep(np.array([0.0, 1 / 3, 2 / 3, 1.0])).tolist() == [0, 0, 1, 1]
    t = np.linspace(0, 1, 101)
    v = smoothstep(t)
    assert ((v >= 0) & (v <= 1)).all()
    assert (np.diff(v) >= 0).all()
    # C^2 at the seams: the second-difference jump shrinks linearly in
    # the probe step (only the third derivative is discontinuous)
    h = 1e-5
    for seam in (1 / 3, 2 / 3):
        second = np.diff(smoothstep(seam + h * np.arange(-2, 3)), 2) / h ** 2
        assert np.abs(np.diff(second)).max() < 600 * 3 * h


def test_partition_singleton(disk_mask_64):
    p = BezoutProblem.build(Disk(0j, 1.0), [Const(2.0)], mask=disk_mask_64)
    a = partition_of_unity(p)[0]
    assert np.abs(a.values[p.mask.inside] - 1).max() < 1e-14


def test_partition_sums_to_one(linear_pair):
    alphas = partition_of_unity(linear_pair)
    total = sum(a.values for a in alphas)
    assert np.abs(total - 1)[linear_pair.mask.inside].max() <= 1e-12


def test_partition_subordination(linear_pair):
    eps = linear_pair.delta / 4
    alphas = partition_of_unity(linear_pair)
    for a, g in zip(alphas, linear_pair.f_fields):
        dead = linear_pair.mask.inside & (np.abs(g.values) <= eps / 3)
        assert dead.any()
        assert np.abs(a.values[dead]).max() == 0


def test_partition_epsilon_too_large(linear_pair):
    with pytest.raises(CoveringError, match="too large"):
        partition_of_unity(linear_pair, epsilon=10 * linear_pair.delta)


def test_bezout_pou_residual(linear_pair):
    xs = bezout_pou(linear_pair)
    assert residual(xs, linear_pair) <= 1e-12
    eps = linear_pair.delta / 4
    for x in xs:
        assert np.isfinite(x.values).all()
        assert np.abs(x.values).max() <= 3 / eps + 1e-9


def test_partition_dbar_scale_is_refinement_stable():
    # max |dbar alpha| should scale like 1/eps with a constant that the
    # grid pins down; halving h must not move it by more than 20%
    consts = []
    for h in (1 / 64, 1 / 128):
        p = BezoutProblem.build(Disk(0j, 1.0), [Z, ONE_MINUS_Z], h=h)
        eps = p.delta / 4
        a = partition_of_unity(p)[0]
        d = dbar_fd(a)
        consts.append(np.abs(d.values)[p.mask.interior].max() * eps)
    ratio = consts[1] / consts[0]
    assert 0.8 <= ratio <= 1.25


def test_generalized_division_zero_dividend(disk_mask_64):
    p = BezoutProblem.build(Disk(0j, 1.0), [Z], mask=disk_mask_64)
    gs = generalized_division(Const(0.0), p, 0.1)
    assert all(np.abs(g.values).max() == 0 for g in gs)


def test_generalized_division_monomial(disk_mask_64):
    p = BezoutProblem.build(Disk(0j, 1.0), [Z], mask=disk_mask_64)
    gs = generalized_division(intpow(Z, 2), p, 1e-6)
    m = p.mask
    want = sample_field(intpow(Z, 2), m).values
    got = sum(g.values * f.values for g, f in zip(gs, p.f_fields))
    assert np.abs(got - want)[m.inside].max() <= 1e-10
    off = m.inside & (np.abs(m.grid.zgrid()) > 2 * m.grid.h)
    assert np.abs(gs[0].values - m.grid.zgrid())[off].max() <= 1e-12


def test_generalized_division_plateau(disk_mask_64):
    plateau = lambda z: np.where(np.abs(z) <= 0.3, 0.0,
                                 (np.abs(z) - 0.3) ** 2 * z)
    p = BezoutProblem.build(Disk(0j, 1.0), [Z], mask=disk_mask_64)
    gs = generalized_division(plateau, p, 0.1)
    m = p.mask
    want = sample_field(plateau, m).values
    got = sum(g.values * f.values for g, f in zip(gs, p.f_fields))
    assert np.abs(got - want)[m.inside].max() <= 1e-10


def test_generalized_division_needs_vanishing(disk_mask_64):
    p = BezoutProblem.build(Disk(0j, 1.0), [Z], mask=disk_mask_64)
    with pytest.raises(VanishingError) as err:
        generalized_division(Const(1.0), p, 0.1)
    assert len(err.value.nodes) > 0
