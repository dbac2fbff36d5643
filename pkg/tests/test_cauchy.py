"""Cell quadrature and transform round-trip tests.

The frozen cell-integral constants were computed from two independent
oracles before the closed form was trusted: adaptive 2-D quadrature of
1/w over the square (scipy.integrate.dblquad, epsabs 1e-14) for cells
away from the origin, and an adaptive polar ray integral (clip each ray
from the origin against the box, integrate exp(-i theta) times the
chord length) for cells whose closure contains it.
"""

import numpy as np
import pytest

from dbarkit.cauchy import (
    QuadratureConfig,
    SampledField,
    d_fd,
    dbar_convergence,
    dbar_fd,
    dbar_fd_onesided,
    exact_cell_integral,
    pompeiu,
    sample_field,
    verify_dbar_solution,
)
from dbarkit.domains import Disk, build_mask, interior_shrunk

CELL_H = 0.02

# (cell center relative to target, oracle value of int_cell dA/w)
CELL_ORACLE = [
    (0.01 + 0.01j, 0.022639435073548417 - 0.022639435073548417j),
    (0.01 + 0.00j, 0.034640283484313880 + 0.0j),
    (0.012 + 0.0j, 0.030533107466671025 + 0.0j),
    (0.06 + 0.04j, 0.004615920727945179 - 0.003076813323887968j),
    (0.30 + 0.20j, 0.000923077094585755 - 0.000615384580335811j),
    (-0.2 + 0.15j, -0.001280001089124228 - 0.000960000082835746j),
    (0.00 - 0.30j, 0.0 + 0.001333332894376581j),
]


@pytest.mark.parametrize("v0,expected", CELL_ORACLE,
                         ids=[repr(v) for v, _ in CELL_ORACLE])
def test_cell_integral_matches_independent_quadrature(v0, expected):
    got = exact_cell_integral(np.array([v0]), CELL_H)[0]
    assert abs(got - expected) < 1e-12


def test_cell_integral_center_is_zero():
    assert exact_cell_integral(np.array([0j]), CELL_H)[0] == 0


def _offset_sweep(rng):
    h = CELL_H
    return np.concatenate([
        rng.standard_normal(20) * 0.1 + 1j * rng.standard_normal(20) * 0.1,
        (rng.integers(-5, 6, 20) + 1j * rng.integers(-5, 6, 20)) * h,
        (rng.integers(-5, 6, 20) + 0.5 + 1j * (rng.integers(-5, 6, 20) + 0.5)) * h,
        np.array([0j, h / 2, 1j * h / 2, -h / 2, -1j * h / 2,
                  h / 2 + 1j * h / 2, -h / 2 - 1j * h / 2]),
    ])


def test_cell_integral_symmetries(rng):
    # E(i v) = -i E(v), E(-v) = -E(v), E(conj v) = conj E(v): substitute
    # w -> iw, -w, conj w in the integral; the square is invariant.
    v = _offset_sweep(rng)
    e = exact_cell_integral(v, CELL_H)
    assert np.isfinite(e).all()
    assert np.abs(exact_cell_integral(1j * v, CELL_H) + 1j * e).max() < 1e-13
    assert np.abs(exact_cell_integral(-v, CELL_H) + e).max() < 1e-13
    assert np.abs(exact_cell_integral(np.conj(v), CELL_H) - np.conj(e)).max() < 1e-13


def test_cell_integral_block_additivity(rng):
    # a 2h cell is the disjoint union of four h cells; the integrals
    # must agree at every alignment, including targets on cell corners
    h = CELL_H
    quarters = np.array([1 + 1j, -1 + 1j, 1 - 1j, -1 - 1j]) * (h / 2)
    for v0 in _offset_sweep(rng):
        big = exact_cell_integral(np.array([v0]), 2 * h)[0]
        small = exact_cell_integral(v0 - quarters, h).sum()
        assert abs(big - small) < 1e-13


def test_cell_integral_scaling(rng):
    v = _offset_sweep(rng)
    e = exact_cell_integral(v, CELL_H)
    for lam in (0.5, 3.0):
        assert np.abs(exact_cell_integral(lam * v, lam * CELL_H) - lam * e).max() < 1e-13


def test_pompeiu_constant_density(disk_mask_64):
    # dbar conj(z) = 1 and the disk integral of 1/(w-z) is exactly
    # pi*conj(z) inside, -pi/z outside (polar series term by term)
    m = disk_mask_64
    h = m.grid.h
    f = sample_field(lambda z: np.ones_like(z), m)
    u = pompeiu(f)
    zg = m.grid.zgrid()
    err = np.abs(u.values - np.conj(zg))[m.inside].max()
    assert err <= 5 * h
    assert err < 0.01

    far = np.array([1.5 + 0.2j, -2.0 + 1.0j, 0.1 + 1.4j, -1.2 - 0.9j, 3.0 - 2.5j])
    assert np.abs(pompeiu(f, far) - 1 / far).max() < 5e-3


def test_pompeiu_conj_density(disk_mask_64):
    m = disk_mask_64
    u = pompeiu(sample_field(np.conj, m))
    zg = m.grid.zgrid()
    err = np.abs(u.values - np.conj(zg) ** 2 / 2)[m.inside].max()
    assert err <= 5 * m.grid.h


def test_pompeiu_zzbar_density(disk_mask_64):
    # same polar expansion: only the r < |z| shell contributes,
    # giving u = z conj(z)^2 / 2 exactly on the disk
    m = disk_mask_64
    u = pompeiu(sample_field(lambda z: z * np.conj(z), m))
    zg = m.grid.zgrid()
    err = np.abs(u.values - zg * np.conj(zg) ** 2 / 2)[m.inside].max()
    assert err <= 5 * m.grid.h


def test_lattice_and_direct_paths_agree(disk_mask_64, rng):
    m = disk_mask_64
    f = sample_field(lambda z: np.exp(z) + np.conj(z), m)
    whole = pompeiu(f)
    iy, ix = np.nonzero(m.inside)
    pick = rng.choice(len(ix), 40, replace=False)
    targets = m.grid.zgrid()[iy[pick], ix[pick]]
    direct = pompeiu(f, targets)
    assert np.abs(whole.values[iy[pick], ix[pick]] - direct).max() < 1e-12


def test_forced_engines_match(disk_mask_64):
    m = build_mask(Disk(0j, 1.0), h=1 / 16)
    f = sample_field(np.conj, m)
    a = pompeiu(f, cfg=QuadratureConfig(engine="lattice"))
    b = pompeiu(f, cfg=QuadratureConfig(engine="direct"))
    assert np.abs(a.values - b.values)[m.inside].max() < 1e-12


def test_dbar_fd_exact_on_quadratics(disk_mask_64):
    m = disk_mask_64
    zg = m.grid.zgrid()
    cases = [
        (np.conj, np.ones_like(zg)),
        (lambda z: z * np.conj(z), zg),
        (lambda z: z ** 2, np.zeros_like(zg)),
    ]
    for f, want in cases:
        got = dbar_fd(sample_field(f, m))
        assert np.abs(got.values - want)[m.interior].max() < 1e-10


def test_d_fd_exact_on_quadratics(disk_mask_64):
    m = disk_mask_64
    zg = m.grid.zgrid()
    got = d_fd(sample_field(lambda z: z ** 2, m))
    assert np.abs(got.values - 2 * zg)[m.interior].max() < 1e-10
    got = d_fd(sample_field(np.conj, m))
    assert np.abs(got.values)[m.interior].max() < 1e-10


def test_dbar_fd_onesided_extends_to_boundary(disk_mask_64):
    m = disk_mask_64
    f = sample_field(np.conj, m)
    one_sided = dbar_fd_onesided(f)
    central = dbar_fd(f)
    assert one_sided.support is not None
    assert (one_sided.support == m.inside).all()
    diff = np.abs(one_sided.values - central.values)[m.interior].max()
    assert diff < 1e-10


def test_verify_dbar_solution_report(disk_mask_64):
    m = disk_mask_64
    f = sample_field(lambda z: np.ones_like(z), m)
    rep = verify_dbar_solution(f, margin=12)
    assert set(rep) >= {"u", "dev_field", "max_dev", "h", "margin"}
    assert rep["h"] == m.grid.h
    assert rep["max_dev"] < 1e-4


def test_dbar_convergence_ladder():
    rep = dbar_convergence(lambda z: np.ones_like(z), Disk(0j, 1.0),
                           hs=(1 / 32, 1 / 64, 1 / 128))
    assert rep["max_dev"][0] > rep["max_dev"][1] > rep["max_dev"][2]
    assert rep["slope"] >= 0.9
    assert rep["margins"] == [5, 10, 19]


def test_midpoint_rule_still_converges(disk_mask_64):
    m = disk_mask_64
    f = sample_field(lambda z: np.ones_like(z), m)
    u = pompeiu(f, cfg=QuadratureConfig(cell_rule="midpoint"))
    err = np.abs(u.values - np.conj(m.grid.zgrid()))[m.inside].max()
    assert err <= 5 * m.grid.h


def test_sampled_field_rejects_nonfinite(disk_mask_64):
    m = disk_mask_64
    vals = np.zeros(m.inside.shape, dtype=complex)
    iy, ix = np.nonzero(m.inside)
    vals[iy[0], ix[0]] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        SampledField(m, vals)


def test_sample_field_zero_on(disk_mask_64):
    m = disk_mask_64
    hole = np.abs(m.grid.zgrid()) < 0.2
    f = sample_field(lambda z: 1 / z, m, zero_on=hole)
    assert np.abs(f.values[hole & m.inside]).max() == 0
    assert np.isfinite(f.values).all()


def test_quadrature_config_validation():
    with pytest.raises(ValueError):
        QuadratureConfig(near_radius_cells=0)
    with pytest.raises(ValueError):
        QuadratureConfig(cell_rule="simpson")
    with pytest.raises(ValueError):
        QuadratureConfig(engine="gpu")


def test_target_exactly_on_source_node(disk_mask_64):
    # the self-cell integral is a genuine principal value, so a target
    # sitting on a sample node must come back finite
    m = disk_mask_64
    f = sample_field(lambda z: np.ones_like(z), m)
    iy, ix = np.nonzero(m.inside)
    t = m.grid.zgrid()[iy[len(ix) // 2], ix[len(ix) // 2]]
    val = pompeiu(f, np.array([t]))
    assert np.isfinite(val).all()
