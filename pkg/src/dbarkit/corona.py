"""Antisymmetric correction pipeline for unit and power targets.

A smooth solution x of sum x_j f_j = target is generally not
holomorphic.  The correction subtracts f H where H solves dbar H = F
entrywise for the antisymmetric obstruction matrix F built from dbar x;
antisymmetry makes f H f^t vanish identically, so the corrected
u = x - f H still hits the target while dbar u collapses to the
discretization floor.  Power targets (g^5, g^6, g^12) run the same
pipeline on g^4-weighted data so the obstruction stays bounded across
common zeros of the generators.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .bezout import BezoutProblem, CommonZeroError, bezout_poly, bezout_pou
from .cauchy import (QuadratureConfig, SampledField, dbar_fd,
                     dbar_fd_onesided, pompeiu, sample_field)
from .division import DominationError, divide
from .domains import CompactDomain, RegionMask, build_mask, interior_shrunk
from .expr import ComplexExpr, as_callable, wirtinger_dbar

__all__ = [
    "SMALL_REL", "AntisymMatrixField", "CoronaSolution",
    "koszul_F", "solve_dbar_matrix", "corona_solve", "corona_convergence",
    "g_power_solve", "g12_solve", "koszul_cancellation",
]

# sum|f_j| <= SMALL_REL * max marks the collar around common zeros where
# weighted fields are zero-extended instead of divided
SMALL_REL = 1e-8


def _same_grid(a: RegionMask, b: RegionMask) -> bool:
    return (a.grid.origin == b.grid.origin and a.grid.h == b.grid.h
            and a.grid.nx == b.grid.nx and a.grid.ny == b.grid.ny)


def _as_values(obj, mask: RegionMask) -> np.ndarray:
    if isinstance(obj, SampledField):
        if not _same_grid(obj.mask, mask):
            raise ValueError("field sampled on a different grid")
        return obj.values
    return sample_field(obj, mask).values


def _dbar_values(x, mask: RegionMask) -> np.ndarray:
    # symbolic dbar for expressions, one-sided differences for data
    # that exists only on the nodes
    if isinstance(x, ComplexExpr):
        return sample_field(wirtinger_dbar(x), mask).values
    if isinstance(x, SampledField):
        if not _same_grid(x.mask, mask):
            raise ValueError("field sampled on a different grid")
        return dbar_fd_onesided(x).values
    return dbar_fd_onesided(sample_field(x, mask)).values


@dataclass
class AntisymMatrixField:
    """Upper triangle of an antisymmetric matrix of fields.

    Only entries (j, k) with j < k are stored; entry() materializes the
    sign-flipped lower triangle and the zero diagonal on demand.
    """

    n: int
    mask: RegionMask
    upper: dict

    def entry(self, j: int, k: int) -> np.ndarray:
        if not (0 <= j < self.n and 0 <= k < self.n):
            raise IndexError((j, k))
        if j == k:
            return np.zeros(self.mask.inside.shape, dtype=complex)
        if j < k:
            return self.upper[(j, k)].values
        return -self.upper[(k, j)].values


@dataclass
class CoronaSolution:
    u: list
    residual_sup: float
    dbar_sup: float
    target_desc: str
    mask: RegionMask
    margin: int
    dbar_sup_x: float
    skew_residual: float
    entry_reports: dict
    x_fields: list = dc_field(default_factory=list)
    extras: dict = dc_field(default_factory=dict)


def koszul_F(x_list, f_list, mask: Optional[RegionMask] = None,
             domain: Optional[CompactDomain] = None, h: float = 1 / 64,
             weight=None, small_rel: float = SMALL_REL) -> AntisymMatrixField:
    """Obstruction matrix F_jk = (dbar x_k conj f_j - dbar x_j conj f_k)/|f|^2.

    Generators with a common zero on the grid are an error unless a
    weight is supplied (the g^4 route): weighted entries are multiplied
    by it and zero-extended on the collar sum|f_j| <= small_rel * max.
    """
    n = len(x_list)
    if len(f_list) != n:
        raise ValueError("x_list and f_list lengths differ")
    if mask is None:
        for x in x_list:
            if isinstance(x, SampledField):
                mask = x.mask
                break
    if mask is None:
        if domain is None:
            raise ValueError("need a mask, a field argument, or a domain")
        mask = build_mask(domain, h=h)

    fv = [_as_values(f, mask) for f in f_list]
    s2 = sum(np.abs(v) ** 2 for v in fv)
    s1 = sum(np.abs(v) for v in fv)
    inside = mask.inside

    if weight is None:
        dead = inside & (s2 <= 1e-28 * max(float(s2[inside].max()), 1e-300))
        if dead.any():
            where = mask.coords(dead)[:5]
            raise CommonZeroError(
                f"generators share zeros at {list(where)}; use the "
                f"weighted (g-power) route", nodes=tuple(where))
        live = inside
        wv = None
    else:
        wv = _as_values(weight, mask)
        small = inside & (s1 <= small_rel * float(s1[inside].max()))
        live = inside & ~small

    dbx = [_dbar_values(x, mask) for x in x_list]
    upper = {}
    for j in range(n):
        for k in range(j + 1, n):
            num = dbx[k] * np.conj(fv[j]) - dbx[j] * np.conj(fv[k])
            vals = np.zeros(inside.shape, dtype=complex)
            vals[live] = num[live] / s2[live]
            if wv is not None:
                vals[live] *= wv[live]
            upper[(j, k)] = SampledField(mask, vals)
    return AntisymMatrixField(n, mask, upper)


def solve_dbar_matrix(F: AntisymMatrixField,
                      cfg: QuadratureConfig = QuadratureConfig(),
                      margin: int = 3):
    """Entrywise dbar solve H_jk = pompeiu(F_jk).

    Returns (H, reports); reports[(j, k)] carries the round-trip
    deviation max |dbar_fd(H_jk) - F_jk| over the margin-shrunk nodes.
    """
    sel = interior_shrunk(F.mask, margin)
    upper, reports = {}, {}
    for key, fld in F.upper.items():
        u = pompeiu(fld, None, cfg)
        dev = dbar_fd(u).values - fld.values
        upper[key] = u
        reports[key] = {"max_dev": float(np.abs(dev[sel]).max()) if sel.any() else 0.0,
                        "h": F.mask.grid.h, "margin": margin}
    return AntisymMatrixField(F.n, F.mask, upper), reports


def _assemble(x_vals, f_vals, H: AntisymMatrixField, weight=None):
    n = len(x_vals)
    out = []
    for j in range(n):
        u = x_vals[j] if weight is None else weight * x_vals[j]
        corr = 0.0
        for k in range(n):
            if k != j:
                corr = corr + f_vals[k] * H.entry(k, j)
        out.append(u - corr)
    return out


def _skew_residual(f_vals, H: AntisymMatrixField, inside) -> float:
    # f H f^t computed pairwise so the antisymmetric halves share every
    # product and the cancellation is exact in floating point
    acc = np.zeros(inside.shape, dtype=complex)
    for (j, k), fld in H.upper.items():
        term = f_vals[j] * f_vals[k] * fld.values
        acc += term - term
    return float(np.abs(acc[inside]).max()) if inside.any() else 0.0


def _dbar_sup(value_arrays, mask, margin, exclude=None) -> float:
    sel = interior_shrunk(mask, margin)
    if exclude is not None:
        sel = sel & ~exclude
    worst = 0.0
    for v in value_arrays:
        d = dbar_fd(SampledField(mask, v)).values
        if sel.any():
            worst = max(worst, float(np.abs(d[sel]).max()))
    return worst


def corona_solve(f_list, domain: CompactDomain, h: float = 1 / 64,
                 cfg: QuadratureConfig = QuadratureConfig(),
                 route: str = "poly", max_degree: int = 16, margin: int = 3,
                 mask: Optional[RegionMask] = None) -> CoronaSolution:
    """Holomorphic-looking u with sum u_j f_j = 1 on the nodes.

    route 'poly' corrects the polynomial-quotient unit solution
    (symbolic dbar); 'pou' corrects the covering solution (discrete
    dbar).  The returned dbar_sup is measured margin cells in from the
    node-set boundary; pair with corona_convergence for the rate.
    """
    if route not in ("poly", "pou"):
        raise ValueError(f"unknown route {route!r}")
    problem = BezoutProblem.build(domain, f_list, h=h, mask=mask)
    if problem.delta <= 0:
        raise CommonZeroError("generators vanish together on the grid")
    if route == "poly":
        xs = bezout_poly(problem, max_degree=max_degree)
        x_fields = [sample_field(x, problem.mask) for x in xs]
    else:
        x_fields = bezout_pou(problem)
        xs = x_fields
    m = problem.mask
    F = koszul_F(xs, f_list, mask=m)
    H, reports = solve_dbar_matrix(F, cfg, margin)
    fv = [g.values for g in problem.f_fields]
    xv = [g.values for g in x_fields]
    uv = _assemble(xv, fv, H)
    total = sum(u * f for u, f in zip(uv, fv))
    residual = float(np.abs(total[m.inside] - 1.0).max())
    return CoronaSolution(
        u=[SampledField(m, v) for v in uv],
        residual_sup=residual,
        dbar_sup=_dbar_sup(uv, m, margin),
        target_desc="1",
        mask=m,
        margin=margin,
        dbar_sup_x=_dbar_sup(xv, m, margin),
        skew_residual=_skew_residual(fv, H, m.inside),
        entry_reports=reports,
        x_fields=x_fields,
        extras={"route": route, "delta": problem.delta},
    )


def corona_convergence(f_list, domain: CompactDomain,
                       hs: Sequence[float] = (1 / 64, 1 / 128, 1 / 256),
                       cfg: QuadratureConfig = QuadratureConfig(),
                       physical_margin: float = 0.15, route: str = "poly",
                       max_degree: int = 16) -> dict:
    """Refinement ladder for corona_solve.

    dbar_sup concentrates in an O(h) layer along the jagged node-set
    boundary, so the ladder measures it a fixed physical distance in
    (at least 3 cells) and fits the log-log slope.
    """
    hs = sorted(hs, reverse=True)
    dbar, res, margins = [], [], []
    for h in hs:
        margin = max(3, int(round(physical_margin / h)))
        sol = corona_solve(f_list, domain, h=h, cfg=cfg, route=route,
                           max_degree=max_degree, margin=margin)
        dbar.append(sol.dbar_sup)
        res.append(sol.residual_sup)
        margins.append(margin)
    slope = float(np.polyfit(np.log(hs), np.log(dbar), 1)[0])
    return {"h": list(hs), "dbar_sup": dbar, "residual_sup": res,
            "margins": margins, "slope": slope}


def _check_g_dominated(gv, s1, mask):
    ga = np.abs(gv[mask.inside])
    sa = s1[mask.inside]
    slack = 1e-9 * max(float(sa.max()), 1.0)
    bad = ga > sa + slack
    if bad.any():
        where = mask.coords(mask.inside)[bad][:5]
        raise DominationError(
            f"|g| <= sum|f_j| fails at {list(where)}", worst=where[0])


def g_power_solve(g, f_list, x_list, domain: Optional[CompactDomain] = None,
                  isolated_zeros: bool = True, h: float = 1 / 64,
                  cfg: QuadratureConfig = QuadratureConfig(), margin: int = 3,
                  mask: Optional[RegionMask] = None) -> CoronaSolution:
    """Correction pipeline on g^4-weighted data, target g^5 or g^6.

    x_list must satisfy sum x_j f_j = g on the nodes (checked to
    1e-10 of the g scale).  With isolated_zeros the solution is
    u = g^4 x - f H itself (target g^5); otherwise u is multiplied by
    one more g and zero-extended across the common-zero collar
    (target g^6).
    """
    if mask is None:
        if domain is None:
            raise ValueError("need a domain or a prebuilt mask")
        mask = build_mask(domain, h=h)
    gv = _as_values(g, mask)
    fv = [_as_values(f, mask) for f in f_list]
    s1 = sum(np.abs(v) for v in fv)
    _check_g_dominated(gv, s1, mask)
    xv = [_as_values(x, mask) for x in x_list]
    total_x = sum(x * f for x, f in zip(xv, fv))
    gscale = max(float(np.abs(gv[mask.inside]).max()), 1e-300)
    xres = float(np.abs(total_x - gv)[mask.inside].max())
    if xres > 1e-10 * gscale:
        raise ValueError(
            f"x_list does not solve sum x_j f_j = g: residual {xres:.3g}")

    w4 = gv ** 4
    F = koszul_F(x_list, f_list, mask=mask, weight=SampledField(mask, w4))
    H, reports = solve_dbar_matrix(F, cfg, margin)
    uv = _assemble(xv, fv, H, weight=w4)
    small = mask.inside & (s1 <= SMALL_REL * float(s1[mask.inside].max()))

    if isolated_zeros:
        target = gv ** 5
        desc = "g^5"
    else:
        uv = [np.where(small, 0.0, gv * v) for v in uv]
        target = gv ** 6
        desc = "g^6"
    total = sum(u * f for u, f in zip(uv, fv))
    residual = float(np.abs(total - target)[mask.inside].max())
    exclude = ndimage.binary_dilation(small, iterations=2) if small.any() else None
    return CoronaSolution(
        u=[SampledField(mask, v) for v in uv],
        residual_sup=residual,
        dbar_sup=_dbar_sup(uv, mask, margin, exclude),
        target_desc=desc,
        mask=mask,
        margin=margin,
        dbar_sup_x=_dbar_sup([w4 * v for v in xv], mask, margin, exclude),
        skew_residual=_skew_residual(fv, H, mask.inside),
        entry_reports=reports,
        x_fields=[SampledField(mask, v) for v in xv],
        extras={"x_residual": xres, "collar_nodes": int(small.sum())},
    )


def g12_solve(g, f_list, h_list, domain: Optional[CompactDomain] = None,
              h: float = 1 / 64, cfg: QuadratureConfig = QuadratureConfig(),
              margin: int = 3,
              mask: Optional[RegionMask] = None) -> CoronaSolution:
    """Target g^12 from multiplier data h_list.

    Requires |sum h_j f_j| >= sum|f_j|^2 on the nodes (and the corona
    domination |g| <= sum|f_j|).  The smooth solution x_j = k h_j comes
    from the power-4 division of g^2 by sum h_j f_j, Cauchy-Schwarz
    rescaled so its domination precondition holds; the weighted
    correction then lifts x f^t = g^8 to a holomorphic-looking g^12.
    """
    n = len(f_list)
    if len(h_list) != n:
        raise ValueError("h_list and f_list lengths differ")
    if mask is None:
        if domain is None:
            raise ValueError("need a domain or a prebuilt mask")
        mask = build_mask(domain, h=h)
    gv = _as_values(g, mask)
    fv = [_as_values(f, mask) for f in f_list]
    hv = [_as_values(hj, mask) for hj in h_list]
    s1 = sum(np.abs(v) for v in fv)
    s2 = sum(np.abs(v) ** 2 for v in fv)
    hsum = sum(a * b for a, b in zip(hv, fv))

    inside = mask.inside
    slack = 1e-9 * max(float(s2[inside].max()), 1.0)
    bad = inside & (np.abs(hsum) < s2 - slack)
    if bad.any():
        where = mask.coords(bad)[:5]
        raise ValueError(
            f"hypothesis |sum h_j f_j| >= sum|f_j|^2 fails at {list(where)}")
    _check_g_dominated(gv, s1, mask)

    gc = as_callable(g)
    hparts = [(as_callable(hj), as_callable(fj))
              for hj, fj in zip(h_list, f_list)]

    def scaled_g2(z):
        return np.asarray(gc(z), dtype=complex) ** 2 / n

    def hsum_fn(z):
        return sum(hc(z) * fc(z) for hc, fc in hparts)

    k_field = divide(scaled_g2, hsum_fn, 4, mask=mask)
    kv = (n ** 4) * k_field.values
    xv = [kv * v for v in hv]

    w4 = gv ** 4
    x_fields = [SampledField(mask, v) for v in xv]
    F = koszul_F(x_fields, f_list, mask=mask, weight=SampledField(mask, w4))
    H, reports = solve_dbar_matrix(F, cfg, margin)
    uv = _assemble(xv, fv, H, weight=w4)
    target = gv ** 12
    total = sum(u * f for u, f in zip(uv, fv))
    residual = float(np.abs(total - target)[inside].max())
    small = inside & (s1 <= SMALL_REL * float(s1[inside].max()))
    exclude = ndimage.binary_dilation(small, iterations=2) if small.any() else None
    return CoronaSolution(
        u=[SampledField(mask, v) for v in uv],
        residual_sup=residual,
        dbar_sup=_dbar_sup(uv, mask, margin, exclude),
        target_desc="g^12",
        mask=mask,
        margin=margin,
        dbar_sup_x=_dbar_sup([w4 * v for v in xv], mask, margin, exclude),
        skew_residual=_skew_residual(fv, H, inside),
        entry_reports=reports,
        x_fields=x_fields,
        extras={"collar_nodes": int(small.sum())},
    )


def koszul_cancellation(x_list, f_list, points) -> dict:
    """Evaluate the row identity dbar x_j - (f F)_j = conj(f_j) (f . dbar x)/|f|^2.

    Both sides are computed from symbolic dbar trees at the given
    points; max_diff confirms the algebraic reduction, and rhs_sup is
    the size of the residual obstruction (zero when sum x_j f_j is
    constant and the f_j are holomorphic).
    """
    for x in x_list:
        if not isinstance(x, ComplexExpr):
            raise TypeError("cancellation check needs expression x_j")
    z = np.asarray(points, dtype=complex)
    fvals = [as_callable(f)(z) for f in f_list]
    dvals = [as_callable(wirtinger_dbar(x))(z) for x in x_list]
    s2 = sum(np.abs(v) ** 2 for v in fvals)
    if (s2 == 0).any():
        raise CommonZeroError("evaluation point hits a common zero")
    dot = sum(fk * dk for fk, dk in zip(fvals, dvals))
    n = len(x_list)
    max_diff = 0.0
    rhs_sup = 0.0
    for j in range(n):
        corr = 0.0
        for k in range(n):
            if k == j:
                continue
            F_kj = (dvals[j] * np.conj(fvals[k])
                    - dvals[k] * np.conj(fvals[j])) / s2
            corr = corr + fvals[k] * F_kj
        lhs = dvals[j] - corr
        rhs = np.conj(fvals[j]) * dot / s2
        max_diff = max(max_diff, float(np.abs(lhs - rhs).max()))
        rhs_sup = max(rhs_sup, float(np.abs(rhs).max()))
    return {"max_diff": max_diff, "rhs_sup": rhs_sup, "points": len(z)}
