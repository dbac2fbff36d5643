"""Two constructions for solving sum x_j f_j = 1 on a compact set.

The quotient route approximates q_j = conj(f_j)/sum|f_k|^2 by bivariate
polynomials in z and conj(z) and divides by the (certified nonvanishing)
combination sum p_k f_k.  The covering route builds a smoothstep
partition of unity subordinate to {|f_j| > eps/3} and divides each bump
by its own generator.  Both keep the residual identity exact up to
rounding; the interesting measured quantity is how smooth the output is.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cauchy import SampledField, sample_field
from .domains import CompactDomain, RegionMask, build_mask
from .expr import ComplexExpr, Const, Z, add, as_callable, conj, div, intpow, mul

__all__ = [
    "BezoutProblem", "PolyZZbar", "CommonZeroError", "FitRankError",
    "FitToleranceError", "CoveringError", "VanishingError",
    "q_fields", "weierstrass_fit", "bezout_poly", "smoothstep",
    "partition_of_unity", "bezout_pou", "generalized_division",
]


class CommonZeroError(ValueError):
    """The generators vanish together somewhere on the node set."""

    def __init__(self, message, nodes=()):
        super().__init__(message)
        self.nodes = tuple(nodes)


class FitRankError(ValueError):
    pass


class FitToleranceError(ValueError):
    def __init__(self, message, sup_error):
        super().__init__(message)
        self.sup_error = sup_error


class CoveringError(ValueError):
    pass


class VanishingError(ValueError):
    def __init__(self, message, nodes=()):
        super().__init__(message)
        self.nodes = tuple(nodes)


@dataclass
class BezoutProblem:
    """Generators sampled on a mask, with the measured corona floor.

    delta = min over Inside nodes of sum_j |f_j(z)|.  The quotient and
    covering solvers demand delta > 0; generalized_division tolerates
    common zeros as long as the dividend vanishes around them.
    """

    domain: CompactDomain
    f_list: Sequence
    mask: RegionMask
    f_fields: list = field(repr=False)
    delta: float = 0.0

    @classmethod
    def build(cls, domain, f_list, h: float = 1 / 64,
              mask: Optional[RegionMask] = None) -> "BezoutProblem":
        if len(f_list) < 1:
            raise ValueError("need at least one generator")
        if mask is None:
            mask = build_mask(domain, h=h)
        fields = [sample_field(f, mask) for f in f_list]
        s1 = sum(np.abs(g.values) for g in fields)
        delta = float(s1[mask.inside].min())
        return cls(domain, list(f_list), mask, fields, delta)

    @property
    def n(self) -> int:
        return len(self.f_list)

    def sup_norms(self) -> list:
        return [g.max_abs() for g in self.f_fields]


def q_fields(problem: BezoutProblem) -> list:
    """Pointwise smooth solution q_j = conj(f_j) / sum_k |f_k|^2."""
    mask = problem.mask
    s2 = sum(np.abs(g.values) ** 2 for g in problem.f_fields)
    scale = float(s2[mask.inside].max())
    dead = mask.inside & (s2 <= 1e-28 * scale)
    if dead.any():
        where = mask.coords(dead)[:5]
        raise CommonZeroError(
            f"common zero at {int(dead.sum())} node(s), first at {where}",
            nodes=where)
    out = []
    for g in problem.f_fields:
        vals = np.where(mask.inside, np.conj(g.values) / np.where(mask.inside, s2, 1.0), 0.0)
        out.append(SampledField(mask, vals))
    return out


def _monomials(d: int) -> list:
    # (a, b) with a + b <= d, graded order; columns of the fit matrix
    return [(a, s - a) for s in range(d + 1) for a in range(s + 1)]


@dataclass
class PolyZZbar:
    """Bivariate polynomial sum c_ab z^a conj(z)^b, a + b <= degree."""

    degree: int
    terms: list  # [(a, b, coefficient)]
    sup_error: float = float("nan")

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        zc = np.conj(z)
        out = np.zeros_like(z)
        for a, b, c in self.terms:
            out += c * z ** a * zc ** b
        return out

    def as_expr(self) -> ComplexExpr:
        out = Const(0.0)
        for a, b, c in self.terms:
            out = add(out, mul(Const(c), mul(intpow(Z, a), intpow(conj(Z), b))))
        return out


def weierstrass_fit(q: SampledField, d: int, target_sup: float,
                    max_fit_nodes: int = 20000) -> PolyZZbar:
    """Least-squares polynomial approximation of a sampled field.

    Minimizes the l2 node error over monomials z^a conj(z)^b, then
    measures the sup error a posteriori; succeeds only if it is at most
    target_sup.  Least squares instead of a true sup-norm fit is a
    deliberate simplification: the downstream construction only needs
    the tolerance met, not optimality.  On grids beyond max_fit_nodes
    the normal equations use a stride subsample; the sup error is still
    measured over every support node, so the guarantee is unchanged.
    """
    cols = _monomials(d)
    sel = q.support
    m = int(sel.sum())
    if m < len(cols):
        raise ValueError(
            f"{m} sample node(s) cannot determine {len(cols)} coefficients")
    z = q.mask.coords(sel)
    vals = q.values[sel]
    stride = max(1, -(-m // max_fit_nodes))
    zf, vf = z[::stride], vals[::stride]
    if len(zf) < len(cols):
        zf, vf = z, vals
    V = np.stack([zf ** a * np.conj(zf) ** b for a, b in cols], axis=1)
    c, _, rank, _ = np.linalg.lstsq(V, vf, rcond=None)
    if rank < len(cols):
        raise FitRankError(
            f"normal equations rank {rank} < {len(cols)} unknowns; "
            f"lower the degree or supply more nodes")
    poly = PolyZZbar(d, [(a, b, ck) for (a, b), ck in zip(cols, c)],
                     float("nan"))
    sup = float(np.abs(poly(z) - vals).max())
    if sup > target_sup:
        raise FitToleranceError(
            f"degree-{d} fit sup error {sup:.3e} exceeds {target_sup:.3e}; "
            f"increase degree", sup_error=sup)
    poly.sup_error = sup
    return poly


def bezout_poly(problem: BezoutProblem, max_degree: int = 16) -> list:
    """Quotient-route solution as expressions x_j = p_j / sum p_k f_k.

    Fits each q_j at increasing degree until the sup error is within
    1/(2 sum_k ||f_k||_inf), which forces |sum p_k f_k| >= 1/2 on the
    nodes, then certifies that lower bound before dividing.
    """
    for f in problem.f_list:
        if not isinstance(f, ComplexExpr):
            raise TypeError("quotient route returns expressions, so the "
                            "generators must be expressions")
    qs = q_fields(problem)
    target = 1.0 / (2.0 * sum(problem.sup_norms()))
    fits = []
    for j, q in enumerate(qs):
        last = None
        for d in range(0, max_degree + 1):
            # refit from scratch per degree: the matrices are small and
            # the graded column order is not hierarchical under lstsq
            try:
                fits.append(weierstrass_fit(q, d, target))
                break
            except FitToleranceError as err:
                last = err
        else:
            raise FitToleranceError(
                f"q_{j + 1} not approximable to {target:.3e} by degree "
                f"{max_degree}; increase max_degree",
                sup_error=last.sup_error if last else float("nan"))

    mask = problem.mask
    zin = mask.coords(mask.inside)
    denom_nodes = sum(p(zin) * g.values[mask.inside]
                      for p, g in zip(fits, problem.f_fields))
    dmin = float(np.abs(denom_nodes).min())
    if dmin < 0.5:
        raise ValueError(
            f"min |sum p_k f_k| = {dmin:.6f} < 1/2 although every fit met "
            f"its tolerance; the sampled sup norms are inconsistent")

    denom = Const(0.0)
    for p, f in zip(fits, problem.f_list):
        denom = add(denom, mul(p.as_expr(), f))
    return [div(p.as_expr(), denom) for p in fits]


def smoothstep(t):
    """C^2 quintic step: 0 below 1/3, 1 above 2/3, monotone between.

    One continuous derivative of the output is all the downstream
    algebra needs, so the classical C-infinity bump is deliberately
    replaced by a branch-free polynomial.
    """
    t = np.asarray(t, dtype=float)
    u = np.clip(3.0 * t - 1.0, 0.0, 1.0)
    return u ** 3 * (u * (6.0 * u - 15.0) + 10.0)


def partition_of_unity(problem: BezoutProblem,
                       epsilon: Optional[float] = None) -> list:
    """Bump fields alpha_j with sum alpha_j = 1 on Inside nodes.

    alpha_j vanishes identically on {|f_j| <= epsilon/3}, so dividing it
    by f_j is safe.  Default epsilon = delta/(2n) guarantees coverage:
    at every node some |f_j| >= delta/n = 2 epsilon > epsilon/3.
    """
    if problem.delta <= 0:
        raise CommonZeroError("generators share a zero on the node set")
    n = problem.n
    if epsilon is None:
        epsilon = problem.delta / (2 * n)
    mask = problem.mask
    betas = [smoothstep(np.abs(g.values) / epsilon) for g in problem.f_fields]
    total = sum(betas)
    uncovered = mask.inside & (total == 0)
    if uncovered.any():
        where = mask.coords(uncovered)[:5]
        raise CoveringError(
            f"epsilon = {epsilon:.4g} too large for delta = "
            f"{problem.delta:.4g}: {int(uncovered.sum())} node(s) uncovered, "
            f"first at {where}")
    out = []
    for b in betas:
        vals = np.where(mask.inside, b / np.where(mask.inside, total, 1.0), 0.0)
        out.append(SampledField(mask, vals.astype(complex)))
    return out


def bezout_pou(problem: BezoutProblem,
               epsilon: Optional[float] = None) -> list:
    """Covering-route solution x_j = alpha_j / f_j as sampled fields."""
    alphas = partition_of_unity(problem, epsilon)
    out = []
    for a, g in zip(alphas, problem.f_fields):
        live = a.values != 0
        vals = np.where(live, a.values / np.where(live, g.values, 1.0), 0.0)
        out.append(SampledField(problem.mask, vals))
    return out


def generalized_division(f, problem: BezoutProblem, vanish_radius: float,
                         zero_threshold: float = 1e-8) -> list:
    """Write f = sum g_j f_j when f dies near the common zero set.

    The common small-set is {sum|f_j| <= zero_threshold * scale}; f must
    measure zero (1e-12 relative) on every node within vanish_radius of
    it.  Off that neighborhood the covering construction applies, and
    g_j = f * alpha_j / f_j, extended by zero, satisfies the identity
    node-for-node.
    """
    mask = problem.mask
    fvals = sample_field(f, mask).values
    scale_f = float(np.abs(fvals[mask.inside]).max()) if mask.inside.any() else 0.0
    if scale_f == 0.0:
        zero = np.zeros_like(fvals)
        return [SampledField(mask, zero.copy()) for _ in problem.f_list]

    s1 = sum(np.abs(g.values) for g in problem.f_fields)
    scale1 = float(s1[mask.inside].max())
    small = mask.inside & (s1 <= zero_threshold * scale1)

    near = np.zeros_like(mask.inside)
    if small.any():
        zin = mask.coords(mask.inside)
        zsmall = mask.coords(small)
        dist = np.abs(zin[:, None] - zsmall[None, :]).min(axis=1)
        near[tuple(np.argwhere(mask.inside)[dist <= vanish_radius].T)] = True

    offending = near & (np.abs(fvals) > 1e-12 * scale_f)
    if offending.any():
        where = mask.coords(offending)[:5]
        raise VanishingError(
            f"dividend is not zero within {vanish_radius} of the common "
            f"small-set: {int(offending.sum())} node(s), first at {where}, "
            f"max |f| = {np.abs(fvals[offending]).max():.3e}", nodes=where)

    live = mask.inside & ~near
    if not live.any():
        raise CoveringError("vanish_radius swallows every node")
    delta_live = float(s1[live].min())
    if delta_live <= 0:
        bad = live & (s1 == 0)
        raise CommonZeroError(
            "generators share a zero outside the vanishing neighborhood",
            nodes=mask.coords(bad)[:5])
    epsilon = delta_live / (2 * problem.n)

    out = []
    total = None
    betas = []
    for g in problem.f_fields:
        b = np.where(live, smoothstep(np.abs(g.values) / epsilon), 0.0)
        betas.append(b)
        total = b if total is None else total + b
    uncovered = live & (total == 0)
    if uncovered.any():
        raise CoveringError("covering failed off the vanishing neighborhood")
    for b, g in zip(betas, problem.f_fields):
        hot = live & (b > 0)
        vals = np.where(hot, fvals * b / np.where(hot, total * g.values, 1.0), 0.0)
        out.append(SampledField(mask, vals))
    return out
