"""Weighted BMO functionals, the Carleson norm CM^1(w) and dyadic H^1(w).

All suprema are exact maxima over the cubes of the grid.  Local quantities
are computed for every cube at once by bottom-up passes over the Morton
layout, then reduced with deterministic tie-breaking.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Cube, Grid, GridError, from_morton, sup_over_levels
from .haar import StepFunction, analyze_array, expand, level_averages
from .operators import paraproduct_map, square_function_array
from .weights import as_weight, bloom, conjugate_exponent

__all__ = [
    "BmoReport",
    "bmo_norm",
    "bmo_q_norm",
    "b1",
    "b2",
    "cm1_norm",
    "h1_norm",
    "DualityReport",
    "duality_check",
    "EQUIVALENCE_KEYS",
    "bmo_equivalence_report",
]

log = logging.getLogger(__name__)

DUALITY_TOL = 1e-9


@dataclass
class BmoReport:
    value: float
    witness: Cube
    table: list[float] = field(default_factory=list)
    local: list[np.ndarray] | None = field(default=None, repr=False)

    def local_value(self, Q: Cube) -> float:
        """The local quantity whose supremum is ``value``, on cube ``Q``."""
        return float(self.local[Q.level][Q.morton])

    def local_table(self, level: int) -> np.ndarray:
        """Local quantities at ``level`` as a lexicographic nd array."""
        return from_morton(self.local[level], self.witness.grid.n, level)

    def to_dict(self) -> dict:
        return {"value": self.value, "witness": self.witness.key(), "table": self.table}


def _check(*fs):
    g = fs[0].grid
    for f in fs[1:]:
        if f is not None and f.grid != g:
            raise GridError("inputs live on different grids")
    return g


def _block_sums(v: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Integrals over every cube of a Morton cell array, level by level (no volume factor)."""
    return [a * 2 ** (grid.n * (grid.K - k)) for k, a in enumerate(level_averages(v, grid))]


def _oscillations(b: StepFunction, power: float, measure: np.ndarray | None) -> list[np.ndarray]:
    """``∫_Q |b - <b>_Q|^power d(measure)`` for every cube, per level."""
    g = b.grid
    v = np.asarray(b.tree)
    dens = np.ones(g.n_cells) if measure is None else measure
    out = []
    for k, avg in enumerate(level_averages(v, g)):
        dev = np.abs(v - expand(avg, g, k)) ** power * dens
        out.append(dev.reshape(2 ** (g.n * k), -1).sum(axis=1) * g.cell_volume)
    return out


def _report(per_level: list[np.ndarray], grid: Grid, root: float = 1.0) -> BmoReport:
    if root != 1.0:
        per_level = [np.maximum(a, 0.0) ** (1 / root) for a in per_level]
    value, (k, idx), maxima = sup_over_levels(per_level, grid.n)
    return BmoReport(float(value), grid.cube(k, idx), [float(m) for m in maxima], per_level)


def _masses(w, grid: Grid) -> list[np.ndarray]:
    vals = np.ones(grid.n_cells) if w is None else np.asarray(as_weight(w).tree)
    return [s * grid.cell_volume for s in _block_sums(vals, grid)]


def bmo_norm(b: StepFunction, w: StepFunction | None = None) -> BmoReport:
    """``sup_Q w(Q)^{-1} ∫_Q |b - <b>_Q| dx``; ``w=None`` is the unweighted norm."""
    g = _check(b, w)
    osc = _oscillations(b, 1.0, None)
    return _report([o / m for o, m in zip(osc, _masses(w, g))], g)


def bmo_q_norm(b: StepFunction, w: StepFunction | None, q: float) -> BmoReport:
    """``(sup_Q w(Q)^{-1} ∫_Q |b - <b>_Q|^q w^{1-q} dx)^{1/q}``.

    At ``q = 2`` the measure is ``w^{-1} dx``, the conjugate of an A_2 weight;
    at ``q = 1`` it is Lebesgue measure, so the norm is ``bmo_norm``.  With this
    normalization ``bmo_norm(b, w) <= bmo_q_norm(b, w, q)`` for every ``q >= 1``
    by Hölder's inequality.  ``w=None`` is the unweighted norm.
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    g = _check(b, w)
    dual = None if w is None else np.asarray(as_weight(w).tree) ** (1 - q)
    osc = _oscillations(b, q, dual)
    return _report([o / m for o, m in zip(osc, _masses(w, g))], g, root=q)


def b1(b: StepFunction, mu, lam, p: float) -> BmoReport:
    """``sup_Q (mu(Q)^{-1} ∫_Q |b - <b>_Q|^p dlam)^{1/p}``."""
    conjugate_exponent(p)
    g = _check(b, mu, lam)
    osc = _oscillations(b, p, np.asarray(as_weight(lam).tree))
    return _report([o / m for o, m in zip(osc, _masses(mu, g))], g, root=p)


def b2(b: StepFunction, mu_prime, lam_prime, q: float) -> BmoReport:
    """``sup_Q (lam'(Q)^{-1} ∫_Q |b - <b>_Q|^q dmu')^{1/q}``, the dual-side quantity."""
    conjugate_exponent(q)
    g = _check(b, mu_prime, lam_prime)
    osc = _oscillations(b, q, np.asarray(as_weight(mu_prime).tree))
    return _report([o / m for o, m in zip(osc, _masses(lam_prime, g))], g, root=q)


def cm1_norm(g_fun: StepFunction, w: StepFunction | None = None) -> BmoReport:
    """``sup_Q (w(Q)^{-1} Σ_{P⊆Q, ε} |ĝ(P,ε)|^2 / <w>_P)^{1/2}``.

    The inner sums are subtree sums, accumulated from the finest level up.
    """
    grid = _check(g_fun, w)
    _, coeffs = analyze_array(np.asarray(g_fun.tree), grid)
    wt = np.ones(grid.n_cells) if w is None else np.asarray(as_weight(w).tree)
    w_avg = level_averages(wt, grid)
    sums = [None] * (grid.K + 1)
    acc = np.zeros(grid.n_cells)  # level K cubes carry no coefficients
    sums[grid.K] = acc
    for k in range(grid.K - 1, -1, -1):
        own = (coeffs[k] ** 2).sum(axis=-1) / w_avg[k]
        acc = acc.reshape(2 ** (grid.n * k), -1).sum(axis=1) + own
        sums[k] = acc
    masses = _masses(w, grid)
    return _report([s / m for s, m in zip(sums, masses)], grid, root=2.0)


def h1_norm(Phi: StepFunction, w: StepFunction | None = None) -> float:
    """``||S Phi||_{L^1(w)}`` with the dyadic square function ``S``."""
    grid = _check(Phi, w)
    s = square_function_array(np.asarray(Phi.tree), grid)
    wt = np.ones(grid.n_cells) if w is None else np.asarray(as_weight(w).tree)
    return float(s @ wt * grid.cell_volume)


@dataclass
class DualityReport:
    pairing: float
    cm1: float
    h1: float
    ratio: float | None
    passed: bool

    @property
    def vacuous(self) -> bool:
        return self.ratio is None

    def to_dict(self) -> dict:
        return {
            "pairing": self.pairing,
            "cm1": self.cm1,
            "h1": self.h1,
            "ratio": self.ratio,
            "passed": self.passed,
            "vacuous": self.vacuous,
        }


def duality_check(b: StepFunction, Phi: StepFunction, w: StepFunction | None = None) -> DualityReport:
    """Check ``|<b, Phi>| <= ||b||_{CM^1(w)} ||Phi||_{H^1(w)}``.

    ``b`` is centered on the base cube first, so only its cancellative
    coefficients pair with ``Phi``.  A zero right-hand side gives a vacuous
    pass when the pairing also vanishes.  Excess over ``1 + 1e-9`` is logged.
    """
    _check(b, Phi, w)
    bc = b.centered()
    pairing = abs(bc.inner(Phi))
    cm = cm1_norm(bc, w).value
    h = h1_norm(Phi, w)
    rhs = cm * h
    if rhs == 0:
        ok = pairing <= 1e-12
        return DualityReport(pairing, cm, h, None, ok)
    ratio = pairing / rhs
    ok = ratio <= 1 + DUALITY_TOL
    if not ok:
        log.warning("duality pairing exceeds CM1 x H1 bound: ratio %.12g", ratio)
    return DualityReport(pairing, cm, h, ratio, ok)


# -- Bloom BMO equivalence -------------------------------------------------------

EQUIVALENCE_KEYS = (
    "bmo2_nu",  # (1) ||b||_{BMO^2(nu)}
    "pi_lp",  # (2) ||Pi_b : L^p(mu) -> L^p(lam)||
    "pistar_lp",  # (3) ||Pi*_b : L^p(mu) -> L^p(lam)||
    "para_l2_nu",  # (4) max of the two below
    "b1",  # (5)
    "b2",  # (6)
    "bmo_nu",  # (7) ||b||_{BMO(nu)}
)


def bmo_equivalence_report(b: StepFunction, mu, lam, p: float, seed=0) -> dict:
    """The seven quantities characterizing ``b`` in Bloom BMO, with all pairwise ratios.

    Quantity (4) is reported as the larger of ``||Pi_b||`` and ``||Pi*_b||``
    from ``L^2(nu)`` to ``L^2(nu^{-1})``; both are listed separately.
    Operator norms at ``p != 2`` are certified lower bounds.
    """
    from .norms import opnorm_l2, opnorm_lp

    g = _check(b, mu, lam)
    q = conjugate_exponent(p)
    nu = bloom(mu, lam, p)
    nu_inv = nu.power(-1.0)
    mu_p = as_weight(mu).power(1 - q)
    lam_p = as_weight(lam).power(1 - q)
    Pi = paraproduct_map("Pi", b)
    PiS = paraproduct_map("PiStar", b)

    def lp(A):
        if p == 2:
            return opnorm_l2(A, mu, lam).value
        return opnorm_lp(A, mu, lam, p, seeds=seed).value

    vals = {
        "bmo2_nu": bmo_q_norm(b, nu, 2.0).value,
        "pi_lp": lp(Pi),
        "pistar_lp": lp(PiS),
        "pi_l2_nu": opnorm_l2(Pi, nu, nu_inv).value,
        "pistar_l2_nu": opnorm_l2(PiS, nu, nu_inv).value,
        "b1": b1(b, mu, lam, p).value,
        "b2": b2(b, mu_p, lam_p, q).value,
        "bmo_nu": bmo_norm(b, nu).value,
    }
    vals["para_l2_nu"] = max(vals["pi_l2_nu"], vals["pistar_l2_nu"])
    ratios = {}
    for a, c in itertools.permutations(EQUIVALENCE_KEYS, 2):
        if vals[c] > 0:
            ratios[f"{a}/{c}"] = vals[a] / vals[c]
        else:
            ratios[f"{a}/{c}"] = math.nan if vals[a] == 0 else math.inf
    return {"grid": g.to_dict(), "p": p, "quantities": vals, "ratios": ratios}
