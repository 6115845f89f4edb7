"""Dyadic Ap weights, conjugate weights and the Bloom weight.

Every supremum here runs over the cubes of one finite grid ("dyadic Ap").
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Cube, Grid, GridError, sup_over_levels
from .haar import StepFunction, level_averages

__all__ = [
    "Weight",
    "ApReport",
    "conjugate_exponent",
    "ap_characteristic",
    "conjugate",
    "bloom",
    "check_nu_a2",
    "gen_cascade_weight",
    "nu_holder_check",
    "HolderReport",
]

HOLDER_TOL = 1e-12
POWER_TOL = 1e-9


class Weight(StepFunction):
    """A strictly positive step function, optionally tagged with its Ap exponent."""

    __slots__ = ("p",)

    def __init__(self, grid: Grid, values, p: float | None = None):
        super().__init__(grid, values)
        if not np.all(self.values > 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("weight values must be finite and strictly positive")
        self.p = p

    @classmethod
    def from_step(cls, f: StepFunction, p: float | None = None) -> "Weight":
        return cls(f.grid, f.values, p)

    @classmethod
    def ones(cls, grid: Grid, p: float | None = None) -> "Weight":
        return cls(grid, np.ones(grid.cells_shape), p)

    def mass(self, Q: Cube) -> float:
        """``w(Q)``, the integral of the weight over ``Q``."""
        scale = 2 ** (self.grid.K - Q.level)
        block = self.values[tuple(slice(i * scale, (i + 1) * scale) for i in Q.index)]
        return float(block.sum() * self.grid.cell_volume)

    def power(self, e: float) -> "Weight":
        return Weight(self.grid, self.values**e)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["p"] = self.p
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Weight":
        f = StepFunction.from_dict(d)
        return cls(f.grid, f.values, d.get("p"))

    def __repr__(self):
        return f"Weight(n={self.grid.n}, K={self.grid.K}, p={self.p})"


def as_weight(w) -> Weight:
    return w if isinstance(w, Weight) else Weight.from_step(w)


def conjugate_exponent(p: float) -> float:
    if not 1 < p < np.inf:
        raise ValueError(f"exponent must lie in (1, inf), got {p}")
    return p / (p - 1)


@dataclass
class ApReport:
    value: float
    witness: Cube
    per_level: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"value": self.value, "witness": self.witness.key(), "table": self.per_level}


def ap_products(w: StepFunction, p: float) -> list[np.ndarray]:
    """Per-level arrays of ``<w>_Q <w^{1-q}>_Q^{p-1}`` (Morton order)."""
    q = conjugate_exponent(p)
    vals = as_weight(w).tree
    wa = level_averages(vals, w.grid)
    wc = level_averages(vals ** (1 - q), w.grid)
    return [a * b ** (p - 1) for a, b in zip(wa, wc)]


def ap_characteristic(w: StepFunction, p: float, grid: Grid | None = None) -> ApReport:
    """Exact dyadic ``[w]_{A_p}``: the maximum over every cube of the grid."""
    if grid is not None and grid != w.grid:
        raise GridError("weight does not live on the given grid")
    value, (k, idx), maxima = sup_over_levels(ap_products(w, p), w.grid.n)
    return ApReport(value, w.grid.cube(k, idx), maxima)


def conjugate(w: StepFunction, p: float) -> Weight:
    """``w' = w^{1-q}``, an A_q weight when ``w`` is A_p."""
    q = conjugate_exponent(p)
    return Weight(w.grid, as_weight(w).values ** (1 - q), p=q)


def bloom(mu: StepFunction, lam: StepFunction, p: float) -> Weight:
    """``nu = mu^{1/p} lam^{-1/p}``."""
    if mu.grid != lam.grid:
        raise GridError("mu and lambda live on different grids")
    conjugate_exponent(p)
    return Weight(mu.grid, as_weight(mu).values ** (1 / p) * as_weight(lam).values ** (-1 / p), p=2.0)


def check_nu_a2(mu: StepFunction, lam: StepFunction, p: float) -> tuple[float, float, bool]:
    """``([nu]_{A2}, [mu]_{Ap}^{1/p} [lam]_{Ap}^{1/p}, lhs <= rhs + 1e-9)``."""
    nu = bloom(mu, lam, p)
    lhs = ap_characteristic(nu, 2.0).value
    rhs = ap_characteristic(mu, p).value ** (1 / p) * ap_characteristic(lam, p).value ** (1 / p)
    return lhs, rhs, bool(lhs <= rhs + POWER_TOL)


def gen_cascade_weight(grid: Grid, ratio_bound: float, seed) -> Weight:
    """Mean-preserving multiplicative cascade.

    Each child's value is its parent's times a factor drawn from
    ``U[1/r, r]``, with factors renormalized over each sibling group so the
    parent's average is kept.  Draws happen level by level, so the cascade at
    depth ``K`` is the level-``K`` average of the cascade at depth ``K+1``
    under the same seed.
    """
    if ratio_bound < 1:
        raise ValueError("ratio_bound must be >= 1")
    rng = np.random.default_rng(seed)
    c = 2**grid.n
    vals = np.ones(1)
    for k in range(grid.K):
        factors = rng.uniform(1 / ratio_bound, ratio_bound, size=(2 ** (grid.n * k), c))
        factors /= factors.mean(axis=1, keepdims=True)
        vals = (vals[:, None] * factors).reshape(-1)
    return Weight.from_step(StepFunction.from_tree(grid, vals))


@dataclass
class HolderReport:
    """The chain ``a ≲ b ≲ c ≲ d`` for one cube, with
    ``a = <mu>^{1/p}<lam'>^{1/q}``, ``b = 1/(<mu'>^{1/q}<lam>^{1/p})``,
    ``c = 1/<nu^{-1}>``, ``d = <nu>``."""

    cube: Cube
    a: float
    b: float
    c: float
    d: float
    nu_le_a: bool
    nuinv_holder: bool

    @property
    def ratios(self) -> tuple[float, float, float]:
        return self.a / self.b, self.b / self.c, self.c / self.d

    @property
    def passed(self) -> bool:
        return self.nu_le_a and self.nuinv_holder

    def to_dict(self) -> dict:
        return {
            "cube": self.cube.key(),
            "quantities": [self.a, self.b, self.c, self.d],
            "ratios": list(self.ratios),
            "holder_nu": self.nu_le_a,
            "holder_nu_inverse": self.nuinv_holder,
        }


def _holder_arrays(mu, lam, p):
    q = conjugate_exponent(p)
    g = mu.grid
    m, l = as_weight(mu).tree, as_weight(lam).tree
    nu = m ** (1 / p) * l ** (-1 / p)
    avg = lambda v: level_averages(v, g)
    mu_a, lam_a = avg(m), avg(l)
    mup_a, lamp_a = avg(m ** (1 - q)), avg(l ** (1 - q))
    nu_a, nuinv_a = avg(nu), avg(1 / nu)
    out = []
    for k in range(g.K + 1):
        a = mu_a[k] ** (1 / p) * lamp_a[k] ** (1 / q)
        b_den = mup_a[k] ** (1 / q) * lam_a[k] ** (1 / p)
        out.append((a, 1 / b_den, 1 / nuinv_a[k], nu_a[k], b_den, nuinv_a[k]))
    return out


def nu_holder_check(mu: StepFunction, lam: StepFunction, p: float, Q: Cube | None = None):
    """Hölder chain for the Bloom weight on ``Q`` (or on every cube if ``Q`` is None).

    The two unconditional Hölder inequalities ``<nu> <= <mu>^{1/p}<lam'>^{1/q}`` and
    ``<nu^{-1}> <= <mu'>^{1/q}<lam>^{1/p}`` are flagged at relative tolerance
    1e-12; the remaining links are reported as ratios.
    """
    if mu.grid != lam.grid:
        raise GridError("mu and lambda live on different grids")
    arrays = _holder_arrays(mu, lam, p)
    cubes = [Q] if Q is not None else list(mu.grid.cubes())
    reports = []
    for C in cubes:
        a, b, c, d, b_den, nuinv = (float(x[C.morton]) for x in arrays[C.level])
        reports.append(
            HolderReport(
                C, a, b, c, d,
                nu_le_a=d <= a * (1 + HOLDER_TOL),
                nuinv_holder=nuinv <= b_den * (1 + HOLDER_TOL),
            )
        )
    return reports[0] if Q is not None else reports
