"""Dyadic maximal and square functions, paraproducts, Λ-operators, commutators.

Every operator has an array form acting on Morton-ordered cell values with
arbitrary leading batch axes (``*_array`` functions, used by norm estimation)
and a :class:`StepFunction` form for direct use.  Sums over cubes always run
over the cubes of the finite grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .grid import Grid, GridError
from .haar import (
    StepFunction,
    analyze_array,
    expand,
    level_averages,
    series_array,
    sig_sum_table,
)

__all__ = [
    "LinearMap",
    "maximal",
    "square_function",
    "shifted_square_function",
    "paraproduct",
    "paraproduct_map",
    "product_decomposition_check",
    "lambda_op",
    "lambda_map",
    "commutator",
    "commutator_map",
    "multiplication_map",
    "identity_map",
    "PARAPRODUCT_KINDS",
]

PARAPRODUCT_KINDS = ("Pi", "PiStar", "Gamma")
LAMBDA_KINDS = ("Lambda", "LambdaStar")


@dataclass(frozen=True)
class LinearMap:
    """A linear operator on the cell space of ``grid``.

    ``matvec`` maps Morton-ordered arrays of shape ``(..., N)`` to the same
    shape; ``rmatvec`` is the adjoint for the unweighted pairing ``∫ f g dx``.
    """

    grid: Grid
    matvec: Callable[[np.ndarray], np.ndarray]
    rmatvec: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""

    def __call__(self, f: StepFunction) -> StepFunction:
        if f.grid != self.grid:
            raise GridError("operator and function live on different grids")
        return StepFunction.from_tree(self.grid, self.matvec(f.tree))

    @property
    def adjoint(self) -> "LinearMap":
        if self.rmatvec is None:
            raise NotImplementedError(f"{self.name or 'operator'} has no adjoint")
        return LinearMap(self.grid, self.rmatvec, self.matvec, f"{self.name}*")

    def matrix(self) -> np.ndarray:
        """Dense matrix in Morton coordinates (column c = image of cell c)."""
        return self.matvec(np.eye(self.grid.n_cells)).T

    def __add__(self, other: "LinearMap") -> "LinearMap":
        rm = None
        if self.rmatvec is not None and other.rmatvec is not None:
            rm = lambda v: self.rmatvec(v) + other.rmatvec(v)
        return LinearMap(
            self.grid, lambda v: self.matvec(v) + other.matvec(v), rm,
            f"({self.name} + {other.name})",
        )

    def __sub__(self, other: "LinearMap") -> "LinearMap":
        return self + other.scaled(-1.0)

    def scaled(self, c: float) -> "LinearMap":
        rm = None if self.rmatvec is None else (lambda v: c * self.rmatvec(v))
        return LinearMap(self.grid, lambda v: c * self.matvec(v), rm, f"{c}*{self.name}")

    def compose(self, other: "LinearMap") -> "LinearMap":
        """``self ∘ other``."""
        rm = None
        if self.rmatvec is not None and other.rmatvec is not None:
            rm = lambda v: other.rmatvec(self.rmatvec(v))
        return LinearMap(
            self.grid, lambda v: self.matvec(other.matvec(v)), rm,
            f"{self.name}∘{other.name}",
        )


def identity_map(grid: Grid) -> LinearMap:
    return LinearMap(grid, lambda v: v.copy(), lambda v: v.copy(), "I")


def multiplication_map(m: StepFunction) -> LinearMap:
    t = np.array(m.tree)
    return LinearMap(m.grid, lambda v: t * v, lambda v: t * v, "M")


# -- maximal and square functions --------------------------------------------

def maximal_array(v: np.ndarray, grid: Grid) -> np.ndarray:
    avgs = level_averages(np.abs(v), grid)
    c = 2**grid.n
    m = avgs[0]
    for k in range(1, grid.K + 1):
        m = np.maximum(avgs[k], np.repeat(m, c, axis=-1))
    return m


def maximal(f: StepFunction) -> StepFunction:
    """Dyadic maximal function: at each cell the largest ``<|f|>_Q`` over cubes containing it."""
    return StepFunction.from_tree(f.grid, maximal_array(f.tree, f.grid))


def square_function_array(v: np.ndarray, grid: Grid) -> np.ndarray:
    _, coeffs = analyze_array(v, grid)
    s2 = np.zeros(v.shape)
    for k, c in enumerate(coeffs):
        s2 += expand((c**2).sum(axis=-1) / grid.volume(k), grid, k)
    return np.sqrt(s2)


def square_function(f: StepFunction) -> StepFunction:
    return StepFunction.from_tree(f.grid, square_function_array(f.tree, f.grid))


def shifted_sums(coeffs: Sequence[np.ndarray], grid: Grid, i: int, j: int):
    """Yield ``(r, T)`` with ``T[..., R, eps] = sum_{P in R_(i)} |fhat(P, eps)|``
    for every level ``r`` of ``R`` whose ``(i)``-descendants carry Haar
    coefficients and whose ``(j)``-descendants lie in the grid."""
    n, S = grid.n, grid.n_signatures
    for r in range(grid.K + 1):
        if r + i > grid.K - 1 or r + j > grid.K:
            break
        c = np.abs(coeffs[r + i])
        c = c.reshape(c.shape[:-2] + (2 ** (n * r), 2 ** (n * i), S))
        yield r, c.sum(axis=-2)


def shifted_square_function_array(v: np.ndarray, grid: Grid, i: int, j: int) -> np.ndarray:
    _, coeffs = analyze_array(v, grid)
    s2 = np.zeros(v.shape)
    for r, T in shifted_sums(coeffs, grid, i, j):
        # every Q in R_(j) gets the same value and together they tile R
        s2 += expand((T**2).sum(axis=-1) / grid.volume(r + j), grid, r)
    return np.sqrt(s2)


def shifted_square_function(f: StepFunction, i: int, j: int) -> StepFunction:
    """Square function built from sums of ``|fhat|`` over the cousins ``(Q^(j))_(i)``."""
    if i < 0 or j < 0:
        raise ValueError("shift parameters must be non-negative")
    return StepFunction.from_tree(f.grid, shifted_square_function_array(f.tree, f.grid, i, j))


# -- paraproducts ----------------------------------------------------------------

def pi_array(sym: Sequence[np.ndarray], v: np.ndarray, grid: Grid) -> np.ndarray:
    """``sum bhat(Q,eps) <f>_Q h_Q^eps`` from symbol coefficients ``sym``."""
    if grid.K == 0:
        return np.zeros(v.shape)
    avgs = level_averages(v, grid)
    return series_array([s * a[..., None] for s, a in zip(sym, avgs)], grid)


def pistar_array(sym: Sequence[np.ndarray], v: np.ndarray, grid: Grid) -> np.ndarray:
    _, fc = analyze_array(v, grid)
    out = np.zeros(v.shape)
    for k, (s, c) in enumerate(zip(sym, fc)):
        out = out + expand((s * c).sum(axis=-1) / grid.volume(k), grid, k)
    return out


def gamma_coeffs(sym: Sequence[np.ndarray], fc: Sequence[np.ndarray], grid: Grid):
    S = grid.n_signatures
    table = sig_sum_table(grid.n)
    out = []
    for k, (s, c) in enumerate(zip(sym, fc)):
        shape = np.broadcast_shapes(s.shape, c.shape)
        g = np.zeros(shape)
        for e in range(S):
            for h in range(S):
                if e != h:
                    g[..., table[e, h]] += s[..., e] * c[..., h]
        out.append(g / np.sqrt(grid.volume(k)))
    return out


def gamma_array(sym: Sequence[np.ndarray], v: np.ndarray, grid: Grid) -> np.ndarray:
    if grid.K == 0:
        return np.zeros(v.shape)
    _, fc = analyze_array(v, grid)
    return series_array(gamma_coeffs(sym, fc, grid), grid)


_PARA = {"Pi": pi_array, "PiStar": pistar_array, "Gamma": gamma_array}
_PARA_ADJ = {"Pi": "PiStar", "PiStar": "Pi", "Gamma": "Gamma"}


def _kind(kind: str, allowed) -> str:
    if kind not in allowed:
        raise ValueError(f"unknown operator kind {kind!r}; expected one of {allowed}")
    return kind


def paraproduct_map(kind: str, b: StepFunction) -> LinearMap:
    _kind(kind, PARAPRODUCT_KINDS)
    grid = b.grid
    _, sym = analyze_array(b.tree, grid)
    fwd, adj = _PARA[kind], _PARA[_PARA_ADJ[kind]]
    return LinearMap(
        grid,
        lambda v: fwd(sym, v, grid),
        lambda v: adj(sym, v, grid),
        f"{kind}_b",
    )


def paraproduct(kind: str, b: StepFunction, f: StepFunction) -> StepFunction:
    """``Pi_b f``, ``Pi*_b f`` or ``Gamma_b f``."""
    if b.grid != f.grid:
        raise GridError("symbol and function live on different grids")
    return paraproduct_map(kind, b)(f)


def product_decomposition_check(b: StepFunction, f: StepFunction, literal: bool = False) -> float:
    """Max-norm residual of ``bf = <b><f> 1 + Pi_b f + Pi_f b + Pi*_b f + Gamma_b f``.

    With ``literal=True`` the base-cube mean term is dropped, which is exact
    only for mean-zero ``b`` and ``f``.
    """
    parts = (
        paraproduct("Pi", b, f)
        + paraproduct("Pi", f, b)
        + paraproduct("PiStar", b, f)
        + paraproduct("Gamma", b, f)
    )
    if not literal:
        parts = parts + b.mean() * f.mean()
    return (b * f - parts).max_abs()


# -- Λ operators -------------------------------------------------------------------

def _subtree_sums(t: Sequence[np.ndarray], grid: Grid) -> list[np.ndarray]:
    """``T_k[Q] = sum over P ⊆ Q (levels k..K-1) of t[P]``."""
    c = 2**grid.n
    out = [None] * len(t)
    acc = None
    for k in range(len(t) - 1, -1, -1):
        acc = t[k] if acc is None else t[k] + acc.reshape(acc.shape[:-1] + (-1, c)).sum(axis=-1)
        out[k] = acc
    return out


def _ancestor_sums(t: Sequence[np.ndarray], grid: Grid) -> list[np.ndarray]:
    """``C_k[P] = sum over Q ⊇ P of t[Q]``."""
    c = 2**grid.n
    out, acc = [], None
    for k, tk in enumerate(t):
        acc = tk if acc is None else tk + np.repeat(acc, c, axis=-1)
        out.append(acc)
    return out


def lambda_array(a_c, b_c, v, grid: Grid) -> np.ndarray:
    """``sum_Q ahat(Q,eps)/|Q| (sum_{P⊆Q} bhat(P,eta) fhat(P,eta)) h_Q^eps``."""
    if grid.K == 0:
        return np.zeros(v.shape)
    _, fc = analyze_array(v, grid)
    T = _subtree_sums([(b * c).sum(axis=-1) for b, c in zip(b_c, fc)], grid)
    coeffs = [a * (Tk / grid.volume(k))[..., None] for k, (a, Tk) in enumerate(zip(a_c, T))]
    return series_array(coeffs, grid)


def lambda_star_array(a_c, b_c, v, grid: Grid) -> np.ndarray:
    """``sum_Q dhat(Q,eps) fhat(Q,eps)/|Q| (sum_{P⊆Q} bhat(P,eta) h_P^eta)``."""
    if grid.K == 0:
        return np.zeros(v.shape)
    _, fc = analyze_array(v, grid)
    t = [(a * c).sum(axis=-1) / grid.volume(k) for k, (a, c) in enumerate(zip(a_c, fc))]
    C = _ancestor_sums(t, grid)
    return series_array([b * Ck[..., None] for b, Ck in zip(b_c, C)], grid)


def lambda_map(kind: str, a: StepFunction, b: StepFunction) -> LinearMap:
    _kind(kind, LAMBDA_KINDS)
    if a.grid != b.grid:
        raise GridError("symbols live on different grids")
    grid = a.grid
    _, a_c = analyze_array(a.tree, grid)
    _, b_c = analyze_array(b.tree, grid)
    fwd = lambda v: lambda_array(a_c, b_c, v, grid)
    adj = lambda v: lambda_star_array(a_c, b_c, v, grid)
    if kind == "LambdaStar":
        fwd, adj = adj, fwd
    return LinearMap(grid, fwd, adj, f"{kind}_ab")


def lambda_op(kind: str, a_or_d: StepFunction, b: StepFunction, f: StepFunction) -> StepFunction:
    """``Λ_{a,b} f`` or ``Λ*_{d,b} f``."""
    return lambda_map(kind, a_or_d, b)(f)


# -- commutators -------------------------------------------------------------------

def commutator_map(b: StepFunction, T: LinearMap) -> LinearMap:
    """``[b, T] = bT - Tb``; its adjoint is ``-[b, T*]``."""
    t = np.array(b.tree)
    fwd = lambda v: t * T.matvec(v) - T.matvec(t * v)
    adj = None
    if T.rmatvec is not None:
        adj = lambda v: T.rmatvec(t * v) - t * T.rmatvec(v)
    return LinearMap(b.grid, fwd, adj, f"[b,{T.name}]")


def commutator(b: StepFunction, T, f: StepFunction) -> StepFunction:
    """``b T f - T(b f)`` for a :class:`LinearMap` or anything with ``as_map()``."""
    if hasattr(T, "as_map"):
        T = T.as_map()
    return commutator_map(b, T)(f)
