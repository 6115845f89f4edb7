"""Dyadic shift operators and the commutator remainder decompositions.

A shift with parameters ``(i, j)`` stores, for every level ``r`` of the
"roof" cube ``R``, a dense table ``a[r]`` of shape
``(2^{nr}, 2^{ni}, 2^{nj}, S, S)`` indexed by ``(R, P, Q, eps, eta)`` where
``P`` and ``Q`` are the local (Morton) positions of ``P in R_(i)`` and
``Q in R_(j)``.  Only roofs whose ``(i)`` and ``(j)`` descendants carry Haar
coefficients appear, i.e. ``r <= K - 1 - max(i, j)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Cube, Grid, GridError, lex_index
from .haar import StepFunction, analyze_array, child_signs, level_averages, series_array
from .operators import (
    LinearMap,
    paraproduct_map,
    pi_array,
    lambda_map,
)

__all__ = [
    "ShiftOperator",
    "NonCancellativeShift",
    "kappa",
    "make_random_shift",
    "single_entry_shift",
    "apply_shift",
    "remainder",
    "remainder_terms",
    "remainder_direct",
    "commutator_split",
    "noncancellative_remainder_check",
    "make_noncancellative_shift",
]

BOUND_SLACK = 1e-12


def kappa(i: int, j: int) -> int:
    """Shift complexity ``max(i, j, 1)``."""
    return max(i, j, 1)


def roof_levels(grid: Grid, i: int, j: int) -> range:
    return range(max(grid.K - max(i, j), 0))


@dataclass(frozen=True)
class ShiftOperator:
    grid: Grid
    i: int
    j: int
    tables: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        if self.i < 0 or self.j < 0:
            raise ValueError("shift parameters must be non-negative")
        n, S = self.grid.n, self.grid.n_signatures
        levels = roof_levels(self.grid, self.i, self.j)
        if len(self.tables) != len(levels):
            raise GridError(f"expected {len(levels)} roof levels, got {len(self.tables)}")
        bound = self.coefficient_bound * (1 + BOUND_SLACK)
        for r, a in zip(levels, self.tables):
            shape = (2 ** (n * r), 2 ** (n * self.i), 2 ** (n * self.j), S, S)
            if a.shape != shape:
                raise GridError(f"table at roof level {r} has shape {a.shape}, expected {shape}")
            if a.size and np.abs(a).max() > bound:
                raise ValueError(
                    f"shift coefficient {np.abs(a).max():.6g} exceeds the size bound "
                    f"{self.coefficient_bound:.6g}"
                )
            a.setflags(write=False)

    @property
    def coefficient_bound(self) -> float:
        """``sqrt(|P||Q|)/|R| = 2^{-n(i+j)/2}``."""
        return 2.0 ** (-self.grid.n * (self.i + self.j) / 2)

    @property
    def kappa(self) -> int:
        return kappa(self.i, self.j)

    @property
    def adjoint(self) -> "ShiftOperator":
        """Parameters ``(j, i)`` and table ``a*[R,Q,P,eta,eps] = a[R,P,Q,eps,eta]``."""
        return ShiftOperator(
            self.grid, self.j, self.i,
            tuple(np.ascontiguousarray(a.transpose(0, 2, 1, 4, 3)) for a in self.tables),
        )

    def apply_array(self, v: np.ndarray) -> np.ndarray:
        _, fc = analyze_array(v, self.grid)
        return series_array(self.image_coeffs(fc), self.grid)

    def image_coeffs(self, fc, weights_p=None, weights_q=None):
        """Haar coefficients of ``S f`` from those of ``f``.

        ``weights_p[r]`` / ``weights_q[r]`` (shapes ``(..., 2^{nr}, 2^{ni})`` and
        ``(..., 2^{nr}, 2^{nj})``) multiply each term by a factor depending on
        ``P`` or on ``Q``; they implement the remainder formulas.
        """
        g, n, S = self.grid, self.grid.n, self.grid.n_signatures
        lead = fc[0].shape[:-2] if fc else ()
        out = [np.zeros(lead + (2 ** (n * k), S)) for k in range(g.K)]
        for r, a in zip(roof_levels(g, self.i, self.j), self.tables):
            F = fc[r + self.i]
            F = F.reshape(F.shape[:-2] + (2 ** (n * r), 2 ** (n * self.i), S))
            if weights_p is not None:
                F = F * weights_p[r][..., None]
            G = np.einsum("...rpe,rpqeh->...rqh", F, a)
            if weights_q is not None:
                G = G * weights_q[r][..., None]
            out[r + self.j] = out[r + self.j] + G.reshape(G.shape[:-3] + (-1, S))
        return out

    def __call__(self, f: StepFunction) -> StepFunction:
        return apply_shift(self, f)

    def as_map(self) -> LinearMap:
        adj = self.adjoint
        return LinearMap(self.grid, self.apply_array, adj.apply_array, f"S^{self.i}{self.j}")

    def entries(self):
        """Nonzero entries ``(R, P, Q, eps, eta, a)``; cubes as ``(level, index)``, signatures as tuples."""
        from .haar import int_to_sig

        n = self.grid.n
        for r, a in zip(roof_levels(self.grid, self.i, self.j), self.tables):
            for R, p, q, e, h in zip(*np.nonzero(a)):
                Rm = int(R)
                yield (
                    (r, lex_index(Rm, r, n)),
                    (r + self.i, lex_index(Rm * 2 ** (n * self.i) + int(p), r + self.i, n)),
                    (r + self.j, lex_index(Rm * 2 ** (n * self.j) + int(q), r + self.j, n)),
                    int_to_sig(int(e), n), int_to_sig(int(h), n), float(a[R, p, q, e, h]),
                )

    def to_dict(self) -> dict:
        def key(c):
            return {"level": c[0], "index": list(c[1])}

        return {
            "grid": self.grid.to_dict(),
            "i": self.i,
            "j": self.j,
            "entries": [
                [key(R), key(P), key(Q), list(e), list(h), val]
                for R, P, Q, e, h, val in self.entries()
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShiftOperator":
        from .grid import morton_index
        from .haar import sig_to_int

        grid = Grid.from_dict(d["grid"])
        i, j, n = d["i"], d["j"], grid.n
        tables = [_empty_table(grid, i, j, r) for r in roof_levels(grid, i, j)]
        for R, P, Q, e, h, val in d["entries"]:
            r = R["level"]
            Rm = morton_index(R["index"], r, n)
            Pm = morton_index(P["index"], P["level"], n) - Rm * 2 ** (n * i)
            Qm = morton_index(Q["index"], Q["level"], n) - Rm * 2 ** (n * j)
            if not (0 <= Pm < 2 ** (n * i) and 0 <= Qm < 2 ** (n * j)):
                raise GridError("entry cubes are not descendants of their roof")
            tables[r][Rm, Pm, Qm, sig_to_int(e), sig_to_int(h)] = val
        return cls(grid, i, j, tuple(tables))


def _empty_table(grid: Grid, i: int, j: int, r: int) -> np.ndarray:
    n, S = grid.n, grid.n_signatures
    return np.zeros((2 ** (n * r), 2 ** (n * i), 2 ** (n * j), S, S))


def make_random_shift(grid: Grid, i: int, j: int, seed, density: float = 1.0) -> ShiftOperator:
    """Coefficients uniform on ``[-2^{-n(i+j)/2}, 2^{-n(i+j)/2}]``.

    With ``density < 1`` each entry is kept with that probability.  Tables are
    drawn roof level by roof level, so the same seed yields nested operators
    across depths.
    """
    if i < 0 or j < 0:
        raise ValueError("shift parameters must be non-negative")
    if i + j > grid.K:
        raise GridError(f"complexity i+j={i + j} exceeds grid depth {grid.K}")
    rng = np.random.default_rng(seed)
    bound = 2.0 ** (-grid.n * (i + j) / 2)
    tables = []
    for r in roof_levels(grid, i, j):
        shape = _empty_table(grid, i, j, r).shape
        a = rng.uniform(-bound, bound, size=shape)
        if density < 1.0:
            a = np.where(rng.random(shape) < density, a, 0.0)
        tables.append(a)
    return ShiftOperator(grid, i, j, tuple(tables))


def single_entry_shift(R: Cube, P: Cube, Q: Cube, eps, eta, value: float | None = None) -> ShiftOperator:
    """A shift with one nonzero coefficient (default: the size bound)."""
    from .haar import sig_to_int

    grid = R.grid
    i, j = P.level - R.level, Q.level - R.level
    if not (R.contains(P) and R.contains(Q)):
        raise GridError("P and Q must be descendants of R")
    tables = [_empty_table(grid, i, j, r) for r in roof_levels(grid, i, j)]
    if R.level >= len(tables):
        raise GridError("roof cube too deep for a shift with these parameters")
    n = grid.n
    bound = 2.0 ** (-n * (i + j) / 2)
    tables[R.level][
        R.morton,
        P.morton - R.morton * 2 ** (n * i),
        Q.morton - R.morton * 2 ** (n * j),
        sig_to_int(eps),
        sig_to_int(eta),
    ] = bound if value is None else value
    return ShiftOperator(grid, i, j, tuple(tables))


def apply_shift(S: ShiftOperator, f: StepFunction) -> StepFunction:
    """``sum_R sum_{P in R_(i), Q in R_(j)} a^{eps eta}_{PQR} fhat(P,eps) h_Q^eta``."""
    if f.grid != S.grid:
        raise GridError("shift and function live on different grids")
    return StepFunction.from_tree(S.grid, S.apply_array(f.tree))


# -- remainders ---------------------------------------------------------------------

def _split(level_arr: np.ndarray, n: int, r: int, d: int) -> np.ndarray:
    return level_arr.reshape(level_arr.shape[:-1] + (2 ** (n * r), 2 ** (n * d)))


def _increment(b_coeffs, grid: Grid, m: int, k: int) -> np.ndarray:
    """``sum_gamma bhat(Q^(k), gamma) h_{Q^(k)}^gamma(Q)`` for every ``Q`` at level ``m``."""
    top = m - k
    vals = b_coeffs[top] @ child_signs(grid.n)[:-1] / np.sqrt(grid.volume(top))
    return np.repeat(vals.reshape(vals.shape[:-2] + (-1,)), 2 ** (grid.n * (k - 1)), axis=-1)


def remainder_direct(b: StepFunction, T, f: StepFunction) -> StepFunction:
    """``Pi_{Tf} b - T Pi_f b`` for any linear map ``T``."""
    if hasattr(T, "as_map"):
        T = T.as_map()
    g = b.grid
    Tf = T.matvec(f.tree)
    _, sym_Tf = analyze_array(Tf, g)
    _, sym_f = analyze_array(f.tree, g)
    out = pi_array(sym_Tf, b.tree, g) - T.matvec(pi_array(sym_f, b.tree, g))
    return StepFunction.from_tree(g, out)


def _remainder_formula_array(b: StepFunction, S: ShiftOperator, v: np.ndarray) -> np.ndarray:
    g, n = S.grid, S.grid.n
    avg = level_averages(b.tree, g)
    _, fc = analyze_array(v, g)
    levels = roof_levels(g, S.i, S.j)
    bq = {r: _split(avg[r + S.j], n, r, S.j) for r in levels}
    bp = {r: _split(avg[r + S.i], n, r, S.i) for r in levels}
    plus = S.image_coeffs(fc, weights_q=bq)
    minus = S.image_coeffs(fc, weights_p=bp)
    return series_array([x - y for x, y in zip(plus, minus)], g)


def remainder_terms(b: StepFunction, S: ShiftOperator, f: StepFunction):
    """The ``A_k`` (``k = 1..j``) and ``B_k`` (``k = 1..i``) pieces of the remainder.

    Returns a list of ``(label, StepFunction)``; the remainder equals
    ``sum A_k - sum B_k``.  Labels carry the group each ``A_k`` comes from:
    ``"Q->N"`` for ``k <= j - i`` (average differences inside ``R_(i)`` cubes,
    absent when ``i >= j``) and ``"N->R"`` for the rest.
    """
    g, n = S.grid, S.grid.n
    _, bc = analyze_array(b.tree, g)
    _, fc = analyze_array(f.tree, g)
    levels = roof_levels(g, S.i, S.j)
    terms = []
    for k in range(1, S.j + 1):
        w = {r: _split(_increment(bc, g, r + S.j, k), n, r, S.j) for r in levels}
        group = "Q->N" if k <= S.j - S.i else "N->R"
        coeffs = S.image_coeffs(fc, weights_q=w)
        terms.append((f"A_{k}[{group}]", StepFunction.from_tree(g, series_array(coeffs, g))))
    for k in range(1, S.i + 1):
        w = {r: _split(_increment(bc, g, r + S.i, k), n, r, S.i) for r in levels}
        coeffs = S.image_coeffs(fc, weights_p=w)
        terms.append((f"B_{k}", StepFunction.from_tree(g, series_array(coeffs, g))))
    return terms


def remainder(b: StepFunction, S: ShiftOperator, f: StepFunction, method: str = "direct") -> StepFunction:
    """The commutator remainder ``R^{ij} f = Pi_{Sf} b - S Pi_f b``.

    ``direct`` composes the operators, ``formula`` sums
    ``a fhat(P) (<b>_Q - <b>_P) h_Q`` and ``AB`` sums the telescoped
    ``A_k``/``B_k`` pieces.
    """
    if b.grid != S.grid or f.grid != S.grid:
        raise GridError("symbol, shift and function must share a grid")
    if method == "direct":
        return remainder_direct(b, S, f)
    if (S.i, S.j) == (0, 0) and method == "AB":
        raise ValueError("the A_k/B_k split needs (i, j) != (0, 0); use 'direct' or 'formula'")
    if method == "formula":
        return StepFunction.from_tree(S.grid, _remainder_formula_array(b, S, f.tree))
    if method == "AB":
        out = StepFunction.constant(S.grid, 0.0)
        for label, term in remainder_terms(b, S, f):
            out = out - term if label.startswith("B") else out + term
        return out
    raise ValueError(f"unknown remainder method {method!r}")


def commutator_split(b: StepFunction, S, f: StepFunction):
    """``(T1 f, T2 f, R f)`` with ``[b,S] f = T1 f + T2 f + R f``.

    ``T1 = (Pi_b + Pi*_b + Gamma_b) S`` and ``T2 = -S (Pi_b + Pi*_b + Gamma_b)``.
    """
    T = S.as_map() if hasattr(S, "as_map") else S
    P = paraproduct_map("Pi", b) + paraproduct_map("PiStar", b) + paraproduct_map("Gamma", b)
    t1 = P.compose(T)(f)
    t2 = -T.compose(P)(f)
    return t1, t2, remainder_direct(b, T, f)


# -- non-cancellative (0,0) shifts ------------------------------------------------

@dataclass(frozen=True)
class NonCancellativeShift:
    """``S^{00} = S^{00}_c + Pi_a + Pi*_d``."""

    cancellative: ShiftOperator
    a: StepFunction
    d: StepFunction

    def __post_init__(self):
        if (self.cancellative.i, self.cancellative.j) != (0, 0):
            raise ValueError("the cancellative part must have parameters (0, 0)")
        if not (self.a.grid == self.d.grid == self.cancellative.grid):
            raise GridError("components live on different grids")

    @property
    def grid(self) -> Grid:
        return self.cancellative.grid

    def as_map(self) -> LinearMap:
        return self.cancellative.as_map() + paraproduct_map("Pi", self.a) + paraproduct_map("PiStar", self.d)

    def __call__(self, f: StepFunction) -> StepFunction:
        return self.as_map()(f)


def make_noncancellative_shift(grid: Grid, seed, symbol_decay: float = 0.7) -> NonCancellativeShift:
    """Random ``S^{00}`` with symbols rescaled to unweighted dyadic BMO norm at most 1."""
    from .bmo import bmo_norm
    from .experiments import random_symbol

    rng = np.random.default_rng(seed)
    Sc = make_random_shift(grid, 0, 0, rng)
    syms = []
    for _ in range(2):
        s = random_symbol(grid, rng, symbol_decay)
        norm = bmo_norm(s).value
        syms.append(s * (1 / norm) if norm > 1 else s)
    return NonCancellativeShift(Sc, syms[0], syms[1])


def noncancellative_remainder_check(S00: NonCancellativeShift, b: StepFunction, f: StepFunction) -> dict:
    """Residuals (max norm) of the three identities for the (0,0) remainder.

    ``cancellative``: ``Pi_{S_c f} b - S_c Pi_f b`` (exact for any ``b``);
    ``R_a``: ``R_a - (Pi_a Pi_b + Pi_a Gamma_b + Pi_a Pi*_b - Λ_{a,b})``;
    ``R_d*``: ``R*_d - (Λ*_{d,b} - Pi_b Pi*_d - Gamma_b Pi*_d - Pi*_b Pi*_d)``.
    The last two use ``b`` centred on the base cube.
    """
    g = S00.grid
    bc = b.centered()
    Pa, Pd_star = paraproduct_map("Pi", S00.a), paraproduct_map("PiStar", S00.d)
    Pb, Pb_star, Gb = (paraproduct_map(k, bc) for k in ("Pi", "PiStar", "Gamma"))

    canc = remainder_direct(b, S00.cancellative, f)
    ra = remainder_direct(bc, Pa, f)
    ra_rhs = (
        Pa.compose(Pb)(f) + Pa.compose(Gb)(f) + Pa.compose(Pb_star)(f)
        - lambda_map("Lambda", S00.a, bc)(f)
    )
    rd = remainder_direct(bc, Pd_star, f)
    rd_rhs = (
        lambda_map("LambdaStar", S00.d, bc)(f)
        - Pb.compose(Pd_star)(f) - Gb.compose(Pd_star)(f) - Pb_star.compose(Pd_star)(f)
    )
    total = remainder_direct(bc, S00.as_map(), f)
    return {
        "cancellative": canc.max_abs(),
        "R_a": (ra - ra_rhs).max_abs(),
        "R_d*": (rd - rd_rhs).max_abs(),
        "total_remainder": total.max_abs(),
        "grid": g.to_dict(),
    }
