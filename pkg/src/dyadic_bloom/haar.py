"""Haar system with signatures, analysis/synthesis and averages.

Signatures ``eps in {0,1}^n`` are encoded as integers with ``eps[0]`` the most
significant bit; the all-ones signature ``2^n - 1`` is the non-cancellative
``h_Q^1 = |Q|^{-1/2} 1_Q`` and is never stored as a coefficient.  In one
dimension ``h_I^0`` is ``+|I|^{-1/2}`` on the left half of ``I`` and
``-|I|^{-1/2}`` on the right half.

Coefficients live in per-level arrays of shape ``(..., 2^{nk}, 2^n - 1)``
(cube axis in Morton order, signature last).  Any leading axes are batch axes,
which lets linear operators act on many functions at once.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .grid import Cube, Grid, GridError, from_morton, lex_index, morton_index, to_morton

__all__ = [
    "Signature",
    "signatures",
    "signature_add",
    "is_cancellative",
    "StepFunction",
    "HaarCoeffs",
    "analyze",
    "synthesize",
    "haar_eval",
    "haar_function",
    "haar_value_on_subcube",
    "average",
    "avg_difference_check",
]

Signature = tuple[int, ...]


def sig_to_int(eps: Sequence[int]) -> int:
    s = 0
    for e in eps:
        if e not in (0, 1):
            raise ValueError(f"signature entries must be 0 or 1, got {e!r}")
        s = (s << 1) | int(e)
    return s


def int_to_sig(s: int, n: int) -> Signature:
    return tuple((s >> (n - 1 - i)) & 1 for i in range(n))


def signatures(n: int, cancellative: bool = True) -> list[Signature]:
    count = 2**n - 1 if cancellative else 2**n
    return [int_to_sig(s, n) for s in range(count)]


def is_cancellative(eps: Sequence[int]) -> bool:
    return not all(e == 1 for e in eps)


def signature_add(eps: Sequence[int], eta: Sequence[int]) -> Signature:
    """Componentwise agreement: 1 where the bits agree, 0 where they differ."""
    if len(eps) != len(eta):
        raise ValueError(f"signature lengths differ: {len(eps)} vs {len(eta)}")
    return tuple(int(a == b) for a, b in zip(eps, eta))


@lru_cache(maxsize=None)
def child_signs(n: int) -> np.ndarray:
    """``signs[s, c]`` = sign of ``h_Q^s`` on child ``c`` (Morton digit) of ``Q``."""
    out = np.ones((2**n, 2**n))
    for s in range(2**n):
        for c in range(2**n):
            for i in range(n):
                shift = n - 1 - i
                if not (s >> shift) & 1 and (c >> shift) & 1:
                    out[s, c] = -out[s, c]
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def sig_sum_table(n: int) -> np.ndarray:
    """``table[s, t]`` = integer code of ``s + t``."""
    mask = 2**n - 1
    s = np.arange(2**n)
    return (~(s[:, None] ^ s[None, :])) & mask


# -- array-level transforms (Morton layout, batch-friendly) ---------------------

def level_averages(v: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Cube averages at every level; ``out[k]`` has shape ``(..., 2^{nk})``."""
    c = 2**grid.n
    out = [v]
    for _ in range(grid.K):
        v = v.reshape(v.shape[:-1] + (-1, c)).mean(axis=-1)
        out.append(v)
    return out[::-1]


def expand(level_values: np.ndarray, grid: Grid, level: int) -> np.ndarray:
    """Broadcast per-cube values at ``level`` to the finest cells."""
    return np.repeat(level_values, 2 ** (grid.n * (grid.K - level)), axis=-1)


def analyze_array(v: np.ndarray, grid: Grid) -> tuple[np.ndarray, list[np.ndarray]]:
    avgs = level_averages(v, grid)
    signs = child_signs(grid.n)[:-1]
    c = 2**grid.n
    coeffs = []
    for k in range(grid.K):
        child = avgs[k + 1].reshape(avgs[k + 1].shape[:-1] + (-1, c))
        coeffs.append(child @ signs.T * (np.sqrt(grid.volume(k)) / c))
    return avgs[0][..., 0], coeffs


def synthesize_array(mean, coeffs: Sequence[np.ndarray], grid: Grid) -> np.ndarray:
    signs = child_signs(grid.n)[:-1]
    a = np.asarray(mean, dtype=float)[..., None]
    for k in range(grid.K):
        child = a[..., :, None] + (coeffs[k] @ signs) / np.sqrt(grid.volume(k))
        a = child.reshape(child.shape[:-2] + (-1,))
    return a


def series_array(coeffs: Sequence[np.ndarray], grid: Grid) -> np.ndarray:
    """Cell values of a mean-zero Haar series."""
    lead = coeffs[0].shape[:-2] if coeffs else ()
    return synthesize_array(np.zeros(lead), coeffs, grid)


def zero_coeffs(grid: Grid, lead: tuple[int, ...] = ()) -> list[np.ndarray]:
    S = grid.n_signatures
    return [np.zeros(lead + (2 ** (grid.n * k), S)) for k in range(grid.K)]


# -- public types -------------------------------------------------------------

class StepFunction:
    """A real function constant on each finest cell of ``grid``.

    ``values`` has shape ``(2^K,)*n`` indexed lexicographically by cell.
    """

    __slots__ = ("grid", "values", "_tree")

    def __init__(self, grid: Grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.cells_shape:
            values = values.reshape(grid.cells_shape)
        self.grid = grid
        self.values = values
        self._tree = None

    @classmethod
    def from_tree(cls, grid: Grid, flat: np.ndarray) -> "StepFunction":
        f = cls(grid, from_morton(np.asarray(flat, dtype=float), grid.n, grid.K))
        f._tree = np.asarray(flat, dtype=float)
        return f

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "StepFunction":
        return cls(grid, np.full(grid.cells_shape, float(c)))

    @classmethod
    def indicator(cls, Q: Cube) -> "StepFunction":
        g = Q.grid
        vals = np.zeros(g.cells_shape)
        scale = 2 ** (g.K - Q.level)
        vals[tuple(slice(i * scale, (i + 1) * scale) for i in Q.index)] = 1.0
        return cls(g, vals)

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable[..., float]) -> "StepFunction":
        """Sample ``fn`` at cell centres."""
        h = grid.lattice
        axes = [
            o + s + (np.arange(2**grid.K) + 0.5) * h
            for o, s in zip(grid.base_origin, grid.shift)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(grid, np.vectorize(fn)(*mesh))

    @property
    def tree(self) -> np.ndarray:
        """Cell values in Morton order (read-only view)."""
        if self._tree is None:
            t = to_morton(self.values, self.grid.n, self.grid.K)
            t.setflags(write=False)
            self._tree = t
        return self._tree

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def mean(self) -> float:
        return float(self.values.mean())

    def centered(self) -> "StepFunction":
        return StepFunction(self.grid, self.values - self.values.mean())

    def inner(self, other: "StepFunction") -> float:
        _check_same(self, other)
        return float((self.values * other.values).sum() * self.grid.cell_volume)

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())

    def _binary(self, other, op):
        if isinstance(other, StepFunction):
            _check_same(self, other)
            return StepFunction(self.grid, op(self.values, other.values))
        return StepFunction(self.grid, op(self.values, float(other)))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return StepFunction(self.grid, -self.values)

    def __abs__(self):
        return StepFunction(self.grid, np.abs(self.values))

    def __pow__(self, e):
        return StepFunction(self.grid, self.values**e)

    def __repr__(self):
        return f"StepFunction(n={self.grid.n}, K={self.grid.K})"

    def to_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "values": self.values.reshape(-1).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StepFunction":
        grid = Grid.from_dict(d["grid"])
        return cls(grid, np.asarray(d["values"], dtype=float))


def _check_same(f: StepFunction, g: StepFunction):
    if f.grid != g.grid:
        raise GridError("step functions live on different grids")


@dataclass(frozen=True)
class HaarCoeffs:
    """Mean over the base cube plus cancellative coefficients per level."""

    grid: Grid
    mean: float
    levels: tuple[np.ndarray, ...]

    def __getitem__(self, key: tuple[Cube, Sequence[int]]) -> float:
        Q, eps = key
        s = sig_to_int(eps)
        if s == 2**self.grid.n - 1:
            raise KeyError("the all-ones signature is not a cancellative coefficient")
        if Q.level >= self.grid.K:
            return 0.0
        return float(self.levels[Q.level][Q.morton, s])

    def items(self):
        """``((cube, signature), value)`` in enumeration order."""
        n = self.grid.n
        for Q in self.grid.cubes():
            if Q.level == self.grid.K:
                break
            for s in range(self.grid.n_signatures):
                yield (Q, int_to_sig(s, n)), float(self.levels[Q.level][Q.morton, s])

    def energy(self) -> float:
        """Squared L^2 norm of the cancellative part (the mean is excluded)."""
        return float(sum((c**2).sum() for c in self.levels))

    def to_dict(self) -> dict:
        n = self.grid.n
        flat = []
        for k, arr in enumerate(self.levels):
            flat.extend(from_morton(arr.T, n, k).reshape(arr.shape[1], -1).T.reshape(-1).tolist())
        return {"grid": self.grid.to_dict(), "mean": self.mean, "coefficients": flat}

    @classmethod
    def from_dict(cls, d: dict) -> "HaarCoeffs":
        grid = Grid.from_dict(d["grid"])
        flat = np.asarray(d["coefficients"], dtype=float)
        S, n = grid.n_signatures, grid.n
        levels, pos = [], 0
        for k in range(grid.K):
            m = 2 ** (n * k)
            block = flat[pos : pos + m * S].reshape(m, S)
            pos += m * S
            lex = block.T.reshape((S,) + (2**k,) * n)
            levels.append(to_morton(lex, n, k).T.copy())
        return cls(grid, float(d["mean"]), tuple(levels))


def analyze(f: StepFunction) -> HaarCoeffs:
    """Haar coefficients ``<f, h_Q^eps>`` by one bottom-up pass."""
    mean, coeffs = analyze_array(f.tree, f.grid)
    return HaarCoeffs(f.grid, float(mean), tuple(coeffs))


def synthesize(c: HaarCoeffs) -> StepFunction:
    return StepFunction.from_tree(c.grid, synthesize_array(c.mean, c.levels, c.grid))


def _child_digit(Q: Cube, P: Cube) -> int:
    """Morton digit of the child of ``Q`` that contains ``P``."""
    shift = P.level - Q.level - 1
    return morton_index([(i >> shift) & 1 for i in P.index], 1, Q.grid.n)


def haar_value_on_subcube(Q: Cube, eps: Sequence[int], P: Cube) -> float:
    """The constant value of ``h_Q^eps`` on a strict subcube ``P``."""
    if not (Q.contains(P) and P.level > Q.level):
        raise GridError("P must be a strict dyadic subcube of Q")
    s = sig_to_int(eps)
    return float(child_signs(Q.grid.n)[s, _child_digit(Q, P)] / np.sqrt(Q.volume))


def haar_eval(Q: Cube, eps: Sequence[int], cell: Cube) -> float:
    if cell.level != Q.grid.K:
        raise GridError("haar_eval expects a finest-level cell")
    if not Q.contains(cell):
        return 0.0
    if Q.level == Q.grid.K:
        if is_cancellative(eps):
            raise GridError("cancellative Haar functions of finest cells are not representable")
        return float(1 / np.sqrt(Q.volume))
    return haar_value_on_subcube(Q, eps, cell)


def haar_function(Q: Cube, eps: Sequence[int]) -> StepFunction:
    g = Q.grid
    vals = np.array([haar_eval(Q, eps, c) for c in g.cells()])
    return StepFunction(g, vals)


def average(f: StepFunction, Q: Cube) -> float:
    if Q.grid != f.grid:
        raise GridError("cube and function live on different grids")
    g = f.grid
    scale = 2 ** (g.K - Q.level)
    block = f.values[tuple(slice(i * scale, (i + 1) * scale) for i in Q.index)]
    return float(block.mean())


def avg_difference_check(f: StepFunction, Q: Cube, i: int) -> tuple[float, float]:
    """Both sides of ``<f>_Q - <f>_{Q^(i)} = sum_k sum_eps fhat(Q^(k),eps) h_{Q^(k)}^eps(Q)``."""
    top = Q.ancestor(i)
    lhs = average(f, Q) - average(f, top)
    coeffs = analyze(f)
    n = f.grid.n
    rhs = 0.0
    for k in range(1, i + 1):
        A = Q.ancestor(k)
        for s in range(f.grid.n_signatures):
            eps = int_to_sig(s, n)
            rhs += coeffs[A, eps] * haar_value_on_subcube(A, eps, Q)
    return lhs, rhs


def random_step(grid: Grid, rng: np.random.Generator, scale: float = 1.0) -> StepFunction:
    return StepFunction(grid, scale * rng.standard_normal(grid.cells_shape))


def cube_from_morton(grid: Grid, level: int, m: int) -> Cube:
    return Cube(grid, level, lex_index(int(m), level, grid.n))
