"""Finite dyadic grids on a base cube.

A :class:`Grid` of dimension ``n`` and depth ``K`` holds the cubes of levels
``0..K`` below one base cube.  Cubes are keyed by ``(level, index)`` where
``index`` is a multi-index in ``{0..2^level - 1}^n``; no floating point geometry
enters a key, so nesting tests are exact.

Internally every per-level array is stored in *Morton* (Z-)order: the children
of cube ``q`` at level ``k`` occupy the contiguous block ``q*2^n .. q*2^n+2^n-1``
of level ``k+1``, and the ``d``-th generation descendants occupy a block of
length ``2^{nd}``.  Public APIs use lexicographic multi-indices; the helpers at
the bottom of this module convert between the two.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "GridError",
    "Grid",
    "Cube",
    "make_grid",
    "ancestor",
    "descendants",
    "MAX_CELLS",
]

#: largest number of finest cells a grid may have (memory budget)
MAX_CELLS = 1 << 22


class GridError(ValueError):
    """Invalid grid construction or navigation request."""


@dataclass(frozen=True)
class Grid:
    n: int
    K: int
    base_origin: tuple[float, ...] = ()
    base_side: float = 1.0
    shift: tuple[float, ...] = ()
    _cells_shape: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise GridError(f"dimension must be a positive integer, got {self.n!r}")
        if not isinstance(self.K, (int, np.integer)) or self.K < 0:
            raise GridError(f"depth must be a non-negative integer, got {self.K!r}")
        if self.n * self.K > MAX_CELLS.bit_length() - 1:
            raise GridError(
                f"grid with n={self.n}, K={self.K} has 2^{self.n * self.K} cells, "
                f"over the budget of {MAX_CELLS}"
            )
        if not self.base_side > 0:
            raise GridError("base side length must be positive")
        origin = tuple(float(x) for x in self.base_origin) or (0.0,) * self.n
        shift = tuple(float(x) for x in np.broadcast_to(self.shift or 0.0, (self.n,)))
        if len(origin) != self.n:
            raise GridError("base origin has the wrong length")
        h = self.base_side / 2**self.K
        for s in shift:
            m = s / h
            if abs(m - round(m)) > 1e-9:
                raise GridError(
                    f"shift {s} is not a multiple of the finest cell size {h}"
                )
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "base_origin", origin)
        object.__setattr__(self, "base_side", float(self.base_side))
        object.__setattr__(self, "shift", tuple(round(s / h) * h for s in shift))
        object.__setattr__(self, "_cells_shape", (2**self.K,) * self.n)

    # -- sizes -------------------------------------------------------------
    @property
    def cells_shape(self) -> tuple[int, ...]:
        return self._cells_shape

    @property
    def n_cells(self) -> int:
        return 2 ** (self.n * self.K)

    @property
    def n_signatures(self) -> int:
        """Number of cancellative signatures, ``2^n - 1``."""
        return 2**self.n - 1

    def n_cubes(self, level: int | None = None) -> int:
        if level is None:
            return sum(2 ** (self.n * k) for k in range(self.K + 1))
        return 2 ** (self.n * level)

    def side(self, level: int) -> float:
        return self.base_side / 2**level

    def volume(self, level: int) -> float:
        return self.side(level) ** self.n

    @property
    def cell_volume(self) -> float:
        return self.volume(self.K)

    @property
    def lattice(self) -> float:
        """Finest cell side; every cube boundary lies on this lattice."""
        return self.side(self.K)

    # -- cubes -------------------------------------------------------------
    @property
    def base(self) -> "Cube":
        return Cube(self, 0, (0,) * self.n)

    def cube(self, level: int, index: Sequence[int]) -> "Cube":
        return Cube(self, level, tuple(int(i) for i in index))

    def cubes(self, level: int | None = None) -> Iterator["Cube"]:
        """Cubes in enumeration order: level-major, lexicographic index."""
        levels = range(self.K + 1) if level is None else [level]
        for k in levels:
            for idx in itertools.product(range(2**k), repeat=self.n):
                yield Cube(self, k, idx)

    def cells(self) -> Iterator["Cube"]:
        return self.cubes(self.K)

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "K": self.K,
            "base_origin": list(self.base_origin),
            "base_side": self.base_side,
            "shift": list(self.shift),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(
            n=d["n"],
            K=d["K"],
            base_origin=tuple(d.get("base_origin", ())),
            base_side=d.get("base_side", 1.0),
            shift=tuple(d.get("shift", ())),
        )

    def same_lattice(self, other: "Grid") -> bool:
        return (self.n, self.K, self.base_side) == (other.n, other.K, other.base_side)


@dataclass(frozen=True)
class Cube:
    grid: Grid = field(repr=False)
    level: int
    index: tuple[int, ...]

    def __post_init__(self):
        if not 0 <= self.level <= self.grid.K:
            raise GridError(f"level {self.level} outside 0..{self.grid.K}")
        if len(self.index) != self.grid.n or any(
            not 0 <= i < 2**self.level for i in self.index
        ):
            raise GridError(f"index {self.index} invalid at level {self.level}")

    @property
    def side(self) -> float:
        return self.grid.side(self.level)

    @property
    def volume(self) -> float:
        return self.grid.volume(self.level)

    @property
    def lower(self) -> tuple[float, ...]:
        g = self.grid
        return tuple(
            o + s + i * self.side for o, s, i in zip(g.base_origin, g.shift, self.index)
        )

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(x + self.side for x in self.lower)

    def lattice_bounds(self) -> list[tuple[Fraction, Fraction]]:
        """Exact per-axis bounds in units of the finest lattice spacing."""
        g = self.grid
        scale = 2 ** (g.K - self.level)
        out = []
        for s, i in zip(g.shift, self.index):
            off = Fraction(round(s / g.lattice))
            out.append((off + i * scale, off + (i + 1) * scale))
        return out

    @property
    def morton(self) -> int:
        return morton_index(self.index, self.level, self.grid.n)

    def contains(self, other: "Cube") -> bool:
        if other.level < self.level:
            return False
        shift = other.level - self.level
        return all(o >> shift == s for o, s in zip(other.index, self.index))

    def ancestor(self, k: int) -> "Cube":
        return ancestor(self, k)

    def descendants(self, k: int) -> list["Cube"]:
        return descendants(self, k)

    def children(self) -> list["Cube"]:
        return descendants(self, 1)

    def key(self) -> dict:
        return {"level": self.level, "index": list(self.index)}

    def __str__(self):
        if self.grid.n == 1:
            lo, hi = self.lower[0], self.upper[0]
            return f"[{lo:g},{hi:g})"
        return f"Q(level={self.level}, index={self.index})"


def make_grid(n: int, K: int, shift=0.0, base_origin=None, base_side: float = 1.0) -> Grid:
    """Build a grid; ``shift`` is a scalar or length-``n`` translation that must
    lie on the finest-cell lattice."""
    return Grid(
        n=n,
        K=K,
        base_origin=tuple(base_origin) if base_origin is not None else (),
        base_side=base_side,
        shift=tuple(np.broadcast_to(np.asarray(shift, dtype=float), (n,))),
    )


def ancestor(Q: Cube, k: int) -> Cube:
    """The ``k``-th generation ancestor ``Q^{(k)}``."""
    if k < 0:
        raise GridError("generation must be non-negative")
    if k > Q.level:
        raise GridError(
            f"cube at level {Q.level} has no ancestor {k} generations up inside the base cube"
        )
    return Cube(Q.grid, Q.level - k, tuple(i >> k for i in Q.index))


def descendants(Q: Cube, k: int) -> list[Cube]:
    """The ``2^{kn}`` cubes of ``Q_{(k)}``, lexicographic order."""
    if k < 0:
        raise GridError("generation must be non-negative")
    if Q.level + k > Q.grid.K:
        raise GridError(f"descendants {k} generations below level {Q.level} exceed depth {Q.grid.K}")
    base = [i << k for i in Q.index]
    return [
        Cube(Q.grid, Q.level + k, tuple(b + o for b, o in zip(base, off)))
        for off in itertools.product(range(2**k), repeat=Q.grid.n)
    ]


# -- Morton layout helpers -----------------------------------------------------

def morton_index(index: Sequence[int], level: int, n: int) -> int:
    m = 0
    for b in range(level - 1, -1, -1):
        for i in range(n):
            m = (m << 1) | ((index[i] >> b) & 1)
    return m


def lex_index(morton: int, level: int, n: int) -> tuple[int, ...]:
    idx = [0] * n
    for b in range(level - 1, -1, -1):
        for i in range(n):
            bit = (morton >> (b * n + (n - 1 - i))) & 1
            idx[i] |= bit << b
    return tuple(idx)


@lru_cache(maxsize=None)
def morton_perm(n: int, level: int) -> np.ndarray:
    """``perm`` with ``flat_morton = nd_array.reshape(-1)[perm]``."""
    size = 2**level
    if n == 1 or level == 0:
        return np.arange(size**n)
    grids = np.indices((size,) * n).reshape(n, -1)
    m = np.zeros(size**n, dtype=np.int64)
    for b in range(level - 1, -1, -1):
        for i in range(n):
            m = (m << 1) | ((grids[i] >> b) & 1)
    perm = np.empty_like(m)
    perm[m] = np.arange(size**n)
    perm.setflags(write=False)
    return perm


@lru_cache(maxsize=None)
def morton_inverse(n: int, level: int) -> np.ndarray:
    perm = morton_perm(n, level)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    inv.setflags(write=False)
    return inv


def to_morton(values: np.ndarray, n: int, level: int) -> np.ndarray:
    """(..., 2^level x n) lexicographic -> (..., 2^{n level}) Morton."""
    lead = values.shape[: values.ndim - n]
    flat = values.reshape(lead + (-1,))
    return flat[..., morton_perm(n, level)]


def from_morton(flat: np.ndarray, n: int, level: int) -> np.ndarray:
    lead = flat.shape[:-1]
    return flat[..., morton_inverse(n, level)].reshape(lead + (2**level,) * n)


def argmax_lex(level_values: np.ndarray, n: int, level: int) -> tuple[float, tuple[int, ...]]:
    """Max of a Morton-ordered level array; ties go to the lexicographically first cube."""
    lex = from_morton(level_values, n, level).reshape(-1)
    pos = int(np.argmax(lex))
    return float(lex[pos]), tuple(int(i) for i in np.unravel_index(pos, (2**level,) * n))


def sup_over_levels(per_level: Sequence[np.ndarray], n: int):
    """Supremum over all cubes of per-level Morton arrays.

    Returns ``(value, (level, index), level_maxima)``; ties resolve to the first
    cube in enumeration order.
    """
    best, witness, maxima = -np.inf, None, []
    for k, vals in enumerate(per_level):
        v, idx = argmax_lex(np.asarray(vals), n, k)
        maxima.append(v)
        if v > best:
            best, witness = v, (k, idx)
    return best, witness, maxima
