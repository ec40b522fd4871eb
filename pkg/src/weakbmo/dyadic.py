"""Dyadic geometry on the unit cube and functions constant on dyadic cubes.

Every cube is rescaled to Q = [0, 1]^n.  A dyadic-simple function of depth m
is stored as a flat vector of 2^(n m) leaf values, lexicographic with the
first axis varying fastest.  Averages over dyadic cubes are formed by halving
every axis once per level, i.e. by balanced pairwise summation, so that the
result does not depend on traversal order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    CapExceededError,
    DepthMismatchError,
    DimensionMismatchError,
    FormatError,
    PreconditionError,
)

# desk-scale caps on the depth of a dyadic-simple function, per dimension
DEPTH_CAPS = {1: 21, 2: 10, 3: 6}


def check_caps(n: int, depth: int) -> None:
    if n not in DEPTH_CAPS:
        raise CapExceededError(f"dimension n={n} not supported (allowed: 1, 2, 3)")
    if depth < 0 or depth > DEPTH_CAPS[n]:
        raise CapExceededError(
            f"depth {depth} outside the desk-scale range [0, {DEPTH_CAPS[n]}] for n={n}"
        )


@dataclass(frozen=True)
class DyadicCube:
    n: int
    depth: int
    index: tuple

    def __post_init__(self):
        index = tuple(int(i) for i in self.index)
        object.__setattr__(self, "index", index)
        if self.n < 1 or len(index) != self.n:
            raise DimensionMismatchError(f"index {index} does not have {self.n} components")
        if self.depth < 0:
            raise ValueError("depth must be non-negative")
        side = 1 << self.depth
        if any(i < 0 or i >= side for i in index):
            raise ValueError(f"index {index} outside [0, {side}) at depth {self.depth}")

    @classmethod
    def unit(cls, n: int = 1) -> "DyadicCube":
        return cls(n, 0, (0,) * n)

    @property
    def measure(self) -> float:
        return math.ldexp(1.0, -self.n * self.depth)

    @property
    def side(self) -> float:
        return math.ldexp(1.0, -self.depth)

    @property
    def lower(self) -> tuple:
        return tuple(i * self.side for i in self.index)

    def children(self) -> list["DyadicCube"]:
        """The 2^n cubes of the next depth, first axis fastest."""
        out = []
        for code in range(1 << self.n):
            idx = tuple(2 * i + ((code >> a) & 1) for a, i in enumerate(self.index))
            out.append(DyadicCube(self.n, self.depth + 1, idx))
        return out

    def parent(self) -> "DyadicCube":
        if self.depth == 0:
            raise ValueError("the unit cube has no parent")
        return DyadicCube(self.n, self.depth - 1, tuple(i >> 1 for i in self.index))

    def contains(self, other: "DyadicCube") -> bool:
        if other.n != self.n or other.depth < self.depth:
            return False
        shift = other.depth - self.depth
        return all((j >> shift) == i for i, j in zip(self.index, other.index))

    def label(self) -> str:
        return ":".join(str(i) for i in self.index)


def iter_cubes(n: int, depth: int) -> Iterator[DyadicCube]:
    """All cubes of one depth in storage order (first axis fastest)."""
    side = 1 << depth
    for flat in range(side ** n):
        idx = []
        for _ in range(n):
            flat, r = divmod(flat, side)
            idx.append(r)
        yield DyadicCube(n, depth, tuple(idx))


def halve(x: np.ndarray, n: int) -> np.ndarray:
    """Average pairs of neighbours along the last ``n`` axes of ``x``."""
    for axis in range(x.ndim - n, x.ndim):
        sl_lo = [slice(None)] * x.ndim
        sl_hi = [slice(None)] * x.ndim
        sl_lo[axis] = slice(0, None, 2)
        sl_hi[axis] = slice(1, None, 2)
        x = 0.5 * (x[tuple(sl_lo)] + x[tuple(sl_hi)])
    return x


def reduce_to_depth(grid: np.ndarray, n: int, levels: int) -> np.ndarray:
    """Apply ``levels`` pairwise halvings on the trailing ``n`` axes."""
    for _ in range(levels):
        grid = halve(grid, n)
    return grid


def expand(coarse: np.ndarray, n: int, factor: int) -> np.ndarray:
    """Repeat each entry of an n-dimensional array ``factor`` times per axis."""
    out = coarse
    for axis in range(coarse.ndim - n, coarse.ndim):
        out = np.repeat(out, factor, axis=axis)
    return out


class DyadicSimpleFunction:
    """A function on [0,1]^n that is constant on every dyadic cube of ``depth``.

    Instances are immutable: the leaf array is copied and marked read-only.
    """

    __slots__ = ("n", "depth", "leaves", "__dict__")

    def __init__(self, n: int, depth: int, leaves):
        n = int(n)
        depth = int(depth)
        check_caps(n, depth)
        arr = np.array(leaves, dtype=float).reshape(-1)
        expected = 1 << (n * depth)
        if arr.size != expected:
            raise FormatError(
                f"expected {expected} leaf values for n={n}, depth={depth}, got {arr.size}"
            )
        if not np.all(np.isfinite(arr)):
            raise FormatError("leaf values must be finite")
        arr.setflags(write=False)
        self.n = n
        self.depth = depth
        self.leaves = arr

    # constructors -----------------------------------------------------------

    @classmethod
    def constant(cls, c: float, n: int = 1, depth: int = 0) -> "DyadicSimpleFunction":
        return cls(n, depth, np.full(1 << (n * depth), float(c)))

    @classmethod
    def from_grid(cls, grid: np.ndarray) -> "DyadicSimpleFunction":
        """Build from an array indexed ``grid[i0, i1, ...]``."""
        grid = np.asarray(grid, dtype=float)
        n = grid.ndim
        side = grid.shape[0]
        depth = side.bit_length() - 1
        if any(s != side for s in grid.shape) or (1 << depth) != side:
            raise FormatError("grid must be a cube with power-of-two side")
        return cls(n, depth, grid.reshape(-1, order="F"))

    # views --------------------------------------------------------------------

    @property
    def size(self) -> int:
        return self.leaves.size

    def grid(self) -> np.ndarray:
        """Leaves as an n-dimensional array ``g[i0, i1, ...]``."""
        side = 1 << self.depth
        return self.leaves.reshape((side,) * self.n, order="F")

    @cached_property
    def _pyramid(self) -> list:
        means = [self.grid()]
        squares = [self.grid() ** 2]
        for _ in range(self.depth):
            means.append(halve(means[-1], self.n))
            squares.append(halve(squares[-1], self.n))
        means.reverse()
        squares.reverse()
        return list(zip(means, squares))

    def level(self, k: int) -> tuple:
        """(means, second moments) over all dyadic cubes of depth ``k``."""
        if k < 0 or k > self.depth:
            raise DepthMismatchError(f"depth {k} exceeds function depth {self.depth}")
        return self._pyramid[k]

    def refine(self, depth: int) -> "DyadicSimpleFunction":
        """Same function represented at a larger depth."""
        if depth < self.depth:
            raise DepthMismatchError("refine() cannot lower the depth; use truncate()")
        if depth == self.depth:
            return self
        g = expand(self.grid(), self.n, 1 << (depth - self.depth))
        return DyadicSimpleFunction.from_grid(g)

    def values_on(self, cube: DyadicCube) -> np.ndarray:
        """Leaf values covered by ``cube`` (as an n-dimensional block)."""
        _check_cube(self, cube)
        s = 1 << (self.depth - cube.depth)
        sl = tuple(slice(i * s, (i + 1) * s) for i in cube.index)
        return self.grid()[sl]

    # arithmetic ---------------------------------------------------------------

    def _aligned(self, other):
        if isinstance(other, DyadicSimpleFunction):
            if other.n != self.n:
                raise DimensionMismatchError("dimension mismatch")
            d = max(self.depth, other.depth)
            return self.refine(d), other.refine(d)
        return None

    def __add__(self, other):
        pair = self._aligned(other)
        if pair is None:
            return DyadicSimpleFunction(self.n, self.depth, self.leaves + float(other))
        a, b = pair
        return DyadicSimpleFunction(a.n, a.depth, a.leaves + b.leaves)

    __radd__ = __add__

    def __sub__(self, other):
        pair = self._aligned(other)
        if pair is None:
            return DyadicSimpleFunction(self.n, self.depth, self.leaves - float(other))
        a, b = pair
        return DyadicSimpleFunction(a.n, a.depth, a.leaves - b.leaves)

    def __neg__(self):
        return DyadicSimpleFunction(self.n, self.depth, -self.leaves)

    def __mul__(self, c):
        return DyadicSimpleFunction(self.n, self.depth, self.leaves * float(c))

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, DyadicSimpleFunction):
            return NotImplemented
        return (
            self.n == other.n
            and self.depth == other.depth
            and np.array_equal(self.leaves, other.leaves)
        )

    def __hash__(self):
        return hash((self.n, self.depth, self.leaves.tobytes()))

    def __repr__(self):
        head = ", ".join(f"{v:g}" for v in self.leaves[:8])
        more = ", ..." if self.size > 8 else ""
        return f"DyadicSimpleFunction(n={self.n}, depth={self.depth}, leaves=[{head}{more}])"


def _check_cube(phi: DyadicSimpleFunction, cube: DyadicCube) -> None:
    if cube.n != phi.n:
        raise DimensionMismatchError(f"cube dimension {cube.n} != function dimension {phi.n}")
    if cube.depth > phi.depth:
        raise DepthMismatchError(
            f"cube depth {cube.depth} exceeds function depth {phi.depth}"
        )


def average(phi: DyadicSimpleFunction, cube: DyadicCube) -> float:
    """Mean of ``phi`` over a dyadic cube."""
    _check_cube(phi, cube)
    means, _ = phi.level(cube.depth)
    return float(means[cube.index])


def second_moment(phi: DyadicSimpleFunction, cube: DyadicCube) -> float:
    """Mean of ``phi**2`` over a dyadic cube."""
    _check_cube(phi, cube)
    _, sq = phi.level(cube.depth)
    return float(sq[cube.index])


def variance(phi: DyadicSimpleFunction, cube: DyadicCube) -> float:
    return max(0.0, second_moment(phi, cube) - average(phi, cube) ** 2)


def truncate(phi: DyadicSimpleFunction, m: int) -> DyadicSimpleFunction:
    """Dyadic truncation of order ``m``: replace phi by its depth-m averages."""
    if m < 0:
        raise PreconditionError("truncation order must be non-negative")
    k = min(m, phi.depth)
    means, _ = phi.level(k)
    return DyadicSimpleFunction.from_grid(means)


def clamp(phi: DyadicSimpleFunction, M: float) -> DyadicSimpleFunction:
    """Cut-off of phi at height M."""
    if M < 0:
        raise PreconditionError(f"cut-off height must be non-negative, got {M}")
    return DyadicSimpleFunction(phi.n, phi.depth, np.clip(phi.leaves, -M, M))


def haar(k: int, depth: int | None = None) -> DyadicSimpleFunction:
    """L-infinity normalised Haar function of the interval (2^-k, 2^-k+1).

    It is -1 on the left half of that interval, +1 on the right half and 0
    elsewhere.  ``depth`` defaults to the smallest admissible value k+1.
    """
    if k < 1:
        raise PreconditionError("Haar index must be >= 1")
    if depth is None:
        depth = k + 1
    if depth < k + 1:
        raise DepthMismatchError(f"haar({k}) needs depth >= {k + 1}, got {depth}")
    check_caps(1, depth)
    leaves = np.zeros(1 << depth)
    start = 1 << (depth - k)
    half = 1 << (depth - k - 1)
    leaves[start:start + half] = -1.0
    leaves[start + half:2 * start] = 1.0
    return DyadicSimpleFunction(1, depth, leaves)


def step_function(breaks: Sequence[float], values: Sequence[float], depth: int) -> DyadicSimpleFunction:
    """Sample a 1-D step function whose breakpoints lie on the 2^-depth grid."""
    side = 1 << depth
    leaves = np.empty(side)
    edges = np.asarray(breaks, dtype=float) * side
    if not np.allclose(edges, np.round(edges)):
        raise PreconditionError("breakpoints must be dyadic rationals of the given depth")
    edges = np.round(edges).astype(int)
    for a, b, v in zip(edges[:-1], edges[1:], values):
        leaves[a:b] = v
    return DyadicSimpleFunction(1, depth, leaves)


# DSF text format -------------------------------------------------------------


def format_dsf(phi: DyadicSimpleFunction) -> str:
    lines = [str(phi.n), str(phi.depth)]
    lines.extend(repr(float(v)) for v in phi.leaves)
    return "\n".join(lines) + "\n"


def parse_dsf(text: str) -> DyadicSimpleFunction:
    tokens = text.split()
    if len(tokens) < 2:
        raise FormatError("DSF file needs the dimension and depth on its first two lines")
    try:
        n = int(tokens[0])
        m = int(tokens[1])
    except ValueError as exc:
        raise FormatError(f"bad DSF header: {exc}") from None
    try:
        vals = [float(tok) for tok in tokens[2:]]
    except ValueError as exc:
        raise FormatError(f"bad DSF leaf value: {exc}") from None
    check_caps(n, m)
    expected = 1 << (n * m)
    if len(vals) != expected:
        raise FormatError(f"DSF declares n={n}, m={m}: expected {expected} leaves, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise FormatError("DSF leaf values must be finite")
    return DyadicSimpleFunction(n, m, vals)


def write_dsf(phi: DyadicSimpleFunction, path) -> Path:
    path = Path(path)
    path.write_text(format_dsf(phi))
    return path


def read_dsf(path) -> DyadicSimpleFunction:
    return parse_dsf(Path(path).read_text())
