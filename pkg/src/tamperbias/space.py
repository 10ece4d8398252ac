"""Product distributions over n blocks, their samplers, and the Hamming metric.

Block values are arbitrary hashable Python objects. Block positions are
1-based in the public API (``sample_block(i)`` with ``1 <= i <= n``) and
0-based in arrays.
"""

from __future__ import annotations

import itertools
import math
import zlib
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Sequence

import numpy as np

DEFAULT_CAP = 2**24
WEIGHT_TOL = 1e-12


class NotEnumerableError(ValueError):
    """A block (or the whole space) has no explicit finite support."""


class SupportCapExceeded(ValueError):
    pass


def derive_rng(seed: int, *keys: int | str) -> np.random.Generator:
    """Counter-style stream for ``(seed, purpose, trial, ...)``.

    String keys are folded to 32-bit integers with crc32 so the mapping is
    stable across interpreter runs (``hash()`` is salted).
    """
    ints = tuple(zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=ints))


def _bit_length(v: Any) -> int:
    if isinstance(v, (bool, np.bool_)):
        return 1
    if isinstance(v, (int, np.integer)):
        return max(int(v).bit_length(), 1)
    return 8 * len(repr(v).encode())


@dataclass(frozen=True)
class BlockDomain:
    """One coordinate of a product distribution.

    Either ``values``/``weights`` (explicit finite support) or ``sampler``
    (opaque, non-enumerable) is set.
    """

    values: tuple | None = None
    weights: tuple[float, ...] | None = None
    sampler: Callable[[np.random.Generator], Any] | None = None
    bit_length: int = 0
    _cum: np.ndarray | None = field(default=None, repr=False, compare=False)
    _index: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.values is None:
            if self.sampler is None:
                raise ValueError("block needs an explicit support or a sampler")
            return
        values = tuple(self.values)
        if not values:
            raise ValueError("empty support")
        if self.weights is None:
            weights = (1.0 / len(values),) * len(values)
        else:
            weights = tuple(float(w) for w in self.weights)
        if len(weights) != len(values):
            raise ValueError("values and weights differ in length")
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights must be nonnegative and sum to 1, got {weights}")
        index = {v: j for j, v in enumerate(values)}
        if len(index) != len(values):
            raise ValueError("duplicate support values")
        cum = np.cumsum(weights)
        cum[-1] = 1.0
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_index", index)
        if not self.bit_length:
            object.__setattr__(self, "bit_length", max(_bit_length(v) for v in values))

    @property
    def enumerable(self) -> bool:
        return self.values is not None

    @property
    def size(self) -> int:
        if self.values is None:
            raise NotEnumerableError("sampler-only block has no finite support")
        return len(self.values)

    @property
    def uniform(self) -> bool:
        return self.values is not None and len(set(self.weights)) == 1

    def index_of(self, v: Any) -> int:
        if self._index is None:
            raise NotEnumerableError("sampler-only block")
        try:
            return self._index[v]
        except KeyError:
            raise ValueError(f"{v!r} is not in the block support") from None

    def contains(self, v: Any) -> bool:
        return self._index is None or v in self._index

    def sample_indices(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.values is None:
            raise NotEnumerableError("sampler-only block")
        if self.uniform:
            return rng.integers(0, len(self.values), size=size)
        return np.searchsorted(self._cum, rng.random(size), side="right")

    def sample(self, rng: np.random.Generator) -> Any:
        if self.values is None:
            return self.sampler(rng)
        return self.values[int(self.sample_indices(rng, 1)[0])]

    def sample_many(self, rng: np.random.Generator, size: int) -> list:
        if self.values is None:
            return [self.sampler(rng) for _ in range(size)]
        return [self.values[j] for j in self.sample_indices(rng, size)]


@dataclass(frozen=True)
class ProductSpace:
    """Ordered product ``u_1 x ... x u_n`` of independent blocks."""

    blocks: tuple[BlockDomain, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def n(self) -> int:
        return len(self.blocks)

    @property
    def enumerable(self) -> bool:
        return all(b.enumerable for b in self.blocks)

    @property
    def iid(self) -> bool:
        """All blocks share one explicit support and weight vector."""
        if not self.enumerable or not self.blocks:
            return False
        b0 = self.blocks[0]
        return all(b.values == b0.values and b.weights == b0.weights for b in self.blocks)

    @property
    def numeric(self) -> bool:
        return self.enumerable and all(
            isinstance(v, (int, np.integer)) and not isinstance(v, bool)
            for b in self.blocks
            for v in b.values
        )

    @property
    def bit_length(self) -> int:
        return max((b.bit_length for b in self.blocks), default=0)

    def support_size(self) -> int:
        if not self.enumerable:
            raise NotEnumerableError("space has a sampler-only block")
        return math.prod(b.size for b in self.blocks)

    def _check_index(self, i: int) -> BlockDomain:
        if not 1 <= i <= self.n:
            raise IndexError(f"block index {i} outside [1, {self.n}]")
        return self.blocks[i - 1]

    def contains(self, x: Sequence) -> bool:
        return len(x) == self.n and all(b.contains(v) for b, v in zip(self.blocks, x))

    def sample_block(self, i: int, rng: np.random.Generator) -> Any:
        return self._check_index(i).sample(rng)

    def sample_full(self, rng: np.random.Generator) -> tuple:
        return tuple(b.sample(rng) for b in self.blocks)

    def sample_batch(self, rng: np.random.Generator, size: int, start: int = 0) -> np.ndarray:
        """``size`` independent draws of blocks ``start+1..n`` as a 2-D array.

        Integer-valued spaces give an int64 array, others an object array.
        """
        blocks = self.blocks[start:]
        dtype = np.int64 if self.numeric else object
        out = np.empty((size, len(blocks)), dtype=dtype)
        for col, b in enumerate(blocks):
            if b.enumerable:
                idx = b.sample_indices(rng, size)
                vals = np.empty(len(b.values), dtype=dtype)
                vals[:] = list(b.values) if dtype is object else b.values
                out[:, col] = vals[idx]
            else:
                out[:, col] = b.sample_many(rng, size)
        return out

    def enumerate_support(self, cap: int = DEFAULT_CAP) -> Iterator[tuple[tuple, float]]:
        """Every tuple in the support once, with its product probability."""
        if not self.enumerable:
            raise NotEnumerableError("space has a sampler-only block")
        if self.support_size() > cap:
            raise SupportCapExceeded(f"support size {self.support_size()} exceeds cap {cap}")
        supports = [list(zip(b.values, b.weights)) for b in self.blocks]
        for combo in itertools.product(*supports):
            yield tuple(v for v, _ in combo), math.prod(w for _, w in combo)

    def support_array(self, cap: int = DEFAULT_CAP) -> np.ndarray:
        """All support tuples in lexicographic index order, shape ``(|Supp|, n)``."""
        if self.support_size() > cap:
            raise SupportCapExceeded(f"support size {self.support_size()} exceeds cap {cap}")
        dtype = np.int64 if self.numeric else object
        grids = np.indices([b.size for b in self.blocks]).reshape(self.n, -1).T
        out = np.empty(grids.shape, dtype=dtype)
        for col, b in enumerate(self.blocks):
            vals = np.empty(b.size, dtype=dtype)
            vals[:] = list(b.values) if dtype is object else b.values
            out[:, col] = vals[grids[:, col]]
        return out


def hamming(u: Sequence, v: Sequence) -> int:
    if len(u) != len(v):
        raise ValueError(f"length mismatch: {len(u)} vs {len(v)}")
    return sum(1 for a, b in zip(u, v) if a != b)


def uniform_bits(n: int) -> ProductSpace:
    return ProductSpace((BlockDomain(values=(0, 1)),) * n)


def uniform_ints(n: int, base: int) -> ProductSpace:
    if base < 1:
        raise ValueError("base must be >= 1")
    return ProductSpace((BlockDomain(values=tuple(range(base))),) * n)


def explicit(blocks: Sequence[Sequence[tuple[Any, float]]]) -> ProductSpace:
    """Build a space from per-block ``[(value, weight), ...]`` lists."""
    out = []
    for pairs in blocks:
        values, weights = zip(*pairs)
        out.append(BlockDomain(values=tuple(values), weights=tuple(weights)))
    return ProductSpace(tuple(out))


def sampler_space(n: int, sampler: Callable[[np.random.Generator], Any], bit_length: int) -> ProductSpace:
    """n copies of an opaque sampler block. Not usable with exact oracles."""
    return ProductSpace((BlockDomain(sampler=sampler, bit_length=bit_length),) * n)


def power(space: ProductSpace, m: int, cap: int = DEFAULT_CAP) -> ProductSpace:
    """``space^m`` with one block per copy; each block value is an n-tuple."""
    pairs = list(space.enumerate_support(cap))
    block = BlockDomain(values=tuple(v for v, _ in pairs), weights=tuple(w for _, w in pairs))
    return ProductSpace((block,) * m)
