"""Lattice geometry, jump kernels, and height fields on finite site sets.

Sites are tuples of integers with a fixed dimension per experiment.  Jump
kernels are translation invariant: the weight between sites i and j is
looked up under the offset j - i, so a kernel is a map from nonzero offsets
to probabilities together with its declared range.  Every site ordering in
this package is lexicographic, which keeps vector layouts, CSV columns and
JSON documents reproducible across runs.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np
import scipy.sparse

from .errors import (
    AsymmetricKernel,
    DomainMismatch,
    NonStochastic,
    RangeViolation,
    SelfLoop,
)

Site = tuple
Offset = tuple

builtin_range = range  # several signatures take a `range` parameter

# Weight sums within this slack of 1 are silently renormalized; anything
# worse is rejected as non-stochastic.
_STOCHASTIC_SLACK = 1e-9


def shift(site: Site, offset: Offset) -> Site:
    """Translate a site by an integer offset."""
    return tuple(a + b for a, b in zip(site, offset))


def sup_dist(a: Site, b: Site) -> int:
    """Sup-norm distance between two sites."""
    return max(abs(x - y) for x, y in zip(a, b))


@dataclass(frozen=True)
class Kernel:
    """Finite-range symmetric stochastic jump weights.

    ``offsets`` maps each nonzero integer offset to its weight; the weight
    between sites i and j is ``offsets[j - i]``.  Instances produced by
    :func:`validate_kernel` satisfy: exact symmetry ``offsets[v] ==
    offsets[-v]`` as stored, weights summing to one within 1e-12, no zero
    offset, and every offset of sup-norm strictly below ``range``.
    Constructing the dataclass directly performs no checks, which the test
    suite exploits for negative controls.
    """

    offsets: Mapping[Offset, float]
    range: int

    @property
    def dim(self) -> int:
        return len(next(iter(self.offsets)))

    def neighbors(self, site: Site) -> Iterator[tuple[Site, float]]:
        """Yield (neighbor site, weight) pairs in stored offset order."""
        for v, w in self.offsets.items():
            yield shift(site, v), w

    def weight(self, i: Site, j: Site) -> float:
        """Jump weight between two sites (0.0 when not neighbors)."""
        return self.offsets.get(tuple(b - a for a, b in zip(i, j)), 0.0)


def validate_kernel(raw_weights: Mapping[Sequence[int], float], range: int) -> Kernel:
    """Check raw offset weights and return a normalized :class:`Kernel`.

    Parameters
    ----------
    raw_weights : mapping
        Offset (any integer sequence) to weight.  Weights must be positive,
        symmetric under offset negation, and sum to one.  Sums within 1e-9
        of one are renormalized; larger deviations are rejected.
    range : int
        Declared interaction range; every offset must have sup-norm
        strictly below it.

    Raises
    ------
    SelfLoop, AsymmetricKernel, NonStochastic, RangeViolation
    """
    if not raw_weights:
        raise NonStochastic("kernel weight map is empty")
    if range < 1:
        raise RangeViolation(f"kernel range must be >= 1, got {range}")
    items = {tuple(int(c) for c in v): float(w) for v, w in raw_weights.items()}
    dims = {len(v) for v in items}
    if len(dims) != 1:
        raise ValueError(f"offsets mix dimensions: {sorted(dims)}")
    dim = dims.pop()
    if (0,) * dim in items:
        raise SelfLoop("kernel assigns weight to the zero offset")
    for v, w in items.items():
        if not 0.0 < w <= 1.0:
            raise NonStochastic(f"weight {w} for offset {v} outside (0, 1]")
        if max(abs(c) for c in v) >= range:
            raise RangeViolation(f"offset {v} reaches sup-norm {max(abs(c) for c in v)} >= range {range}")
        neg = tuple(-c for c in v)
        if items.get(neg) != w:
            raise AsymmetricKernel(f"weight for {v} is {w} but for {neg} is {items.get(neg)}")
    total = sum(items.values())
    if abs(total - 1.0) > _STOCHASTIC_SLACK:
        raise NonStochastic(f"weights sum to {total!r}, off by more than {_STOCHASTIC_SLACK}")
    if total != 1.0:
        items = {v: w / total for v, w in items.items()}
    return Kernel({v: items[v] for v in sorted(items)}, range)


@dataclass(frozen=True)
class ModelParams:
    """Mixing weight and noise variance of the single-site update law.

    ``alpha`` weighs the kernel average of the neighboring heights and
    ``1 - alpha`` the local data value.  ``sigma2`` is the variance of the
    Gaussian update noise.  Stationary laws produced by this package have
    density proportional to exp(-H / (2 sigma2)), so the inverse
    temperature is ``beta = 1 / (2 sigma2)`` and the default
    ``sigma2 = 1/2`` corresponds to density exp(-H).
    """

    alpha: float
    sigma2: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.sigma2 <= 0.0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def h(self) -> float:
        """Weight 1 - alpha of the data term."""
        return 1.0 - self.alpha

    @property
    def beta(self) -> float:
        """Inverse temperature 1 / (2 sigma2)."""
        return 1.0 / (2.0 * self.sigma2)

    @classmethod
    def with_beta(cls, alpha: float, beta: float) -> "ModelParams":
        return cls(alpha, 1.0 / (2.0 * beta))


@dataclass(frozen=True)
class Box:
    """Axis-aligned inclusive box of lattice sites plus a boundary shell width."""

    lower: Site
    upper: Site
    shell_width: int = 1

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(int(c) for c in self.lower))
        object.__setattr__(self, "upper", tuple(int(c) for c in self.upper))
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper corners differ in dimension")
        if any(l > u for l, u in zip(self.lower, self.upper)):
            raise ValueError(f"empty box: lower {self.lower} above upper {self.upper}")
        if self.shell_width < 1:
            raise ValueError(f"shell_width must be >= 1, got {self.shell_width}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def size(self) -> int:
        return math.prod(u - l + 1 for l, u in zip(self.lower, self.upper))

    def __contains__(self, site: Site) -> bool:
        return all(l <= c <= u for c, l, u in zip(site, self.lower, self.upper))

    def sites(self) -> list[Site]:
        """All sites of the box in lexicographic order."""
        axes = [builtin_range(l, u + 1) for l, u in zip(self.lower, self.upper)]
        return list(itertools.product(*axes))

    def center(self) -> Site:
        return tuple((l + u) // 2 for l, u in zip(self.lower, self.upper))

    def shell(self, range: int | None = None) -> list[Site]:
        return boundary_shell(self, self.shell_width if range is None else range)

    @classmethod
    def centered(cls, center: Sequence[int], half_width: int, shell_width: int = 1) -> "Box":
        c = tuple(int(x) for x in center)
        return cls(
            tuple(x - half_width for x in c),
            tuple(x + half_width for x in c),
            shell_width,
        )


def boundary_shell(box: Box, range: int) -> list[Site]:
    """Sites outside the box within sup-distance ``range`` of it, in lex order."""
    if range < 1:
        raise ValueError(f"shell range must be >= 1, got {range}")
    axes = [builtin_range(l - range, u + range + 1) for l, u in zip(box.lower, box.upper)]
    return [s for s in itertools.product(*axes) if s not in box]


class HeightField:
    """Real heights on an explicit finite set of sites.

    Lookups outside the domain raise :class:`DomainMismatch` unless a
    default is supplied through :meth:`get`.  Instances never mutate after
    construction and are safe to share.
    """

    __slots__ = ("_values", "_sites")

    def __init__(self, values: Mapping[Sequence[int], float]):
        vals = {}
        for s, v in values.items():
            vals[tuple(int(c) for c in s)] = float(v)
        self._sites = tuple(sorted(vals))
        self._values = {s: vals[s] for s in self._sites}

    @classmethod
    def constant(cls, sites: Iterable[Sequence[int]], value: float) -> "HeightField":
        return cls({s: value for s in sites})

    @classmethod
    def zeros(cls, sites: Iterable[Sequence[int]]) -> "HeightField":
        return cls.constant(sites, 0.0)

    @classmethod
    def from_function(cls, sites: Iterable[Sequence[int]], fn: Callable[[Site], float]) -> "HeightField":
        return cls({tuple(s): fn(tuple(s)) for s in sites})

    @classmethod
    def from_vector(cls, sites: Sequence[Sequence[int]], vector: Sequence[float]) -> "HeightField":
        if len(sites) != len(vector):
            raise DomainMismatch(f"{len(sites)} sites but {len(vector)} values")
        return cls({tuple(s): float(v) for s, v in zip(sites, vector)})

    @property
    def sites(self) -> tuple[Site, ...]:
        """Domain in lexicographic order."""
        return self._sites

    def value(self, site: Site) -> float:
        try:
            return self._values[tuple(site)]
        except KeyError:
            raise DomainMismatch(f"no height stored at site {tuple(site)}") from None

    def get(self, site: Site, default: float | None = None) -> float | None:
        return self._values.get(tuple(site), default)

    def items(self) -> Iterator[tuple[Site, float]]:
        return iter(self._values.items())

    def values(self) -> tuple[float, ...]:
        return tuple(self._values.values())

    def vector(self, order: Sequence[Site] | None = None) -> np.ndarray:
        """Heights as a float vector, by default in lexicographic site order."""
        sites = self._sites if order is None else order
        return np.array([self.value(s) for s in sites], dtype=float)

    def __contains__(self, site) -> bool:
        return tuple(site) in self._values

    def __len__(self) -> int:
        return len(self._values)

    def __eq__(self, other) -> bool:
        return isinstance(other, HeightField) and self._values == other._values

    def __repr__(self) -> str:
        return f"HeightField({len(self)} sites)"


def weighted_norm(field: HeightField, alpha: float, range: int) -> float:
    """Growth-weighted absolute sum ``sum_j |x(j)| alpha^(|j|/range)``.

    ``|j|`` is the sup-norm of the site coordinates and the exponent is not
    floored.  Finite for every finite-domain field; absolutely homogeneous
    in the field values.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    total = 0.0
    for site, v in field.items():
        exponent = (max(abs(c) for c in site) if site else 0) / range
        total += abs(v) * alpha ** exponent
    return total


class BoxAdjacency:
    """Kernel neighborhood structure of a box, indexed in lexicographic order.

    ``in_pairs[i]`` lists ``(index, weight)`` for the neighbors of site i
    that fall inside the box; ``out_pairs[i]`` lists ``(site, weight)`` for
    those that fall outside.  Weights are raw kernel weights without the
    alpha factor.
    """

    def __init__(self, box: Box, kernel: Kernel):
        if box.dim != kernel.dim:
            raise ValueError(f"box dimension {box.dim} != kernel dimension {kernel.dim}")
        self.box = box
        self.kernel = kernel
        self.sites: tuple[Site, ...] = tuple(box.sites())
        self.index: dict[Site, int] = {s: i for i, s in enumerate(self.sites)}
        in_pairs: list[list[tuple[int, float]]] = []
        out_pairs: list[list[tuple[Site, float]]] = []
        for s in self.sites:
            ins: list[tuple[int, float]] = []
            outs: list[tuple[Site, float]] = []
            for t, w in kernel.neighbors(s):
                j = self.index.get(t)
                if j is None:
                    outs.append((t, w))
                else:
                    ins.append((j, w))
            in_pairs.append(ins)
            out_pairs.append(outs)
        self.in_pairs = in_pairs
        self.out_pairs = out_pairs

    @property
    def n(self) -> int:
        return len(self.sites)

    def kernel_matrix(self, sparse: bool = False):
        """Kernel weights restricted to the box as an n x n matrix."""
        if sparse:
            rows, cols, vals = [], [], []
            for i, pairs in enumerate(self.in_pairs):
                for j, w in pairs:
                    rows.append(i)
                    cols.append(j)
                    vals.append(w)
            return scipy.sparse.csr_array((vals, (rows, cols)), shape=(self.n, self.n))
        mat = np.zeros((self.n, self.n))
        for i, pairs in enumerate(self.in_pairs):
            for j, w in pairs:
                mat[i, j] = w
        return mat

    def boundary_vector(self, y: HeightField) -> np.ndarray:
        """Per-site kernel mass over the boundary, ``sum_{j outside} p(i, j) y(j)``."""
        vec = np.zeros(self.n)
        for i, pairs in enumerate(self.out_pairs):
            acc = 0.0
            for t, w in pairs:
                acc += w * y.value(t)
            vec[i] = acc
        return vec


# ---------------------------------------------------------------------------
# JSON interchange

def kernel_to_json(kernel: Kernel) -> dict:
    """Kernel as a JSON-ready document; offset keys are comma-joined integers."""
    return {
        "dim": kernel.dim,
        "range": kernel.range,
        "offsets": {",".join(str(c) for c in v): w for v, w in kernel.offsets.items()},
    }


def kernel_from_json(doc: Mapping) -> Kernel:
    """Parse and validate a kernel document produced by :func:`kernel_to_json`."""
    raw = {}
    for key, w in doc["offsets"].items():
        offset = tuple(int(part) for part in str(key).split(","))
        if "dim" in doc and len(offset) != int(doc["dim"]):
            raise ValueError(f"offset {key} does not match dim {doc['dim']}")
        raw[offset] = float(w)
    return validate_kernel(raw, int(doc["range"]))


def field_to_json(field: HeightField) -> dict:
    sites = [list(s) for s in field.sites]
    return {"sites": sites, "values": [field.value(tuple(s)) for s in sites]}


def field_from_json(doc: Mapping) -> HeightField:
    return HeightField({tuple(s): v for s, v in zip(doc["sites"], doc["values"])})
