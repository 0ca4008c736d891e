"""Forward heat-bath simulation driven by an explicit space-time epoch list.

Each site of a box rings at the epochs of its own rate-one Poisson process.
At an epoch the height at that site is replaced by the convex local mean of
its surroundings plus the Gaussian noise mark attached to the epoch; all
other heights are untouched.  Epoch times and marks are generated once,
deterministically from a seed, and can be replayed, serialized, and fed to
the backward reconstruction in :mod:`harness.dual`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DomainMismatch, SiteOutsideBox
from .lattice import Box, BoxAdjacency, HeightField, Kernel, ModelParams, Site, shift


@dataclass(frozen=True)
class Epoch:
    """One update event: a site, a time inside the window, and a noise mark."""

    site: Site
    time: float
    noise: float


class EpochList:
    """Time-ordered epochs over a window, stored as parallel arrays.

    Epochs are strictly sorted by time with ties (a measure-zero event for
    generated lists) broken by site order.  ``site_table`` holds the
    distinct sites; ``site_codes[e]`` indexes into it for epoch e.
    """

    __slots__ = ("window", "seed", "site_table", "site_codes", "times", "noises")

    def __init__(self, window, site_table, site_codes, times, noises, seed=None):
        s, t = float(window[0]), float(window[1])
        if not s < t:
            raise ValueError(f"window must satisfy s < t, got {(s, t)}")
        self.window = (s, t)
        self.seed = seed
        self.site_table: tuple[Site, ...] = tuple(tuple(x) for x in site_table)
        self.site_codes = np.asarray(site_codes, dtype=np.int64)
        self.times = np.asarray(times, dtype=float)
        self.noises = np.asarray(noises, dtype=float)
        if not (len(self.site_codes) == len(self.times) == len(self.noises)):
            raise ValueError("epoch arrays differ in length")

    @classmethod
    def from_epochs(cls, window, epochs: Iterable[Epoch], seed=None) -> "EpochList":
        records = sorted(epochs, key=lambda e: (e.time, e.site))
        table = sorted({e.site for e in records})
        index = {s: c for c, s in enumerate(table)}
        return cls(
            window,
            table,
            [index[e.site] for e in records],
            [e.time for e in records],
            [e.noise for e in records],
            seed,
        )

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, e: int) -> Epoch:
        return Epoch(self.site_table[self.site_codes[e]], float(self.times[e]), float(self.noises[e]))

    def __iter__(self) -> Iterator[Epoch]:
        for e in range(len(self)):
            yield self[e]

    def split(self, u: float) -> tuple["EpochList", "EpochList"]:
        """Split at an interior time u into windows (s, u] and (u, t)."""
        s, t = self.window
        if not s < u < t:
            raise ValueError(f"split time {u} outside window {self.window}")
        cut = int(np.searchsorted(self.times, u, side="right"))
        lower = EpochList((s, u), self.site_table, self.site_codes[:cut],
                          self.times[:cut], self.noises[:cut])
        upper = EpochList((u, t), self.site_table, self.site_codes[cut:],
                          self.times[cut:], self.noises[cut:])
        return lower, upper

    def with_noises(self, noises: Sequence[float]) -> "EpochList":
        """Copy of this list carrying different noise marks."""
        return EpochList(self.window, self.site_table, self.site_codes,
                         self.times, noises, self.seed)

    def to_json(self) -> dict:
        return {
            "window": list(self.window),
            "seed": self.seed,
            "epochs": [
                {"site": list(self.site_table[c]), "time": float(t), "noise": float(x)}
                for c, t, x in zip(self.site_codes, self.times, self.noises)
            ],
        }

    @classmethod
    def from_json(cls, doc) -> "EpochList":
        epochs = [Epoch(tuple(r["site"]), float(r["time"]), float(r["noise"]))
                  for r in doc["epochs"]]
        return cls.from_epochs(tuple(doc["window"]), epochs, doc.get("seed"))


def generate_epochs(box: Box, window, params: ModelParams, seed: int) -> EpochList:
    """Independent rate-one Poisson epochs per box site with Gaussian marks.

    Counts, times and noise marks are drawn per site in lexicographic
    order from a single seeded stream, then merged by time, so the result
    is fully determined by the seed.  Marks are N(0, sigma2).
    """
    s, t = float(window[0]), float(window[1])
    if not s < t:
        raise ValueError(f"window must satisfy s < t, got {(s, t)}")
    sites = tuple(box.sites())
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    counts = rng.poisson(t - s, size=len(sites))
    total = int(counts.sum())
    times = s + (t - s) * rng.random(total)
    noises = rng.normal(0.0, math.sqrt(params.sigma2), total)
    codes = np.repeat(np.arange(len(sites), dtype=np.int64), counts)
    order = np.lexsort((codes, times))
    return EpochList((s, t), sites, codes[order], times[order], noises[order], seed)


def _update_terms(site, in_domain, y, d, params, kernel):
    """Constant part and in-domain (site, alpha p) pairs of one site's update.

    Fixed evaluation order: boundary neighbors in kernel offset order, then
    the data term, then in-domain neighbors in kernel offset order, which
    keeps single steps and bulk simulation bit-identical.
    """
    a = params.alpha
    const = 0.0
    pairs = []
    for t, w in kernel.neighbors(site):
        if in_domain(t):
            pairs.append((t, a * w))
        else:
            const += a * w * y.value(t)
    const += params.h * d.value(site)
    return const, pairs


def heat_bath_step(
    state: HeightField,
    epoch: Epoch,
    y: HeightField,
    d: HeightField,
    params: ModelParams,
    kernel: Kernel,
) -> HeightField:
    """Apply one epoch: replace the height at its site by local mean plus mark.

    Heights at other sites are returned unchanged, bit for bit.
    """
    i = tuple(epoch.site)
    if i not in state:
        raise DomainMismatch(f"epoch site {i} is not in the state domain")
    const, pairs = _update_terms(i, state.__contains__, y, d, params, kernel)
    acc = const
    for t, w in pairs:
        acc += w * state.value(t)
    new = dict(state.items())
    new[i] = acc + epoch.noise
    return HeightField(new)


class _UpdateTable:
    """Precomputed per-site update terms over a box, indexed lexicographically."""

    def __init__(self, box: Box, y: HeightField, d: HeightField,
                 params: ModelParams, kernel: Kernel):
        self.adj = BoxAdjacency(box, kernel)
        self.const = []
        self.pairs = []
        for s in self.adj.sites:
            const, pairs = _update_terms(s, self.adj.index.__contains__, y, d, params, kernel)
            self.const.append(const)
            self.pairs.append([(self.adj.index[t], w) for t, w in pairs])

    def epoch_codes(self, epochs: EpochList) -> list[int]:
        codes = []
        for site in epochs.site_table:
            idx = self.adj.index.get(site)
            if idx is None:
                raise SiteOutsideBox(f"epoch site {site} is not in the box")
            codes.append(idx)
        return [codes[c] for c in epochs.site_codes.tolist()]


def _run(table: _UpdateTable, state: list, epochs: EpochList, snapshot_times=None):
    """Apply all epochs in order, mutating state; return requested snapshots."""
    codes = table.epoch_codes(epochs)
    noises = epochs.noises.tolist()
    const = table.const
    pairs = table.pairs
    if snapshot_times is None:
        for e, i in enumerate(codes):
            acc = const[i]
            for j, w in pairs[i]:
                acc += w * state[j]
            state[i] = acc + noises[e]
        return None
    snaps = np.empty((len(snapshot_times), len(state)))
    bounds = np.searchsorted(epochs.times, np.asarray(snapshot_times, dtype=float), side="right")
    e = 0
    for k, stop in enumerate(bounds.tolist()):
        while e < stop:
            i = codes[e]
            acc = const[i]
            for j, w in pairs[i]:
                acc += w * state[j]
            state[i] = acc + noises[e]
            e += 1
        snaps[k] = state
    while e < len(codes):
        i = codes[e]
        acc = const[i]
        for j, w in pairs[i]:
            acc += w * state[j]
        state[i] = acc + noises[e]
        e += 1
    return snaps


def run_epochs(
    box: Box,
    z_init: HeightField,
    y: HeightField,
    d: HeightField,
    params: ModelParams,
    kernel: Kernel,
    epochs: EpochList,
) -> HeightField:
    """Fold :func:`heat_bath_step` over an existing epoch list."""
    table = _UpdateTable(box, y, d, params, kernel)
    state = [z_init.value(s) for s in table.adj.sites]
    _run(table, state, epochs)
    return HeightField.from_vector(table.adj.sites, state)


def simulate(
    box: Box,
    z_init: HeightField,
    y: HeightField,
    d: HeightField,
    params: ModelParams,
    kernel: Kernel,
    window,
    seed: int,
) -> tuple[HeightField, EpochList]:
    """Generate epochs on the window and run them from z_init.

    Returns the final state together with the consumed epoch list so the
    identical randomness can feed the backward reconstruction.
    """
    epochs = generate_epochs(box, window, params, seed)
    return run_epochs(box, z_init, y, d, params, kernel, epochs), epochs


def trajectory(
    box: Box,
    z_init: HeightField,
    y: HeightField,
    d: HeightField,
    params: ModelParams,
    kernel: Kernel,
    epochs: EpochList,
    times: Sequence[float],
) -> np.ndarray:
    """States at the requested times, one row per time, lex site columns.

    A row reflects every epoch with time at most the requested time.
    """
    table = _UpdateTable(box, y, d, params, kernel)
    state = [z_init.value(s) for s in table.adj.sites]
    return _run(table, state, epochs, snapshot_times=times)


def sample_stationary(
    box: Box,
    y: HeightField,
    d: HeightField,
    params: ModelParams,
    kernel: Kernel,
    burn_in: float,
    n_samples: int,
    thin: float,
    seed: int,
) -> np.ndarray:
    """Thinned states of one long run started from zero heights.

    Runs for ``burn_in`` model time, then records the state at times
    ``burn_in + k * thin`` for k = 1..n_samples.  Rows are configurations
    in lexicographic site order; the matrix is a deterministic function of
    the seed.
    """
    if burn_in <= 0 or thin <= 0:
        raise ValueError("burn_in and thin must be positive")
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    horizon = burn_in + n_samples * thin
    epochs = generate_epochs(box, (0.0, horizon * (1.0 + 1e-12) + 1e-9), params, seed)
    snap_times = burn_in + thin * np.arange(1, n_samples + 1)
    z0 = HeightField.zeros(box.sites())
    return trajectory(box, z0, y, d, params, kernel, epochs, snap_times)
