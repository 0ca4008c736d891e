"""Backward reconstruction of the box dynamics from a realized epoch list.

Reading the update schedule backwards from a starting site spreads unit
probability mass through the epochs: when an epoch fires at a site j
holding alive mass w, the fraction ``(1 - alpha) w`` dies at j right
there, and ``alpha p(v) w`` moves to ``j + v`` for every kernel offset v.
Mass landing outside the box is absorbed at its landing site; epochs at
sites carrying no mass are no-ops.  The sweep is exact dynamic
programming on conditional probabilities, nothing is sampled.

The forward value at the starting site is then the mass-weighted sum of
four ingredients: noise marks (weighted by the alive mass at each epoch,
recovered from the killed record as ``killed / (1 - alpha)``), the data
(killed mass), the boundary heights (absorbed mass), and the initial
heights (mass still alive at the window start).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import AbsorptionOccurred, SiteOutsideBox
from .dynamics import EpochList
from .lattice import Box, BoxAdjacency, HeightField, Kernel, ModelParams, Site

# Alive-mass entries below this are dropped; the dropped total is tracked
# so conservation stays checkable.
PRUNE_EPS = 1e-15


@dataclass(frozen=True)
class WeightTable:
    """Exact backward-walk weights for one origin over one window.

    ``b_final`` is the alive mass per site at the window start.
    ``a_killed`` maps epoch index to ``(site, mass killed there)``;
    ``a_absorbed`` maps epoch index to the mass pushed to each outside
    site at that epoch.  Epochs that carried no mass are absent.  The
    masses plus ``pruned_mass`` sum to one.
    """

    origin: Site
    window: tuple[float, float]
    b_final: Mapping[Site, float]
    a_killed: Mapping[int, tuple[Site, float]]
    a_absorbed: Mapping[int, Mapping[Site, float]]
    pruned_mass: float = 0.0

    def total_mass(self) -> float:
        total = sum(self.b_final.values()) + self.pruned_mass
        total += sum(mass for _, mass in self.a_killed.values())
        total += sum(sum(m.values()) for m in self.a_absorbed.values())
        return total

    def to_json(self) -> dict:
        return {
            "origin": list(self.origin),
            "window": list(self.window),
            "b_final": {",".join(map(str, s)): v for s, v in sorted(self.b_final.items())},
            "a_killed": {str(e): {"site": list(s), "mass": m}
                         for e, (s, m) in sorted(self.a_killed.items())},
            "a_absorbed": {str(e): {",".join(map(str, s)): m for s, m in sorted(d.items())}
                           for e, d in sorted(self.a_absorbed.items())},
            "pruned_mass": self.pruned_mass,
        }


def _sweep(epochs: EpochList, box: Box, params: ModelParams, kernel: Kernel,
           origins: Sequence[Site]):
    """Run the backward mass sweep for a batch of origins at once.

    Masses are per-site vectors with one entry per origin, so per-origin
    results are bit-identical however many origins share a sweep.  Returns
    (adjacency, alive, killed, absorbed, pruned) with alive and killed
    keyed by box index and epoch index respectively.
    """
    adj = BoxAdjacency(box, kernel)
    codes = []
    for site in epochs.site_table:
        idx = adj.index.get(site)
        if idx is None:
            raise SiteOutsideBox(f"epoch site {site} is not in the box")
        codes.append(idx)
    epoch_codes = [codes[c] for c in epochs.site_codes.tolist()]

    k = len(origins)
    alive: dict[int, np.ndarray] = {}
    for c, origin in enumerate(origins):
        idx = adj.index.get(tuple(origin))
        if idx is None:
            raise SiteOutsideBox(f"origin {tuple(origin)} is not in the box")
        vec = alive.setdefault(idx, np.zeros(k))
        vec[c] += 1.0
    killed: dict[int, np.ndarray] = {}
    absorbed: dict[int, dict[Site, np.ndarray]] = {}
    pruned = np.zeros(k)
    a, h = params.alpha, params.h

    for e in range(len(epochs) - 1, -1, -1):
        bi = epoch_codes[e]
        vec = alive.pop(bi, None)
        if vec is None:
            continue
        killed[e] = h * vec
        for jn, w in adj.in_pairs[bi]:
            add = (a * w) * vec
            cur = alive.get(jn)
            if cur is None:
                alive[jn] = add
            else:
                cur += add
        if adj.out_pairs[bi]:
            absorbed[e] = {site: (a * w) * vec for site, w in adj.out_pairs[bi]}
        for jn, _ in adj.in_pairs[bi]:
            cur = alive.get(jn)
            if cur is None:
                continue
            small = (cur < PRUNE_EPS) & (cur > 0.0)
            if small.any():
                pruned += np.where(small, cur, 0.0)
                cur[small] = 0.0
            if not cur.any():
                del alive[jn]
    return adj, alive, killed, absorbed, pruned


def backward_weights(
    epochs: EpochList,
    box: Box,
    i: Site,
    params: ModelParams,
    kernel: Kernel,
) -> WeightTable:
    """Exact walk weights for origin i: alive, killed and absorbed masses.

    Dynamic programming from the window end down to its start, starting
    from unit mass at i.
    """
    adj, alive, killed, absorbed, pruned = _sweep(epochs, box, params, kernel, [tuple(i)])
    b_final = {adj.sites[bi]: float(v[0]) for bi, v in sorted(alive.items()) if v[0] > 0.0}
    a_killed = {}
    for e in sorted(killed):
        m = float(killed[e][0])
        if m > 0.0:
            a_killed[e] = (epochs.site_table[epochs.site_codes[e]], m)
    a_absorbed = {}
    for e in sorted(absorbed):
        entry = {site: float(v[0]) for site, v in sorted(absorbed[e].items()) if v[0] > 0.0}
        if entry:
            a_absorbed[e] = entry
    return WeightTable(tuple(i), epochs.window, b_final, a_killed, a_absorbed, float(pruned[0]))


def reconstruct(
    epochs: EpochList,
    box: Box,
    i: Site,
    z_init: HeightField,
    y: HeightField,
    d: HeightField,
    params: ModelParams,
    kernel: Kernel,
) -> tuple[float, tuple[float, float, float, float]]:
    """Value of the forward process at site i as noise/data/boundary/initial sums.

    Returns ``(value, (A, B, C, D))`` where A weighs the noise marks by the
    alive mass at each epoch, B weighs the data by the killed mass, C the
    boundary heights by the absorbed mass, and D the initial heights by the
    mass alive at the window start.  The value matches the forward
    simulation on the same epoch list.
    """
    table = backward_weights(epochs, box, i, params, kernel)
    h = params.h
    A = 0.0
    B = 0.0
    for e in sorted(table.a_killed):
        site, mass = table.a_killed[e]
        A += (mass / h) * float(epochs.noises[e])
        B += mass * d.value(site)
    C = 0.0
    for e in sorted(table.a_absorbed):
        entry = table.a_absorbed[e]
        for site in sorted(entry):
            C += entry[site] * y.value(site)
    D = 0.0
    for site in sorted(table.b_final):
        D += table.b_final[site] * z_init.value(site)
    return A + B + C + D, (A, B, C, D)


def reconstruct_all(
    epochs: EpochList,
    box: Box,
    z_init: HeightField,
    y: HeightField,
    d: HeightField,
    params: ModelParams,
    kernel: Kernel,
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
    """Vector form of :func:`reconstruct` for every box site at once.

    One shared sweep carries a mass vector per origin, with identical
    arithmetic per origin to the single-site route, so entries agree with
    :func:`reconstruct` bit for bit.  Returns values and the four term
    vectors in lexicographic site order.
    """
    origins = tuple(box.sites())
    adj, alive, killed, absorbed, pruned = _sweep(epochs, box, params, kernel, origins)
    h = params.h
    k = len(origins)
    A = np.zeros(k)
    B = np.zeros(k)
    for e in sorted(killed):
        vec = killed[e]
        site = epochs.site_table[epochs.site_codes[e]]
        A += (vec / h) * float(epochs.noises[e])
        B += vec * d.value(site)
    C = np.zeros(k)
    for e in sorted(absorbed):
        entry = absorbed[e]
        for site in sorted(entry):
            C += entry[site] * y.value(site)
    D = np.zeros(k)
    for bi in sorted(alive):
        D += alive[bi] * z_init.value(adj.sites[bi])
    return A + B + C + D, (A, B, C, D)


def survival_mass(
    epochs: EpochList,
    box: Box,
    i: Site,
    params: ModelParams,
    kernel: Kernel,
) -> float:
    """Mass neither killed nor absorbed over the window, from origin i.

    The box stands in for the whole lattice, so any absorption means it
    was too small for the window and raises :class:`AbsorptionOccurred`.
    """
    table = backward_weights(epochs, box, i, params, kernel)
    if table.a_absorbed:
        raise AbsorptionOccurred(
            f"absorption in window {epochs.window}; enlarge the box around {tuple(i)}"
        )
    return sum(table.b_final[s] for s in sorted(table.b_final))


def noise_variance_accumulator(
    epochs: EpochList,
    box: Box,
    i: Site,
    params: ModelParams,
    kernel: Kernel,
) -> float:
    """Conditional variance of the noise term given the epochs.

    Sum over epochs of ``(alive mass)^2 sigma2``; always at most
    ``sigma2 / (1 - alpha)`` because the alive masses are probabilities
    whose killed fractions total at most one.
    """
    table = backward_weights(epochs, box, i, params, kernel)
    h = params.h
    total = 0.0
    for e in sorted(table.a_killed):
        _, mass = table.a_killed[e]
        b = mass / h
        total += b * b * params.sigma2
    return total
