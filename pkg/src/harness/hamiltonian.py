"""Quadratic energy of height fields and its single-site conditional structure.

The energy of a configuration x on a box, against boundary heights y and
data d, is the sum over unordered site pairs meeting the box of
``alpha p(i, j) (x(i) - x(j))^2`` plus ``(1 - alpha) sum_i (x(i) - d(i))^2``
over box sites, heights outside the box being read from y.  Because the
pair weights ``alpha p(k, .)`` together with ``1 - alpha`` sum to one, the
part of the energy that depends on a single height z(k) collapses to
``(z(k) - zbar(k))^2`` plus terms free of z(k), where zbar(k) is the convex
local mean returned by :func:`local_mean`.  That completion of the square
drives the energy delta of a single-site move, the single-site conditional
law, and the gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

from .lattice import Box, BoxAdjacency, HeightField, Kernel, ModelParams, Site, shift


@dataclass(frozen=True)
class EnergyBreakdown:
    """Energy split into interior pairs, boundary-crossing pairs and data term.

    All three components are sums of squares with positive weights, hence
    nonnegative, and ``total`` is their sum.
    """

    pair_interior: float
    pair_boundary: float
    data_term: float
    total: float

    def as_dict(self) -> dict:
        return {
            "pair_interior": self.pair_interior,
            "pair_boundary": self.pair_boundary,
            "data_term": self.data_term,
            "total": self.total,
        }


def energy(
    box: Box,
    x: HeightField,
    y: HeightField,
    d: HeightField,
    params: ModelParams,
    kernel: Kernel,
) -> EnergyBreakdown:
    """Evaluate the quadratic energy of x on the box.

    Each unordered pair of sites with at least one endpoint in the box
    contributes ``alpha p(i, j) (height(i) - height(j))^2`` once, heights
    outside the box coming from y.  Each box site i adds
    ``(1 - alpha) (x(i) - d(i))^2``.

    Raises
    ------
    DomainMismatch
        If x, y or d is missing a required site.
    """
    adj = BoxAdjacency(box, kernel)
    a, h = params.alpha, params.h
    interior = 0.0
    boundary = 0.0
    data = 0.0
    for i, s in enumerate(adj.sites):
        xi = x.value(s)
        for j, w in adj.in_pairs[i]:
            t = adj.sites[j]
            if t > s:  # count each interior pair once
                diff = xi - x.value(t)
                interior += a * w * diff * diff
        for t, w in adj.out_pairs[i]:
            diff = xi - y.value(t)
            boundary += a * w * diff * diff
        diff = xi - d.value(s)
        data += h * diff * diff
    return EnergyBreakdown(interior, boundary, data, interior + boundary + data)


def local_mean(
    k: Site,
    z: HeightField,
    d_k: float,
    params: ModelParams,
    kernel: Kernel,
) -> float:
    """Convex local mean ``alpha sum_j p(k, j) z(j) + (1 - alpha) d(k)``.

    z must cover every kernel neighbor of k; z(k) itself is never read.
    The result lies in the convex hull of the neighbor heights and d(k).
    """
    acc = 0.0
    for t, w in kernel.neighbors(k):
        acc += w * z.value(t)
    return params.alpha * acc + params.h * float(d_k)


def energy_delta(
    k: Site,
    old_val: float,
    new_val: float,
    z: HeightField,
    d_k: float,
    params: ModelParams,
    kernel: Kernel,
) -> float:
    """Energy change when the height at k moves from old_val to new_val.

    Equals ``(new - zbar)^2 - (old - zbar)^2`` with zbar the local mean of
    the fixed surroundings, and matches the difference of two full energy
    evaluations.
    """
    zbar = local_mean(k, z, d_k, params, kernel)
    return (new_val - zbar) ** 2 - (old_val - zbar) ** 2


def conditional_law(
    k: Site,
    z: HeightField,
    d_k: float,
    params: ModelParams,
    kernel: Kernel,
) -> tuple[float, float]:
    """Mean and variance of the height at k given all other heights.

    The conditional law is Gaussian with mean :func:`local_mean` and
    variance ``sigma2``; at the default ``sigma2 = 1/2`` it is exactly the
    single-site conditional of the density exp(-H).
    """
    return local_mean(k, z, d_k, params, kernel), params.sigma2


def gradient(
    box: Box,
    x: HeightField,
    y: HeightField,
    d: HeightField,
    params: ModelParams,
    kernel: Kernel,
) -> HeightField:
    """Gradient of the energy in the box heights: ``g(i) = 2 (x(i) - xbar(i))``.

    xbar(i) is the local mean with neighbors read from x inside the box and
    from y outside.  The gradient vanishes exactly at the pinned harmonic
    profile.
    """
    adj = BoxAdjacency(box, kernel)
    a, h = params.alpha, params.h
    grad = {}
    for i, s in enumerate(adj.sites):
        acc = 0.0
        for j, w in adj.in_pairs[i]:
            acc += w * x.value(adj.sites[j])
        for t, w in adj.out_pairs[i]:
            acc += w * y.value(t)
        xbar = a * acc + h * d.value(s)
        grad[s] = 2.0 * (x.value(s) - xbar)
    return HeightField(grad)
