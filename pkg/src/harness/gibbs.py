"""Closed-form Gaussian law of the box measure, used as the statistical oracle.

On a box with boundary heights y and data d, the stationary law of the
heat-bath dynamics is Gaussian: the mean solves
``(I - alpha P) mu = alpha (P y)|_bd + (1 - alpha) d`` (the same system the
ground-state solvers handle) and the covariance is
``sigma2 (I - alpha P)^{-1}``.  The mean never depends on sigma2; the
covariance is proportional to it, so doubling the inverse temperature
halves the covariance entrywise.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainMismatch, FactorizationFailure, SizeLimit
from .ground_state import MAX_DENSE_SITES
from .hamiltonian import conditional_law
from .lattice import Box, BoxAdjacency, HeightField, Kernel, ModelParams, Site


@dataclass(frozen=True)
class GaussianSpec:
    """Exact Gaussian law on a box: sites, mean, covariance and cached factors.

    ``boundary`` caches the vector ``alpha (P y)|_bd`` so conditional checks
    can rebuild single-site update means without the boundary field.
    ``precision_factor`` is the lower Cholesky factor of the precision
    ``(I - alpha P) / sigma2``.
    """

    sites: tuple[Site, ...]
    mean: np.ndarray
    covariance: np.ndarray
    precision_factor: np.ndarray
    boundary: np.ndarray
    sigma2: float

    @property
    def n(self) -> int:
        return len(self.sites)

    @cached_property
    def _cov_factor(self) -> np.ndarray:
        try:
            return np.linalg.cholesky(self.covariance)
        except np.linalg.LinAlgError as err:
            raise FactorizationFailure(f"covariance is not positive definite: {err}") from None

    def index(self, site: Site) -> int:
        try:
            return self.sites.index(tuple(site))
        except ValueError:
            raise DomainMismatch(f"site {tuple(site)} is not in the spec") from None

    def to_json(self) -> dict:
        return {
            "sites": [list(s) for s in self.sites],
            "mean": self.mean.tolist(),
            "covariance": [float(v) for v in self.covariance.reshape(-1)],
            "sigma2": self.sigma2,
        }


def build_gaussian(
    box: Box,
    y: HeightField,
    d: HeightField,
    params: ModelParams,
    kernel: Kernel,
) -> GaussianSpec:
    """Assemble the exact Gaussian law of the box measure.

    The covariance is formed by solving ``(I - alpha P) C = sigma2 I``
    rather than inverting, then symmetrized to remove roundoff asymmetry.
    Boxes above ``MAX_DENSE_SITES`` sites raise :class:`SizeLimit`.
    """
    if box.size > MAX_DENSE_SITES:
        raise SizeLimit(f"box has {box.size} sites, dense cap is {MAX_DENSE_SITES}")
    adj = BoxAdjacency(box, kernel)
    A = np.eye(adj.n) - params.alpha * adj.kernel_matrix()
    boundary = params.alpha * adj.boundary_vector(y)
    rhs = boundary + params.h * d.vector(adj.sites)
    mean = np.linalg.solve(A, rhs)
    cov = params.sigma2 * np.linalg.solve(A, np.eye(adj.n))
    cov = (cov + cov.T) / 2.0
    try:
        precision_factor = np.linalg.cholesky(A / params.sigma2)
    except np.linalg.LinAlgError as err:
        raise FactorizationFailure(f"precision is not positive definite: {err}") from None
    return GaussianSpec(adj.sites, mean, cov, precision_factor, boundary, params.sigma2)


def log_density(spec: GaussianSpec, x: HeightField) -> float:
    """Gaussian log density of a configuration under the spec.

    Uses the cached precision factor; differences of log densities equal
    minus energy differences over ``2 sigma2``.
    """
    v = x.vector(spec.sites) - spec.mean
    L = spec.precision_factor
    w = L.T @ v
    quad = float(w @ w)
    logdet = float(np.sum(np.log(np.diag(L))))
    return -0.5 * quad - 0.5 * spec.n * np.log(2.0 * np.pi) + logdet


def sample_exact(spec: GaussianSpec, n: int, seed: int) -> np.ndarray:
    """Draw n iid configurations through a Cholesky factor of the covariance.

    Rows are samples in lexicographic site order, fully determined by the
    seed.  Raises :class:`FactorizationFailure` if the covariance is not
    positive definite, which signals a bug upstream.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    C = spec._cov_factor
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    z = rng.standard_normal((n, spec.n))
    return spec.mean + z @ C.T


def conditional_check(
    spec: GaussianSpec,
    k: Site,
    x: HeightField,
    params: ModelParams,
    kernel: Kernel,
    d: HeightField,
    y: HeightField | None = None,
) -> float:
    """Largest gap between the spec's conditional at k and the update law.

    The exact Gaussian conditional of coordinate k given the other
    coordinates of x is computed from the covariance by Schur complement;
    the single-site update law supplies the other side.  When y is given
    the update side goes through :func:`harness.hamiltonian.conditional_law`
    on the combined heights; otherwise the cached boundary vector stands in
    for the y contribution.  Returns
    ``max(|mean difference|, |variance difference|)``.
    """
    ki = spec.index(k)
    rest = [i for i in range(spec.n) if i != ki]
    cov = spec.covariance
    crr = cov[np.ix_(rest, rest)]
    crk = cov[rest, ki]
    solved = np.linalg.solve(crr, crk)
    cond_var = float(cov[ki, ki] - crk @ solved)
    xv = x.vector(spec.sites)
    cond_mean = float(spec.mean[ki] + solved @ (xv[rest] - spec.mean[rest]))

    if y is not None:
        combined = dict(x.items())
        for s, v in y.items():
            combined.setdefault(s, v)
        hb_mean, hb_var = conditional_law(tuple(k), HeightField(combined), d.value(k), params, kernel)
    else:
        acc = 0.0
        index = {s: i for i, s in enumerate(spec.sites)}
        for t, w in kernel.neighbors(tuple(k)):
            j = index.get(t)
            if j is not None:
                acc += w * xv[j]
        hb_mean = params.alpha * acc + float(spec.boundary[ki]) + params.h * d.value(k)
        hb_var = params.sigma2
    return max(abs(cond_mean - hb_mean), abs(cond_var - hb_var))
