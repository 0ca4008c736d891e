"""Solvers for the harmonic height profile pinned by data and boundary heights.

The target profile m on a box solves the fixed point

    m(i) = alpha sum_j p(i, j) m(j) + (1 - alpha) d(i),

heights outside the box being read from the boundary field y, i.e. the
linear system ``(I - alpha P) m = alpha (P y)|_boundary + (1 - alpha) d``.
Four routes are implemented: Jacobi sweeps whose sup-norm contraction
factor is exactly alpha (giving a provable stopping rule), a dense direct
solve, the exact killing/absorption distribution of the jump chain that
dies with probability ``1 - alpha`` per step (whose d- and y-averages
recompose m), and seeded Monte Carlo estimates of that distribution.  The
whole-lattice profile for finitely supported data is evaluated by a
truncated power series with a certified tail bound.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import (
    BoundViolated,
    NoConvergence,
    SiteOutsideBox,
    SizeLimit,
    WalkCapExceeded,
)
from .lattice import (
    Box,
    BoxAdjacency,
    HeightField,
    Kernel,
    ModelParams,
    Site,
    shift,
    sup_dist,
)

MAX_DENSE_SITES = 4096
WALK_STEP_CAP = 10 ** 6


@dataclass(frozen=True)
class KernelRow:
    """Killing and absorption distribution of the jump chain from one site.

    ``killed[j]`` is the probability that the walk started at ``start``
    dies at box site j; ``absorbed[k]`` the probability that it jumps to
    the outside site k.  Exact rows have ``truncation_mass`` 0; the field
    exists so truncated computations can account for unresolved mass.
    """

    start: Site
    killed: Mapping[Site, float]
    absorbed: Mapping[Site, float]
    truncation_mass: float = 0.0

    def total_mass(self) -> float:
        return sum(self.killed.values()) + sum(self.absorbed.values()) + self.truncation_mass

    def recompose(self, d: HeightField, y: HeightField) -> float:
        """Mass-weighted average ``sum_j killed[j] d(j) + sum_k absorbed[k] y(k)``."""
        acc = 0.0
        for j in sorted(self.killed):
            acc += self.killed[j] * d.value(j)
        for k in sorted(self.absorbed):
            acc += self.absorbed[k] * y.value(k)
        return acc

    def as_dict(self) -> dict:
        return {
            "start": list(self.start),
            "killed": {",".join(map(str, s)): v for s, v in sorted(self.killed.items())},
            "absorbed": {",".join(map(str, s)): v for s, v in sorted(self.absorbed.items())},
            "truncation_mass": self.truncation_mass,
        }


@dataclass(frozen=True)
class GroundStateResult:
    """Solved profile plus an independently recomputed residual.

    ``method`` is one of ``jacobi``, ``neumann``, ``exact_solve``,
    ``monte_carlo``.  ``residual_inf`` is the sup-norm of
    ``m - alpha P m - alpha (P y)|_bd - (1 - alpha) d``.
    """

    m: HeightField
    residual_inf: float
    iterations: int
    method: str


def _system(box: Box, d: HeightField, y: HeightField, params: ModelParams, kernel: Kernel):
    adj = BoxAdjacency(box, kernel)
    rhs = params.alpha * adj.boundary_vector(y) + params.h * d.vector(adj.sites)
    return adj, rhs


def _residual_inf(adj: BoxAdjacency, P, rhs: np.ndarray, m: np.ndarray, alpha: float) -> float:
    r = m - (alpha * (P @ m) + rhs)
    return float(np.max(np.abs(r))) if len(r) else 0.0


def solve_jacobi(
    box: Box,
    d: HeightField,
    y: HeightField,
    params: ModelParams,
    kernel: Kernel,
    tol: float,
    max_iter: int = 100_000,
) -> GroundStateResult:
    """Fixed-point sweeps ``m <- alpha P m + alpha (P y)|_bd + (1 - alpha) d``.

    Starts from m = 0 and stops once the successive sup-norm change drops
    to ``tol (1 - alpha) / alpha``; the contraction factor alpha then
    bounds the residual of the returned iterate by tol.  The reported
    residual is recomputed independently.

    Raises
    ------
    NoConvergence
        If ``max_iter`` sweeps are exhausted first.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    adj, rhs = _system(box, d, y, params, kernel)
    P = adj.kernel_matrix(sparse=True)
    a = params.alpha
    stop = tol * params.h / a
    m = np.zeros(adj.n)
    for sweep in range(1, max_iter + 1):
        m_next = a * (P @ m) + rhs
        delta = float(np.max(np.abs(m_next - m))) if adj.n else 0.0
        m = m_next
        if delta <= stop:
            break
    else:
        raise NoConvergence(f"jacobi did not reach tol {tol} in {max_iter} sweeps")
    residual = _residual_inf(adj, P, rhs, m, a)
    return GroundStateResult(HeightField.from_vector(adj.sites, m), residual, sweep, "jacobi")


def solve_exact(
    box: Box,
    d: HeightField,
    y: HeightField,
    params: ModelParams,
    kernel: Kernel,
) -> GroundStateResult:
    """Dense direct solve of ``(I - alpha P) m = alpha (P y)|_bd + (1 - alpha) d``.

    Capped at ``MAX_DENSE_SITES`` box sites; raises :class:`SizeLimit`
    beyond that.
    """
    if box.size > MAX_DENSE_SITES:
        raise SizeLimit(f"box has {box.size} sites, dense cap is {MAX_DENSE_SITES}")
    adj, rhs = _system(box, d, y, params, kernel)
    P = adj.kernel_matrix()
    A = np.eye(adj.n) - params.alpha * P
    m = np.linalg.solve(A, rhs)
    residual = _residual_inf(adj, P, rhs, m, params.alpha)
    return GroundStateResult(HeightField.from_vector(adj.sites, m), residual, 1, "exact_solve")


def kernel_row_exact(box: Box, params: ModelParams, kernel: Kernel, i: Site) -> KernelRow:
    """Exact killing/absorption distribution of the jump chain started at i.

    The chain is killed in place with probability ``1 - alpha`` per step
    and otherwise jumps with the kernel weights; jumps landing outside the
    box are absorbed there.  Row entries are computed from the fundamental
    matrix ``(I - alpha P)^{-1}`` of the surviving in-box chain.
    """
    i = tuple(i)
    if i not in box:
        raise SiteOutsideBox(f"site {i} is not in the box")
    if box.size > MAX_DENSE_SITES:
        raise SizeLimit(f"box has {box.size} sites, dense cap is {MAX_DENSE_SITES}")
    adj = BoxAdjacency(box, kernel)
    a, h = params.alpha, params.h
    A = np.eye(adj.n) - a * adj.kernel_matrix()
    e = np.zeros(adj.n)
    e[adj.index[i]] = 1.0
    visits = np.linalg.solve(A, e)  # A is symmetric, so this is the row of visits
    killed = {}
    absorbed: dict[Site, float] = {}
    for j, site in enumerate(adj.sites):
        v = float(visits[j])
        if v == 0.0:
            continue
        killed[site] = h * v
        for t, w in adj.out_pairs[j]:
            absorbed[t] = absorbed.get(t, 0.0) + a * w * v
    return KernelRow(i, killed, absorbed, 0.0)


def kernel_row_mc(
    box: Box,
    params: ModelParams,
    kernel: Kernel,
    i: Site,
    n_walks: int,
    seed: int,
) -> KernelRow:
    """Monte Carlo estimate of :func:`kernel_row_exact` from seeded walks.

    Walk w draws its randomness from
    ``numpy.random.SeedSequence(seed, spawn_key=(w,))``, so results are
    identical no matter how walks are distributed over workers.  Every walk
    terminates almost surely; a hard cap of ``WALK_STEP_CAP`` steps raises
    :class:`WalkCapExceeded` rather than truncating silently.
    """
    i = tuple(i)
    if i not in box:
        raise SiteOutsideBox(f"site {i} is not in the box")
    if n_walks < 1:
        raise ValueError(f"n_walks must be >= 1, got {n_walks}")
    a, h = params.alpha, params.h
    offsets = list(kernel.offsets)
    cum = []
    acc = 0.0
    for v in offsets:
        acc += kernel.offsets[v]
        cum.append(acc)
    last = len(offsets) - 1
    killed_counts: dict[Site, int] = {}
    absorbed_counts: dict[Site, int] = {}
    for w in range(n_walks):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(w,)))
        pos = i
        for _ in range(WALK_STEP_CAP):
            u = rng.random()
            if u < h:
                killed_counts[pos] = killed_counts.get(pos, 0) + 1
                break
            r = (u - h) / a
            idx = min(bisect.bisect_right(cum, r), last)
            pos = shift(pos, offsets[idx])
            if pos not in box:
                absorbed_counts[pos] = absorbed_counts.get(pos, 0) + 1
                break
        else:
            raise WalkCapExceeded(f"walk {w} exceeded {WALK_STEP_CAP} steps")
    killed = {s: c / n_walks for s, c in sorted(killed_counts.items())}
    absorbed = {s: c / n_walks for s, c in sorted(absorbed_counts.items())}
    return KernelRow(i, killed, absorbed, 0.0)


def ground_state_infinite(
    d: HeightField,
    params: ModelParams,
    kernel: Kernel,
    tol: float,
) -> HeightField:
    """Whole-lattice harmonic profile for finitely supported data.

    Evaluates ``m = (1 - alpha) sum_{n >= 0} (alpha P)^n d`` truncated at
    the smallest depth N for which both the series tail
    ``alpha^(N+1) ||d||_1 / (1 - alpha)`` and the off-domain decay bound
    ``alpha^N ||d||_1`` are at most tol.  The returned field covers the
    support of d enlarged by ``N * range``; values outside it are below
    tol by the jump-count decay bound.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    a, h = params.alpha, params.h
    l1 = sum(abs(v) for _, v in d.items())
    if l1 == 0.0:
        return HeightField.zeros(d.sites)
    n_tail = math.log(tol * h / l1) / math.log(a) - 1.0
    n_decay = math.log(tol / l1) / math.log(a)
    depth = max(0, math.ceil(n_tail), math.ceil(n_decay))

    m = {s: h * v for s, v in d.items()}
    term = dict(d.items())
    coef = h
    for _ in range(depth):
        coef *= a
        nxt: dict[Site, float] = {}
        for s, v in term.items():
            for off, w in kernel.offsets.items():
                t = shift(s, off)
                nxt[t] = nxt.get(t, 0.0) + w * v
        term = nxt
        for s, v in term.items():
            m[s] = m.get(s, 0.0) + coef * v

    reach = depth * kernel.range
    lo = tuple(min(s[k] for s in d.sites) - reach for k in range(len(d.sites[0])))
    hi = tuple(max(s[k] for s in d.sites) + reach for k in range(len(d.sites[0])))
    domain = Box(lo, hi).sites()
    return HeightField({s: m.get(s, 0.0) for s in domain})


def decay_bound_check(row: KernelRow, params: ModelParams, kernel: Kernel) -> dict:
    """Assert every row entry obeys ``K(i, j) <= alpha^floor(|i - j| / range)``.

    Returns a report with the worst (smallest) slack ``bound - entry``.
    Raises :class:`BoundViolated` on any entry above its bound, which
    signals an implementation bug for exact rows.
    """
    a = params.alpha
    worst_slack = math.inf
    worst_site = None
    entries = 0
    for group in (row.killed, row.absorbed):
        for site, mass in group.items():
            bound = a ** (sup_dist(row.start, site) // kernel.range)
            if mass > bound + 1e-12:
                raise BoundViolated(
                    f"entry {mass} at {site} exceeds bound {bound} from {row.start}"
                )
            entries += 1
            slack = bound - mass
            if slack < worst_slack:
                worst_slack, worst_site = slack, site
    return {"entries": entries, "worst_slack": worst_slack, "worst_site": worst_site}
