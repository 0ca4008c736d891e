"""Statistical and numerical acceptance checks tying the modules together.

Each check compares simulation output against a closed-form oracle and
returns a :class:`CheckReport` whose statistic must stay at or below its
threshold.  Statistical thresholds are 5 standard errors, keeping the
per-comparison false-positive probability under 1e-6; standard errors of
thinned chains are inflated for residual autocorrelation so the threshold
keeps that meaning.  Reports are reproducible bit for bit from the seeds
they record.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import dual, dynamics, gibbs, ground_state
from .errors import AbsorptionOccurred
from .lattice import Box, HeightField, Kernel, ModelParams, Site


@dataclass
class CheckReport:
    """Outcome of one check: a statistic against a threshold, plus context."""

    name: str
    statistic: float
    threshold: float
    passed: bool
    details: dict = field(default_factory=dict)

    @classmethod
    def build(cls, name: str, statistic: float, threshold: float, details: dict) -> "CheckReport":
        return cls(name, float(statistic), float(threshold),
                   bool(statistic <= threshold), details)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "passed": self.passed,
            "details": self.details,
        }


def emit_json_lines(reports, stream) -> None:
    for r in reports:
        stream.write(json.dumps(r.to_json()) + "\n")


def summary_table(reports) -> str:
    width = max((len(r.name) for r in reports), default=4)
    lines = [f"{'check'.ljust(width)}  {'statistic':>12}  {'threshold':>12}  result"]
    for r in reports:
        flag = "pass" if r.passed else "FAIL"
        lines.append(f"{r.name.ljust(width)}  {r.statistic:>12.6g}  {r.threshold:>12.6g}  {flag}")
    return "\n".join(lines)


def autocorr_inflation(params: ModelParams, thin: float) -> float:
    """Variance inflation factor for samples thinned every ``thin`` time units.

    Couplings of the chain forget at rate ``1 - alpha``, so consecutive
    thinned samples correlate at most ``rho = exp(-(1 - alpha) thin)``; the
    usual geometric-sum factor ``(1 + rho) / (1 - rho)`` then bounds the
    variance inflation of empirical means.
    """
    rho = math.exp(-params.h * thin)
    return (1.0 + rho) / (1.0 - rho)


def check_stationary_law(
    box: Box,
    y: HeightField,
    d: HeightField,
    params: ModelParams,
    kernel: Kernel,
    n_samples: int,
    seed: int,
    oracle_params: ModelParams | None = None,
    samples: np.ndarray | None = None,
) -> CheckReport:
    """Thinned long-run samples against the exact Gaussian law.

    Compares per-site means and all covariance entries by z-score, with
    standard errors from the oracle covariance inflated for thinning
    autocorrelation.  ``oracle_params`` lets a deliberately wrong oracle
    serve as a negative control; ``samples`` lets one sampling run feed
    several oracles.
    """
    spec = gibbs.build_gaussian(box, y, d, oracle_params or params, kernel)
    burn_in = 50.0 / params.h
    thin = 2.0 / params.h
    if samples is None:
        samples = dynamics.sample_stationary(
            box, y, d, params, kernel, burn_in, n_samples, thin, seed)
    n = samples.shape[0]
    n_eff = n / autocorr_inflation(params, thin)

    mean_hat = samples.mean(axis=0)
    se_mean = np.sqrt(np.diag(spec.covariance) / n_eff)
    z_mean = np.abs(mean_hat - spec.mean) / se_mean

    cov_hat = np.cov(samples.T, ddof=1)
    var = np.diag(spec.covariance)
    se_cov = np.sqrt((np.outer(var, var) + spec.covariance ** 2) / n_eff)
    z_cov = np.abs(cov_hat - spec.covariance) / se_cov

    statistic = max(float(z_mean.max()), float(z_cov.max()))
    details = {
        "n_samples": int(n),
        "n_effective": float(n_eff),
        "burn_in": burn_in,
        "thin": thin,
        "seed": seed,
        "max_mean_z": float(z_mean.max()),
        "max_cov_z": float(z_cov.max()),
        "comparisons": int(len(spec.sites) + spec.covariance.size),
    }
    return CheckReport.build("stationary_law", statistic, 5.0, details)


def check_ergodic_forgetting(
    box: Box,
    y: HeightField,
    d: HeightField,
    params: ModelParams,
    kernel: Kernel,
    inits: tuple[HeightField, HeightField],
    u_grid,
    seeds,
) -> CheckReport:
    """Coupled runs from two starts must forget each other geometrically.

    Both runs share each seed's epoch list, so their difference at the
    center site is the surviving initial gap; its mean over seeds must not
    exceed ``||z - z'||_inf exp(-(1 - alpha) u)`` by more than 5 standard
    errors at any u in the grid.
    """
    z, z_prime = inits
    gap = max(abs(z.value(s) - z_prime.value(s)) for s in z.sites)
    center = box.center()
    u_grid = [float(u) for u in u_grid]
    horizon = max(u_grid)
    ci = box.sites().index(center)
    diffs = np.empty((len(seeds), len(u_grid)))
    for row, seed in enumerate(seeds):
        epochs = dynamics.generate_epochs(box, (0.0, horizon + 1e-9), params, seed)
        snaps_a = dynamics.trajectory(box, z, y, d, params, kernel, epochs, u_grid)
        snaps_b = dynamics.trajectory(box, z_prime, y, d, params, kernel, epochs, u_grid)
        diffs[row] = np.abs(snaps_a[:, ci] - snaps_b[:, ci])
    observed = diffs.mean(axis=0)
    se = diffs.std(axis=0, ddof=1) / math.sqrt(len(seeds))
    bound = gap * np.exp(-params.h * np.asarray(u_grid))
    zscores = (observed - bound) / np.maximum(se, 1e-30)
    statistic = float(zscores.max())
    details = {
        "u_grid": u_grid,
        "observed": observed.tolist(),
        "bound": bound.tolist(),
        "se": se.tolist(),
        "n_seeds": len(seeds),
        "gap": gap,
    }
    return CheckReport.build("ergodic_forgetting", statistic, 5.0, details)


def survival_proxy_box(i: Site, window_length: float, kernel: Kernel) -> Box:
    """Box large enough that backward mass from i cannot reach its complement.

    The walk jumps at most once per epoch it meets, and meets epochs at
    rate one, so a Poisson tail plus margin sizes the half-width.
    """
    u = max(1.0, float(window_length))
    jumps = math.ceil(u + 12.0 * math.sqrt(u) + 25.0)
    half = (kernel.range - 1) * jumps
    return Box.centered(i, half)


def check_variance_bound(
    box: Box,
    params: ModelParams,
    kernel: Kernel,
    windows,
    seeds,
) -> CheckReport:
    """Conditional noise variance never exceeds ``sigma2 / (1 - alpha)``.

    Runs one backward sweep per (seed, window) pair from the box center;
    windows must be short enough for the box to avoid absorption.
    """
    center = box.center()
    windows = [float(u) for u in windows]
    worst = 0.0
    count = 0
    for seed in seeds:
        u = windows[count % len(windows)]
        epochs = dynamics.generate_epochs(box, (0.0, u), params, seed)
        table = dual.backward_weights(epochs, box, center, params, kernel)
        if table.a_absorbed:
            raise AbsorptionOccurred(f"window {u} leaked out of the box")
        total = 0.0
        for e in sorted(table.a_killed):
            _, mass = table.a_killed[e]
            b = mass / params.h
            total += b * b * params.sigma2
        worst = max(worst, total)
        count += 1
    threshold = params.sigma2 / params.h + 1e-9
    details = {
        "windows": windows,
        "n_runs": count,
        "seeds": [seeds[0], seeds[-1]] if len(seeds) > 1 else list(seeds),
        "bound": params.sigma2 / params.h,
    }
    return CheckReport.build("variance_bound", worst, threshold, details)


def decay_tail(center: Site, box: Box, params: ModelParams, kernel: Kernel) -> float:
    """Bookkeeping bound ``sum_{j outside box} alpha^floor(dist(center, j) / R)``.

    Summed ring by ring until the remaining geometric tail is negligible;
    bounds both boundary influence and data mass escaping the box.
    """
    a, R = params.alpha, kernel.range
    dim = box.dim
    dist0 = min(
        min(c - l, u - c) for c, l, u in zip(center, box.lower, box.upper)
    ) + 1
    total = 0.0
    k = dist0
    while True:
        ring = (2 * k + 1) ** dim - (2 * k - 1) ** dim
        term = ring * a ** (k // R)
        total += term
        # remaining tail is below term * geometric sum once ring growth stalls
        if term < 1e-18 * max(total, 1.0):
            break
        k += 1
        if k > dist0 + 10_000:
            break
    return total


def check_thermo_limit(
    d: HeightField,
    y_choices,
    params: ModelParams,
    kernel: Kernel,
    box_sequence,
    tol: float = 1e-9,
) -> CheckReport:
    """Box profiles must converge to the whole-lattice profile at the center.

    For every boundary choice, the solved profile at the center of the
    largest box must sit within ``tol`` plus the decay-tail allowance of
    the truncated-series value, demonstrating insensitivity to the
    boundary.
    """
    m_inf = ground_state.ground_state_infinite(d, params, kernel, tol)
    boxes = list(box_sequence)
    center = boxes[0].center()
    reference = m_inf.get(center, 0.0)
    d_l1 = sum(abs(v) for _, v in d.items())
    per_y = {}
    statistic = 0.0
    largest = boxes[-1]
    for label, y in y_choices:
        values = []
        for box in boxes:
            d_box = HeightField({s: d.get(s, 0.0) for s in box.sites()})
            res = ground_state.solve_exact(box, d_box, y, params, kernel)
            values.append(res.m.value(center))
        per_y[label] = values
        statistic = max(statistic, abs(values[-1] - reference))
    y_sup = max(
        (max((abs(v) for _, v in y.items()), default=0.0) for _, y in y_choices),
        default=0.0,
    )
    tail = decay_tail(center, largest, params, kernel)
    threshold = tol + tail * (y_sup + d_l1)
    details = {
        "center": list(center),
        "reference": reference,
        "values": per_y,
        "tail": tail,
        "boxes": [[list(b.lower), list(b.upper)] for b in boxes],
    }
    return CheckReport.build("thermo_limit", statistic, threshold, details)


def check_beta_scaling(
    box: Box,
    y: HeightField,
    d: HeightField,
    params: ModelParams,
    kernel: Kernel,
    beta: float,
) -> CheckReport:
    """Means identical and covariance scaled by 1/beta across temperatures.

    Builds the Gaussian law at inverse temperature 1 and at beta; asserts
    mean equality and ``cov(1) == beta cov(beta)`` to 1e-10 relative.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    base = ModelParams(params.alpha, 0.5)
    scaled = ModelParams.with_beta(params.alpha, beta)
    spec1 = gibbs.build_gaussian(box, y, d, base, kernel)
    spec2 = gibbs.build_gaussian(box, y, d, scaled, kernel)
    mean_dev = float(np.max(np.abs(spec1.mean - spec2.mean)))
    scale = float(np.max(np.abs(spec1.covariance)))
    cov_dev = float(np.max(np.abs(spec1.covariance - beta * spec2.covariance))) / scale
    statistic = max(mean_dev, cov_dev)
    details = {"beta": beta, "mean_dev": mean_dev, "cov_rel_dev": cov_dev}
    return CheckReport.build(f"beta_scaling_{beta:g}", statistic, 1e-10, details)
