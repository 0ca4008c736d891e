"""Config-driven command line front end.

Every experiment is described by one JSON document; command-line flags only
pick the config path and override scalar leaves by dotted path.  Each run
writes its artifacts plus a manifest (config echo, artifact checksums,
package versions) into the output directory.  Exit status: 0 on success,
1 when a check fails or a component errors out, 2 on usage or config
problems.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__, dual, dynamics, gibbs, ground_state, verify
from .errors import CheckFailed, ConfigInvalid, HarnessError
from .lattice import (
    Box,
    HeightField,
    Kernel,
    ModelParams,
    field_from_json,
    kernel_from_json,
)

COMMANDS = ("ground-state", "kernel", "simulate", "dual-check", "gibbs-verify", "full-suite")
DUALITY_TOL = 1e-9


# ---------------------------------------------------------------------------
# Config handling

def _require(doc: dict, key: str, context: str):
    if key not in doc:
        raise ConfigInvalid(f"missing '{key}' in {context}")
    return doc[key]


def apply_override(config: dict, dotted: str) -> None:
    """Apply one ``dotted.path=value`` override; values parse as JSON when possible."""
    if "=" not in dotted:
        raise ConfigInvalid(f"override '{dotted}' is not of the form path=value")
    path, raw = dotted.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = path.split(".")
    node = config
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigInvalid(f"override path '{path}' crosses a non-object at '{key}'")
    node[keys[-1]] = value


class RunConfig:
    """Validated run description: model, geometry, fields, run knobs, output."""

    STOCHASTIC = {"simulate", "dual-check", "gibbs-verify", "full-suite"}

    def __init__(self, command: str, doc: dict):
        if command not in COMMANDS:
            raise ConfigInvalid(f"unknown command '{command}'")
        stated = doc.get("command")
        if stated is not None and stated != command:
            raise ConfigInvalid(f"config names command '{stated}' but '{command}' was invoked")
        self.command = command
        self.raw = doc

        model = _require(doc, "model", "config")
        try:
            self.kernel = kernel_from_json(_require(model, "kernel", "model"))
        except ConfigInvalid:
            raise
        except Exception as err:
            raise ConfigInvalid(f"bad kernel literal: {err}") from None
        try:
            self.params = ModelParams(float(_require(model, "alpha", "model")),
                                      float(model.get("sigma2", 0.5)))
        except ValueError as err:
            raise ConfigInvalid(str(err)) from None
        if "dim" in model and int(model["dim"]) != self.kernel.dim:
            raise ConfigInvalid(f"model.dim {model['dim']} != kernel dimension {self.kernel.dim}")

        geometry = _require(doc, "geometry", "config")
        box_doc = _require(geometry, "box", "geometry")
        shell = int(geometry.get("shell", self.kernel.range))
        try:
            self.box = Box(tuple(box_doc["lower"]), tuple(box_doc["upper"]), shell)
        except (KeyError, ValueError, TypeError) as err:
            raise ConfigInvalid(f"bad geometry.box: {err}") from None
        if self.box.dim != self.kernel.dim:
            raise ConfigInvalid(f"box dimension {self.box.dim} != kernel dimension {self.kernel.dim}")

        self.run = dict(doc.get("run", {}))
        self.seed = self.run.get("seed")
        if self.command in self.STOCHASTIC and self.seed is None:
            raise ConfigInvalid(f"command '{command}' is stochastic and requires run.seed")
        if self.seed is not None:
            self.seed = int(self.seed)
        if self.command == "kernel" and self.run.get("n_walks") and self.seed is None:
            raise ConfigInvalid("kernel with run.n_walks requires run.seed")

        fields = doc.get("fields", {})
        shell_sites = self.box.shell(self.kernel.range)
        self.d = self._field(fields.get("d"), self.box.sites(), "fields.d")
        self.y = self._field(fields.get("y"), shell_sites, "fields.y")
        self.z_init = self._field(fields.get("z_init"), self.box.sites(), "fields.z_init")

        output = doc.get("output", {})
        self.out_dir = Path(_require(output, "directory", "output"))
        self.formats = tuple(output.get("formats", ("json", "csv")))

        workers_env = os.environ.get("HARNESS_WORKERS")
        self.workers = int(workers_env) if workers_env else int(self.run.get("workers", 1))
        if self.workers < 1:
            raise ConfigInvalid(f"worker count must be >= 1, got {self.workers}")

    @staticmethod
    def _field(spec, sites, context) -> HeightField:
        """Materialize a field literal or generator over the given sites."""
        if spec is None:
            return HeightField.zeros(sites)
        if not isinstance(spec, dict):
            raise ConfigInvalid(f"{context} must be an object")
        if "sites" in spec:
            try:
                return field_from_json(spec)
            except Exception as err:
                raise ConfigInvalid(f"bad field literal in {context}: {err}") from None
        kind = spec.get("kind")
        if kind == "constant":
            return HeightField.constant(sites, float(spec.get("value", 0.0)))
        if kind == "ramp":
            scale = float(spec.get("scale", 1.0))
            return HeightField.from_function(sites, lambda s: scale * sum(s))
        if kind == "delta":
            target = tuple(int(c) for c in _require(spec, "site", context))
            value = float(spec.get("value", 1.0))
            return HeightField({s: (value if s == target else 0.0) for s in sites})
        if kind == "random":
            if "seed" not in spec:
                raise ConfigInvalid(f"random field in {context} requires a seed")
            rng = np.random.default_rng(np.random.SeedSequence(int(spec["seed"])))
            low, high = float(spec.get("low", -1.0)), float(spec.get("high", 1.0))
            ordered = sorted(tuple(s) for s in sites)
            draws = rng.uniform(low, high, size=len(ordered))
            return HeightField({s: v for s, v in zip(ordered, draws)})
        raise ConfigInvalid(f"unknown field kind {kind!r} in {context}")


# ---------------------------------------------------------------------------
# Artifact writers

def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def _write_field_csv(path: Path, field: HeightField) -> None:
    dim = len(field.sites[0]) if len(field) else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"coord_{k}" for k in range(dim)] + ["value"])
        for site, value in field.items():
            writer.writerow([*site, repr(value)])


def _write_matrix_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([x if isinstance(x, (int, str)) else repr(float(x)) for x in row])


def _manifest(cfg: RunConfig, artifacts: list[Path]) -> dict:
    checks = {}
    for path in artifacts:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        checks[path.name] = f"sha256:{digest}"
    return {
        "command": cfg.command,
        "config": cfg.raw,
        "artifacts": checks,
        "versions": {
            "harness": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


# ---------------------------------------------------------------------------
# Commands

def _cmd_ground_state(cfg: RunConfig, out: Path) -> tuple[int, list[Path]]:
    tol = float(cfg.run.get("tol", 1e-10))
    results = []
    if cfg.box.size <= ground_state.MAX_DENSE_SITES:
        results.append(ground_state.solve_exact(cfg.box, cfg.d, cfg.y, cfg.params, cfg.kernel))
    results.append(ground_state.solve_jacobi(cfg.box, cfg.d, cfg.y, cfg.params, cfg.kernel, tol))
    doc = {
        "results": [
            {
                "method": r.method,
                "residual_inf": r.residual_inf,
                "iterations": r.iterations,
                "m": {"sites": [list(s) for s in r.m.sites],
                      "values": [r.m.value(s) for s in r.m.sites]},
            }
            for r in results
        ]
    }
    artifacts = []
    if "json" in cfg.formats:
        path = out / "ground_state.json"
        _write_json(path, doc)
        artifacts.append(path)
    if "csv" in cfg.formats:
        path = out / "m.csv"
        _write_field_csv(path, results[0].m)
        artifacts.append(path)
    return 0, artifacts


def _cmd_kernel(cfg: RunConfig, out: Path) -> tuple[int, list[Path]]:
    site = tuple(cfg.run.get("site", cfg.box.center()))
    row = ground_state.kernel_row_exact(cfg.box, cfg.params, cfg.kernel, site)
    report = ground_state.decay_bound_check(row, cfg.params, cfg.kernel)
    doc = {
        "row": row.as_dict(),
        "total_mass": row.total_mass(),
        "decay_bound": {
            "entries": report["entries"],
            "worst_slack": report["worst_slack"],
            "worst_site": list(report["worst_site"]) if report["worst_site"] else None,
        },
    }
    n_walks = cfg.run.get("n_walks")
    if n_walks:
        mc = ground_state.kernel_row_mc(cfg.box, cfg.params, cfg.kernel, site,
                                        int(n_walks), cfg.seed)
        dev = 0.0
        for group_exact, group_mc in ((row.killed, mc.killed), (row.absorbed, mc.absorbed)):
            for s in set(group_exact) | set(group_mc):
                dev = max(dev, abs(group_exact.get(s, 0.0) - group_mc.get(s, 0.0)))
        doc["monte_carlo"] = {"row": mc.as_dict(), "n_walks": int(n_walks),
                              "seed": cfg.seed, "max_abs_dev": dev}
    artifacts = []
    if "json" in cfg.formats:
        path = out / "kernel_row.json"
        _write_json(path, doc)
        artifacts.append(path)
    return 0, artifacts


def _cmd_simulate(cfg: RunConfig, out: Path) -> tuple[int, list[Path]]:
    window = tuple(float(v) for v in _require(cfg.run, "window", "run"))
    final, epochs = dynamics.simulate(cfg.box, cfg.z_init, cfg.y, cfg.d,
                                      cfg.params, cfg.kernel, window, cfg.seed)
    artifacts = []
    if "csv" in cfg.formats:
        path = out / "final.csv"
        _write_field_csv(path, final)
        artifacts.append(path)
        thin = cfg.run.get("thin")
        if thin:
            times = np.arange(window[0] + float(thin), window[1] + 1e-12, float(thin))
            snaps = dynamics.trajectory(cfg.box, cfg.z_init, cfg.y, cfg.d,
                                        cfg.params, cfg.kernel, epochs, times)
            header = ["time"] + ["/".join(map(str, s)) for s in cfg.box.sites()]
            rows = [[repr(float(t)), *map(repr, map(float, row))]
                    for t, row in zip(times, snaps)]
            path = out / "trajectory.csv"
            _write_matrix_csv(path, header, rows)
            artifacts.append(path)
    if "json" in cfg.formats:
        path = out / "epochs.json"
        _write_json(path, epochs.to_json())
        artifacts.append(path)
    return 0, artifacts


def _cmd_dual_check(cfg: RunConfig, out: Path) -> tuple[int, list[Path]]:
    window = tuple(float(v) for v in cfg.run.get("window", (0.0, 10.0)))
    final, epochs = dynamics.simulate(cfg.box, cfg.z_init, cfg.y, cfg.d,
                                      cfg.params, cfg.kernel, window, cfg.seed)
    values, _ = dual.reconstruct_all(epochs, cfg.box, cfg.z_init, cfg.y, cfg.d,
                                     cfg.params, cfg.kernel)
    sites = cfg.box.sites()
    forward = final.vector(sites)
    diffs = np.abs(forward - values)
    artifacts = []
    if "csv" in cfg.formats:
        dim = cfg.box.dim
        header = [f"coord_{k}" for k in range(dim)] + ["forward", "reconstructed", "abs_diff"]
        rows = [[*site, forward[i], values[i], diffs[i]] for i, site in enumerate(sites)]
        path = out / "dual_check.csv"
        _write_matrix_csv(path, header, rows)
        artifacts.append(path)
    summary = {"max_abs_diff": float(diffs.max()) if len(diffs) else 0.0,
               "tolerance": DUALITY_TOL, "n_epochs": len(epochs), "seed": cfg.seed,
               "passed": bool(len(diffs) == 0 or diffs.max() <= DUALITY_TOL)}
    if "json" in cfg.formats:
        path = out / "dual_check.json"
        _write_json(path, summary)
        artifacts.append(path)
    return (0 if summary["passed"] else 1), artifacts


def _stationary_check(cfg: RunConfig) -> verify.CheckReport:
    n_samples = int(cfg.run.get("n_samples", 20_000))
    return verify.check_stationary_law(cfg.box, cfg.y, cfg.d, cfg.params, cfg.kernel,
                                       n_samples, cfg.seed)


def _beta_checks(cfg: RunConfig) -> list[verify.CheckReport]:
    betas = cfg.run.get("beta", (0.25, 1.0, 4.0))
    return [verify.check_beta_scaling(cfg.box, cfg.y, cfg.d, cfg.params, cfg.kernel, float(b))
            for b in betas]


def _conditional_check(cfg: RunConfig) -> verify.CheckReport:
    spec = gibbs.build_gaussian(cfg.box, cfg.y, cfg.d, cfg.params, cfg.kernel)
    draws = gibbs.sample_exact(spec, 50, cfg.seed + 1)
    sites = cfg.box.sites()
    probes = [sites[0], sites[len(sites) // 2]]
    worst = 0.0
    for row in draws:
        x = HeightField.from_vector(sites, row)
        for k in probes:
            worst = max(worst, gibbs.conditional_check(spec, k, x, cfg.params,
                                                       cfg.kernel, cfg.d, cfg.y))
    return verify.CheckReport.build("conditional_law", worst, 1e-9,
                                    {"n_states": len(draws), "probes": [list(p) for p in probes]})


def _duality_check(cfg: RunConfig) -> verify.CheckReport:
    window = tuple(float(v) for v in cfg.run.get("window", (0.0, 10.0)))
    final, epochs = dynamics.simulate(cfg.box, cfg.z_init, cfg.y, cfg.d,
                                      cfg.params, cfg.kernel, window, cfg.seed + 2)
    values, _ = dual.reconstruct_all(epochs, cfg.box, cfg.z_init, cfg.y, cfg.d,
                                     cfg.params, cfg.kernel)
    diff = float(np.max(np.abs(final.vector(cfg.box.sites()) - values)))
    return verify.CheckReport.build("duality", diff, DUALITY_TOL,
                                    {"n_epochs": len(epochs), "window": list(window)})


def _cmd_gibbs_verify(cfg: RunConfig, out: Path) -> tuple[int, list[Path]]:
    reports = [_stationary_check(cfg), _conditional_check(cfg)] + _beta_checks(cfg)
    return _emit_reports(cfg, out, reports)


def _cmd_full_suite(cfg: RunConfig, out: Path) -> tuple[int, list[Path]]:
    alpha = cfg.params.alpha
    z = HeightField.zeros(cfg.box.sites())
    z_prime = HeightField.constant(cfg.box.sites(), 1.0)
    u_grid = (0.5, 1.0, 2.0, 4.0)
    n_seeds = int(cfg.run.get("n_samples", 20_000))
    forgetting_seeds = [cfg.seed + 10_000 + k for k in range(min(300, max(50, n_seeds // 50)))]
    variance_seeds = [cfg.seed + 20_000 + k for k in range(min(2000, max(200, n_seeds // 10)))]
    center = cfg.box.center()
    vbox = verify.survival_proxy_box(center, 2.0, cfg.kernel)

    d_center = HeightField({center: 1.0})
    halfwidths = (4, 8, 16)
    boxes = [Box.centered(center, w) for w in halfwidths]
    shell_union = sorted({s for b in boxes for s in b.shell(cfg.kernel.range)})
    y_choices = [("zero", HeightField.zeros(shell_union)),
                 ("seven", HeightField.constant(shell_union, 7.0))]

    tasks = {
        "stationary": lambda: _stationary_check(cfg),
        "forgetting": lambda: verify.check_ergodic_forgetting(
            cfg.box, cfg.y, cfg.d, cfg.params, cfg.kernel, (z, z_prime),
            u_grid, forgetting_seeds),
        "variance": lambda: verify.check_variance_bound(
            vbox, cfg.params, cfg.kernel, (0.5, 1.0, 2.0), variance_seeds),
        "thermo": lambda: verify.check_thermo_limit(
            d_center, y_choices, cfg.params, cfg.kernel, boxes),
        "duality": lambda: _duality_check(cfg),
        "conditional": lambda: _conditional_check(cfg),
    }
    reports = []
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = {name: pool.submit(fn) for name, fn in tasks.items()}
            reports = [futures[name].result() for name in tasks]
    else:
        reports = [fn() for fn in tasks.values()]
    reports.extend(_beta_checks(cfg))
    reports.sort(key=lambda r: r.name)
    return _emit_reports(cfg, out, reports)


def _emit_reports(cfg: RunConfig, out: Path, reports) -> tuple[int, list[Path]]:
    artifacts = []
    path = out / "reports.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        verify.emit_json_lines(reports, fh)
    artifacts.append(path)
    print(verify.summary_table(reports))
    return (0 if all(r.passed for r in reports) else 1), artifacts


_DISPATCH = {
    "ground-state": _cmd_ground_state,
    "kernel": _cmd_kernel,
    "simulate": _cmd_simulate,
    "dual-check": _cmd_dual_check,
    "gibbs-verify": _cmd_gibbs_verify,
    "full-suite": _cmd_full_suite,
}


def run(config: RunConfig) -> int:
    """Dispatch a validated config; write artifacts and the manifest."""
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    status, artifacts = _DISPATCH[config.command](config, out)
    manifest = _manifest(config, artifacts)
    _write_json(out / "manifest.json", manifest)
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="harness",
        description="Reproducible experiments on heat-bath lattice dynamics with external data.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to the JSON run configuration")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="PATH=VALUE", help="override a config leaf by dotted path")
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 2 if err.code else 0
    try:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigInvalid(f"cannot read config {args.config}: {err}") from None
        if not isinstance(doc, dict):
            raise ConfigInvalid("config root must be a JSON object")
        for override in args.overrides:
            apply_override(doc, override)
        config = RunConfig(args.command, doc)
        status = run(config)
        if status:
            print("one or more checks failed", file=sys.stderr)
        return status
    except ConfigInvalid as err:
        print(f"{type(err).__module__}.{type(err).__name__}: {err}", file=sys.stderr)
        return 2
    except CheckFailed as err:
        print(f"{type(err).__module__}.{type(err).__name__}: {err}", file=sys.stderr)
        return 1
    except HarnessError as err:
        print(f"{type(err).__module__}.{type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
