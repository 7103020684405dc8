"""Batch experiment driver.

Subcommands solve profiles, analyze spectra, run tuned evolutions, and
sweep the deformation parameter; every artifact embeds the configuration
hash, package version, and the tolerance set so a results directory is
self-describing.  Configs are JSON files or line-oriented ``a.b.c = value``
text; command-line overrides win over the file, which wins over defaults.

Exit status: 0 when the run (and, for sweeps, every acceptance threshold)
succeeded, 1 when a sweep finished but a threshold failed, 2 on solver
nonconvergence, 3 on validation errors (bad config, missing inputs).
"""

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__, spectral
from .errors import (BlowupDetectedError, ConfigurationError,
                     ContractionFailureError, DegenerateEigenvalueError,
                     DegenerateProfileError, DivergedSeriesError,
                     NoAnalyticBranchError, NonconvergenceError,
                     UnsupportedOrderError)
from .evolution import EvolutionConfig, PerturbationSpec, evolve, \
    physical_diagnostics, tune_blowup_time
from .geometry import PerturbationBasis, WarpedTarget
from .profile import lipschitz_in_epsilon, solve_profile, verification_grid

_VALIDATION_ERRORS = (ConfigurationError, UnsupportedOrderError)
_SOLVER_ERRORS = (NonconvergenceError, DegenerateProfileError,
                  ContractionFailureError, DegenerateEigenvalueError,
                  DivergedSeriesError, NoAnalyticBranchError,
                  BlowupDetectedError)

# thresholds the sweep exit status reflects; recorded in every artifact
TOLERANCES = {
    "gauge_deviation": 1e-6,
    "profile_residual": 1e-9,
    "blowup_time_deviation": 0.05,
}

_DEFAULTS = {
    "target": {"d": 3, "epsilon": 0.0, "epsilon_grid": None,
               "basis_terms": [[1, 0.5]]},
    "profile": {"method": "shooting", "tol": 1e-10, "r_max": 100.0,
                "order": 40},
    "spectral": {"nodes": [64, 128], "drift_tol": 1e-6},
    "evolution": {"domain_radius": 8.0, "cells": 1024, "cfl": 0.4,
                  "tau_max": 8.0, "blowup_time": 1.0,
                  "search_halfwidth": 0.1,
                  "amplitude": 0.0, "shape": "gaussian", "support": 2.0,
                  "tune_cells": 256, "tune_tau_max": 5.0},
    "norms": {"orders": [0, 1, 2]},
    "out": "wmlab-out",
    "seed": 0,
    "workers": 1,
}


@dataclass
class ExperimentConfig:
    """Resolved configuration tree with every field defaulted."""

    tree: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path=None, overrides=()):
        tree = json.loads(json.dumps(_DEFAULTS))  # deep copy
        if path is not None:
            _merge(tree, _read_config_file(path))
        for dotted, value in overrides:
            _assign(tree, dotted, value)
        return cls(tree)

    def __getitem__(self, dotted):
        node = self.tree
        for part in dotted.split("."):
            node = node[part]
        return node

    def digest(self):
        blob = json.dumps(self.tree, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def meta(self):
        return {"config_sha256": self.digest(), "version": __version__,
                "tolerances": TOLERANCES, "seed": self.tree["seed"]}

    def epsilons(self):
        grid = self["target.epsilon_grid"]
        if grid is None:
            return [float(self["target.epsilon"])]
        return [float(e) for e in grid]

    def target(self, epsilon):
        terms = tuple((int(m), float(c)) for m, c in self["target.basis_terms"])
        return WarpedTarget(d=int(self["target.d"]), epsilon=float(epsilon),
                            basis=PerturbationBasis(terms))

    def perturbation(self):
        amp = float(self["evolution.amplitude"])
        if amp == 0.0:
            return None
        return PerturbationSpec(amplitude=amp,
                                shape=self["evolution.shape"],
                                support=float(self["evolution.support"]))

    def evolution_config(self, target, **kw):
        ev = self["evolution"]
        args = {
            "target": target,
            "domain_radius": float(ev["domain_radius"]),
            "cells": int(ev["cells"]),
            "cfl": float(ev["cfl"]),
            "tau_max": float(ev["tau_max"]),
            "blowup_time": float(ev["blowup_time"]),
            "search_halfwidth": float(ev["search_halfwidth"]),
            "perturbation": self.perturbation(),
            "norm_orders": tuple(int(j) for j in self["norms.orders"]),
            "seed": int(self.tree["seed"]),
        }
        args.update(kw)
        return EvolutionConfig(**args)


def _merge(base, extra):
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value


def _assign(tree, dotted, value):
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def _read_config_file(path):
    if not os.path.exists(path):
        raise ConfigurationError(f"config file not found: {path}")
    with open(path) as fh:
        text = fh.read()
    if path.endswith(".json"):
        return json.loads(text)
    tree = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(
                f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        try:
            parsed = json.loads(val.strip())
        except json.JSONDecodeError:
            parsed = val.strip()
        _assign(tree, key.strip(), parsed)
    return tree


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("%.17g" % x if isinstance(x, float) else str(x)
                              for x in row) + "\n")


def _eps_tag(epsilon):
    return f"eps{epsilon:+.4f}"


def _solve(config, target):
    return solve_profile(target, order=int(config["profile.order"]),
                         r_max=float(config["profile.r_max"]),
                         tol=float(config["profile.tol"]))


def cmd_profile(config, out):
    """Solve the profile for each epsilon; write JSON, CSV and residuals."""
    solutions = []
    for eps in config.epsilons():
        target = config.target(eps)
        prof = _solve(config, target)
        solutions.append(prof)
        tag = _eps_tag(eps)
        payload = prof.as_dict()
        payload["meta"] = config.meta()
        _write_json(os.path.join(out, f"profile_{tag}.json"), payload)

        rho = verification_grid(float(config["profile.r_max"]))
        f = prof.evaluate(rho)
        fp = prof.evaluate(rho, 1)
        res = prof.residual(rho)
        _write_csv(os.path.join(out, f"profile_{tag}.csv"),
                   ["rho", "f", "fp", "psi1", "psi2", "residual"],
                   zip(rho.tolist(), f.tolist(), fp.tolist(),
                       prof.psi1(rho).tolist(), prof.psi2(rho).tolist(),
                       res.tolist()))
        _write_json(os.path.join(out, f"profile_{tag}_residual.json"), {
            "meta": config.meta(),
            "b": prof.b, "a": prof.a, "c1": prof.c1, "ctilde1": prof.ctilde1,
            "residual_norm": prof.residual_norm,
            "sup_residual": float(np.max(np.abs(res))),
        })
    if len(solutions) > 1:
        rep = lipschitz_in_epsilon(solutions)
        _write_json(os.path.join(out, "lipschitz.json"), {
            "meta": config.meta(),
            "epsilons": [float(e) for e in rep.epsilons],
            "c0": rep.c0, "c1": rep.c1, "c2": rep.c2,
            "per_pair": rep.per_pair.tolist(),
        })
    return 0


def cmd_spectrum(config, out):
    """Write the spectrum report and the eigenvalue/drift table."""
    profile_file = config.tree["spectral"].get("profile_file")
    if profile_file is not None and not os.path.exists(profile_file):
        raise ConfigurationError(
            f"spectral.profile_file points to a missing file: {profile_file}")
    eps = config.epsilons()[0]
    target = config.target(eps)
    prof = _solve(config, target)
    tag = _eps_tag(eps)

    rows = []
    finest = None
    for nodes in sorted(int(n) for n in config["spectral.nodes"]):
        report = spectral.eigen(spectral.assemble(prof, nodes),
                                drift_tol=float(config["spectral.drift_tol"]))
        finest = report
        for i, lam in enumerate(report.eigenvalues):
            rows.append((nodes, i, float(lam.real), float(lam.imag),
                         float(report.drifts[i]), int(report.converged[i])))
    _write_csv(os.path.join(out, f"eigenvalues_{tag}.csv"),
               ["nodes", "index", "re", "im", "drift", "converged"], rows)

    payload = finest.as_dict()
    payload["meta"] = config.meta()
    _write_json(os.path.join(out, f"spectrum_{tag}.json"), payload)
    return 0


def cmd_evolve(config, out):
    """Tune the blowup time, run the evolution, write the decay artifacts."""
    eps = config.epsilons()[0]
    target = config.target(eps)
    prof = _solve(config, target)
    report = spectral.eigen(spectral.assemble(
        prof, max(int(n) for n in config["spectral.nodes"])))
    projector = spectral.unstable_projection(report)

    tune_cfg = config.evolution_config(
        target, cells=int(config["evolution.tune_cells"]),
        tau_max=float(config["evolution.tune_tau_max"]))
    t_star = tune_blowup_time(tune_cfg, prof, projector)

    run_cfg = config.evolution_config(target, blowup_time=t_star)
    decay = evolve(run_cfg, prof, projector)
    tag = _eps_tag(eps)
    decay.write_csv(os.path.join(out, f"decay_{tag}.csv"))

    manifest = decay.manifest()
    manifest["meta"] = config.meta()
    manifest["t_star"] = t_star
    if decay.blew_up_at is None:
        diag = physical_diagnostics(decay)
        manifest["plateau"] = diag.plateau
        manifest["plateau_deviation"] = abs(diag.plateau - abs(prof.b))
    _write_json(os.path.join(out, f"evolve_{tag}.json"), manifest)
    return 0


def _sweep_job(payload):
    config = ExperimentConfig(payload["tree"])
    eps = payload["epsilon"]
    target = config.target(eps)
    prof = _solve(config, target)
    nodes = max(int(n) for n in config["spectral.nodes"])
    report = spectral.eigen(spectral.assemble(prof, nodes))
    projector = spectral.unstable_projection(report)

    tune_cfg = config.evolution_config(
        target, cells=int(config["evolution.tune_cells"]),
        tau_max=float(config["evolution.tune_tau_max"]))
    t_star = tune_blowup_time(tune_cfg, prof, projector)
    run_cfg = config.evolution_config(target, blowup_time=t_star)
    decay = evolve(run_cfg, prof, projector)

    rate, rate_err = decay.rates.get("c1_sobolev1", (float("nan"),) * 2)
    row = {
        "epsilon": eps, "b": prof.b, "a": prof.a,
        "c1": prof.c1, "ctilde1": prof.ctilde1,
        "residual_norm": prof.residual_norm,
        "gauge_re": float(report.gauge_eigenvalue.real),
        "gauge_im": float(report.gauge_eigenvalue.imag),
        "gauge_deviation": float(abs(report.gauge_eigenvalue - 1.0)),
        "gap": float(report.gap), "edge": float(report.edge),
        "t_star": t_star,
        "t_star_deviation": abs(t_star - float(config["evolution.blowup_time"])),
        "decay_exponent": rate, "decay_exponent_err": rate_err,
        "blew_up": decay.blew_up_at is not None,
    }
    return row


def cmd_sweep(config, out):
    """Run the full pipeline per epsilon and aggregate one summary CSV."""
    eps_grid = config.epsilons()
    if not eps_grid:
        raise ConfigurationError("epsilon grid is empty")
    payloads = [{"tree": config.tree, "epsilon": eps} for eps in eps_grid]
    workers = int(config.tree["workers"])
    if workers > 1 and len(payloads) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_job, payloads))
    else:
        rows = [_sweep_job(p) for p in payloads]
    rows.sort(key=lambda r: r["epsilon"])

    header = ["epsilon", "b", "a", "c1", "ctilde1", "residual_norm",
              "gauge_re", "gauge_im", "gauge_deviation", "gap", "edge",
              "t_star", "t_star_deviation", "decay_exponent",
              "decay_exponent_err", "blew_up"]
    _write_csv(os.path.join(out, "sweep.csv"), header,
               [[row[k] if isinstance(row[k], float) else row[k]
                 for k in header] for row in rows])
    _write_json(os.path.join(out, "sweep.json"),
                {"meta": config.meta(), "rows": rows})

    ok = all(row["gauge_deviation"] <= TOLERANCES["gauge_deviation"] and
             row["residual_norm"] <= TOLERANCES["profile_residual"] and
             row["t_star_deviation"] <= TOLERANCES["blowup_time_deviation"] and
             (row["blew_up"] or row["decay_exponent"] < 0.0)
             for row in rows)
    return 0 if ok else 1


_COMMANDS = {"profile": cmd_profile, "spectrum": cmd_spectrum,
             "evolve": cmd_evolve, "sweep": cmd_sweep}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wmlab",
        description="batch driver for profile, spectrum, evolution and "
                    "sweep experiments")
    parser.add_argument("--config", help="JSON or key=value config file")
    parser.add_argument("--out", help="output directory (default wmlab-out)")
    parser.add_argument("--workers", type=int, help="sweep parallelism")
    parser.add_argument("--seed", type=int, help="seed recorded in artifacts")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--epsilon", type=float,
                       help="override target.epsilon (collapses any grid)")
        p.add_argument("--d", type=int, help="override target dimension")
        p.add_argument("--grid", type=int, help="override evolution.cells")
        p.add_argument("--tau-max", type=float,
                       help="override evolution.tau_max")
    return parser


def _collect_overrides(args):
    overrides = []
    if args.seed is not None:
        overrides.append(("seed", args.seed))
    if args.workers is not None:
        overrides.append(("workers", args.workers))
    if getattr(args, "epsilon", None) is not None:
        overrides.append(("target.epsilon", args.epsilon))
        overrides.append(("target.epsilon_grid", None))
    if getattr(args, "d", None) is not None:
        overrides.append(("target.d", args.d))
    if getattr(args, "grid", None) is not None:
        overrides.append(("evolution.cells", args.grid))
    if getattr(args, "tau_max", None) is not None:
        overrides.append(("evolution.tau_max", args.tau_max))
    return overrides


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = ExperimentConfig.load(args.config, _collect_overrides(args))
        out = args.out or config.tree["out"]
        os.makedirs(out, exist_ok=True)
        return _COMMANDS[args.command](config, out)
    except _VALIDATION_ERRORS as exc:
        print(f"wmlab: validation error: {exc}", file=sys.stderr)
        return 3
    except _SOLVER_ERRORS as exc:
        print(f"wmlab: solver failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
