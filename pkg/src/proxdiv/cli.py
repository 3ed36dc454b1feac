"""Command-line interface: fit, trace, mc and check-init.

Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines, then command-line flags of the same names.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import DATASETS
from .divkernels import GAMMA_NAMES, PSI_BY_NAME
from .expharness import (CONTAMINATIONS, GAUSSIAN_TAIL_MODES, ExperimentConfig, _resolve_phi0, draw_sample,
                         emit_runs, emit_table, run_monte_carlo)
from .kde import KERNELS, KernelSpec
from .models import MODELS, Sample, make_model
from .numerics import OptimizerOptions
from .objectives import EstimatorSpec
from .proximal import AlgorithmSpec, check_initialization, run

ESTIMATORS = ("classical", "kernel", "mdpd", "loglik")
ALGORITHMS = ("one_step", "two_step", "em")

DEFAULTS = {
    "model": "gauss",
    "truth": None,
    "n": "100",
    "runs": "100",
    "estimator": "classical",
    "gamma": "hellinger",
    "a": "0.5",
    "algorithm": "one_step",
    "psi": "sqrt",
    "kernel": None,
    "bandwidth": None,
    "contamination": "none",
    "tail_mode": "add",
    "seed": "0",
    "phi0": "truth_perturbed",
    "check_init": "true",
    "data": None,
    "param_tol": "1e-6",
    "objective_tol": "1e-8",
    "max_iters": "200",
    "x_tolerance": "1e-8",
    "f_tolerance": "1e-8",
    "max_evals": "5000",
    "out": None,
    "runs_out": None,
    "format": "csv",
}

HELP = {
    "model": f"one of {sorted(MODELS)}",
    "truth": "true parameters, comma separated (data-generating point)",
    "estimator": f"one of {ESTIMATORS}",
    "gamma": f"Cressie-Read gamma: a number or one of {sorted(GAMMA_NAMES)}",
    "a": "density power divergence exponent",
    "algorithm": f"one of {ALGORITHMS}; em is the closed-form Gaussian EM",
    "psi": f"proximal kernel, one of {sorted(PSI_BY_NAME)}",
    "kernel": f"kernel for the kernel dual, one of {KERNELS}",
    "bandwidth": "kernel bandwidth; Silverman's rule when omitted",
    "contamination": f"one of {CONTAMINATIONS}",
    "tail_mode": f"Gaussian tail contamination reading, one of {GAUSSIAN_TAIL_MODES}",
    "phi0": "starting point, comma separated, or truth_perturbed",
    "data": f"file of observations or a bundled dataset ({', '.join(DATASETS)})",
    "out": "output path (trace CSV for fit/trace, summary table for mc)",
    "runs_out": "mc only: per-run CSV path",
    "format": "mc table format: csv or text",
}


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# settings
# ---------------------------------------------------------------------------

def read_config(path) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise CliError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def merge_settings(args: argparse.Namespace) -> dict:
    s = dict(DEFAULTS)
    if args.config:
        s.update(read_config(args.config))
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            s[k] = v
    return s


def _floats(text, what):
    try:
        return tuple(float(x) for x in str(text).replace(";", ",").split(",") if x.strip())
    except ValueError:
        raise CliError(f"{what}: expected comma separated numbers, got {text!r}") from None


def _number(s, key, kind=float):
    try:
        return kind(s[key])
    except (TypeError, ValueError):
        raise CliError(f"{key}: expected a number, got {s[key]!r}") from None


def _bool(text) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise CliError(f"expected a boolean, got {text!r}")


def _gamma(text) -> float:
    t = str(text).strip().lower()
    if t in GAMMA_NAMES:
        return GAMMA_NAMES[t]
    try:
        return float(t)
    except ValueError:
        raise CliError(f"gamma: unknown value {text!r}") from None


def build_model(s):
    if s["model"] not in MODELS:
        raise CliError(f"model must be one of {sorted(MODELS)}")
    return make_model(s["model"])


def build_estimator(s, model) -> EstimatorSpec:
    kind = s["estimator"]
    if kind == "mdpd":
        return EstimatorSpec.mdpd(_number(s, "a"))
    if kind == "loglik":
        return EstimatorSpec.log_likelihood()
    g = _gamma(s["gamma"])
    if kind == "classical":
        return EstimatorSpec.classical_dual(g)
    if kind == "kernel":
        k = s["kernel"]
        if k is None:
            # Epanechnikov keeps the Neyman integrals on a bounded range for positive data
            k = "epanechnikov" if (model.name == "weibull" and g < 0) else "gaussian"
        if k not in KERNELS:
            raise CliError(f"kernel must be one of {KERNELS}")
        bw = _number(s, "bandwidth") if s["bandwidth"] is not None else None
        return EstimatorSpec.kernel_dual(g, KernelSpec(k, bw) if bw is not None else KernelSpec(k))
    raise CliError(f"estimator must be one of {ESTIMATORS}")


def build_algorithm(s) -> AlgorithmSpec:
    variant = {"em": "closed_form_em"}.get(s["algorithm"], s["algorithm"])
    if s["psi"] not in PSI_BY_NAME:
        raise CliError(f"psi must be one of {sorted(PSI_BY_NAME)}")
    outer = OptimizerOptions(max_evals=_number(s, "max_evals", int), x_tolerance=_number(s, "x_tolerance"),
                             f_tolerance=_number(s, "f_tolerance"))
    return AlgorithmSpec(variant=variant, psi=PSI_BY_NAME[s["psi"]], param_tol=_number(s, "param_tol"),
                         objective_tol=_number(s, "objective_tol"), max_iters=_number(s, "max_iters", int),
                         outer=outer)


def build_experiment(s, model) -> ExperimentConfig:
    if s["truth"] is None:
        raise CliError("truth is required to simulate data")
    phi0 = s["phi0"] if s["phi0"] == "truth_perturbed" else _floats(s["phi0"], "phi0")
    return ExperimentConfig(model, _floats(s["truth"], "truth"), build_estimator(s, model), build_algorithm(s),
                            n=_number(s, "n", int), runs=_number(s, "runs", int), contamination=s["contamination"],
                            gaussian_tail_mode=s["tail_mode"], base_seed=_number(s, "seed", int), phi0=phi0,
                            check_init=_bool(s["check_init"]))


def load_data(spec) -> Sample:
    if spec in DATASETS:
        return Sample(DATASETS[spec], spec)
    p = Path(spec)
    if not p.exists():
        raise CliError(f"data: no such file or dataset {spec!r}")
    y = np.array(p.read_text().replace(",", " ").split(), dtype=float)
    return Sample(y, p.name)


def sample_and_start(s, model, check: bool = True):
    """The sample and starting point for a single fit; ``check=False`` skips the initialization check."""
    if s["data"] is not None:
        sample = load_data(s["data"])
        if s["phi0"] == "truth_perturbed":
            if s["truth"] is None:
                raise CliError("phi0 (or truth) is required with --data")
            return sample, model.check_feasible(_floats(s["truth"], "truth"))
        return sample, model.check_feasible(_floats(s["phi0"], "phi0"))
    cfg = build_experiment(s, model)
    if not check:
        cfg = replace(cfg, check_init=False)
    sample, rng = draw_sample(cfg, 0)
    phi0, _ = _resolve_phi0(cfg, sample, rng)
    return sample, phi0


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _fit(s, out):
    model = build_model(s)
    est = build_estimator(s, model)
    sample, phi0 = sample_and_start(s, model)
    trace = run(model, est, sample, phi0, build_algorithm(s))
    if trace.termination == "failed":
        raise RuntimeError(trace.message or "run failed")
    return model, trace


def cmd_fit(s, out) -> int:
    model, trace = _fit(s, out)
    if s["out"]:
        trace.to_csv(s["out"])
    out.write("name,value\n")
    for name, v in zip(model.param_names, trace.points[-1]):
        out.write(f"{name},{float(v)!r}\n")
    out.write(f"objective,{trace.objective_values[-1]!r}\n")
    out.write(f"iterations,{trace.iterations}\n")
    out.write(f"termination,{trace.termination}\n")
    return 0


def cmd_trace(s, out) -> int:
    _, trace = _fit(s, out)
    text = trace.to_csv(s["out"])
    if not s["out"]:
        out.write(text)
    return 0


def cmd_mc(s, out) -> int:
    model = build_model(s)
    summary = run_monte_carlo(build_experiment(s, model))
    fmt = s["format"]
    out.write(emit_table([summary], s["out"], fmt=fmt))
    if s["runs_out"]:
        emit_runs(summary, s["runs_out"])
    return 0


def cmd_check_init(s, out) -> int:
    model = build_model(s)
    est = build_estimator(s, model)
    sample, phi0 = sample_and_start(s, model, check=False)
    chk = check_initialization(model, est, sample, phi0)
    out.write("name,value\n")
    out.write(f"ok,{str(chk.ok).lower()}\n")
    out.write(f"condition,{chk.condition}\n")
    out.write(f"margin,{float(chk.margin)!r}\n")
    out.write(f"phi0,{' '.join(repr(float(x)) for x in phi0)}\n")
    return 0


COMMANDS = {"fit": cmd_fit, "trace": cmd_trace, "mc": cmd_mc, "check-init": cmd_check_init}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="proxdiv", description="Proximal-point minimum-divergence estimation.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value settings file")
        for k in DEFAULTS:
            sp.add_argument("--" + k.replace("_", "-"), dest=k, default=None, help=HELP.get(k))
    return p


def _error_record(command, exc) -> str:
    return json.dumps({"status": "error", "command": command, "error": type(exc).__name__, "message": str(exc)})


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        s = merge_settings(args)
        return COMMANDS[args.command](s, out)
    except CliError as exc:
        err.write(_error_record(args.command, exc) + "\n")
        return 2
    except (ValueError, RuntimeError, ArithmeticError, OSError) as exc:
        err.write(_error_record(args.command, exc) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
