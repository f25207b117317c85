"""Command-line interface: ``sample``, ``benchmark`` and ``gen-data``.

Experiments are described by a YAML file; ``--seed``, ``--out``, ``--trace``
and ``--workers`` override the corresponding config entries. Exit codes are
0 on success, 1 for configuration or parameter errors and 2 for failures
while building the model or running the sampler.
"""

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .geometry import NotPositiveDefinite
from .models import (
    BENCHMARK_DATASETS,
    MIXTURE_DENSITIES,
    BananaModel,
    GaussianMixtureModel,
    LogisticRegressionModel,
    ModelError,
    fetch_instructions,
    load_dataset,
    standard_gaussian,
    synthesize_banana,
    synthesize_gmm,
    synthesize_logreg,
)
from .models.data import DimensionMismatch, ParseError
from .samplers import METHOD_LABELS, STEPPERS, SamplerSpec, calibrate_fixed_point, run_chain, \
    tune_step_size

FAMILIES = ("banana", "logistic", "gmm", "gaussian")
DATA_FORMAT = {"banana": "observations", "gmm": "observations", "logistic": "classification"}


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def _fmt(x) -> str:
    """Full-precision float text, stable across runs."""
    return "%.17g" % x


# ---------------------------------------------------------------------------
# configuration


def _require_mapping(value, where):
    if not isinstance(value, dict):
        raise ConfigError(f"{where} must be a mapping")
    return value


def _check_keys(d, allowed, where):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


@dataclass
class ModelConfig:
    """Model family plus either a data file, a named benchmark set or synthesis params."""

    family: str
    data: Optional[str] = None
    dataset: Optional[str] = None
    synth: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    name: Optional[str] = None

    KEYS = ("family", "data", "dataset", "synth", "params", "name")

    @classmethod
    def from_dict(cls, d, base_dir=None):
        d = _require_mapping(d, "model")
        _check_keys(d, cls.KEYS, "model")
        family = d.get("family")
        if family not in FAMILIES:
            raise ConfigError(f"model.family must be one of {list(FAMILIES)}, got {family!r}")
        data = d.get("data")
        if data is not None:
            path = Path(data)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            if not path.is_file():
                raise ConfigError(f"data file not found: {path}")
            data = str(path)
        dataset = d.get("dataset")
        if dataset is not None:
            if family != "logistic" or dataset not in BENCHMARK_DATASETS:
                raise ConfigError(f"model.dataset must name a logistic benchmark "
                                  f"{sorted(BENCHMARK_DATASETS)}")
        synth = dict(_require_mapping(d.get("synth") or {}, "model.synth"))
        params = dict(_require_mapping(d.get("params") or {}, "model.params"))
        return cls(family, data, dataset, synth, params, d.get("name"))

    def to_dict(self):
        out = {"family": self.family}
        for key in ("data", "dataset", "name"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.synth:
            out["synth"] = dict(self.synth)
        if self.params:
            out["params"] = dict(self.params)
        return out

    @property
    def label(self):
        return self.name or self.dataset or (Path(self.data).stem if self.data else self.family)


SAMPLER_KEYS = ("method", "epsilon", "n_steps", "trajectory_length", "fp_tol", "fp_max",
                "fp_fixed", "tune", "calibrate_fp")


def _sampler_from_dict(d, where):
    d = dict(_require_mapping(d, where))
    _check_keys(d, SAMPLER_KEYS, where)
    if d.get("method") not in STEPPERS:
        raise ConfigError(f"{where}.method must be one of {sorted(STEPPERS)}")
    try:
        d["epsilon"] = float(d["epsilon"])
    except (KeyError, TypeError, ValueError):
        raise ConfigError(f"{where}.epsilon must be a number") from None
    if "n_steps" not in d and "trajectory_length" not in d:
        raise ConfigError(f"{where}: give n_steps or trajectory_length")
    if "trajectory_length" in d:
        d["trajectory_length"] = float(d["trajectory_length"])
    if "fp_tol" in d:
        d["fp_tol"] = float(d["fp_tol"])
    if "tune" in d:
        tune = dict(_require_mapping(d["tune"], f"{where}.tune"))
        _check_keys(tune, ("target", "n_iters", "n_rounds"), f"{where}.tune")
        d["tune"] = tune
    try:
        _spec_from(d, seed=0)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return d


def _spec_from(d, seed) -> SamplerSpec:
    kw = {k: d[k] for k in ("fp_tol", "fp_max", "fp_fixed") if k in d}
    if "trajectory_length" in d and "n_steps" not in d:
        return SamplerSpec.with_trajectory_length(d["method"], d["epsilon"],
                                                  d["trajectory_length"], seed=seed, **kw)
    return SamplerSpec(d["method"], d["epsilon"], int(d["n_steps"]), seed=seed, **kw)


@dataclass
class ExperimentConfig:
    """Parsed experiment description shared by ``sample`` and ``benchmark``.

    ``sample`` uses the first model and sampler; ``benchmark`` runs every
    model against every sampler.
    """

    models: list
    samplers: list
    n_iters: int
    burn_in: int = 0
    seed: int = 0
    out: str = "results"
    trace: bool = False
    workers: int = 1

    @classmethod
    def from_dict(cls, d, base_dir=None):
        d = _require_mapping(d, "config")
        _check_keys(d, ("model", "models", "sampler", "samplers", "n_iters", "burn_in", "seed",
                        "out", "trace", "workers"), "config")
        raw_models = d.get("models", [d["model"]] if "model" in d else [])
        raw_samplers = d.get("samplers", [d["sampler"]] if "sampler" in d else [])
        if not isinstance(raw_models, list) or not isinstance(raw_samplers, list):
            raise ConfigError("models and samplers must be lists")
        models = [ModelConfig.from_dict(m, base_dir) for m in raw_models]
        samplers = [_sampler_from_dict(s, f"samplers[{i}]") for i, s in enumerate(raw_samplers)]
        try:
            n_iters = int(d["n_iters"])
            burn_in = int(d.get("burn_in", 0))
            seed = int(d.get("seed", 0))
            workers = int(d.get("workers", 1))
        except KeyError:
            raise ConfigError("n_iters is required") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if not n_iters > burn_in >= 0:
            raise ConfigError("need n_iters > burn_in >= 0")
        if workers < 1:
            raise ConfigError("workers must be at least 1")
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        return cls(models, samplers, n_iters, burn_in, seed, str(d.get("out", "results")),
                   bool(d.get("trace", False)), workers)

    def to_dict(self):
        return {
            "models": [m.to_dict() for m in self.models],
            "samplers": [dict(s) for s in self.samplers],
            "n_iters": self.n_iters,
            "burn_in": self.burn_in,
            "seed": self.seed,
            "out": self.out,
            "trace": self.trace,
            "workers": self.workers,
        }


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    return ExperimentConfig.from_dict(raw, base_dir=path.parent)


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# model construction


def build_model(mc: ModelConfig):
    """Instantiate the target model described by ``mc``."""
    params = dict(mc.params)
    try:
        if mc.family == "gaussian":
            return standard_gaussian(int(params.get("dim", 2)))
        if mc.data is not None:
            data = load_dataset(mc.data, DATA_FORMAT[mc.family], name=mc.name)
        elif mc.dataset is not None:
            path = Path("data") / f"{mc.dataset}.csv"
            if not path.is_file():
                raise ConfigError(fetch_instructions(mc.dataset))
            data = load_dataset(path, "classification", name=mc.dataset)
        elif mc.family == "banana":
            data = synthesize_banana(**_synth_args(mc.synth, {"n": 100, "seed": 0}))
        elif mc.family == "gmm":
            data = synthesize_gmm(**_synth_args(mc.synth, {"name": "claw", "n": 100, "seed": 0}))
        else:
            data = synthesize_logreg(**_synth_args(mc.synth, {"n": 250, "dim": 2, "seed": 0}))
        if mc.family == "banana":
            return BananaModel(data.y, **params)
        if mc.family == "gmm":
            return GaussianMixtureModel(data.y, **params)
        return LogisticRegressionModel.from_dataset(data, **params)
    except TypeError as exc:
        raise ConfigError(f"model parameters: {exc}") from None
    except (ParseError, DimensionMismatch) as exc:
        raise ConfigError(str(exc)) from None


def _synth_args(synth, defaults):
    out = dict(defaults)
    out.update(synth)
    return out


# ---------------------------------------------------------------------------
# sample


def _write_samples(path, samples):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"theta_{j}" for j in range(samples.shape[1])])
        for row in samples:
            w.writerow([_fmt(x) for x in row])


def _write_trace(path, traces, dim, burn_in):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "step"] + [f"theta_{j}" for j in range(dim)])
        for i, path_i in enumerate(traces):
            for step, theta in enumerate(path_i):
                w.writerow([burn_in + i, step] + [_fmt(x) for x in theta])


def _prepare_spec(model, sd, seed):
    """Sampler spec for one run, with optional step-size tuning and fp calibration."""
    spec = _spec_from(sd, seed)
    tune = sd.get("tune")
    if tune:
        spec = tune_step_size(model, spec, target=float(tune.get("target", 0.75)),
                              trajectory_length=sd.get("trajectory_length"),
                              n_iters=int(tune.get("n_iters", 200)),
                              n_rounds=int(tune.get("n_rounds", 8)))
    if sd.get("calibrate_fp"):
        spec = calibrate_fixed_point(model, spec)
    return spec


def _summary_dict(result, spec):
    return {
        "method": spec.method,
        "epsilon": spec.epsilon,
        "n_steps": spec.n_steps,
        "fp_max": spec.fp_max,
        "fp_fixed": spec.fp_fixed,
        "acceptance_rate": result.acceptance_rate,
        "seconds_per_iteration": result.seconds_per_iteration,
        "ess": list(result.ess),
        "min_ess_per_second": result.min_ess_per_second,
        "n_diverged": result.n_diverged,
        "n_nonconverged": result.n_nonconverged,
        "n_negative_det": result.n_negative_det,
        "mean_fp_iters": result.mean_fp_iters,
    }


def cmd_sample(config: ExperimentConfig) -> int:
    if not config.models or not config.samplers:
        raise ConfigError("sample needs a model and a sampler")
    mc, sd = config.models[0], config.samplers[0]
    model = build_model(mc)
    spec = _prepare_spec(model, sd, config.seed)
    result = run_chain(model, spec, config.n_iters, config.burn_in, record_trace=config.trace)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_samples(out / "samples.csv", result.samples)
    summary = _summary_dict(result, spec)
    summary.update(seed=config.seed, model=mc.label, config=config.to_dict())
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if config.trace:
        _write_trace(out / "trace.csv", result.traces, model.dim, config.burn_in)
    print(f"{spec.label}: AP {result.acceptance_rate:.3f}, "
          f"ESS ({result.ess[0]:.0f},{result.ess[1]:.0f},{result.ess[2]:.0f}), "
          f"min ESS/s {result.min_ess_per_second:.3g}; wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# benchmark


@dataclass
class BenchmarkRow:
    data: str
    method: str
    acceptance_rate: float = float("nan")
    seconds_per_iteration: float = float("nan")
    ess: tuple = (float("nan"),) * 3
    min_ess_per_second: float = float("nan")
    epsilon: float = float("nan")
    n_steps: int = 0
    note: str = ""

    CSV_HEADER = ("data", "method", "epsilon", "n_steps", "AP", "s", "ess_min", "ess_median",
                  "ess_max", "min_ess_per_s", "note")

    def csv_fields(self):
        return [self.data, self.method, _fmt(self.epsilon), self.n_steps,
                _fmt(self.acceptance_rate), _fmt(self.seconds_per_iteration),
                *(_fmt(e) for e in self.ess), _fmt(self.min_ess_per_second), self.note]

    def table_fields(self):
        if self.note and np.isnan(self.acceptance_rate):
            return [self.data, METHOD_LABELS[self.method], "-", "-", "-", "-", self.note]
        ess = "({:.0f},{:.0f},{:.0f})".format(*self.ess)
        return [self.data, METHOD_LABELS[self.method], f"{self.acceptance_rate:.2f}",
                f"{self.seconds_per_iteration:.2e}", ess, f"{self.min_ess_per_second:.2f}",
                self.note]


def cell_seed(seed, index) -> int:
    """Independent per-cell seed derived from the experiment seed."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def _run_cell(args):
    mc, sd, seed, n_iters, burn_in = args
    label = mc.label
    try:
        model = build_model(mc)
        spec = _prepare_spec(model, sd, seed)
        res = run_chain(model, spec, n_iters, burn_in)
    except (ConfigError, ModelError, NotPositiveDefinite, ValueError, ArithmeticError) as exc:
        return BenchmarkRow(label, sd["method"], note=f"failed: {type(exc).__name__}: {exc}")
    note = []
    if res.n_diverged:
        note.append(f"{res.n_diverged} diverged")
    if res.n_nonconverged:
        note.append(f"{res.n_nonconverged} fp not converged")
    return BenchmarkRow(label, spec.method, res.acceptance_rate, res.seconds_per_iteration,
                        res.ess, res.min_ess_per_second, spec.epsilon, spec.n_steps,
                        "; ".join(note))


def format_table(rows) -> str:
    """Aligned text table in the column order Data, method, AP, s, ESS, min(ESS)/s."""
    header = ["Data", "Method", "AP", "s", "ESS", "min(ESS)/s", ""]
    body = [r.table_fields() for r in rows]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
    lines = []
    for fields in [header] + body:
        lines.append("  ".join(str(x).ljust(w) for x, w in zip(fields, widths)).rstrip())
    return "\n".join(lines) + "\n"


def cmd_benchmark(config: ExperimentConfig) -> int:
    cells = [(mc, sd) for mc in config.models for sd in config.samplers]
    if not cells:
        raise ConfigError("benchmark grid is empty")
    jobs = [(mc, sd, cell_seed(config.seed, i), config.n_iters, config.burn_in)
            for i, (mc, sd) in enumerate(cells)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_run_cell, jobs))
    else:
        rows = [_run_cell(j) for j in jobs]
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BenchmarkRow.CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_fields())
    (out / "benchmark.csv").write_text(buf.getvalue())
    table = format_table(rows)
    (out / "benchmark.txt").write_text(table)
    print(table, end="")
    return 0


# ---------------------------------------------------------------------------
# gen-data

GENERATORS = {
    "banana": (synthesize_banana, {"n": int, "mean": float, "sigma_y": float}),
    "gmm": (synthesize_gmm, {"name": str, "n": int}),
    "logreg": (synthesize_logreg, {"n": int, "dim": int, "alpha": float, "theta_scale": float}),
}


def _parse_params(items, family):
    if family not in GENERATORS:
        raise ConfigError(f"unknown family {family!r}; choose from {sorted(GENERATORS)}")
    types = GENERATORS[family][1]
    params = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or key not in types:
            raise ConfigError(f"bad parameter {item!r}; {family} accepts {sorted(types)}")
        try:
            params[key] = types[key](value)
        except ValueError:
            raise ConfigError(f"parameter {key} has invalid value {value!r}") from None
    return params


def cmd_gen_data(family, params, seed, out) -> int:
    """Write a synthetic dataset as CSV plus a ``.json`` metadata file next to it."""
    if family not in GENERATORS:
        raise ConfigError(f"unknown family {family!r}; choose from {sorted(GENERATORS)}")
    fn = GENERATORS[family][0]
    try:
        data = fn(seed=seed, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if family == "logreg":
            covariates = data.X[:, 1:]
            w.writerow([f"x{j}" for j in range(covariates.shape[1])] + ["y"])
            for row, label in zip(covariates, data.y):
                w.writerow([_fmt(x) for x in row] + [int(label)])
        else:
            w.writerow(["y"])
            for value in data.y:
                w.writerow([_fmt(value)])
    meta = {"family": family, "params": params, "seed": seed, "provenance": data.provenance}
    out.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {data.n} rows to {out}")
    return 0


# ---------------------------------------------------------------------------
# entry point


def _parser():
    p = argparse.ArgumentParser(prog="rmlmc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("sample", "run one chain"), ("benchmark", "run a method x data grid")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("config", help="YAML experiment file")
        s.add_argument("--seed", type=int)
        s.add_argument("--out")
        s.add_argument("--trace", action="store_true", default=None)
        s.add_argument("--workers", type=int)
    g = sub.add_parser("gen-data", help="write a synthetic dataset")
    g.add_argument("family", help=f"one of {sorted(GENERATORS)}")
    g.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    return p


def _apply_overrides(config, args):
    updates = {k: getattr(args, k) for k in ("seed", "out", "trace", "workers")
               if getattr(args, k) is not None}
    config = replace(config, **updates)
    # re-validate through the dict form so overrides obey the same rules
    return ExperimentConfig.from_dict(config.to_dict())


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "gen-data":
            return cmd_gen_data(args.family, _parse_params(args.param, args.family), args.seed,
                                args.out)
        config = _apply_overrides(load_config(args.config), args)
        return cmd_sample(config) if args.command == "sample" else cmd_benchmark(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ModelError, NotPositiveDefinite, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
