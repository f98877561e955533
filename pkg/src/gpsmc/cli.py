"""Command-line interface: ``gpsmc {sample,predict,compare,changepoint}``.

Every command resolves its JSON config into a fully explicit form, validates
it before touching the output directory, and writes that resolved config into
``manifest.json``. Passing a manifest back as ``--config`` reproduces the run.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
import argparse
import dataclasses
import logging
import os
import sys
import time

import numpy as np

from . import __version__, baselines, smc
from . import io as gio
from ._backend import kernels as _kern
from .changepoint import (BocpdDetector, HazardSpec, default_gp_prior, gp_segment_factory,
                          run_length_map, segment_bounds, threshold_segments)
from .compare import METHODS, compare_methods, matched_is_samples, run_method
from .errors import ConfigError, GpsmcError
from .gp import GpModel, KernelSpec, MeanSpec
from .prediction import mixture_predict
from .priors import prior_from_config, prior_to_config

log = logging.getLogger("gpsmc")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _default_prior(model):
    entries = []
    for name in model.param_names():
        if name == "log_noise_var":
            entries.append({"type": "gaussian_log", "mean": -2.0, "std": 1.0})
        elif name.startswith("mean_"):
            entries.append({"type": "gaussian_natural", "mean": 0.0, "std": 1.0})
        else:
            entries.append({"type": "gaussian_log", "mean": 0.0, "std": 1.0})
    return entries


def _smc_config(raw, preset):
    base = smc.PRESETS[preset] if preset else smc.PRESETS["default"]
    fields = {f.name for f in dataclasses.fields(smc.SmcConfig)}
    unknown = set(raw) - fields
    if unknown:
        raise ConfigError(f"unknown smc keys: {sorted(unknown)}")
    try:
        return dataclasses.replace(base, **raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid smc settings: {exc}") from exc


def load_config(path):
    try:
        raw = gio.read_json(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if raw.get("kind") == "manifest":
        raw = raw["config"]
    return raw


def resolve_config(raw, command, base_dir, seed=None, preset=None):
    """Fill defaults and make every setting explicit; validates along the way."""
    cfg = dict(raw)
    if "task" in cfg and cfg["task"] != command:
        raise ConfigError(f"config is for task {cfg['task']!r}, command is {command!r}")
    cfg["task"] = command
    if seed is not None:
        cfg["seed"] = int(seed)
    cfg["seed"] = int(cfg.get("seed", 0))
    if preset is not None:
        if preset not in smc.PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(smc.PRESETS)}")
        cfg["preset"] = preset
    preset = cfg.get("preset")
    if preset is not None and preset not in smc.PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    if command == "changepoint" and preset is None:
        preset = cfg["preset"] = "changepoint"
    smc_cfg = _smc_config(cfg.get("smc", {}), preset)
    smc_cfg = dataclasses.replace(smc_cfg, seed=cfg["seed"])
    cfg["smc"] = dataclasses.asdict(smc_cfg)

    data = dict(cfg.get("data") or {})
    if "path" not in data:
        raise ConfigError("config needs data.path")
    path = data["path"]
    if not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    if not os.path.exists(path):
        raise ConfigError(f"data file not found: {path}")
    data["path"] = os.path.abspath(path)
    cfg["data"] = data

    model = dict(cfg.get("model") or {})
    default_kernel = "se_iso" if command == "changepoint" else "se_ard"
    model.setdefault("kernel", default_kernel)
    model.setdefault("mean", "constant")
    cfg["model"] = model
    if command == "changepoint":
        cp = {"hazard": 0.02, "threshold": 0.5, "prune_threshold": 1e-6, "max_run_lengths": 500,
              "time_column": "time", "value_column": "value", "fit_stages": 10, "lag": 0}
        cp.update(cfg.get("changepoint") or {})
        cfg["changepoint"] = cp
    if command == "compare":
        cmp_ = {"methods": ["smc", "prior_is"], "runs": 15, "blocks": 1, "restarts": 1}
        cmp_.update(cfg.get("compare") or {})
        bad = [m for m in cmp_["methods"] if m not in METHODS]
        if bad or not cmp_["methods"]:
            raise ConfigError(f"compare.methods must be a non-empty subset of {METHODS}")
        if "grid" in cmp_["methods"] and "grid" not in cfg:
            raise ConfigError("compare method 'grid' needs a grid section")
        cfg["compare"] = cmp_
    cfg.setdefault("method", "smc")
    if cfg["method"] not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")
    if cfg["method"] == "grid" and "grid" not in cfg:
        raise ConfigError("method 'grid' needs a grid section")
    return cfg


def build_problem(cfg):
    """Dataset, model and prior from a resolved config (raises ConfigError)."""
    data_cfg = cfg["data"]
    if cfg["task"] == "changepoint":
        cp = cfg["changepoint"]
        dataset = gio.ingest_csv(data_cfg["path"], [cp["time_column"]], cp["value_column"])
    else:
        dataset = gio.ingest_csv(data_cfg["path"], data_cfg.get("inputs"), data_cfg.get("output"))
    d = dataset.input_dim
    try:
        model = GpModel(KernelSpec(cfg["model"]["kernel"], d), MeanSpec(cfg["model"]["mean"], d), dataset)
    except GpsmcError as exc:
        raise ConfigError(str(exc)) from exc
    if "prior" not in cfg:
        if cfg["task"] == "changepoint" and cfg["model"] == {"kernel": "se_iso", "mean": "constant"}:
            cfg["prior"] = prior_to_config(default_gp_prior())
        else:
            cfg["prior"] = _default_prior(model)
    prior = prior_from_config(cfg["prior"])
    prior.check_model(model)
    return dataset, model, prior


def _query_points(cfg, dataset):
    q = cfg.get("query")
    d = dataset.input_dim
    if q is None:
        if d != 1:
            raise ConfigError("query points are required for multi-dimensional inputs")
        lo, hi = dataset.X.min(), dataset.X.max()
        pad = 0.1 * (hi - lo if hi > lo else 1.0)
        q = {"lo": [lo - pad], "hi": [hi + pad], "count": 100}
        cfg["query"] = q
    if "points" in q:
        pts = np.asarray(q["points"], dtype=float).reshape(-1, d)
    elif "path" in q:
        _, pts = gio.read_csv(q["path"])
        pts = pts.reshape(-1, d)
    else:
        if len(q["lo"]) != d or len(q["hi"]) != d:
            raise ConfigError("query lo/hi must have one entry per input dimension")
        t = np.linspace(0.0, 1.0, int(q["count"]))[:, None]
        pts = np.asarray(q["lo"], dtype=float) + t * (np.asarray(q["hi"]) - np.asarray(q["lo"]))
    return pts


def _grid(cfg):
    g = cfg.get("grid")
    if g is None:
        return None
    return baselines.GridSpec(tuple(tuple(a) for a in g["axes"]))


def _sample(cfg, model, prior, rng):
    smc_cfg = smc.SmcConfig(**cfg["smc"])
    method = cfg["method"]
    samples = run_method(method, model, prior, smc_cfg, rng, cfg.get("is_samples"), _grid(cfg),
                         int(cfg.get("restarts", 1)))
    if method == "smc":
        doc = gio.particle_system_to_dict(samples, model, cfg["smc"])
    elif method == "point":
        doc = gio.point_estimate_to_dict(samples, model)
    else:
        doc = gio.weighted_samples_to_dict(samples, model)
    budget = {
        "method": method,
        "eval_counter": int(getattr(samples, "eval_counter", 0)),
        "n_particles": smc_cfg.n_particles,
        "n_stages": smc_cfg.n_stages,
        "n_moves": smc_cfg.n_moves,
        "bound_2NPK_plus_NP": smc_cfg.eval_bound,
        "lower_bound_NP": smc_cfg.n_particles * smc_cfg.n_stages,
    }
    return samples, doc, budget


def cmd_sample(cfg, out):
    dataset, model, prior = build_problem(cfg)
    os.makedirs(out, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 0]))
    _, doc, budget = _sample(cfg, model, prior, rng)
    gio.write_json(os.path.join(out, "samples.json"), doc)
    gio.write_json(os.path.join(out, "budget.json"), budget)
    return ["samples.json", "budget.json"]


def cmd_predict(cfg, out):
    dataset, model, prior = build_problem(cfg)
    Xstar = _query_points(cfg, dataset)
    outputs = []
    os.makedirs(out, exist_ok=True)
    if cfg.get("samples"):
        samples = gio.samples_from_dict(gio.read_json(cfg["samples"]))
    else:
        rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 0]))
        samples, doc, budget = _sample(cfg, model, prior, rng)
        gio.write_json(os.path.join(out, "samples.json"), doc)
        gio.write_json(os.path.join(out, "budget.json"), budget)
        outputs += ["samples.json", "budget.json"]
    mix = mixture_predict(samples, model, Xstar)
    gio.write_mixture_csv(os.path.join(out, "predictive.csv"), Xstar, mix,
                          components=bool(cfg.get("components", False)))
    return outputs + ["predictive.csv"]


def cmd_compare(cfg, out):
    dataset, model, prior = build_problem(cfg)
    Xstar = _query_points(cfg, dataset)
    c = cfg["compare"]
    smc_cfg = smc.SmcConfig(**cfg["smc"])
    is_samples = cfg.get("is_samples") or matched_is_samples(smc_cfg)
    os.makedirs(out, exist_ok=True)
    res = compare_methods(model, prior, Xstar, c["methods"], smc_cfg, runs=int(c["runs"]),
                          blocks=int(c["blocks"]), seed=cfg["seed"], is_samples=is_samples,
                          grid=_grid(cfg), restarts=int(c["restarts"]))
    outputs = []
    report = {"runs": int(c["runs"]), "blocks": int(c["blocks"]), "is_samples": int(is_samples), "methods": {}}
    d = Xstar.shape[1]
    for method, r in res.items():
        B, R, m = r["curves"].shape
        header = [f"x{k}" for k in range(d)] + [f"block{b}_run{i}" for b in range(B) for i in range(R)]
        rows = np.hstack([Xstar, r["curves"].reshape(B * R, m).T])
        name = f"curves_{method}.csv"
        gio.write_csv(os.path.join(out, name), header, rows)
        outputs.append(name)
        report["methods"][method] = {
            "dispersion_per_block": r["dispersion"].tolist(),
            "mean_dispersion": float(r["dispersion"].mean()),
            "mean_eval_counter": float(r["evals"].mean()),
        }
    if "smc" in res and "prior_is" in res:
        wins = int(np.sum(res["smc"]["dispersion"] <= res["prior_is"]["dispersion"]))
        report["smc_le_prior_is_blocks"] = wins
    gio.write_json(os.path.join(out, "dispersion.json"), report)
    return outputs + ["dispersion.json"]


def cmd_changepoint(cfg, out):
    dataset, model, prior = build_problem(cfg)
    if dataset.input_dim != 1:
        raise ConfigError("changepoint needs a univariate series with one time column")
    cp = cfg["changepoint"]
    try:
        hazard = HazardSpec(float(cp["hazard"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not 0.0 < float(cp["threshold"]) < 1.0:
        raise ConfigError("changepoint.threshold must lie in (0, 1)")
    if int(cp["lag"]) < 0:
        raise ConfigError("changepoint.lag must be non-negative")
    smc_cfg = smc.SmcConfig(**cfg["smc"])
    os.makedirs(out, exist_ok=True)
    factory = gp_segment_factory(smc_cfg, cfg["seed"], model.kernel, model.mean, prior)
    det = BocpdDetector(factory, hazard, float(cp["prune_threshold"]), int(cp["max_run_lengths"]))
    post = det.run(dataset.X, dataset.y)
    M, cp_prob = run_length_map(post)
    T = dataset.n
    times = dataset.X[:, 0]
    gio.write_csv(os.path.join(out, "run_length_matrix.csv"),
                  ["time"] + [f"r{r}" for r in range(1, T + 1)], np.column_stack([times, M]))
    gio.write_csv(os.path.join(out, "changepoint_probability.csv"), ["time", "probability"],
                  np.column_stack([times, cp_prob]))
    change_points = threshold_segments(post, float(cp["threshold"]), int(cp["lag"]))
    bounds = segment_bounds(change_points, T)
    segments = []
    rows = []
    for k, (a, b) in enumerate(bounds):
        seg_model = model.subset(np.arange(a, b))
        fit_cfg = dataclasses.replace(smc_cfg, n_stages=max(1, min(int(cp["fit_stages"]), b - a)))
        rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 1, k]))
        ps = smc.run(fit_cfg, smc.TemperingSequence.from_config(seg_model, prior, fit_cfg, rng), rng)
        mean, var = mixture_predict(ps, seg_model, dataset.X[a:b]).moments()
        for i in range(b - a):
            rows.append([times[a + i], k, mean[i], np.sqrt(var[i])])
        segments.append({"segment": k, "start_index": a, "stop_index": b,
                         "start_time": float(times[a]), "end_time": float(times[b - 1]),
                         "posterior_mean_theta": ps.mean().tolist()})
    gio.write_csv(os.path.join(out, "segment_predictive.csv"), ["time", "segment", "mean", "std"], rows)
    gio.write_json(os.path.join(out, "segments.json"), {
        "threshold": float(cp["threshold"]),
        "lag": int(cp["lag"]),
        "change_point_steps": change_points,
        "change_point_times": [float(times[c - 1]) for c in change_points],
        "segments": segments,
    })
    return ["run_length_matrix.csv", "changepoint_probability.csv", "segment_predictive.csv", "segments.json"]


COMMANDS = {"sample": cmd_sample, "predict": cmd_predict, "compare": cmd_compare,
            "changepoint": cmd_changepoint}


def write_manifest(out, command, cfg, outputs, wall_time):
    gio.write_json(os.path.join(out, "manifest.json"), {
        "kind": "manifest",
        "command": command,
        "config": cfg,
        "config_hash": gio.config_hash(cfg),
        "seed": cfg["seed"],
        "version": __version__,
        "backend": _kern.NAME,
        "outputs": outputs,
        "wall_time_s": wall_time,
    })


def run_command(command, config_path, out, seed=None, preset=None):
    raw = load_config(config_path)
    base = os.path.dirname(os.path.abspath(config_path))
    cfg = resolve_config(raw, command, base, seed, preset)
    # validate everything that can be checked before any output exists
    dataset, model, _ = build_problem(cfg)
    if command in ("predict", "compare"):
        _query_points(cfg, dataset)
    t0 = time.perf_counter()
    outputs = COMMANDS[command](cfg, out)
    write_manifest(out, command, cfg, outputs, time.perf_counter() - t0)
    return outputs


def build_parser():
    p = argparse.ArgumentParser(prog="gpsmc", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON config or a previous run's manifest.json")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--preset", default=None, help=f"SMC preset: {', '.join(sorted(smc.PRESETS))}")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        outputs = run_command(args.command, args.config, args.out, args.seed, args.preset)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GpsmcError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    log.info("wrote %s to %s", ", ".join(outputs), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
