"""Dataset ingestion and result serialization (JSON documents, CSV tables).

Floats are written with ``repr`` so every table and document round-trips
exactly. All writers are atomic: temp file in the target directory, then rename.
"""
import csv
import hashlib
import io as _io
import json
import math
import os
import tempfile

import numpy as np

from .baselines import PointEstimate, WeightedSamples
from .errors import ConfigError
from .gp import Dataset
from .smc import ParticleSystem


def atomic_write_text(path, text):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path, obj):
    atomic_write_text(path, dumps(obj))


def read_json(path):
    with open(path) as f:
        return json.load(f)


def config_hash(config):
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(path, header, rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_csv(path):
    """Header plus a float array of the rows."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ConfigError(f"{path}: empty file")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return rows[0], data.reshape(len(rows) - 1, len(rows[0]))


def ingest_csv(path, inputs=None, output=None):
    """Load a headed numeric CSV as a :class:`Dataset`.

    ``inputs`` / ``output`` name columns; by default the last column is the
    target and all others are inputs. Row order is preserved.
    """
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r]
    if not rows:
        raise ConfigError(f"{path}: empty dataset (no header)")
    header = [h.strip() for h in rows[0]]
    if len(rows) == 1:
        raise ConfigError(f"{path}: empty dataset")
    if output is None:
        output = header[-1]
    if inputs is None:
        inputs = [h for h in header if h != output]
    cols = list(inputs) + [output]
    missing = [c for c in cols if c not in header]
    if missing:
        raise ConfigError(f"{path}: columns not found: {missing}")
    pos = [header.index(c) for c in cols]
    data = np.empty((len(rows) - 1, len(cols)))
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != len(header):
            raise ConfigError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
        for j, p in enumerate(pos):
            cell = row[p].strip()
            try:
                v = float(cell)
            except ValueError:
                raise ConfigError(f"{path}: line {line}, column {cols[j]!r}: cannot parse {cell!r}") from None
            if not math.isfinite(v):
                raise ConfigError(f"{path}: line {line}, column {cols[j]!r}: missing or non-finite value {cell!r}")
            data[i, j] = v
    return Dataset(data[:, :-1], data[:, -1])


# -- particle systems and weighted samples ----------------------------------


def particle_system_to_dict(ps, model, config=None):
    nat = model.to_natural(ps.particles)
    return {
        "kind": "particle_system",
        "config": config,
        "stage": ps.stage,
        "batches": [b.tolist() for b in ps.batches],
        "param_names": model.param_names(),
        "log_mask": model.log_mask.tolist(),
        "particles": [{"log": p.tolist(), "natural": q.tolist()} for p, q in zip(ps.particles, nat)],
        "weights": ps.weights.tolist(),
        "log_weights": ps.log_weights.tolist(),
        "log_prior": ps.log_prior.tolist(),
        "log_likelihood": ps.log_lik.tolist(),
        "proposal_scale": ps.proposal_scale.tolist(),
        "scale_factor": ps.scale_factor,
        "free_mask": ps.free_mask.tolist(),
        "eval_counter": ps.eval_counter,
        "acceptance_history": ps.acceptance,
        "resampled": ps.resampled,
    }


def particle_system_from_dict(d):
    if d.get("kind") != "particle_system":
        raise ConfigError("not a particle-system document")
    return ParticleSystem(
        particles=np.array([p["log"] for p in d["particles"]], dtype=float),
        log_weights=np.array(d["log_weights"], dtype=float),
        log_prior=np.array(d["log_prior"], dtype=float),
        log_lik=np.array(d["log_likelihood"], dtype=float),
        stage=int(d["stage"]),
        batches=[np.array(b, dtype=np.int64) for b in d["batches"]],
        proposal_scale=np.array(d["proposal_scale"], dtype=float),
        scale_factor=float(d["scale_factor"]),
        free_mask=np.array(d["free_mask"], dtype=bool),
        eval_counter=int(d["eval_counter"]),
        acceptance=list(d["acceptance_history"]),
        resampled=list(d["resampled"]),
    )


def weighted_samples_to_dict(ws, model):
    nat = model.to_natural(ws.thetas)
    return {
        "kind": "weighted_samples",
        "method": ws.method,
        "param_names": model.param_names(),
        "log_mask": model.log_mask.tolist(),
        "particles": [{"log": p.tolist(), "natural": q.tolist()} for p, q in zip(ws.thetas, nat)],
        "weights": ws.weights.tolist(),
        "log_weights": ws.log_weights.tolist(),
        "eval_counter": ws.eval_counter,
    }


def point_estimate_to_dict(pe, model):
    return {
        "kind": "point_estimate",
        "param_names": model.param_names(),
        "theta": pe.theta.tolist(),
        "natural": model.to_natural(pe.theta).tolist(),
        "log_likelihood": pe.log_likelihood,
        "n_restarts_used": pe.n_restarts_used,
        "converged": pe.converged,
        "trace": pe.trace,
    }


def samples_from_dict(d):
    """Any sample document back to an object with ``thetas`` and ``weights``."""
    kind = d.get("kind")
    if kind == "particle_system":
        return particle_system_from_dict(d)
    if kind == "weighted_samples":
        return WeightedSamples(
            np.array([p["log"] for p in d["particles"]], dtype=float),
            np.array(d["log_weights"], dtype=float),
            d.get("method", ""),
            int(d.get("eval_counter", 0)),
        )
    if kind == "point_estimate":
        return PointEstimate(np.array(d["theta"], dtype=float), float(d["log_likelihood"]),
                             int(d["n_restarts_used"]), bool(d["converged"]), d.get("trace", []))
    raise ConfigError(f"unknown sample document kind {kind!r}")


def write_mixture_csv(path, Xstar, mix, components=False):
    """Query inputs, mixture mean and std, optionally per-component columns."""
    mean, var = mix.moments()
    Xstar = np.atleast_2d(Xstar)
    d = Xstar.shape[1]
    header = [f"x{k}" for k in range(d)] + ["mean", "std"]
    cols = [Xstar, mean[:, None], np.sqrt(var)[:, None]]
    if components:
        n = mix.n_components
        header += [f"mean_{i}" for i in range(n)] + [f"std_{i}" for i in range(n)]
        cols += [mix.means.T, np.sqrt(mix.variances).T]
    write_csv(path, header, np.hstack(cols))
