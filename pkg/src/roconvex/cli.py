"""Command-line experiment harness.

Subcommands: point, surface, convergence, material-path, microstructure,
validate-config. Each run is described by a single JSON config document;
CLI flags override config fields. Results are written as CSV plus a JSON
metadata sidecar carrying the config, its hash and the library version.

Exit codes: 0 success, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import jsonschema

import roconvex
from roconvex.directions import ConvexifyParams
from roconvex.energies import InadmissibleDeformation, make_energy
from roconvex.engine import DirectionMemory, relax, rotational_average
from roconvex import microstructure, tree

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(Exception):
    pass


_MODEL_PARAM_SCHEMAS = {
    "ksd": {"type": "object", "additionalProperties": False, "properties": {}},
    "multiwell": {
        "type": "object", "additionalProperties": False,
        "properties": {"dim": {"type": "integer", "enum": [2, 3]}},
    },
    "fail": {"type": "object", "additionalProperties": False, "properties": {}},
}
_damage_params = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "dim": {"type": "integer", "enum": [2, 3]},
        "mu": {"type": "number"},
        "lambda": {"type": "number"},
        "D0": {"type": "number"},
        "Dinf": {"type": "number"},
        "alpha_k": {"type": "number"},
        "F_k": {"type": "array"},
    },
}
_MODEL_PARAM_SCHEMAS["damage-nh1"] = _damage_params
_MODEL_PARAM_SCHEMAS["damage-nh2"] = _damage_params

_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}

_EXPERIMENT_SCHEMAS = {
    "point": {
        "type": "object", "additionalProperties": False,
        "properties": {"F": _MATRIX},
        "required": ["F"],
    },
    "surface": {
        "type": "object", "additionalProperties": False,
        "properties": {
            "axes": {"type": "array", "minItems": 2, "maxItems": 2,
                     "items": {"type": "array", "minItems": 2, "maxItems": 2,
                               "items": {"type": "integer", "minimum": 0, "maximum": 2}}},
            "base_F": _MATRIX,
            "delta": {"type": "number", "exclusiveMinimum": 0},
            "extent": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["axes", "delta", "extent"],
    },
    "convergence": {
        "type": "object", "additionalProperties": False,
        "properties": {
            "F": _MATRIX,
            "N_values": {"type": "array", "minItems": 1,
                         "items": {"type": "integer", "minimum": 2}},
            "repetitions": {"type": "integer", "minimum": 1},
        },
        "required": ["F", "N_values"],
    },
    "material-path": {
        "type": "object", "additionalProperties": False,
        "properties": {
            "t_max": {"type": "number", "exclusiveMinimum": 1},
            "dt": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["t_max", "dt"],
    },
    "microstructure": {
        "type": "object", "additionalProperties": False,
        "properties": {
            "t": {"type": "number"},
            "F": _MATRIX,
            "grid_m": {"type": "integer", "minimum": 4},
            "epsilon": {"type": "number", "exclusiveMinimum": 0},
            "level_ratio": {"type": "number", "exclusiveMinimum": 1},
        },
        "required": ["grid_m", "epsilon"],
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "name": {"type": "string", "enum": sorted(_MODEL_PARAM_SCHEMAS)},
                "params": {"type": "object"},
            },
            "required": ["name"],
        },
        "convexify": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "N": {"type": "integer", "minimum": 2},
                "r": {"type": "number", "exclusiveMinimum": 0},
                "k_max": {"type": "integer", "minimum": 1},
            },
            "required": ["N", "r"],
        },
        "experiment": {"type": "object"},
        "n_rot": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "threads": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
    },
    "required": ["model", "convexify"],
}


def load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc


def validate_config(config, command=None):
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
        name = config["model"]["name"]
        jsonschema.validate(config["model"].get("params", {}),
                            _MODEL_PARAM_SCHEMAS[name])
        if command is not None and command != "validate-config":
            exp = config.get("experiment")
            if exp is None:
                raise ConfigError(f"command {command!r} needs an 'experiment' block")
            jsonschema.validate(exp, _EXPERIMENT_SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field {path}: {exc.message}") from exc
    return config


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def build_params(config):
    c = config["convexify"]
    return ConvexifyParams(N=int(c["N"]), r=float(c["r"]),
                           k_max=int(c.get("k_max", 10)))


def build_model(config):
    m = config["model"]
    return make_energy(m["name"], m.get("params", {}))


def _metadata(config):
    return {
        "config": config,
        "config_hash": config_hash(config),
        "version": roconvex.__version__,
        "backend": roconvex.BACKEND,
        # Conventions not fixed by the method itself:
        "bounding_box": {"center": "root deformation gradient",
                         "norm": "componentwise (infinity)"},
        "microstructure_scales": "per-level oscillation eps / level_ratio**level",
    }


def _write_sidecar(out_path, config, extra=None):
    meta = _metadata(config)
    if extra:
        meta.update(extra)
    side = Path(str(out_path) + ".meta.json")
    side.write_text(json.dumps(meta, indent=2, default=_jsonable), encoding="utf-8")
    return side


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _out_dir(config):
    out = Path(config.get("out", "results"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _rel_error(value, reference, eps=1e-12):
    return abs(value - reference) / max(abs(reference), eps)


# -- point --------------------------------------------------------------

def cmd_point(config):
    model = build_model(config)
    params = build_params(config)
    F = np.asarray(config["experiment"]["F"], dtype=float)
    t0 = time.perf_counter()
    res = relax(model, F, params)
    elapsed = time.perf_counter() - t0
    ref = model.envelope(F)
    record = {
        "config_hash": config_hash(config),
        "F": F.tolist(),
        "W": res.unrelaxed,
        "W_relaxed": res.value,
        "W_envelope_analytic": ref,
        "error_vs_analytic": None if ref is None else abs(res.value - ref),
        "envelope_attained": (None if ref is None
                              else bool(abs(res.value - ref) <= 1e-6 * (1 + abs(ref)))),
        "stress": res.stress.tolist(),
        "tangent": None if res.tangent is None else res.tangent.tolist(),
        "tree": tree.to_dict(res.tree),
        "tree_depth": res.depth,
        "leaf_count": res.n_leaves,
        "seconds": elapsed,
    }
    out = _out_dir(config) / "point.json"
    out.write_text(json.dumps(record, indent=2), encoding="utf-8")
    _write_sidecar(out, config)
    print(f"W = {res.unrelaxed:.9g}  relaxed = {res.value:.9g}  "
          f"leaves = {res.n_leaves}  ({elapsed:.3f} s) -> {out}")
    return out


# -- surface ------------------------------------------------------------

def _surface_grid(config, dim):
    exp = config["experiment"]
    delta = float(exp["delta"])
    extent = float(exp["extent"])
    ticks = np.arange(-extent, extent + 0.5 * delta, delta)
    base = np.asarray(exp.get("base_F", np.zeros((dim, dim))), dtype=float)
    (i1, j1), (i2, j2) = exp["axes"]
    return ticks, base, (i1, j1), (i2, j2)


def _surface_chunk(args):
    config, chunk_id, indices = args
    model = build_model(config)
    params = build_params(config)
    dim = model.dim
    ticks, base, ax1, ax2 = _surface_grid(config, dim)
    rows = []
    for flat in indices:
        i, j = divmod(flat, len(ticks))
        F = base.copy()
        F[ax1] = ticks[i]
        F[ax2] = ticks[j]
        res = relax(model, F, params, want_tangent=False)
        ref = model.envelope(F)
        rows.append((i, j, ticks[i], ticks[j], res.unrelaxed, res.value,
                     math.nan if ref is None else ref,
                     math.nan if ref is None else _rel_error(res.value, ref)))
    return chunk_id, rows


def cmd_surface(config):
    model = build_model(config)
    ticks, _, _, _ = _surface_grid(config, model.dim)
    n = len(ticks) ** 2
    threads = int(config.get("threads", 1))
    chunks = max(threads * 4, 1)
    index_chunks = np.array_split(np.arange(n), chunks)
    jobs = [(config, k, idx.tolist()) for k, idx in enumerate(index_chunks)
            if len(idx)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_surface_chunk, jobs))
    else:
        results = [_surface_chunk(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    rows = [row for _, chunk in results for row in chunk]

    chash = config_hash(config)
    errors = [r[-1] for r in rows if not math.isnan(r[-1])]
    max_err = max(errors) if errors else math.nan
    out = _out_dir(config) / "surface.csv"
    with out.open("w", newline="", encoding="utf-8") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["row_kind", "i", "j", "c1", "c2", "W", "W_relaxed",
                      "W_envelope_analytic", "rel_error", "config_hash"])
        for r in rows:
            wtr.writerow(["node", *r, chash])
        wtr.writerow(["summary", -1, -1, math.nan, math.nan, math.nan,
                      math.nan, math.nan, max_err, chash])
    _write_sidecar(out, config, {"grid_nodes": n, "max_rel_error": max_err})
    print(f"surface: {n} nodes, max relative error {max_err:.4g} -> {out}")
    return out


# -- convergence --------------------------------------------------------

def cmd_convergence(config):
    model = build_model(config)
    exp = config["experiment"]
    F = np.asarray(exp["F"], dtype=float)
    reps = int(exp.get("repetitions", 5))
    base = config["convexify"]
    ref = model.envelope(F)
    chash = config_hash(config)
    rows = []
    for N in exp["N_values"]:
        params = ConvexifyParams(N=int(N), r=float(base["r"]),
                                 k_max=int(base.get("k_max", 10)))
        relax(model, F, params, want_tangent=False)  # warm-up
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            res = relax(model, F, params, want_tangent=False)
            times.append(time.perf_counter() - t0)
        err = math.nan if ref is None else abs(res.value - ref)
        rows.append((N, res.value, err, float(np.median(times)), chash))
    out = _out_dir(config) / "convergence.csv"
    with out.open("w", newline="", encoding="utf-8") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["N", "W_relaxed", "error_vs_analytic",
                      "median_seconds", "config_hash"])
        wtr.writerows(rows)
    if len(rows) >= 2:
        logn = np.log([r[0] for r in rows])
        logt = np.log([r[3] for r in rows])
        slope = float(np.polyfit(logn, logt, 1)[0])
    else:
        slope = math.nan
    _write_sidecar(out, config, {"time_scaling_exponent": slope})
    print(f"convergence: {len(rows)} N values, time-scaling exponent "
          f"{slope:.3f} -> {out}")
    return out


# -- material path ------------------------------------------------------

def _path_gradient(t, dim):
    return np.eye(dim) * t


def cmd_material_path(config):
    model = build_model(config)
    if model.dim != 2:
        raise ConfigError("material-path drives the two-dimensional biaxial path")
    params = build_params(config)
    exp = config["experiment"]
    n_rot = int(config.get("n_rot", 16))
    dt = float(exp["dt"])
    t_max = float(exp["t_max"])
    ts = np.arange(1.0, t_max + 0.5 * dt, dt)
    memory = DirectionMemory()
    chash = config_hash(config)
    rows = []
    for t in ts:
        F = _path_gradient(float(t), 2)
        res = relax(model, F, params, memory=memory, point_id="path",
                    want_tangent=False)
        p_rot, w_avg = rotational_average(model, F, params, n_rot=n_rot,
                                          memory=memory, point_id="path")
        alpha_new = model.update(F)[0] if hasattr(model, "update") else math.nan
        rows.append((float(t), res.unrelaxed, res.value, w_avg,
                     res.stress[0, 0], res.stress[1, 1],
                     p_rot[0, 0], p_rot[1, 1], alpha_new,
                     res.depth, res.n_leaves, chash))
    out = _out_dir(config) / "material_path.csv"
    with out.open("w", newline="", encoding="utf-8") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["t", "W", "W_relaxed", "W_relaxed_rot", "P11", "P22",
                      "P11_rot", "P22_rot", "alpha", "tree_depth",
                      "leaf_count", "config_hash"])
        wtr.writerows(rows)
    _write_sidecar(out, config, {"n_rot": n_rot, "samples": len(rows)})
    print(f"material-path: {len(rows)} increments -> {out}")
    return out


# -- microstructure -----------------------------------------------------

def cmd_microstructure(config):
    model = build_model(config)
    params = build_params(config)
    exp = config["experiment"]
    if "F" in exp:
        F = np.asarray(exp["F"], dtype=float)
    elif "t" in exp:
        F = _path_gradient(float(exp["t"]), model.dim)
    else:
        raise ConfigError("microstructure needs either 't' or 'F'")
    m = int(exp["grid_m"])
    eps = float(exp["epsilon"])
    ratio = float(exp.get("level_ratio", 8.0))

    res = relax(model, F, params, want_tangent=False)
    proj = microstructure.project(res.tree, m, eps, level_ratio=ratio)
    out_dir = _out_dir(config)
    chash = config_hash(config)

    tree_path = out_dir / "tree.json"
    tree_path.write_text(tree.to_json(res.tree, indent=2), encoding="utf-8")

    centers = microstructure.cell_centers(m, model.dim)
    idx, table = microstructure.leaf_assignment(res.tree, centers, eps, ratio)
    coeff_path = out_dir / "coefficient.csv"
    with coeff_path.open("w", newline="", encoding="utf-8") as fh:
        wtr = csv.writer(fh)
        comp_names = [f"F{i+1}{j+1}" for i in range(model.dim)
                      for j in range(model.dim)]
        wtr.writerow([f"x{k+1}" for k in range(model.dim)]
                     + ["leaf"] + comp_names + ["config_hash"])
        for point, leaf in zip(centers, idx):
            wtr.writerow([*point, int(leaf), *table[leaf].ravel(), chash])

    nodes = microstructure.node_coordinates(m, model.dim)
    u_flat = proj.u.reshape(-1, model.dim)
    disp_path = out_dir / "displacement.csv"
    with disp_path.open("w", newline="", encoding="utf-8") as fh:
        wtr = csv.writer(fh)
        wtr.writerow([f"x{k+1}" for k in range(model.dim)]
                     + [f"u{k+1}" for k in range(model.dim)] + ["config_hash"])
        for point, u in zip(nodes, u_flat):
            wtr.writerow([*point, *u, chash])

    fractions = np.bincount(idx, minlength=len(table)) / len(idx)
    _write_sidecar(coeff_path, config, {
        "W_relaxed": res.value,
        "tree_depth": res.depth,
        "leaf_count": res.n_leaves,
        "epsilon": eps,
        "level_ratio": ratio,
        "grid_m": m,
        "mean_gradient": proj.mean_gradient,
        "projection_residual": proj.residual,
        "projection_iterations": proj.iterations,
        "leaf_fractions_tree": [xi for xi, _ in res.pairs],
        "leaf_fractions_grid": fractions,
    })
    print(f"microstructure: {res.n_leaves} phases, projection residual "
          f"{proj.residual:.2e} -> {out_dir}")
    return coeff_path


def cmd_validate_config(config):
    print("config OK")
    return None


_COMMANDS = {
    "point": cmd_point,
    "surface": cmd_surface,
    "convergence": cmd_convergence,
    "material-path": cmd_material_path,
    "microstructure": cmd_microstructure,
    "validate-config": cmd_validate_config,
}


def apply_overrides(config, args):
    if args.model is not None:
        config.setdefault("model", {})["name"] = args.model
    if args.N is not None:
        config.setdefault("convexify", {})["N"] = args.N
    if args.r is not None:
        config.setdefault("convexify", {})["r"] = args.r
    if args.kmax is not None:
        config.setdefault("convexify", {})["k_max"] = args.kmax
    if args.nrot is not None:
        config["n_rot"] = args.nrot
    if args.out is not None:
        config["out"] = args.out
    if args.threads is not None:
        config["threads"] = args.threads
    return config


def make_parser():
    parser = argparse.ArgumentParser(
        prog="roconvex",
        description="Rank-one convexification experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config document")
        p.add_argument("--model", choices=sorted(_MODEL_PARAM_SCHEMAS))
        p.add_argument("--N", type=int)
        p.add_argument("--r", type=float)
        p.add_argument("--kmax", type=int)
        p.add_argument("--nrot", type=int)
        p.add_argument("--out")
        p.add_argument("--threads", type=int)
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        config = apply_overrides(config, args)
        validate_config(config, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        _COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, InadmissibleDeformation, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
