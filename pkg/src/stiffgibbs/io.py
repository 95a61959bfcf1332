"""File formats and run manifests.

JSON carries structured inputs (model, dataset, benchmark spec, ground truth,
config sidecars); CSV carries large sample tables (chains, paired samples,
damage curves).  Floats are serialized with Python's shortest round-trip
representation, so every writer/reader pair reproduces values bit-exactly.

Matrices are stored as nested row-major JSON arrays with explicit dimensions
implied by the nesting; DOF indices in files are 1-based.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__ as _version
from .bench import BenchmarkSpec, GroundTruth
from .conditionals_exact import FixedPoint
from .damage import DamageCurves, PairedSamples
from .engine import Chain, GibbsConfig
from .errors import InputError
from .model import ModalDataset, StructuralModel


def _require(obj: dict, field: str, path: str):
    if field not in obj:
        raise InputError(f"{path}: missing required field '{field}'")
    return obj[field]


def _as_float_list(arr) -> list:
    return [float(v) for v in np.asarray(arr, dtype=float).reshape(-1)]


def _matrix(arr) -> list:
    return [[float(v) for v in row] for row in np.asarray(arr, dtype=float)]


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc})") from exc


# ---------------------------------------------------------------------------
# Structural model
# ---------------------------------------------------------------------------

def save_model(path, model: StructuralModel):
    _write_json(path, {
        "n_dof": model.n_dof,
        "mass": _matrix(model.mass),
        "k0": _matrix(model.k0),
        "substructures": [_matrix(k) for k in model.substructures],
        "labels": list(model.substructure_labels()),
    })


def load_model(path) -> StructuralModel:
    raw = _read_json(path)
    n = int(_require(raw, "n_dof", str(path)))
    mass = np.asarray(_require(raw, "mass", str(path)), dtype=float)
    k0 = np.asarray(_require(raw, "k0", str(path)), dtype=float)
    subs = np.asarray(_require(raw, "substructures", str(path)), dtype=float)
    if mass.shape != (n, n):
        raise InputError(f"{path}: mass must be {n}x{n}")
    labels = raw.get("labels")
    return StructuralModel(mass=mass, k0=k0, substructures=subs,
                           labels=tuple(labels) if labels else None)


# ---------------------------------------------------------------------------
# Modal dataset
# ---------------------------------------------------------------------------

def save_dataset(path, data: ModalDataset):
    payload = {
        "n_modes": data.n_modes,
        "n_segments": data.n_segments,
        "observed_dofs": list(data.observed_dofs),
        "freq_sq": _as_float_list(data.freq_sq),
        "mode_shapes": _as_float_list(data.mode_shapes),
    }
    if data.theta_hat is not None:
        payload["theta_hat"] = _as_float_list(data.theta_hat)
    _write_json(path, payload)


def load_dataset(path) -> ModalDataset:
    raw = _read_json(path)
    name = str(path)
    return ModalDataset(
        n_modes=int(_require(raw, "n_modes", name)),
        n_segments=int(_require(raw, "n_segments", name)),
        freq_sq=np.asarray(_require(raw, "freq_sq", name), dtype=float),
        mode_shapes=np.asarray(_require(raw, "mode_shapes", name), dtype=float),
        observed_dofs=tuple(int(d) for d in _require(raw, "observed_dofs", name)),
        theta_hat=np.asarray(raw["theta_hat"], dtype=float) if "theta_hat" in raw else None,
    )


# ---------------------------------------------------------------------------
# Ground truth and benchmark spec
# ---------------------------------------------------------------------------

def save_ground_truth(path, truth: GroundTruth):
    _write_json(path, {
        "theta_true": _as_float_list(truth.theta_true),
        "omega_sq": _as_float_list(truth.omega_sq),
        "mode_shapes": _matrix(truth.mode_shapes),
    })


def load_ground_truth(path) -> GroundTruth:
    raw = _read_json(path)
    return GroundTruth(
        theta_true=np.asarray(_require(raw, "theta_true", str(path)), dtype=float),
        omega_sq=np.asarray(_require(raw, "omega_sq", str(path)), dtype=float),
        mode_shapes=np.asarray(_require(raw, "mode_shapes", str(path)), dtype=float),
    )


def load_benchmark_spec(path) -> tuple[BenchmarkSpec, list[tuple[int, float]]]:
    """Benchmark recipe plus an optional damage pattern.

    Schema: {n_stories, story_mass?, story_stiffness?, substructuring?,
    observed_dofs?, n_segments?, n_modes?, noise?: {freq_cov, shape_cov},
    seed?, damage?: [{"index": 1-based substructure, "fraction": f}, ...]}.
    """
    raw = _read_json(path)
    name = str(path)
    noise = raw.get("noise", {})
    if not isinstance(noise, dict):
        raise InputError(f"{name}: field 'noise' must be an object")
    try:
        spec = BenchmarkSpec(
            n_stories=int(_require(raw, "n_stories", name)),
            story_mass=_maybe_seq(raw.get("story_mass", 1.0)),
            story_stiffness=_maybe_seq(raw.get("story_stiffness", 1.0)),
            substructuring=raw.get("substructuring", "per_story"),
            custom_substructures=(np.asarray(raw["custom_substructures"], dtype=float)
                                  if "custom_substructures" in raw else None),
            observed_dofs=tuple(raw["observed_dofs"]) if "observed_dofs" in raw else None,
            n_segments=int(raw.get("n_segments", 1)),
            n_modes=int(raw["n_modes"]) if "n_modes" in raw else None,
            freq_cov=float(noise.get("freq_cov", 0.0)),
            shape_cov=float(noise.get("shape_cov", 0.0)),
            seed=int(raw.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name}: {exc}") from exc
    damage = []
    for k, entry in enumerate(raw.get("damage", [])):
        idx = int(_require(entry, "index", f"{name}: damage[{k}]"))
        frac = float(_require(entry, "fraction", f"{name}: damage[{k}]"))
        damage.append((idx - 1, frac))   # file is 1-based, API 0-based
    return spec, damage


def _maybe_seq(value):
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    return float(value)


# ---------------------------------------------------------------------------
# Chains (columnar CSV + JSON sidecar)
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def save_chain(path_csv, chain: Chain, sidecar_path=None):
    """One row per iteration: theta, omega_sq, beta (if present),
    hyperparameters, and phi when stored.  Config and seed go to the sidecar."""
    path_csv = Path(path_csv)
    path_csv.parent.mkdir(parents=True, exist_ok=True)
    labels = chain.labels
    n_modes = chain.omega_sq.shape[1]
    header = ["iteration"]
    header += [f"theta_{lab}" for lab in labels]
    header += [f"omega_sq_{i + 1}" for i in range(n_modes)]
    if chain.beta is not None:
        header.append("beta")
    vector_hypers = []
    scalar_hypers = []
    for key, values in chain.hyper.items():
        if values.ndim == 2:
            vector_hypers.append(key)
            header += [f"{key}_{lab}" for lab in labels]
        else:
            scalar_hypers.append(key)
            header.append(key)
    if chain.phi is not None:
        header += [f"phi_{k + 1}" for k in range(chain.phi.shape[1])]

    with open(path_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for n in range(len(chain)):
            row = [str(n)]
            row += [_fmt(v) for v in chain.theta[n]]
            row += [_fmt(v) for v in chain.omega_sq[n]]
            if chain.beta is not None:
                row.append(_fmt(chain.beta[n]))
            for key in vector_hypers:
                row += [_fmt(v) for v in chain.hyper[key][n]]
            for key in scalar_hypers:
                row.append(_fmt(chain.hyper[key][n]))
            if chain.phi is not None:
                row += [_fmt(v) for v in chain.phi[n]]
            writer.writerow(row)

    sidecar = Path(sidecar_path) if sidecar_path else path_csv.with_suffix(".json")
    _write_json(sidecar, {
        "algorithm": chain.algorithm,
        "seed": chain.seed,
        "labels": list(labels),
        "n_modes": n_modes,
        "runtime_s": chain.runtime_s,
        "config": _config_payload(chain.config),
    })


def _config_payload(config: GibbsConfig) -> dict:
    payload = asdict(config)
    for key in ("theta_init", "omega_sq_init", "phi_init"):
        if payload[key] is not None:
            payload[key] = _as_float_list(payload[key])
    payload["clamp"] = list(payload["clamp"])
    return payload


def _config_from_payload(raw: dict) -> GibbsConfig:
    fp = raw.get("fixed_point", {})
    kwargs = dict(raw)
    kwargs["fixed_point"] = FixedPoint(tol=fp.get("tol", 1e-8), max_iter=fp.get("max_iter", 200))
    kwargs["clamp"] = tuple(kwargs.get("clamp", ()))
    for key in ("theta_init", "omega_sq_init", "phi_init"):
        if kwargs.get(key) is not None:
            kwargs[key] = np.asarray(kwargs[key], dtype=float)
    return GibbsConfig(**kwargs)


def load_chain(path_csv, sidecar_path=None) -> Chain:
    path_csv = Path(path_csv)
    sidecar = Path(sidecar_path) if sidecar_path else path_csv.with_suffix(".json")
    meta = _read_json(sidecar)
    labels = tuple(meta["labels"])
    n_modes = int(meta["n_modes"])
    with open(path_csv, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path_csv}: empty chain file") from None
        rows = [row for row in reader]
    if not rows:
        raise InputError(f"{path_csv}: chain has no samples")
    col = {name: k for k, name in enumerate(header)}
    required = [f"theta_{lab}" for lab in labels] + [f"omega_sq_{i + 1}" for i in range(n_modes)]
    for name in required:
        if name not in col:
            raise InputError(f"{path_csv}: missing column '{name}'")
    table = np.array([[float(v) for v in row] for row in rows])

    def block(names):
        return table[:, [col[n] for n in names]]

    theta = block([f"theta_{lab}" for lab in labels])
    omega_sq = block([f"omega_sq_{i + 1}" for i in range(n_modes)])
    beta = table[:, col["beta"]] if "beta" in col else None
    phi_cols = [name for name in header if name.startswith("phi_")]
    phi = block(phi_cols) if phi_cols else None
    hyper = {}
    if meta["algorithm"] == "exact":
        scalar_keys, vector_keys = ["eta", "rho", "b0"], ["alpha"]
    else:
        scalar_keys, vector_keys = ["tau", "v", "b0_phi", "b0_w", "b0_theta"], ["gamma"]
    for key in scalar_keys:
        if key in col:
            hyper[key] = table[:, col[key]]
    for key in vector_keys:
        names = [f"{key}_{lab}" for lab in labels]
        if all(n in col for n in names):
            hyper[key] = block(names)
    return Chain(algorithm=meta["algorithm"], theta=theta, omega_sq=omega_sq, beta=beta,
                 phi=phi, hyper=hyper, config=_config_from_payload(meta["config"]),
                 seed=int(meta["seed"]), labels=labels,
                 runtime_s=float(meta.get("runtime_s", 0.0)))


# ---------------------------------------------------------------------------
# Paired samples and damage curves
# ---------------------------------------------------------------------------

def save_pairs(path_csv, pairs: PairedSamples):
    path_csv = Path(path_csv)
    path_csv.parent.mkdir(parents=True, exist_ok=True)
    header = [f"theta_u_{lab}" for lab in pairs.labels] + \
             [f"theta_d_{lab}" for lab in pairs.labels]
    with open(path_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for u, d in zip(pairs.theta_u, pairs.theta_d):
            writer.writerow([_fmt(v) for v in u] + [_fmt(v) for v in d])


def load_pairs(path_csv) -> PairedSamples:
    with open(path_csv, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path_csv}: empty paired-samples file") from None
        table = np.array([[float(v) for v in row] for row in reader])
    if table.size == 0:
        raise InputError(f"{path_csv}: no sample pairs")
    half = len(header) // 2
    labels = tuple(name[len("theta_u_"):] for name in header[:half])
    return PairedSamples(theta_u=table[:, :half], theta_d=table[:, half:], labels=labels)


def save_curves(path_csv, curves: DamageCurves, summary_path=None):
    """Rows are the loss-fraction grid, one probability column per substructure;
    the JSON summary carries interpolated median losses."""
    path_csv = Path(path_csv)
    path_csv.parent.mkdir(parents=True, exist_ok=True)
    with open(path_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fraction"] + [f"p_dam_{lab}" for lab in curves.labels])
        for k, f in enumerate(curves.fractions):
            writer.writerow([_fmt(f)] + [_fmt(p) for p in curves.probabilities[:, k]])
    if summary_path is not None:
        med = curves.median_loss()
        _write_json(summary_path, {
            "median_loss": {lab: float(m) for lab, m in zip(curves.labels, med)},
        })


def load_curves(path_csv) -> DamageCurves:
    with open(path_csv, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path_csv}: empty damage-curve file") from None
        table = np.array([[float(v) for v in row] for row in reader])
    labels = tuple(name[len("p_dam_"):] for name in header[1:])
    return DamageCurves(fractions=table[:, 0], probabilities=table[:, 1:].T, labels=labels)


# ---------------------------------------------------------------------------
# Run manifest
# ---------------------------------------------------------------------------

def write_manifest(out_dir, command: str, argv: list[str], inputs: list, outputs: list,
                   seed: int, started: float):
    """Every output directory gets exactly one manifest recording the resolved
    command line, input digests, and produced files."""
    out_dir = Path(out_dir)
    payload = {
        "command": command,
        "argv": list(argv),
        "tool_version": _version,
        "seed": seed,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": [str(Path(p).name) for p in outputs],
        "elapsed_s": time.time() - started,
    }
    _write_json(out_dir / "manifest.json", payload)
    return out_dir / "manifest.json"
