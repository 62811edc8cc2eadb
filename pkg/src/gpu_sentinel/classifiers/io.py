"""``GPUSENTINEL-MODEL v1`` text files.

Layout::

    GPUSENTINEL-MODEL v1
    kind=forest
    [meta]
    feature_names=[...]
    ...
    [hyperparams]
    n_trees=50
    [scaler]
    mean=[...]
    std=[...]
    [parameters]
    tree.0.feature=[...]

Every value is JSON. Floats use Python's shortest round-trip repr, so a
loaded model reproduces the saved model's scores bit for bit.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..features import Scaler
from .models import HYPERPARAMS, KINDS, Model
from .tree import Tree

MODEL_MAGIC = "GPUSENTINEL-MODEL"
MODEL_VERSION = "1"
_TREE_FIELDS = ("feature", "threshold", "left", "right", "value")


class ModelFormatError(ValueError):
    pass


def _j(value) -> str:
    if isinstance(value, np.ndarray):
        value = value.tolist()
    return json.dumps(value, allow_nan=False, separators=(",", ":"))


def _parameter_items(model: Model):
    p = model.params
    if model.kind == "logreg":
        yield "weights", p["weights"]
        yield "bias", float(p["bias"])
    elif model.kind == "mlp":
        for i, arr in enumerate(p["layers"]):
            yield f"layer.{i // 2}.{'weights' if i % 2 == 0 else 'bias'}", arr
    else:
        if model.kind == "gbm":
            yield "f0", float(p["f0"])
            yield "learning_rate", float(p["learning_rate"])
        yield "n_trees", len(p["trees"])
        for i, tree in enumerate(p["trees"]):
            for name in _TREE_FIELDS:
                yield f"tree.{i}.{name}", getattr(tree, name)


def dumps_model(model: Model) -> str:
    lines = [f"{MODEL_MAGIC} v{MODEL_VERSION}", f"kind={model.kind}", "[meta]"]
    lines.append(f"feature_names={_j(list(model.feature_names))}")
    for key in sorted(model.training_meta):
        lines.append(f"{key}={_j(model.training_meta[key])}")
    lines.append("[hyperparams]")
    for key, value in asdict(model.hyper).items():
        lines.append(f"{key}={_j(list(value) if isinstance(value, tuple) else value)}")
    lines.append("[scaler]")
    if model.scaler is not None:
        lines.append(f"mean={_j(model.scaler.mean)}")
        lines.append(f"std={_j(model.scaler.std)}")
    lines.append("[parameters]")
    for key, value in _parameter_items(model):
        lines.append(f"{key}={_j(value)}")
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> Model:
    lines = text.splitlines()
    if len(lines) < 2:
        raise ModelFormatError("corrupted model file: too short")
    head = lines[0].split()
    if len(head) != 2 or head[0] != MODEL_MAGIC:
        raise ModelFormatError(f"not a model file (first line {lines[0]!r})")
    if head[1] != f"v{MODEL_VERSION}":
        raise ModelFormatError(f"unsupported model version {head[1]!r}")
    key, _, kind = lines[1].partition("=")
    if key != "kind" or kind not in KINDS:
        raise ModelFormatError(f"unknown model kind {kind!r}")

    sections: dict[str, dict] = {}
    current = None
    for n, line in enumerate(lines[2:], start=3):
        if line.startswith("[") and line.endswith("]"):
            current = sections.setdefault(line[1:-1], {})
            continue
        if current is None:
            raise ModelFormatError(f"corrupted model file: entry outside a section at line {n}")
        k, sep, v = line.partition("=")
        if not sep:
            raise ModelFormatError(f"corrupted model file: bad entry at line {n}")
        try:
            current[k] = json.loads(v)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"corrupted model file: line {n}: {exc}") from None
    for name in ("meta", "hyperparams", "scaler", "parameters"):
        if name not in sections:
            raise ModelFormatError(f"corrupted model file: missing [{name}] section")

    try:
        meta = dict(sections["meta"])
        feature_names = tuple(meta.pop("feature_names"))
        hp = dict(sections["hyperparams"])
        if "hidden" in hp:
            hp["hidden"] = tuple(hp["hidden"])
        hyper = HYPERPARAMS[kind](**hp)
        sc = sections["scaler"]
        scaler = Scaler(np.array(sc["mean"], dtype=float), np.array(sc["std"], dtype=float)) \
            if sc else None
        params = _build_params(kind, sections["parameters"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"corrupted model file: {exc}") from None

    model = Model(kind, params, feature_names, hyper, scaler, meta)
    _check_dimensions(model)
    return model


def _build_params(kind: str, p: dict) -> dict:
    if kind == "logreg":
        return {"weights": np.array(p["weights"], dtype=float), "bias": float(p["bias"])}
    if kind == "mlp":
        layers = []
        for i in range(3):
            layers.append(np.array(p[f"layer.{i}.weights"], dtype=float))
            layers.append(np.array(p[f"layer.{i}.bias"], dtype=float))
        return {"layers": layers}
    trees = []
    for i in range(int(p["n_trees"])):
        arrays = [np.array(p[f"tree.{i}.{f}"]) for f in _TREE_FIELDS]
        trees.append(Tree(
            arrays[0].astype(int), arrays[1].astype(float), arrays[2].astype(int),
            arrays[3].astype(int), arrays[4].astype(float),
        ))
    out = {"trees": trees}
    if kind == "gbm":
        out["f0"] = float(p["f0"])
        out["learning_rate"] = float(p["learning_rate"])
    return out


def _check_dimensions(model: Model) -> None:
    d = model.n_features
    if model.scaler is not None and (model.scaler.mean.shape != (d,) or model.scaler.std.shape != (d,)):
        raise ModelFormatError("corrupted model file: scaler size does not match feature_names")
    p = model.params
    if model.kind == "logreg" and p["weights"].shape != (d,):
        raise ModelFormatError("corrupted model file: weight count does not match feature_names")
    if model.kind == "mlp" and p["layers"][0].shape[0] != d:
        raise ModelFormatError("corrupted model file: input layer does not match feature_names")
    if model.kind in ("tree", "forest", "gbm"):
        if not p["trees"]:
            raise ModelFormatError("corrupted model file: ensemble has no trees")
        for t in p["trees"]:
            n = t.n_nodes
            if not all(len(getattr(t, f)) == n for f in _TREE_FIELDS):
                raise ModelFormatError("corrupted model file: ragged tree arrays")
            if not np.all(np.isfinite(t.threshold)):
                raise ModelFormatError("corrupted model file: non-finite threshold")
            if np.any(t.feature >= d):
                raise ModelFormatError("corrupted model file: feature index out of range")
            inner = t.feature >= 0
            kids = np.concatenate([t.left[inner], t.right[inner]])
            if np.any(kids <= 0) or np.any(kids >= n):
                raise ModelFormatError("corrupted model file: child index out of range")


def save_model(model: Model, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.write_text(dumps_model(model), encoding="utf-8", newline="\n")
    return path


def load_model(path: str | os.PathLike) -> Model:
    return loads_model(Path(path).read_text(encoding="utf-8"))
