import json

import numpy as np
import pytest

from gpu_sentinel.classifiers import (
    ForestParams,
    GBMParams,
    MLPParams,
    ModelFormatError,
    dumps_model,
    load_model,
    loads_model,
    predict_score,
    predict_scores,
    save_model,
    train,
)
from gpu_sentinel.classifiers.models import sigmoid

from .helpers import FIXTURES

SMALL = {"forest": ForestParams(n_trees=4), "gbm": GBMParams(rounds=8), "mlp": MLPParams(epochs=3)}


@pytest.mark.parametrize("kind", ["logreg", "tree", "forest", "gbm", "mlp"])
def test_round_trip_bit_exact(kind, small_dataset, tmp_path):
    m = train(kind, small_dataset, SMALL.get(kind), seed=1)
    path = save_model(m, tmp_path / f"{kind}.model")
    back = load_model(path)
    X = np.random.default_rng(0).normal(0, 1, (100, 40)) * small_dataset.X.std(0) + small_dataset.X.mean(0)
    assert predict_scores(back, X).tobytes() == predict_scores(m, X).tobytes()
    assert dumps_model(back) == path.read_text()
    assert back.feature_names == m.feature_names and back.kind == kind


def test_header_lines(small_dataset):
    text = dumps_model(train("logreg", small_dataset, seed=1))
    lines = text.splitlines()
    assert lines[:3] == ["GPUSENTINEL-MODEL v1", "kind=logreg", "[meta]"]
    assert "[scaler]" in lines and "[hyperparams]" in lines and "[parameters]" in lines


@pytest.mark.parametrize("text, message", [
    ("GPUSENTINEL-MODEL v1\nkind=svm\n", "unknown model kind"),
    ("GPUSENTINEL-MODEL v2\nkind=tree\n", "unsupported model version"),
    ("hello\nworld\n", "not a model file"),
    ("GPUSENTINEL-MODEL v1\n", "too short"),
])
def test_rejects_bad_headers(text, message):
    with pytest.raises(ModelFormatError, match=message):
        loads_model(text)


def test_rejects_corruption(small_dataset):
    text = dumps_model(train("tree", small_dataset, seed=1))
    with pytest.raises(ModelFormatError, match="corrupted"):
        loads_model(text.replace("[parameters]", "[params]"))
    with pytest.raises(ModelFormatError, match="corrupted"):
        loads_model(text.replace("tree.0.threshold=[", "tree.0.threshold=[oops"))
    lines = [ln for ln in text.splitlines() if not ln.startswith("tree.0.left")]
    with pytest.raises(ModelFormatError, match="corrupted"):
        loads_model("\n".join(lines))


def test_rejects_wrong_dimensions(small_dataset):
    text = dumps_model(train("logreg", small_dataset, seed=1))
    names = json.dumps(list(small_dataset.feature_names[:39]), separators=(",", ":"))
    bad = "\n".join(
        f"feature_names={names}" if ln.startswith("feature_names=") else ln
        for ln in text.splitlines()
    )
    with pytest.raises(ModelFormatError):
        loads_model(bad)


def _sections(path):
    out, cur = {}, None
    for line in path.read_text().splitlines()[2:]:
        if line.startswith("["):
            cur = out.setdefault(line[1:-1], {})
        else:
            k, _, v = line.partition("=")
            cur[k] = json.loads(v)
    return out


VECTORS = json.loads((FIXTURES / "golden_vectors.json").read_text())


def test_golden_logreg_against_hand_evaluation():
    path = FIXTURES / "golden_logreg.model"
    model = load_model(path)
    sec = _sections(path)
    mean, std = np.array(sec["scaler"]["mean"]), np.array(sec["scaler"]["std"])
    w, b = np.array(sec["parameters"]["weights"]), sec["parameters"]["bias"]
    frozen = {"0": 0.00023082088784593977, "13": 0.06768105995301353, "20": 0.9991552988973663}
    for key, vec in VECTORS.items():
        x = np.array(vec)
        z = np.where(std > 0, (x - mean) / np.where(std > 0, std, 1), 0.0)
        by_hand = 1 / (1 + np.exp(-(z @ w + b)))
        assert predict_score(model, x) == pytest.approx(by_hand, rel=1e-12)
        assert predict_score(model, x) == frozen[key]


def test_golden_forest_against_hand_walk():
    path = FIXTURES / "golden_forest.model"
    model = load_model(path)
    p = _sections(path)["parameters"]
    frozen = {"0": 0.0, "13": 1 / 3, "20": 1.0}
    for key, vec in VECTORS.items():
        leaves = []
        for i in range(p["n_trees"]):
            node = 0
            while p[f"tree.{i}.feature"][node] >= 0:
                f = p[f"tree.{i}.feature"][node]
                go_left = vec[f] <= p[f"tree.{i}.threshold"][node]
                node = p[f"tree.{i}.left" if go_left else f"tree.{i}.right"][node]
            leaves.append(p[f"tree.{i}.value"][node])
        assert predict_score(model, np.array(vec)) == sum(leaves) / len(leaves) == frozen[key]


def test_sigmoid_reference():
    assert sigmoid(0.0) == 0.5
