import numpy as np
import pytest

from snapchain.classifier import (ExperimentReport, LogisticModel, Metrics,
                                  TrainingError, _sigmoid, evaluate,
                                  render_csv, render_markdown, run_experiment,
                                  train)
from snapchain.dataset import ExperimentConfig, load_corpus

CORPUS_DIR = "src/snapchain/data/corpus"


def separable(n=50):
    X = np.concatenate([np.full((n, 1), 0.1), np.full((n, 1), 0.9)])
    y = np.concatenate([np.zeros(n), np.ones(n)]).astype(np.int64)
    return X, y


def test_train_separable():
    X, y = separable()
    model = train(X, y)
    assert (model.predict(X) == y).all()
    assert model.weights[0] > 0


def test_train_deterministic():
    X, y = separable()
    a, b = train(X, y), train(X, y)
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias


def test_train_errors():
    with pytest.raises(TrainingError):
        train(np.ones((5, 1)), np.ones(5))
    with pytest.raises(TrainingError):
        train(np.array([[np.nan], [1.0]]), np.array([0, 1]))
    with pytest.raises(TrainingError):
        train(np.ones((5, 1)))


def test_scale_invariance():
    # standardization absorbs positive rescaling of the raw features
    X, y = separable()
    rng = np.random.default_rng(0)
    X = X + rng.normal(0, 0.05, X.shape)
    base = train(X, y).predict(X)
    scaled_model = train(X * 1000.0, y)
    assert np.array_equal(scaled_model.predict(X * 1000.0), base)


def test_loss_non_increasing():
    X, y = separable(20)
    rng = np.random.default_rng(1)
    X = X + rng.normal(0, 0.3, X.shape)
    losses = []
    for epochs in (1, 5, 25, 125, 500):
        m = train(X, y, epochs=epochs)
        p = np.clip(m.predict_proba(X), 1e-12, 1 - 1e-12)
        losses.append(float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean()))
    assert all(a >= b - 1e-12 for a, b in zip(losses, losses[1:]))


def test_predict_matches_sigmoid_oracle():
    model = LogisticModel(np.array([0.7, -1.3]), 0.2,
                          np.array([0.5, 0.5]), np.array([0.1, 0.2]))
    rng = np.random.default_rng(2)
    X = rng.random((100, 2))
    z = (X - model.mean) / model.scale @ model.weights + model.bias
    want = 1.0 / (1.0 + np.exp(-z))
    assert np.allclose(model.predict_proba(X), want, rtol=1e-12)
    assert _sigmoid(np.array([0.0]))[0] == 0.5
    assert _sigmoid(np.array([800.0]))[0] == 1.0
    assert _sigmoid(np.array([-800.0]))[0] == 0.0


def test_predict_width_mismatch():
    model = train(*separable())
    with pytest.raises(ValueError):
        model.predict(np.ones((3, 2)))


def test_metrics_worked_example():
    m = Metrics(tp=5, fp=1, tn=92, fn=2)
    assert m.accuracy == 97 / 100
    assert m.precision == 5 / 6
    assert m.recall == 5 / 7
    assert m.fpr == 1 / 93
    assert m.fnr == 2 / 7
    assert m.recall + m.fnr == 1.0
    assert m.total == 100


def test_metrics_degenerate_cases_are_missing():
    assert Metrics(tp=0, fp=0, tn=10, fn=0).precision is None
    assert Metrics(tp=0, fp=0, tn=10, fn=0).recall is None
    assert Metrics(tp=0, fp=0, tn=10, fn=0).fnr is None
    assert Metrics(tp=3, fp=0, tn=0, fn=1).fpr is None


def test_evaluate_counts():
    model = train(*separable())
    X = np.array([[0.1], [0.1], [0.9], [0.9], [0.9]])
    y = np.array([0, 1, 1, 1, 0])
    m = evaluate(model, X, y)
    assert (m.tp, m.fp, m.tn, m.fn) == (2, 1, 1, 1)
    with pytest.raises(ValueError):
        evaluate(model, np.empty((0, 1)), np.empty(0))


def test_model_json_roundtrip(tmp_path):
    model = train(*separable())
    path = tmp_path / "m.json"
    model.save(path, config_hash="abc123")
    back = LogisticModel.load(path)
    assert np.array_equal(back.weights, model.weights)
    assert back.bias == model.bias
    assert np.array_equal(back.scale, model.scale)
    assert back.threshold == model.threshold


@pytest.fixture(scope="module")
def tiny_report():
    corpus = load_corpus(CORPUS_DIR)
    cfg = ExperimentConfig(train_size=60, test_size=30, repetitions=2,
                           hidden_sizes=(1 << 28, 3 << 28),
                           master_seed=21)
    return corpus, cfg, run_experiment(corpus, cfg)


def test_run_experiment_structure(tiny_report):
    _, cfg, report = tiny_report
    assert report.sizes == [1 << 28, 3 << 28]
    assert len(report.per_run) == 4  # 2 sizes x 2 runs
    for size in report.sizes:
        cell = report.per_size[size]["accuracy"]
        assert cell["runs"] == 2 and 0 <= cell["mean"] <= 1
    # dirty disks have more singletons: positive weight on feature 1
    assert report.config["n_features"] == 1


def test_run_experiment_deterministic(tiny_report):
    corpus, cfg, report = tiny_report
    again = run_experiment(corpus, cfg)
    assert report.to_json() == again.to_json()


def test_run_experiment_single_repetition(tiny_report):
    corpus, cfg, _ = tiny_report
    cfg1 = ExperimentConfig(**{**cfg.__dict__, "repetitions": 1})
    rep = run_experiment(corpus, cfg1)
    for size in rep.sizes:
        for m in ("accuracy", "fpr", "fnr"):
            cell = rep.per_size[size][m]
            assert cell["runs"] == 1 and cell["half_width"] == 0.0
        run_row = next(r for r in rep.per_run if r["size"] == size)
        assert rep.per_size[size]["accuracy"]["mean"] == run_row["accuracy"]


def test_report_roundtrip_and_rendering(tiny_report):
    _, _, report = tiny_report
    back = ExperimentReport.from_json(report.to_json())
    assert back.to_json() == report.to_json()
    csv = render_csv(back)
    lines = csv.strip().splitlines()
    assert lines[0].startswith("size,accuracy,accuracy_ci")
    assert len(lines) == 1 + len(report.sizes)
    md = render_markdown(back)
    assert md.count("|") > 10
