import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from drgossip import model
from drgossip.model import ModelSpec


def rel_ok(a, b, rel=1e-4, floor=1e-6):
    return np.all(np.abs(a - b) <= rel * np.maximum(np.abs(a), np.abs(b)) + floor)


def random_case(rng, kind, clip=None):
    spec = ModelSpec(kind, int(rng.integers(1, 6)), int(rng.integers(2, 6)),
                     hidden=(int(rng.integers(2, 9)), int(rng.integers(2, 9))), clip=clip)
    theta = 0.5 * rng.standard_normal(spec.num_params)
    B = int(rng.integers(1, 9))
    X = rng.standard_normal((B, spec.input_dim))
    y = rng.integers(0, spec.num_classes, B)
    return spec, theta, X, y


def test_param_counts():
    assert ModelSpec("softmax", 2, 2).num_params == 6
    assert ModelSpec("mlp", 784, 10).num_params == 109_386


def test_init_deterministic_and_zero_bias():
    spec = ModelSpec("mlp", 5, 3, hidden=(4, 4))
    a, b = model.init_params(spec, 7), model.init_params(spec, 7)
    assert np.array_equal(a, b)
    for (fan_in, _), ws, bs in spec.layout():
        assert np.all(a[bs] == 0)
        assert np.all(np.abs(a[ws]) <= 1 / math.sqrt(fan_in))


@pytest.mark.parametrize("M", [2, 3, 10, 100])
def test_zero_params_give_log_m(M):
    spec = ModelSpec("softmax", 4, M)
    X = np.random.default_rng(M).standard_normal((17, 4))
    y = np.arange(17) % M
    loss, _ = model.loss_and_grad(spec, np.zeros(spec.num_params), X, y)
    assert abs(loss - math.log(M)) <= 1e-12


def test_log_10_value():
    spec = ModelSpec("softmax", 1, 10)
    loss, _ = model.loss_and_grad(spec, np.zeros(spec.num_params), np.ones((3, 1)), np.array([0, 4, 9]))
    assert loss == pytest.approx(2.302585, abs=1e-6)


@pytest.mark.parametrize("kind", ["softmax", "mlp"])
def test_gradient_matches_finite_differences(kind):
    rng = np.random.default_rng(0 if kind == "softmax" else 1)
    for _ in range(25):
        spec, theta, X, y = random_case(rng, kind)
        _, g = model.loss_and_grad(spec, theta, X, y)
        coords = rng.choice(spec.num_params, size=min(20, spec.num_params), replace=False)
        num = model.finite_difference_grad(lambda th: model.loss_and_grad(spec, th, X, y)[0], theta, coords)
        assert rel_ok(g[coords], num)


def test_clipped_samples_have_zero_gradient():
    spec = ModelSpec("softmax", 2, 3, clip=0.5)
    theta = np.zeros(spec.num_params)  # every loss is log 3 > 0.5
    X = np.ones((4, 2))
    loss, g = model.loss_and_grad(spec, theta, X, np.array([0, 1, 2, 0]))
    assert loss == 0.5
    assert np.all(g == 0)


def test_clipping_gradient_check_away_from_ceiling():
    rng = np.random.default_rng(5)
    spec, theta, X, y = random_case(rng, "mlp", clip=1.5)
    losses = model.per_sample_loss(ModelSpec(spec.kind, spec.input_dim, spec.num_classes, spec.hidden), theta, X, y)
    assert np.all(np.abs(losses - 1.5) > 1e-3)
    _, g = model.loss_and_grad(spec, theta, X, y)
    coords = np.arange(spec.num_params)
    num = model.finite_difference_grad(lambda th: model.loss_and_grad(spec, th, X, y)[0], theta, coords)
    assert rel_ok(g, num)


@given(st.integers(0, 10_000), st.sampled_from(["softmax", "mlp"]), st.floats(0.1, 5))
def test_clipped_loss_bounded(seed, kind, ceiling):
    rng = np.random.default_rng(seed)
    spec, theta, X, y = random_case(rng, kind, clip=ceiling)
    theta *= 10
    per = model.per_sample_loss(spec, theta, X, y)
    loss, _ = model.loss_and_grad(spec, theta, X, y)
    assert np.all(per >= 0) and np.all(per <= ceiling)
    assert 0 <= loss <= ceiling * (1 + 1e-12)  # mean of values at the ceiling may round up


@given(st.integers(0, 10_000), st.sampled_from(["softmax", "mlp"]))
def test_softmax_rows_sum_to_one(seed, kind):
    rng = np.random.default_rng(seed)
    spec, theta, X, _ = random_case(rng, kind)
    P = model.predict_proba(spec, theta * 20, X)
    assert np.max(np.abs(P.sum(axis=1) - 1)) <= 1e-12


@given(st.integers(0, 10_000))
def test_mean_loss_order_invariant(seed):
    rng = np.random.default_rng(seed)
    spec, theta, X, y = random_case(rng, "mlp")
    perm = rng.permutation(len(y))
    a, ga = model.loss_and_grad(spec, theta, X, y)
    b, gb = model.loss_and_grad(spec, theta, X[perm], y[perm])
    assert abs(a - b) <= 1e-12
    np.testing.assert_allclose(ga, gb, rtol=1e-10, atol=1e-13)
    assert model.loss_and_grad(spec, theta, X, y)[0] == a


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_reports_layer():
    spec = ModelSpec("mlp", 2, 2, hidden=(3, 3))
    theta = np.zeros(spec.num_params)
    with pytest.raises(model.NonFiniteError) as err:
        model.loss_and_grad(spec, theta, np.array([[np.inf, 0.0]]), np.array([0]))
    assert err.value.layer == 0


def test_rejects_bad_batches():
    spec = ModelSpec("softmax", 3, 2)
    th = np.zeros(spec.num_params)
    with pytest.raises(ValueError):
        model.loss_and_grad(spec, th, np.zeros((0, 3)), np.zeros(0, dtype=int))
    with pytest.raises(ValueError):
        model.loss_and_grad(spec, th, np.zeros((2, 4)), np.zeros(2, dtype=int))


def test_accuracy_cases(golden_dir):
    spec = ModelSpec("softmax", 2, 2)
    theta = np.array([1.0, -1.0, -1.0, 1.0, 0.0, 0.0])  # class = argmax(x0 - x1, x1 - x0)
    X = np.array([[2.0, 0.0], [0.0, 2.0], [3.0, 1.0]])
    assert model.accuracy(spec, theta, X, np.array([0, 1, 0])) == 1.0
    # zero parameters tie every class and the first index wins
    Xb = np.random.default_rng(0).standard_normal((10, 2))
    assert model.accuracy(spec, np.zeros(6), Xb, np.array([0, 1] * 5)) == 0.5

    from drgossip import datagen
    ds = datagen.gaussian_mixture(3, 40, 2, 1.5, 21)
    mspec = ModelSpec("mlp", 2, 3, hidden=(8, 6))
    expected = json.loads((golden_dir / "values.json").read_text())["accuracy_mlp_seed21"]
    assert model.accuracy(mspec, model.init_params(mspec, 21), ds.features, ds.labels) == expected


def test_param_file_roundtrip(tmp_path):
    theta = np.random.default_rng(0).standard_normal(13)
    model.save_params(theta, tmp_path / "p.bin")
    raw = (tmp_path / "p.bin").read_bytes()
    assert int.from_bytes(raw[:8], "little") == 13 and len(raw) == 8 + 13 * 8
    assert np.array_equal(model.load_params(tmp_path / "p.bin"), theta)
