"""Smoke tests for the python bindings.

Build first (either route):
    pip install . --no-build-isolation
or
    cmake -S . -B build -DBNN_BUILD_PYTHON=ON && cmake --build build
    PYTHONPATH=python pytest tests/python
"""

import numpy as np
import pytest

import bnn


def rand_pm1(rng, *shape):
    return rng.choice([-1.0, 1.0], size=shape)


def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(0)
    for cols in (1, 63, 64, 65, 200):
        m = rand_pm1(rng, 5, cols)
        assert np.array_equal(bnn.unpack(bnn.pack(m)), m)


def test_pack_rejects_nonbinary():
    with pytest.raises(bnn.BnnError):
        bnn.pack(np.array([[0.5, 1.0]]))


def test_xnor_gemm_matches_numpy():
    rng = np.random.default_rng(1)
    a = rand_pm1(rng, 33, 100)
    w = rand_pm1(rng, 100, 17)
    got = bnn.xnor_gemm_pm1(a, w)
    assert np.array_equal(got, a @ w)


def test_fixed_point_first_layer_is_exact():
    rng = np.random.default_rng(2)
    x = rng.integers(0, 256, size=(7, 50)).astype(np.float64)
    w = rand_pm1(rng, 50, 9)
    assert np.array_equal(bnn.fixed_point_first_layer(x, w), x @ w)


def test_quantizers():
    x = np.array([[3.2, -0.0001, 0.0]])
    assert np.array_equal(bnn.sign_binarize(x), [[1.0, -1.0, 1.0]])
    assert bnn.hard_sigmoid(0.0) == 0.5
    assert np.array_equal(bnn.hard_tanh(np.array([[7.0, -7.0, 0.3]])), [[1.0, -1.0, 0.3]])
    g = bnn.ste_backward(np.array([[2.0, 2.0]]), np.array([[0.5, 1.5]]))
    assert np.array_equal(g, [[2.0, 0.0]])


def test_ap2_values():
    assert bnn.ap2(4.0) == 4.0
    assert bnn.ap2(0.8) == 1.0
    assert bnn.ap2(-6.0) == -8.0
    assert bnn.ap2(0.0) == 0.0


def test_hinge_loss():
    loss, grad = bnn.hinge_loss(np.zeros((1, 1)), [0])
    assert loss == 1.0
    assert grad[0, 0] == -2.0


def test_parity_trains_to_zero_error():
    data = bnn.make_synthetic("parity", 256, seed=1)
    net, result = bnn.train(
        data, data, data, layers=[2, 8, 2], batch=32, epochs=60, lr=0.01, seed=7, threads=1
    )
    assert result.test_error == 0.0


def test_packed_inference_agrees_with_evaluator():
    data = bnn.make_synthetic("blobs", 256, seed=3)
    net, result = bnn.train(
        data, data, data, layers=[16, 12, 2], batch=32, epochs=3, seed=5, threads=1
    )
    model = bnn.export_inference(net)
    assert bnn.infer_predict(model, data) == net.predict(data)


def test_model_file_roundtrip(tmp_path):
    data = bnn.make_synthetic("blobs", 64, seed=9)
    net, _ = bnn.train(data, data, None, layers=[16, 8, 2], batch=16, epochs=2, seed=2)
    model = bnn.export_inference(net)
    path = tmp_path / "model.bnnm"
    bnn.save_model(path, model)
    loaded = bnn.load_model(path)
    assert bnn.infer_predict(loaded, data) == bnn.infer_predict(model, data)


def test_energy_numbers():
    fp32 = bnn.energy_estimate([1, 1], "fp32")
    assert fp32["arithmetic_pJ"] == pytest.approx(4.6)
    big_fp = bnn.energy_estimate([784, 512, 512, 10], "fp32")
    big_bnn = bnn.energy_estimate([784, 512, 512, 10], "bnn")
    assert big_fp["memory_bits"] == 32 * big_bnn["memory_bits"]


def test_bench_checksums_agree():
    reports = bnn.bench_gemm([(96, 96, 96)], ["baseline", "xnor"], threads=2)
    assert len(reports) == 2
    assert reports[0].checksum == reports[1].checksum


def test_unique_filters_exhaustive():
    patterns = np.array(
        [[1.0 if (p >> b) & 1 else -1.0 for b in range(9)] for p in range(512)]
    )
    stats = bnn.unique_filters(patterns, 512, 1, 3, count_inverses_as_same=False)
    assert stats.unique_count == 512
    inv = bnn.unique_filters(patterns, 512, 1, 3, count_inverses_as_same=True)
    assert inv.unique_count == 256
