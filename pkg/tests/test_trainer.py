import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amlcell.dataset import ClassLabel, scan, stratified_split
from amlcell.trainer import (
    TrainConfig,
    featurize,
    fit,
    gradient,
    grad_check,
    load_params,
    log_softmax,
    predict,
    save_params,
    train,
)


def random_batch(seed, m=16, dim=40):
    rng = np.random.default_rng(seed)
    X = np.hstack([rng.standard_normal((m, dim - 1)), np.ones((m, 1))])
    y = rng.integers(0, 5, m)
    W = 0.1 * rng.standard_normal((5, dim))
    return W, X, y


def test_featurize_examples():
    black = featurize(np.zeros((128, 128, 3), np.uint8))
    assert black.shape == (3073,) and (black[:-1] == 0).all() and black[-1] == 1.0
    white = featurize(np.full((128, 128, 3), 255, np.uint8))
    assert (white[:-1] == 1.0).all() and white[-1] == 1.0
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (50, 70, 3), dtype=np.uint8)
    assert (featurize(img) == featurize(img.copy())).all()


def test_featurize_row_major_layout():
    img = np.zeros((32, 32, 3), np.uint8)
    img[0, 1] = (255, 0, 0)
    fv = featurize(img)
    assert fv[3] == 1.0 and fv[:3].sum() == 0 and fv[4:-1].sum() == 0


def test_predict_tie_break_and_dominance():
    fv = np.append(np.random.default_rng(1).random(10), 1.0)
    assert predict(np.zeros((5, 11)), fv) is ClassLabel.BASOPHIL
    W = np.zeros((5, 11))
    W[3, -1] = 1.0
    for seed in range(5):
        x = np.append(np.random.default_rng(seed).random(10), 1.0)
        assert predict(W, x) is ClassLabel.MYELOBLAST
    with pytest.raises(ValueError):
        predict(W, np.ones(4))


@given(st.integers(0, 1000), st.floats(-50, 50))
def test_predict_shift_invariance(seed, c):
    W, X, _ = random_batch(seed, m=1, dim=12)
    shifted = W.copy()
    shifted[:, -1] += c  # same constant added to every class logit
    assert predict(W, X[0]) == predict(shifted, X[0])


def test_softmax_rows_sum_to_one():
    W, X, _ = random_batch(2)
    p = np.exp(log_softmax(X @ W.T * 30))
    assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_grad_check_passes(seed):
    W, X, y = random_batch(seed)
    assert grad_check(W, (X, y), l2=1e-3, seed=seed) <= 1e-5


def test_grad_check_detects_sign_flip():
    W, X, y = random_batch(3, dim=10)  # 50 coordinates, all checked

    def flipped(W, X, y, l2):
        g = gradient(W, X, y, l2)
        g[2, 4] *= -1
        return g

    assert grad_check(W, (X, y), grad_fn=flipped) == pytest.approx(2.0, abs=1e-5)


def test_grad_check_saturated_case():
    # a single, perfectly fit point with a saturated softmax: gradients vanish
    X = np.array([[1.0, 1.0]])
    y = np.array([2])
    W = np.zeros((5, 2))
    W[2] = 400.0
    assert np.abs(gradient(W, X, y)).max() < 1e-8
    assert grad_check(W, (X, y)) == 0.0


def test_lr_zero_keeps_uniform_loss():
    W0, X, y = random_batch(4, m=20)
    W, curve = fit(X, y, X[:5], y[:5], TrainConfig(epochs=3, learning_rate=0.0))
    assert (W == 0).all()
    for tl, vl, _ in curve.entries:
        assert tl == pytest.approx(math.log(5), abs=1e-12)
        assert vl == pytest.approx(math.log(5), abs=1e-12)


def test_fit_is_deterministic():
    _, X, y = random_batch(5, m=40)
    cfg = TrainConfig(epochs=4, learning_rate=0.05, batch_size=7, seed=9)
    a = fit(X, y, X, y, cfg)
    b = fit(X, y, X, y, cfg)
    assert (a[0] == b[0]).all() and a[1].to_csv() == b[1].to_csv()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises():
    _, X, y = random_batch(6, m=16)
    with pytest.raises(FloatingPointError, match="epoch 1"):
        fit(X * 1e300, y, X, y, TrainConfig(epochs=2, learning_rate=1e300))


def test_fit_rejects_empty_split():
    _, X, y = random_batch(7)
    with pytest.raises(ValueError):
        fit(X, y, X[:0], y[:0], TrainConfig(epochs=1))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1)


def test_loss_curve_csv():
    _, X, y = random_batch(8, m=12)
    _, curve = fit(X, y, X, y, TrainConfig(epochs=2, learning_rate=0.01))
    lines = curve.to_csv().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,val_accuracy"
    assert len(lines) == 3 and lines[1].startswith("1,")


def test_param_blob_roundtrip(tmp_path):
    W = np.random.default_rng(0).standard_normal((5, 7))
    save_params(tmp_path / "m.bin", W)
    blob = (tmp_path / "m.bin").read_bytes()
    assert len(blob) == 16 + 5 * 7 * 8 and blob[:4] == b"AMLW"
    assert int.from_bytes(blob[8:12], "little") == 5 and int.from_bytes(blob[12:16], "little") == 7
    assert (load_params(tmp_path / "m.bin") == W).all()
    (tmp_path / "bad.bin").write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ValueError):
        load_params(tmp_path / "bad.bin")


def test_train_on_fixture_tree(small_fixture):
    manifest = stratified_split(scan(small_fixture / "images"), seed=0)
    W, curve = train(manifest, TrainConfig(epochs=5), small_fixture / "images")
    assert W.shape == (5, 3073) and len(curve.entries) == 5


@pytest.mark.parametrize("variant", ["cell-hue", "cell-otsu", "nucleus-hue", "nucleus-otsu"])
def test_train_loss_non_increasing_small_lr(segmented_fixture, variant):
    root = segmented_fixture[variant]
    manifest = stratified_split(scan(root), seed=0)
    _, curve = train(manifest, TrainConfig(epochs=20, learning_rate=1e-3, l2=0.0), root)
    tl = curve.train_loss
    assert all(b <= a for a, b in zip(tl, tl[1:]))
