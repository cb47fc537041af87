from __future__ import annotations

import csv
import itertools
import json
import math

import numpy as np
import pytest

from tanner_gnn import gf2, gnn, noise, train


def one_hot(word):
    return np.eye(4)[np.asarray(word)]


def test_sine_relaxation_values():
    assert train.sine_relaxation(0) == 0
    assert train.sine_relaxation([1, 2, 3]) == pytest.approx([1, 0, 1], abs=1e-12)
    assert train.sine_relaxation(0.5) == pytest.approx(math.sqrt(0.5))


def test_loss_examples(surface3):
    rng = np.random.default_rng(0)
    e = noise.sample_depolarizing(9, 0.4, rng)
    sample = noise.Sample(e, noise.compute_syndrome(surface3, e), 0.4)
    perfect = train.total_loss(surface3, sample, one_hot(e))
    assert perfect.cross_entropy == pytest.approx(0, abs=1e-12)
    assert perfect.commutation == pytest.approx(0, abs=1e-12)
    assert perfect.total == pytest.approx(0, abs=1e-12)
    uni = train.total_loss(surface3, sample, np.full((9, 4), 0.25), lam=0.0)
    assert uni.cross_entropy == pytest.approx(math.log(4))
    # X-type stabiliser applied on top of the truth
    stab = noise.combine(noise.x_part(e) ^ surface3.h_x[2], noise.z_part(e))
    deg = train.total_loss(surface3, sample, one_hot(stab))
    assert deg.commutation == pytest.approx(0, abs=1e-12)
    assert deg.cross_entropy > 0
    logical = noise.combine(noise.x_part(e) ^ surface3.logicals_x[0], noise.z_part(e))
    assert train.commutation_loss(surface3, e, one_hot(logical)) > 0
    parts = train.total_loss(surface3, sample, one_hot(logical), lam=0.7)
    assert parts.total == pytest.approx(parts.cross_entropy + 0.7 * parts.commutation)


def test_commutation_zero_iff_stabiliser_residual(surface3):
    """Exhaustive over every one-hot residual of each type."""
    zero = np.zeros(9, np.uint8)
    for bits in itertools.product((0, 1), repeat=9):
        r = np.array(bits, np.uint8)
        for pred, stabs in ((noise.combine(r, zero), surface3.h_x), (noise.combine(zero, r), surface3.h_z)):
            loss = train.commutation_loss(surface3, np.zeros(9, np.uint8), one_hot(pred))
            assert (abs(loss) < 1e-12) == gf2.in_rowspace(stabs, r)


def test_total_loss_nonnegative(surface3):
    rng = np.random.default_rng(1)
    for _ in range(200):
        e = noise.sample_depolarizing(9, 0.3, rng)
        probs = rng.dirichlet(np.ones(4), size=9)
        parts = train.total_loss(surface3, noise.Sample(e, None, 0.3), probs)
        assert parts.cross_entropy >= 0 and parts.commutation >= 0 and parts.total >= 0


def test_batch_loss_agrees_with_per_sample_loss(surface3):
    rng = np.random.default_rng(2)
    errors = noise.sample_depolarizing(9, 0.3, rng, size=6)
    logits = rng.normal(size=(6, 9, 4))
    kx, kz = train.complement_bases(surface3)
    parts, _ = train.batch_loss(logits, errors, kx, kz, 0.8)
    probs = gnn.softmax(logits)
    each = [train.total_loss(surface3, noise.Sample(errors[b], None, 0.0), probs[b], 0.8) for b in range(6)]
    assert parts.cross_entropy == pytest.approx(np.mean([p.cross_entropy for p in each]))
    assert parts.commutation == pytest.approx(np.mean([p.commutation for p in each]))


def test_batch_loss_logit_gradient(surface3):
    rng = np.random.default_rng(3)
    errors = noise.sample_depolarizing(9, 0.3, rng, size=3)
    logits = rng.normal(size=(3, 9, 4))
    kx, kz = train.complement_bases(surface3)
    _, grad = train.batch_loss(logits, errors, kx, kz, 1.3)
    eps = 1e-6
    for idx in [(0, 0, 0), (1, 4, 2), (2, 8, 3), (0, 3, 1), (2, 2, 2)]:
        up, dn = logits.copy(), logits.copy()
        up[idx] += eps
        dn[idx] -= eps
        fd = (train.batch_loss(up, errors, kx, kz, 1.3)[0].total
              - train.batch_loss(dn, errors, kx, kz, 1.3)[0].total) / (2 * eps)
        assert grad[idx] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def _fd_check(model, gi, code, syn, err, lam, iterations, coords_per_block=6, seed=0):
    grads, _ = train.gradient(model, gi, code, syn, err, lam, iterations)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in model.params.items():
        for _ in range(coords_per_block):
            idx = tuple(int(rng.integers(s)) for s in p.shape)
            orig = p[idx]
            h = 1e-4 * max(1.0, abs(orig))
            p[idx] = orig + h
            up = train.gradient(model, gi, code, syn, err, lam, iterations)[1].total
            p[idx] = orig - h
            dn = train.gradient(model, gi, code, syn, err, lam, iterations)[1].total
            p[idx] = orig
            fd = (up - dn) / (2 * h)
            g = grads[name][idx]
            err_rel = abs(g - fd) / max(abs(g), abs(fd), 1e-7)
            worst = max(worst, err_rel)
    return worst


def test_gradient_matches_finite_differences(surface3):
    model = gnn.GnnModel.init(6, 8, 4, seed=11, scale=1.0, dtype=np.float64)
    gi = gnn.GraphIndex.from_code(surface3)
    ds = noise.generate_dataset(surface3, 0.3, 4, seed=5)
    assert _fd_check(model, gi, surface3, ds.syndromes, ds.errors, 1.0, 3) < 1e-4


def test_zero_lambda_is_pure_cross_entropy(surface3):
    model = gnn.GnnModel.init(6, 8, 4, seed=1, dtype=np.float64)
    gi = gnn.GraphIndex.from_code(surface3)
    ds = noise.generate_dataset(surface3, 0.3, 5, seed=6)
    g0, parts = train.gradient(model, gi, surface3, ds.syndromes, ds.errors, 0.0, 2)
    logits, tape = gnn.forward_train(model, gi, ds.syndromes, 2)
    probs = gnn.softmax(logits)
    d_logits = (probs - np.eye(4)[ds.errors]) / (5 * 9)
    gce = gnn.backward(model, gi, tape, d_logits)
    for k in g0:
        assert np.allclose(g0[k], gce[k], rtol=1e-12, atol=1e-15)
    assert parts.commutation == 0.0


def test_zero_weight_model_has_finite_gradients(surface3):
    model = gnn.GnnModel.init(6, 8, 4, seed=0)
    for v in model.params.values():
        v[...] = 0
    gi = gnn.GraphIndex.from_code(surface3)
    syn = np.zeros((4, 8), np.uint8)
    syn[:2] = 1
    errs = np.zeros((4, 9), np.uint8)
    grads, parts = train.gradient(model, gi, surface3, syn, errs, 1.0, 3)
    assert math.isfinite(parts.total)
    assert all(np.all(np.isfinite(g)) for g in grads.values())


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_is_signalled(surface3):
    model = gnn.GnnModel.init(6, 8, 4, seed=0)
    model.params["ro_b2"][0] = np.inf
    gi = gnn.GraphIndex.from_code(surface3)
    with pytest.raises(train.NonFiniteLossError):
        train.gradient(model, gi, surface3, np.zeros((1, 8), np.uint8), np.zeros((1, 9), np.uint8))


def _tiny_config(**kw):
    base = dict(learning_rate=1e-3, epochs=2, batch_size=16, samples_per_epoch=64, test_size=32,
                iterations=3, node_dim=8, msg_hidden=8, edge_dim=4, seed=7, stop_rule="none")
    base.update(kw)
    return train.TrainConfig(**base)


def test_config_validation():
    for bad in (dict(learning_rate=0), dict(dropout=1.0), dict(loss_weight_lambda=-1), dict(stop_rule="x")):
        with pytest.raises(ValueError):
            _tiny_config(**bad)
    with pytest.raises(ValueError):
        train.TrainConfig.from_dict({"learning_rte": 1e-3})
    assert train.TrainConfig().learning_rate == 1e-4 and train.TrainConfig().dropout == 0.05


def test_zero_epochs_returns_model_unchanged(surface3):
    cfg = _tiny_config(epochs=0)
    model = gnn.GnnModel.init(8, 8, 4, seed=3)
    out, hist = train.train(model, surface3, cfg)
    assert hist == []
    for k in model.params:
        assert np.array_equal(out.params[k], model.params[k])


def test_training_is_reproducible_and_logged(surface3, tmp_path):
    cfg = _tiny_config(dropout=0.1)
    model = gnn.GnnModel.init(8, 8, 4, seed=3)
    log_path = tmp_path / "log.csv"
    ckpt = tmp_path / "m.ckpt"
    a, hist_a = train.train(model, surface3, cfg, log_path=log_path, checkpoint_path=ckpt)
    b, hist_b = train.train(model, surface3, cfg)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])
        assert not np.array_equal(a.params[k], model.params[k])
    assert [r["test_loss"] for r in hist_a] == [r["test_loss"] for r in hist_b]
    rows = list(csv.DictReader(open(log_path)))
    assert [int(r["epoch"]) for r in rows] == [1, 2]
    assert {"epoch", "train_loss", "test_loss", "test_ler", "wallclock"} <= set(rows[0])
    saved = gnn.load_model(ckpt)
    assert saved.meta["epochs"] == 2 and saved.meta["distance"] == 3 and saved.meta["seed"] == 7
    assert saved.meta["config"]["samples_per_epoch"] == 64


def test_dimension_mismatch_rejected(surface3):
    with pytest.raises(ValueError):
        train.train(gnn.GnnModel.init(16, 8, 4), surface3, _tiny_config())
    with pytest.raises(ValueError):
        train.warm_start(gnn.GnnModel.init(16, 8, 4), surface3, _tiny_config())


def test_warm_start_runs_on_larger_code(surface3, surface5):
    cfg = _tiny_config(epochs=1)
    small, _ = train.train(gnn.GnnModel.init(8, 8, 4, seed=1), surface3, cfg)
    big, hist = train.warm_start(small, surface5, cfg)
    assert len(hist) == 1
    assert big.meta["warm_start_from"] == "surface_d3"
    assert big.meta["distance"] == 5


def test_stop_rule_ler(surface3):
    cfg = _tiny_config(epochs=5, stop_rule="ler", stop_ler_factor=1e9)
    _, hist = train.train(gnn.GnnModel.init(8, 8, 4, seed=1), surface3, cfg)
    assert len(hist) == 1 and hist[0]["criterion_met"]


def test_load_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"learning_rate": 0.01, "epochs": 3}))
    cfg = train.load_config(path)
    assert cfg.learning_rate == 0.01 and cfg.epochs == 3 and cfg.batch_size == 64
    assert train.TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_complement_bases(surface3):
    kx, kz = train.complement_bases(surface3)
    assert kx.shape == (5, 9) and kz.shape == (5, 9)
    assert not gf2.matvec_mod2(surface3.h_x, kx).any()
    assert not gf2.matvec_mod2(surface3.h_z, kz).any()
