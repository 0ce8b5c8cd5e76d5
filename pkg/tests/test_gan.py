import math

import numpy as np
import pytest

from fidgan import gan
from fidgan import network as N
from fidgan import tensor as T
from fidgan.tensor import Tensor

from conftest import numeric_grad, rel_error

TINY_G = N.GeneratorConfig(scales=1, base_channels=2)
TINY_D = N.DiscriminatorConfig(channels=(2, 3, 2))


class ConstantScore:
    """Stand-in discriminator with a learnable constant score per input."""

    def __init__(self, value=0.0, extent=2):
        self.s = Tensor(np.array([value]), requires_grad=True)
        self.extent = extent

    def parameters(self):
        return {"s": self.s}

    def __call__(self, x):
        return _broadcast(self.s, (x.shape[0], 1, self.extent, self.extent))


def _broadcast(s, shape):
    return T._node(np.full(shape, s.data[0]), (s,), lambda g: (np.array([g.sum()]),))


class Identity:
    def parameters(self):
        return {}

    def __call__(self, x):
        return x if isinstance(x, Tensor) else Tensor(x)


def randomize(module, rng, sd=0.5):
    for k, p in module.parameters().items():
        if k.endswith(".w"):
            p.data[...] = rng.normal(0.0, sd, size=p.shape)


# losses ---------------------------------------------------------------------------

def test_d_loss_zero_scores():
    d = ConstantScore(0.0)
    x = np.ones((2, 1, 8, 8))
    assert gan.d_loss(x, x, Identity(), d).item() == 0.0


def test_d_loss_one_dimensional_calculus():
    # loss(s) = -(1 - e^s) - s has derivative e^s - 1, zero at s = 0
    x = np.zeros((1, 1, 8, 8))
    values = {}
    for s in (-0.3, 0.0, 0.4):
        d = ConstantScore(s)
        loss = gan.d_loss(x, x, Identity(), d)
        assert math.isclose(loss.item(), -(1 - math.exp(s)) - s, abs_tol=1e-15)
        T.backward(loss)
        assert math.isclose(d.s.grad[0], math.exp(s) - 1, abs_tol=1e-15)
        values[s] = loss.item()
    assert values[0.0] < values[-0.3] and values[0.0] < values[0.4]


def test_g_loss_trivial_cases():
    z = np.random.default_rng(0).normal(size=(3, 1, 8, 8))
    loss, fid = gan.g_loss(z, Identity(), ConstantScore(0.0), 0.0)
    assert loss.item() == 0.0 and fid == 0.0
    loss, fid = gan.g_loss(z, Identity(), ConstantScore(-0.7), 10.0)
    assert math.isclose(loss.item(), -0.7, abs_tol=1e-15)


def test_g_loss_fidelity_arithmetic():
    class Shift(Identity):
        def __call__(self, x):
            return super().__call__(x) + 0.1

    loss, fid = gan.g_loss(np.zeros((1, 1, 4, 4)), Shift(), ConstantScore(0.0), 10.0)
    assert math.isclose(fid, 0.01, rel_tol=1e-12)
    assert math.isclose(loss.item(), 0.1, rel_tol=1e-12)


def test_g_loss_nondecreasing_in_lambda(rng):
    g = N.build_generator(TINY_G, init_seed=1)
    d = N.build_discriminator(TINY_D, init_seed=2)
    z = rng.normal(size=(2, 1, 8, 8))
    values = []
    for lam in (0.0, 0.5, 1.0, 10.0, 100.0):
        with T.no_grad():
            values.append(gan.g_loss(z, g, d, lam)[0].item())
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_d_loss_gradients_match_finite_differences(rng):
    g = N.build_generator(TINY_G, init_seed=1)
    d = N.build_discriminator(TINY_D, init_seed=2)
    randomize(d, rng)
    x = rng.normal(size=(2, 1, 8, 8))
    z = rng.normal(size=(2, 1, 8, 8))
    d.zero_grad()
    g.zero_grad()
    T.backward(gan.d_loss(x, z, g, d))
    assert all(np.all(p.grad == 0) for p in g.parameters().values())
    for name, p in d.parameters().items():
        with T.no_grad():
            num = numeric_grad(lambda: gan.d_loss(x, z, g, d).item(), p.data)
        if max(np.linalg.norm(num), np.linalg.norm(p.grad)) > 1e-8:
            assert rel_error(p.grad, num) < 1e-4, name


def test_g_loss_gradients_match_finite_differences(rng):
    g = N.build_generator(TINY_G, init_seed=1)
    d = N.build_discriminator(TINY_D, init_seed=2)
    randomize(g, rng)
    randomize(d, rng)
    z = rng.normal(size=(2, 1, 8, 8))
    g.zero_grad()
    d.zero_grad()
    T.backward(gan.g_loss(z, g, d, 10.0)[0])
    assert all(np.all(p.grad == 0) for p in d.parameters().values())
    assert all(p.requires_grad for p in d.parameters().values())
    for name, p in g.parameters().items():
        with T.no_grad():
            num = numeric_grad(lambda: gan.g_loss(z, g, d, 10.0)[0].item(), p.data)
        if max(np.linalg.norm(num), np.linalg.norm(p.grad)) > 1e-8:
            assert rel_error(p.grad, num) < 1e-4, name


# Adam -----------------------------------------------------------------------------

def reference_adam_on_square(x0, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    x, m, v = x0, 0.0, 0.0
    out = []
    for t in range(1, steps + 1):
        g = 2.0 * x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        x = x - lr * mhat / (math.sqrt(vhat) + eps)
        out.append(x)
    return out


def test_adam_matches_reference_on_square():
    p = {"x": np.array([1.0])}
    state = gan.AdamState.for_params(p)
    ref = reference_adam_on_square(1.0, 0.1, 200)
    for r in ref:
        gan.adam_step(p, {"x": 2.0 * p["x"]}, state, 0.1)
        assert abs(p["x"][0] - r) < 1e-12
    assert state.step == 200


def test_adam_first_step_is_lr_sign():
    p = {"w": np.zeros(4)}
    g = np.array([3.0, -0.01, 1e4, -7.0])
    gan.adam_step(p, {"w": g}, gan.AdamState.for_params(p), 1e-3)
    assert np.allclose(p["w"], -1e-3 * np.sign(g), rtol=1e-6)


def test_adam_zero_gradient_leaves_parameters():
    p = {"w": np.arange(5.0)}
    gan.adam_step(p, {"w": np.zeros(5)}, gan.AdamState.for_params(p), 0.1)
    assert np.array_equal(p["w"], np.arange(5.0))


def test_adam_shape_mismatch():
    p = {"w": np.zeros(3)}
    with pytest.raises(ValueError):
        gan.adam_step(p, {"w": np.zeros(4)}, gan.AdamState.for_params(p), 0.1)


def test_train_config_validation():
    with pytest.raises(ValueError):
        gan.TrainConfig(lambda_=-1)
    with pytest.raises(ValueError):
        gan.TrainConfig(lr=0)
    with pytest.raises(ValueError):
        gan.TrainConfig(batch_size=0)


# training -------------------------------------------------------------------------

def synthetic_sets(count=40, n=8, seed=0):
    rng = np.random.default_rng(seed)
    x = np.zeros((count, n, n))
    x[:, 2:6, 2:6] = 100.0
    z = x + rng.normal(0.0, 25.0, size=x.shape)
    return z, x[rng.permutation(count)]


def test_training_smoke_200_iterations():
    z, x = synthetic_sets()
    cfg = gan.TrainConfig(lambda_=10.0, lr=1e-3, batch_size=4, epochs=20, seed=3)
    res = gan.train(z, x, cfg, TINY_G, TINY_D)
    assert len(res.log) == 200
    assert res.log[-1].iteration == 200
    assert all(math.isfinite(v) for r in res.log for v in (r.d_loss, r.g_loss, r.fidelity))
    assert res.checkpoint.epoch == 20 and res.checkpoint.adam_g.step == 200


def test_training_is_deterministic():
    z, x = synthetic_sets(16)
    cfg = gan.TrainConfig(batch_size=4, epochs=2, seed=5, lr=1e-3)
    a = gan.train(z, x, cfg, TINY_G, TINY_D).checkpoint.to_bytes()
    b = gan.train(z, x, cfg, TINY_G, TINY_D).checkpoint.to_bytes()
    assert a == b


def test_resume_reproduces_trajectory(tmp_path):
    z, x = synthetic_sets(16)
    cfg4 = gan.TrainConfig(batch_size=4, epochs=4, seed=5, lr=1e-3, checkpoint_every=2)
    straight = gan.train(z, x, cfg4, TINY_G, TINY_D, checkpoint_dir=tmp_path)
    mid = gan.Checkpoint.load(tmp_path / "epoch_0002.ckpt")
    assert mid.epoch == 2
    resumed = gan.train(z, x, cfg4, resume=mid)
    assert resumed.checkpoint.to_bytes() == straight.checkpoint.to_bytes()
    assert [r.g_loss for r in resumed.log] == [r.g_loss for r in straight.log[len(straight.log) // 2 :]]


def test_checkpoint_round_trip(tmp_path):
    z, x = synthetic_sets(8)
    ck = gan.train(z, x, gan.TrainConfig(batch_size=4, epochs=1), TINY_G, TINY_D).checkpoint
    ck.save(tmp_path / "a.ckpt")
    back = gan.Checkpoint.load(tmp_path / "a.ckpt")
    assert back.to_bytes() == ck.to_bytes()
    assert back.gen_cfg == TINY_G and back.disc_cfg == TINY_D
    with pytest.raises(ValueError, match="magic"):
        gan.Checkpoint.from_bytes(b"nope" + ck.to_bytes()[4:])


def test_divergence_guard():
    z, x = synthetic_sets(8)
    z[0, 0, 0] = np.nan
    cfg = gan.TrainConfig(batch_size=8, epochs=1)
    with pytest.raises(gan.TrainingDiverged) as info:
        gan.train(z, x, cfg, TINY_G, TINY_D)
    assert info.value.iteration == 1


def test_unpaired_batches_come_from_independent_shuffles(monkeypatch):
    z, x = synthetic_sets(16)
    seen = []
    real = gan.d_loss

    def spy(xb, zb, G, D):
        seen.append((xb.copy(), zb.copy()))
        return real(xb, zb, G, D)

    monkeypatch.setattr(gan, "d_loss", spy)
    # tag every patch with its index so batches can be traced back
    z = np.zeros((16, 8, 8)) + np.arange(16)[:, None, None]
    x = np.zeros((16, 8, 8)) + np.arange(16)[:, None, None]
    gan.train(z, x, gan.TrainConfig(batch_size=4, epochs=3, seed=1, intensity_scale=1.0), TINY_G, TINY_D)
    x_ids = [tuple(b[0][:, 0, 0, 0]) for b in seen]
    z_ids = [tuple(b[1][:, 0, 0, 0]) for b in seen]
    assert x_ids != z_ids


# denoise --------------------------------------------------------------------------

@pytest.mark.parametrize("stride", [1, 3, 5, 8, 16])
def test_denoise_identity_stub(stride, rng):
    img = rng.normal(size=(37, 29)) * 40
    out = gan.denoise(img, lambda b: b, patch_size=16, stride=stride)
    assert np.max(np.abs(out - img)) < 1e-12


def test_denoise_tiles_without_overlap():
    img = np.arange(64.0).reshape(8, 8)
    calls = []

    def stub(b):
        calls.append(len(b))
        return -b

    out = gan.denoise(img, stub, patch_size=4, stride=4)
    assert sum(calls) == 4
    assert np.array_equal(out, -img)


def test_denoise_order_independent_batches(rng):
    img = rng.normal(size=(32, 32))

    def stub(b):
        return b ** 2

    a = gan.denoise(img, stub, patch_size=8, stride=3, batch_size=1)
    b = gan.denoise(img, stub, patch_size=8, stride=3, batch_size=1000)
    assert np.max(np.abs(a - b)) < 1e-12


def test_denoise_with_checkpoint_and_mismatch(tmp_path):
    z, x = synthetic_sets(8)
    ck = gan.train(z, x, gan.TrainConfig(batch_size=4, epochs=1), TINY_G, TINY_D).checkpoint
    ck.save(tmp_path / "c.ckpt")
    img = np.random.default_rng(2).normal(size=(20, 20)) * 25
    a = gan.denoise(img, ck, stride=4)
    b = gan.denoise(img, tmp_path / "c.ckpt", stride=4)
    assert a.shape == img.shape and np.array_equal(a, b)
    with pytest.raises(ValueError, match="trained on"):
        gan.denoise(img, ck, patch_size=16)
    with pytest.raises(ValueError, match="exceeds"):
        gan.denoise(np.zeros((6, 6)), ck)


def test_patch_anchors_cover_border():
    assert gan.patch_anchors(10, 4, 4) == [0, 4, 6]
    assert gan.patch_anchors(8, 4, 4) == [0, 4]
    assert gan.patch_anchors(4, 4, 1) == [0]
