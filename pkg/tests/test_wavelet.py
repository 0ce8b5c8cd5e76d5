import numpy as np
import pytest

from fidgan import tensor as T
from fidgan.tensor import Tensor
from fidgan.wavelet import Subbands, wave_dec, wave_rec

from conftest import numeric_grad, rel_error


def test_constant_image_lives_in_ll():
    c = 7.5
    s = wave_dec(Tensor(np.full((1, 1, 4, 6), c)))
    assert np.all(s.ll.data == 2 * c)
    for band in (s.lh, s.hl, s.hh):
        assert np.all(band.data == 0)


def test_single_block_filters():
    a, b, c, d = 1.0, 2.0, 5.0, 11.0
    s = wave_dec(Tensor(np.array([[[[a, b], [c, d]]]])))
    assert s.ll.data.item() == (a + b + c + d) / 2
    assert s.lh.data.item() == (a - b + c - d) / 2
    assert s.hl.data.item() == (a + b - c - d) / 2
    assert s.hh.data.item() == (a - b - c + d) / 2


def test_parseval_random(rng):
    x = rng.normal(size=(1, 1, 8, 8))
    s = wave_dec(Tensor(x))
    energy = sum(float(np.sum(b.data ** 2)) for b in s)
    assert abs(energy - np.sum(x ** 2)) / np.sum(x ** 2) < 1e-12


def test_perfect_reconstruction(rng):
    x = rng.normal(size=(3, 2, 16, 10))
    assert np.max(np.abs(wave_rec(wave_dec(Tensor(x))).data - x)) < 1e-12


def test_zeroed_details_of_constant():
    x = np.full((1, 1, 6, 6), -3.0)
    s = wave_dec(Tensor(x))
    z = Tensor(np.zeros(s.ll.shape))
    assert np.array_equal(wave_rec(s.ll, z, z, z).data, x)


def test_hh_impulse_is_checkerboard():
    z = np.zeros((1, 1, 2, 2))
    hh = z.copy()
    hh[0, 0, 1, 0] = 1.0
    out = wave_rec(Subbands(Tensor(z), Tensor(z), Tensor(z), Tensor(hh))).data[0, 0]
    expected = np.zeros((4, 4))
    expected[2:4, 0:2] = [[0.5, -0.5], [-0.5, 0.5]]
    assert np.array_equal(out, expected)


def test_odd_extent_rejected():
    with pytest.raises(ValueError, match="pad"):
        wave_dec(Tensor(np.zeros((1, 1, 5, 4))))


def test_mismatched_subbands_rejected():
    a = Tensor(np.zeros((1, 1, 2, 2)))
    b = Tensor(np.zeros((1, 1, 2, 3)))
    with pytest.raises(ValueError):
        wave_rec(a, a, a, b)


def test_linearity(rng):
    x, y = rng.normal(size=(2, 1, 2, 8, 8))
    lhs = wave_dec(Tensor(2 * x - y))
    sx, sy = wave_dec(Tensor(x)), wave_dec(Tensor(y))
    for l, bx, by in zip(lhs, sx, sy):
        assert np.allclose(l.data, 2 * bx.data - by.data, atol=1e-12)


def test_gradients(rng):
    x = Tensor(rng.normal(size=(2, 2, 4, 6)), True)
    weights = [Tensor(rng.normal(size=(2, 2, 2, 3))) for _ in range(4)]

    def loss():
        s = wave_dec(x)
        return sum(((b * w).sum() for b, w in zip(s, weights)), Tensor(0.0))

    T.backward(loss())
    with T.no_grad():
        num = numeric_grad(lambda: loss().item(), x.data)
    assert rel_error(x.grad, num) < 1e-6
    # orthonormal: the adjoint of analysis is synthesis
    assert np.allclose(x.grad, wave_rec(*weights).data, atol=1e-12)

    bands = [Tensor(rng.normal(size=(1, 1, 3, 3)), True) for _ in range(4)]
    r = Tensor(rng.normal(size=(1, 1, 6, 6)))
    T.backward((wave_rec(*bands) * r).sum())
    for b, expected in zip(bands, wave_dec(r)):
        assert np.allclose(b.grad, expected.data, atol=1e-12)
