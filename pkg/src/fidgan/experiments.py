"""Desk-scale experiments: data dependency on anomalies, fidelity ablation, denoising gain.

Data for every experiment are synthetic phantoms with image-domain Gaussian
noise. Clean targets (x) and noisy inputs (z) always come from disjoint
phantom seeds, so the two training sets are unpaired.
"""
import time
from dataclasses import dataclass, replace

import numpy as np

from . import gan, metrics, patches, phantom, tomo
from . import network as N


@dataclass(frozen=True)
class DeskSetup:
    n: int = 64
    sigma: float = 25.0
    n_images: int = 60
    patch: int = 32
    stride: int = 4
    per_image: int = 20
    scales: int = 2
    base_channels: int = 8
    batch_size: int = 20
    lr: float = 1e-3
    epochs: int = 60
    lambda_: float = 10.0
    intensity_scale: float = 100.0
    noisy_kind: str = "S3"
    clean_seed: int = 100
    noisy_seed: int = 200
    test_seed: int = 300
    patch_seed: int = 7
    train_seed: int = 0

    def configs(self):
        g = N.GeneratorConfig(scales=self.scales, base_channels=self.base_channels)
        c = self.base_channels
        d = N.DiscriminatorConfig(channels=(c, 2 * c, 4 * c))
        t = gan.TrainConfig(lambda_=self.lambda_, lr=self.lr, batch_size=self.batch_size, epochs=self.epochs,
                            seed=self.train_seed, intensity_scale=self.intensity_scale)
        return g, d, t


def noisy_image(img, sigma, seed):
    return tomo.add_gaussian_noise(img, sigma, seed=seed)


def training_sets(setup, clean_kind):
    clean = [s.image for s in phantom.sample_dataset(clean_kind, setup.n_images, setup.n, setup.clean_seed)]
    noisy = [noisy_image(s.image, setup.sigma, [setup.noisy_seed, i])
             for i, s in enumerate(phantom.sample_dataset(setup.noisy_kind, setup.n_images, setup.n, setup.noisy_seed))]
    return patches.build_unpaired_sets(
        clean, noisy, setup.patch, setup.stride, setup.per_image, setup.patch_seed,
        x_ids=[f"{clean_kind}/{setup.clean_seed}/{i}" for i in range(len(clean))],
        z_ids=[f"{setup.noisy_kind}/{setup.noisy_seed}/{i}" for i in range(len(noisy))],
    )


def train_on(setup, clean_kind, on_epoch=None):
    sx, sz = training_sets(setup, clean_kind)
    g, d, t = setup.configs()
    return gan.train(sz, sx, t, g, d, on_epoch=on_epoch)


def anomaly_contrast(img, sample, margin=2.0):
    """(mean inside the anomaly - mean of the surrounding host) / nominal anomaly delta.

    The host reference excludes a ``margin``-pixel band around the anomaly.
    """
    a = sample.anomaly
    if a is None:
        raise ValueError("sample has no anomaly")
    n = sample.image.shape[0]
    host = next(s for s in sample.shapes if s.kind == a.host)
    y, x = np.mgrid[0:n, 0:n]
    inside = phantom.anomaly_mask(sample)
    ring = host.mask(n) & (np.hypot(x - a.center[0], y - a.center[1]) > a.radius + margin)
    return float((img[inside].mean() - img[ring].mean()) / a.delta)


def anomaly_test_set(setup, count=8, radius=3.0, n=None):
    n = setup.n if n is None else n
    out = []
    for i in range(count):
        s = phantom.make_sample("S3", n, setup.test_seed, i, anomaly_radius=radius)
        out.append((s, noisy_image(s.image, setup.sigma, [setup.test_seed, i])))
    return out


def psnr_pair(ref, noisy, den, peak=None):
    return metrics.psnr(ref, noisy, peak), metrics.psnr(ref, den, peak)


@dataclass
class AnomalyResult:
    kind: str
    ratio: float
    ratios: list
    input_ratio: float
    psnr_in: float
    psnr_out: float
    seconds: float
    checkpoint: gan.Checkpoint


def anomaly_experiment(setup, clean_kind, count=8, radius=3.0, denoise_stride=8, on_epoch=None):
    """Train on clean phantoms of ``clean_kind`` and measure how a disk anomaly survives denoising."""
    t0 = time.perf_counter()
    res = train_on(setup, clean_kind, on_epoch)
    ck = res.checkpoint
    ratios, in_ratios, p_in, p_out = [], [], [], []
    for s, z in anomaly_test_set(setup, count, radius):
        y = gan.denoise(z, ck, stride=denoise_stride)
        ratios.append(anomaly_contrast(y, s))
        in_ratios.append(anomaly_contrast(z, s))
        a, b = psnr_pair(s.image, z, y)
        p_in.append(a)
        p_out.append(b)
    return AnomalyResult(clean_kind, float(np.mean(ratios)), ratios, float(np.mean(in_ratios)),
                         float(np.mean(p_in)), float(np.mean(p_out)), time.perf_counter() - t0, ck)


def held_out_fidelity(ck, setup, count=200):
    """Mean per-pixel ||G(z) - z||^2 (in network units) over noisy patches from unseen phantoms."""
    imgs = [noisy_image(s.image, setup.sigma, [setup.test_seed + 1, i])
            for i, s in enumerate(phantom.sample_dataset(setup.noisy_kind, 20, setup.n, setup.test_seed + 1))]
    pool = np.concatenate([patches.extract_patches(im, setup.patch, setup.stride) for im in imgs])
    sel = patches.random_select(pool, min(count, len(pool)), seed=setup.test_seed + 2).patches
    z = sel[:, None] / ck.train_cfg.intensity_scale
    g = ck.build_generator().eval()
    vals = []
    for b in range(0, len(z), 50):
        y = g(z[b : b + 50]).data
        vals.append(((y - z[b : b + 50]) ** 2).mean(axis=(1, 2, 3)))
    return float(np.concatenate(vals).mean())


def fidelity_ablation(setup, lambdas=(10.0, 0.0), clean_kind="S1"):
    """Held-out fidelity for the same data and seeds at each lambda."""
    return {lam: held_out_fidelity(train_on(replace(setup, lambda_=lam), clean_kind).checkpoint, setup)
            for lam in lambdas}


def denoise_gain(ck, setup, n=128, count=4, stride=8):
    """PSNR of noisy and denoised full images of n x n phantoms (Gaussian noise at setup.sigma)."""
    p_in, p_out = [], []
    for i in range(count):
        s = phantom.make_sample("S3", n, setup.test_seed + 3, i)
        z = noisy_image(s.image, setup.sigma, [setup.test_seed + 3, i])
        y = gan.denoise(z, ck, stride=stride)
        a, b = psnr_pair(s.image, z, y)
        p_in.append(a)
        p_out.append(b)
    return float(np.mean(p_in)), float(np.mean(p_out))
