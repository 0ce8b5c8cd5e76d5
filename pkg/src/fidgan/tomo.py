"""Parallel-beam CT simulation: projection, ramp-filtered backprojection, noise.

Geometry conventions, all in pixel units: pixel ``(row, col)`` sits at
``(x, y) = (col - c, row - c)`` with ``c = (n - 1) / 2``. The view at angle
``theta`` measures line integrals along rays ``s * e + t * d`` with
``e = (cos, sin)`` and ``d = (-sin, cos)``; detector ``k`` sits at offset
``s_k = (k - (n_det - 1) / 2) * pitch``.

``radon`` and ``fbp`` act on attenuation images (linear maps). Use
``hu_to_mu``/``mu_to_hu`` to move between Hounsfield units and attenuation.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

MU_WATER = 0.02  # 1/mm, nominal monochromatic energy
SAMPLE_STEP = 0.5  # pixels, along each ray


@dataclass(frozen=True)
class ScanGeometry:
    n_angles: int = 180
    n_detectors: int = 183
    pitch: float = 1.0

    @classmethod
    def for_image(cls, n, n_angles=180, pitch=1.0):
        return cls(n_angles, int(math.ceil(math.sqrt(2) * n / pitch)) + 1, pitch)

    @property
    def angles(self):
        return np.arange(self.n_angles) * (np.pi / self.n_angles)

    @property
    def offsets(self):
        return (np.arange(self.n_detectors) - 0.5 * (self.n_detectors - 1)) * self.pitch

    def check_covers(self, n):
        if self.n_detectors * self.pitch < math.sqrt(2) * n:
            raise ValueError(
                f"{self.n_detectors} detectors at pitch {self.pitch} do not cover the "
                f"diagonal of a {n}x{n} image (need >= {math.sqrt(2) * n / self.pitch:.1f})"
            )

    def check_sinogram(self, sino):
        if sino.shape != (self.n_angles, self.n_detectors):
            raise ValueError(f"sinogram shape {sino.shape} does not match geometry ({self.n_angles}, {self.n_detectors})")


@dataclass(frozen=True)
class NoiseConfig:
    blank_flux: float = 8e4
    electronic_sd: float = 10.0
    image_gaussian_sd: float = 25.0
    seed: int = 0

    def __post_init__(self):
        if self.blank_flux <= 0:
            raise ValueError("blank_flux must be positive")
        if self.electronic_sd < 0 or self.image_gaussian_sd < 0:
            raise ValueError("noise standard deviations must be non-negative")


def hu_to_mu(img, mu_water=MU_WATER):
    return mu_water * (1.0 + np.asarray(img, dtype=np.float64) / 1000.0)


def mu_to_hu(mu, mu_water=MU_WATER):
    return 1000.0 * (np.asarray(mu, dtype=np.float64) / mu_water - 1.0)


def radon(img, geom=None, step=SAMPLE_STEP):
    """Line integrals of a square attenuation image (pixel units of length)."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    n = img.shape[0]
    if img.ndim != 2 or img.shape[1] != n:
        raise ValueError(f"radon expects a square image, got {img.shape}")
    geom = ScanGeometry.for_image(n) if geom is None else geom
    geom.check_covers(n)
    half = math.sqrt(2) * n / 2 + 1
    m = int(math.ceil(half / step))
    ts = np.arange(-m, m + 1) * step
    return _kernels.radon(img, geom.angles, geom.offsets, ts, float(step))


def ramp_kernel(n_det):
    """Discrete band-limited ramp (Ram-Lak) taps for offsets -(n_det-1)..(n_det-1).

    Values in units of 1/pitch^2 with unit pitch: 1/4 at zero, -1/(pi k)^2 at
    odd k, 0 at even k.
    """
    k = np.arange(-(n_det - 1), n_det)
    h = np.zeros(k.size)
    h[k == 0] = 0.25
    odd = k % 2 == 1
    h[odd] = -1.0 / (np.pi * k[odd]) ** 2
    return h


def ramp_filter(sino, pitch=1.0):
    """Filter every view with the Ram-Lak kernel (linear convolution, >= 2x zero padding)."""
    sino = np.asarray(sino, dtype=np.float64)
    n_det = sino.shape[-1]
    size = 1 << int(math.ceil(math.log2(2 * n_det)))
    h = ramp_kernel(n_det)
    hp = np.zeros(size)
    hp[: n_det] = h[n_det - 1 :]
    hp[size - (n_det - 1) :] = h[: n_det - 1]
    spec = np.fft.rfft(hp)
    out = np.fft.irfft(np.fft.rfft(sino, n=size, axis=-1) * spec, n=size, axis=-1)[..., :n_det]
    return out / pitch


def backproject(sino, geom, n):
    """Smear each view back across an n x n grid; scaled by pi / n_angles."""
    sino = np.ascontiguousarray(sino, dtype=np.float64)
    geom.check_sinogram(sino)
    img = _kernels.backproject(sino, geom.angles, int(n), float(geom.pitch))
    return img * (np.pi / geom.n_angles)


def fbp(sino, geom, n):
    geom.check_sinogram(np.asarray(sino))
    return backproject(ramp_filter(sino, geom.pitch), geom, n)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def add_quantum_noise(sino, cfg, rng=None):
    """Poisson photon counts plus Gaussian electronic noise, re-logged.

    counts = Poisson(I0 * exp(-p)) + Normal(0, sd_e^2), clamped to >= 1;
    returns ln(I0 / counts).
    """
    sino = np.asarray(sino, dtype=np.float64)
    if np.any(sino < 0):
        raise ValueError("line integrals must be non-negative")
    rng = _rng(cfg.seed if rng is None else rng)
    counts = rng.poisson(cfg.blank_flux * np.exp(-sino)).astype(np.float64)
    if cfg.electronic_sd > 0:
        counts += rng.normal(0.0, cfg.electronic_sd, size=counts.shape)
    np.maximum(counts, 1.0, out=counts)
    return np.log(cfg.blank_flux / counts)


def add_gaussian_noise(img, sd, seed=0):
    """Add i.i.d. Normal(0, sd^2) to every pixel."""
    if sd < 0:
        raise ValueError("sd must be non-negative")
    img = np.array(img, dtype=np.float64)
    if sd == 0:
        return img
    return img + _rng(seed).normal(0.0, sd, size=img.shape)


def simulate_quantum_ldct(img_hu, cfg, geom=None, pixel_mm=1.0, rng=None):
    """HU image -> noisy sinogram -> FBP -> HU image."""
    n = img_hu.shape[0]
    geom = ScanGeometry.for_image(n) if geom is None else geom
    sino = radon(hu_to_mu(img_hu) * pixel_mm, geom)
    noisy = add_quantum_noise(np.maximum(sino, 0.0), cfg, rng)
    return mu_to_hu(fbp(noisy, geom, n) / pixel_mm)
