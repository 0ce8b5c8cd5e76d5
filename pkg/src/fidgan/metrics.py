"""Image-quality metrics and the paired t-test.

Reference-based: MSE, PSNR, SSIM. Reference-free: ROI SNR and CNR. SDs use
the unbiased (n - 1) estimator. Undefined ratios (zero SD) return ``nan``.
"""
import math
import os
from dataclasses import dataclass, field

import numpy as np

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 8


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def mse(a, b):
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(ref, img, peak=None):
    """10 log10(peak^2 / mse); ``peak`` defaults to ref.max() - ref.min(). Identical images give +inf."""
    ref, img = _pair(ref, img)
    if peak is None:
        peak = float(ref.max() - ref.min())
    if peak <= 0:
        raise ValueError("peak must be positive")
    m = mse(ref, img)
    if m == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / m)


def _box_means(x, w):
    """Means over every w x w window (valid positions only), via summed-area tables."""
    s = np.pad(x, ((1, 0), (1, 0))).cumsum(0).cumsum(1)
    return (s[w:, w:] - s[:-w, w:] - s[w:, :-w] + s[:-w, :-w]) / (w * w)


def ssim(ref, img, dynamic_range=None, window=SSIM_WINDOW, k1=SSIM_K1, k2=SSIM_K2):
    """Mean SSIM over all window positions with a uniform window.

    Local statistics use population (1/N) moments.
    """
    ref, img = _pair(ref, img)
    if ref.ndim != 2 or window > min(ref.shape):
        raise ValueError(f"window {window} does not fit image {ref.shape}")
    L = float(ref.max() - ref.min()) if dynamic_range is None else float(dynamic_range)
    if L <= 0:
        L = 1.0
    c1 = (k1 * L) ** 2
    c2 = (k2 * L) ** 2
    mu_a = _box_means(ref, window)
    mu_b = _box_means(img, window)
    # subtracting the global mean first keeps the second moments well conditioned
    sa = ref - ref.mean()
    sb = img - img.mean()
    ma, mb = mu_a - ref.mean(), mu_b - img.mean()
    va = _box_means(sa * sa, window) - ma * ma
    vb = _box_means(sb * sb, window) - mb * mb
    cov = _box_means(sa * sb, window) - ma * mb
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)
    return float(np.mean(num / den))


# ROIs ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Roi:
    mask: np.ndarray
    label: str = ""

    @classmethod
    def rectangle(cls, shape, row, col, height, width, label=""):
        if row < 0 or col < 0 or row + height > shape[0] or col + width > shape[1] or height < 1 or width < 1:
            raise ValueError(f"rectangle ROI ({row}, {col}, {height}, {width}) outside image {shape}")
        m = np.zeros(shape, dtype=bool)
        m[row : row + height, col : col + width] = True
        return cls(m, label)

    def values(self, img):
        img = np.asarray(img, dtype=np.float64)
        m = np.asarray(self.mask, dtype=bool)
        if m.shape != img.shape:
            raise ValueError(f"ROI mask {m.shape} does not match image {img.shape}")
        if not m.any():
            raise ValueError("empty ROI")
        return img[m]


def _as_roi(roi):
    return roi if isinstance(roi, Roi) else Roi(np.asarray(roi, dtype=bool))


def roi_stats(img, roi):
    v = _as_roi(roi).values(img)
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return float(v.mean()), sd


def snr_from_stats(mean, sd):
    return mean / sd if sd > 0 else math.nan


def cnr_from_stats(mean1, sd1, mean2, sd2):
    denom = math.sqrt(sd1 * sd1 + sd2 * sd2)
    return abs(mean1 - mean2) / denom if denom > 0 else math.nan


def snr(img, roi):
    return snr_from_stats(*roi_stats(img, roi))


def cnr(img, roi1, roi2):
    return cnr_from_stats(*roi_stats(img, roi1), *roi_stats(img, roi2))


# paired t-test ----------------------------------------------------------------------

def _betacf(a, b, x, max_iter=500, eps=3e-16):
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def betainc(a, b, x):
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    front = math.exp(lbeta + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t, dof):
    """P(|T| >= |t|) for Student's t with ``dof`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return betainc(0.5 * dof, 0.5, dof / (dof + t * t))


def paired_t_test(before, after):
    """Two-sided paired t-test on ``after - before``.

    All-zero differences return (0.0, 1.0). Constant nonzero differences have
    zero variance and are rejected.
    """
    a = np.asarray(before, dtype=np.float64)
    b = np.asarray(after, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D arrays of equal length")
    if a.size < 2:
        raise ValueError("need at least two pairs")
    d = b - a
    if np.all(d == 0):
        return 0.0, 1.0
    sd = d.std(ddof=1)
    if sd == 0:
        raise ValueError("differences have zero variance; t is undefined")
    t = float(d.mean() / (sd / math.sqrt(d.size)))
    return t, float(t_two_sided_p(t, d.size - 1))


# reports -------------------------------------------------------------------------------

@dataclass
class EvalReport:
    names: list
    values: dict  # column -> list of per-image values
    tests: dict = field(default_factory=dict)  # label -> (t, p)

    def averages(self):
        return {k: float(np.mean(v)) for k, v in self.values.items()}

    def to_tsv(self):
        cols = list(self.values)
        rows = ["image\t" + "\t".join(cols)]
        for i, name in enumerate(self.names):
            rows.append(name + "\t" + "\t".join(f"{self.values[c][i]!r}" for c in cols))
        avg = self.averages()
        rows.append("mean\t" + "\t".join(f"{avg[c]!r}" for c in cols))
        for label, (t, p) in self.tests.items():
            rows.append(f"# paired t-test {label}: t={t!r} p={p!r}")
        return "\n".join(rows) + "\n"

    def save(self, path):
        with open(os.fspath(path), "w") as fh:
            fh.write(self.to_tsv())


def evaluate_pairs(names, refs, noisy, denoised=None, peak=None, window=SSIM_WINDOW):
    """PSNR/SSIM/MSE per image for the noisy (and optionally denoised) set."""
    vals = {"mse_noisy": [], "psnr_noisy": [], "ssim_noisy": []}
    if denoised is not None:
        vals.update({"mse_denoised": [], "psnr_denoised": [], "ssim_denoised": []})
    for i, ref in enumerate(refs):
        for tag, imgs in (("noisy", noisy), ("denoised", denoised)):
            if imgs is None:
                continue
            vals[f"mse_{tag}"].append(mse(ref, imgs[i]))
            vals[f"psnr_{tag}"].append(psnr(ref, imgs[i], peak))
            vals[f"ssim_{tag}"].append(ssim(ref, imgs[i], window=window))
    rep = EvalReport(list(names), vals)
    if denoised is not None and len(refs) >= 2:
        try:
            rep.tests["psnr"] = paired_t_test(vals["psnr_noisy"], vals["psnr_denoised"])
        except ValueError:
            pass
    return rep
