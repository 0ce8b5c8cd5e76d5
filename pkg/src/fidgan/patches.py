"""Patch extraction, random selection and unpaired training-set assembly."""
import json
import os
from dataclasses import dataclass

import numpy as np

from . import gridfile


@dataclass
class PatchSet:
    patches: np.ndarray  # (N, size, size)
    sources: list  # identifier of the source image, per patch
    anchors: list  # (row, col) of each patch in its source
    size: int
    stride: int
    seed: int

    def __len__(self):
        return len(self.patches)

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        files = []
        for i, p in enumerate(self.patches):
            name = f"patch_{i:06d}.fggr"
            gridfile.write(os.path.join(directory, name), p, dtype="float64")
            files.append(name)
        manifest = {
            "size": self.size,
            "stride": self.stride,
            "seed": self.seed,
            "patches": [
                {"file": f, "source": s, "anchor": list(a)} for f, s, a in zip(files, self.sources, self.anchors)
            ],
        }
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=1)

    @classmethod
    def load(cls, directory):
        with open(os.path.join(directory, "manifest.json")) as fh:
            m = json.load(fh)
        entries = m["patches"]
        arr = np.stack([gridfile.read(os.path.join(directory, e["file"])) for e in entries]) if entries else \
            np.zeros((0, m["size"], m["size"]))
        return cls(arr, [e["source"] for e in entries], [tuple(e["anchor"]) for e in entries],
                   m["size"], m["stride"], m["seed"])


def anchor_grid(n, size, stride):
    if size > n:
        raise ValueError(f"patch size {size} exceeds image extent {n}")
    if size < 1 or stride < 1:
        raise ValueError("size and stride must be >= 1")
    return range(0, n - size + 1, stride)


def extract_patches(img, size, stride):
    """All fully contained size x size patches with anchors on the stride grid, row-major."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    rows = anchor_grid(img.shape[0], size, stride)
    cols = anchor_grid(img.shape[1], size, stride)
    view = np.lib.stride_tricks.sliding_window_view(img, (size, size))
    return view[rows.start : rows.stop : stride, cols.start : cols.stop : stride].reshape(-1, size, size).copy()


def _choose(available, count, rng):
    if count > available:
        raise ValueError(f"cannot select {count} of {available} patches")
    if count < 0:
        raise ValueError("count must be >= 0")
    return rng.choice(available, size=count, replace=False)


def random_select(patches, count, seed, sources=None, anchors=None, stride=0):
    """Uniform sample of ``count`` patches without replacement, in random order."""
    patches = np.asarray(patches, dtype=np.float64)
    idx = _choose(len(patches), count, np.random.default_rng(seed))
    src = [None] * len(patches) if sources is None else sources
    anc = [None] * len(patches) if anchors is None else anchors
    return PatchSet(patches[idx], [src[i] for i in idx], [anc[i] for i in idx], int(patches.shape[-1]),
                    int(stride), seed)


def _select_side(images, ids, size, stride, per_image, seed):
    rng = np.random.default_rng(seed)
    chunks, sources, anchors = [], [], []
    for img, ident in zip(images, ids):
        img = np.asarray(img, dtype=np.float64)
        grid = [(r, c) for r in anchor_grid(img.shape[0], size, stride) for c in anchor_grid(img.shape[1], size, stride)]
        idx = _choose(len(grid), per_image, rng)
        chunks.append(extract_patches(img, size, stride)[idx])
        sources.extend([ident] * per_image)
        anchors.extend(grid[i] for i in idx)
    return PatchSet(np.concatenate(chunks), sources, anchors, size, stride, seed)


def build_unpaired_sets(x_images, z_images, size, stride, per_image_count, seed, x_ids=None, z_ids=None):
    """Independent extraction/selection for the clean (x) and noisy (z) sides.

    The two sides draw from separate child seeds and keep no pairing metadata.
    """
    if len(x_images) == 0 or len(z_images) == 0:
        raise ValueError("both image lists must be nonempty")
    x_ids = [f"x{i}" for i in range(len(x_images))] if x_ids is None else list(x_ids)
    z_ids = [f"z{i}" for i in range(len(z_images))] if z_ids is None else list(z_ids)
    if len(x_ids) != len(x_images) or len(z_ids) != len(z_images):
        raise ValueError("one identifier per image is required")
    sx = _select_side(x_images, x_ids, size, stride, per_image_count, [seed, 0])
    sz = _select_side(z_images, z_ids, size, stride, per_image_count, [seed, 1])
    sx.seed = sz.seed = seed
    return sx, sz
