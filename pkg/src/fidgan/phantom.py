"""Synthetic disk/rectangle phantoms with optional small anomalies.

Three dataset kinds mirror the data-dependency experiment:

* ``S1``: one disk and one rectangle, random sizes and positions, no anomaly.
* ``S2``: the ``S1`` image with a small anomaly inside the rectangle.
* ``S3``: the ``S1`` image with a small anomaly inside the disk.

Pixel ``(row, col)`` has its center at ``(x=col, y=row)``; a pixel is painted
when its center lies inside the shape (no anti-aliasing).
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

BACKGROUND_HU = 0.0
DISK_HU = 100.0
RECT_HU = 60.0
ANOMALY_DELTA_HU = 50.0

KINDS = ("S1", "S2", "S3")


@dataclass(frozen=True)
class ShapeSpec:
    kind: str  # "disk" or "rectangle"
    center: tuple
    size: object  # radius, or (half_width, half_height)
    intensity: float

    def __post_init__(self):
        if self.kind not in ("disk", "rectangle"):
            raise ValueError(f"unknown shape kind {self.kind!r}")

    @property
    def half_extents(self):
        if self.kind == "disk":
            return float(self.size), float(self.size)
        hw, hh = self.size
        return float(hw), float(hh)

    def mask(self, n):
        y, x = np.mgrid[0:n, 0:n].astype(np.float64)
        cx, cy = self.center
        if self.kind == "disk":
            r = float(self.size)
            return (x - cx) ** 2 + (y - cy) ** 2 <= r * r
        hw, hh = self.size
        return (np.abs(x - cx) <= hw) & (np.abs(y - cy) <= hh)

    def inside_image(self, n):
        cx, cy = self.center
        hx, hy = self.half_extents
        return cx - hx >= -0.5 and cx + hx <= n - 0.5 and cy - hy >= -0.5 and cy + hy <= n - 0.5

    def contains_disk(self, center, radius):
        """True when the disk (center, radius) lies geometrically inside this shape."""
        dx = center[0] - self.center[0]
        dy = center[1] - self.center[1]
        if self.kind == "disk":
            return np.hypot(dx, dy) + radius <= float(self.size)
        hw, hh = self.size
        return abs(dx) + radius <= hw and abs(dy) + radius <= hh


@dataclass(frozen=True)
class AnomalySpec:
    host: str  # "disk" or "rectangle"
    radius: float
    delta: float
    center: tuple

    def as_shape(self, host_intensity):
        return ShapeSpec("disk", self.center, self.radius, host_intensity + self.delta)


@dataclass
class PhantomSample:
    image: np.ndarray
    shapes: list
    anomaly: Optional[AnomalySpec]
    seed: int
    index: int = 0
    kind: str = "S1"
    meta: dict = field(default_factory=dict)

    def metadata(self):
        def shape_dict(s):
            size = list(s.size) if isinstance(s.size, tuple) else s.size
            return {"kind": s.kind, "center": list(s.center), "size": size, "intensity": s.intensity}

        out = {
            "kind": self.kind,
            "index": self.index,
            "seed": self.seed,
            "shapes": [shape_dict(s) for s in self.shapes],
            "anomaly": None,
        }
        if self.anomaly is not None:
            a = self.anomaly
            out["anomaly"] = {"host": a.host, "radius": a.radius, "delta": a.delta, "center": list(a.center)}
        return out


def render(specs, anomaly=None, n=64, background=BACKGROUND_HU):
    """Paint ``specs`` in order onto a constant background, then the anomaly."""
    if n < 16:
        raise ValueError(f"image size must be >= 16, got {n}")
    img = np.full((n, n), float(background))
    for s in specs:
        if not s.inside_image(n):
            raise ValueError(f"{s.kind} at {s.center} with size {s.size} leaves the {n}x{n} image")
        img[s.mask(n)] = s.intensity
    if anomaly is not None:
        host = next((s for s in specs if s.kind == anomaly.host), None)
        if host is None:
            raise ValueError(f"anomaly host {anomaly.host!r} not among the shapes")
        shape = anomaly.as_shape(host.intensity)
        if not shape.inside_image(n):
            raise ValueError("anomaly leaves the image")
        img[shape.mask(n)] = shape.intensity
    return img


def _separated(disk, rect, gap=1.0):
    cx, cy = disk.center
    rx, ry = rect.center
    hw, hh = rect.size
    qx = min(max(cx, rx - hw), rx + hw)
    qy = min(max(cy, ry - hh), ry + hh)
    return np.hypot(cx - qx, cy - qy) > float(disk.size) + gap


def sample_geometry(n, rng, max_tries=1000):
    """One disk and one non-overlapping rectangle with random sizes/positions."""
    for _ in range(max_tries):
        r = rng.uniform(n / 10, n / 5)
        disk = ShapeSpec("disk", tuple(rng.uniform(r - 0.5, n - 0.5 - r, size=2)), float(r), DISK_HU)
        hw, hh = rng.uniform(n / 10, n / 4, size=2)
        center = (rng.uniform(hw - 0.5, n - 0.5 - hw), rng.uniform(hh - 0.5, n - 0.5 - hh))
        rect = ShapeSpec("rectangle", center, (float(hw), float(hh)), RECT_HU)
        if _separated(disk, rect):
            return [disk, rect]
    raise RuntimeError(f"could not place non-overlapping shapes in a {n}x{n} image")


def sample_anomaly(host, n, rng, radius=None, delta=ANOMALY_DELTA_HU):
    """Random small disk strictly inside ``host``."""
    if radius is None:
        radius = rng.uniform(n / 40, n / 20)
    hx, hy = host.half_extents
    if radius >= min(hx, hy):
        raise ValueError(f"anomaly radius {radius:.2f} does not fit in host {host.kind}")
    while True:
        if host.kind == "disk":
            room = float(host.size) - radius
            off = rng.uniform(-room, room, size=2)
            if np.hypot(*off) > room:
                continue
        else:
            off = np.array([rng.uniform(-(hx - radius), hx - radius), rng.uniform(-(hy - radius), hy - radius)])
        center = (host.center[0] + float(off[0]), host.center[1] + float(off[1]))
        return AnomalySpec(host.kind, float(radius), float(delta), center)


def make_sample(kind, n, seed, index=0, anomaly_radius=None):
    """Generate sample ``index`` of dataset ``kind`` under ``seed``.

    The disk/rectangle geometry depends only on (seed, index), so the three
    kinds share shapes and differ only by the anomaly.
    """
    if kind not in KINDS:
        raise ValueError(f"dataset kind must be one of {KINDS}, got {kind!r}")
    shapes = sample_geometry(n, np.random.default_rng((seed, index, 0)))
    anomaly = None
    if kind != "S1":
        host = shapes[1] if kind == "S2" else shapes[0]
        anomaly = sample_anomaly(host, n, np.random.default_rng((seed, index, 1)), radius=anomaly_radius)
    img = render(shapes, anomaly, n)
    return PhantomSample(img, shapes, anomaly, seed, index, kind)


def sample_dataset(kind, count, n=64, seed=0):
    if count < 1:
        raise ValueError("count must be >= 1")
    return [make_sample(kind, n, seed, i) for i in range(count)]


def anomaly_mask(sample, n=None):
    n = sample.image.shape[0] if n is None else n
    if sample.anomaly is None:
        return np.zeros((n, n), dtype=bool)
    return sample.anomaly.as_shape(0.0).mask(n)
