import math

import numpy as np
import pytest

from fidgan import phantom as ph


def count_pixels_in_circle(n, cx, cy, r):
    count = 0
    for row in range(n):
        for col in range(n):
            if (col - cx) ** 2 + (row - cy) ** 2 <= r * r:
                count += 1
    return count


def test_empty_spec_list_is_background():
    img = ph.render([], n=32, background=-5.0)
    assert np.all(img == -5.0)


@pytest.mark.parametrize("r", [4.0, 7.3, 12.0])
def test_centered_disk_pixel_count(r):
    n = 40
    c = (n - 1) / 2
    img = ph.render([ph.ShapeSpec("disk", (c, c), r, 1.0)], n=n)
    painted = int(img.sum())
    assert painted == count_pixels_in_circle(n, c, c, r)
    assert abs(painted - math.pi * r * r) <= 4 * math.sqrt(math.pi * r * r)


def test_out_of_bounds_rejected():
    with pytest.raises(ValueError):
        ph.render([ph.ShapeSpec("disk", (3.0, 10.0), 5.0, 1.0)], n=32)
    with pytest.raises(ValueError):
        ph.render([], n=8)


def test_later_specs_overwrite():
    a = ph.ShapeSpec("rectangle", (10.0, 10.0), (5.0, 5.0), 1.0)
    b = ph.ShapeSpec("disk", (10.0, 10.0), 2.0, 2.0)
    img = ph.render([a, b], n=20)
    assert img[10, 10] == 2.0 and img[6, 6] == 1.0


def test_seed_determinism():
    a = ph.sample_dataset("S3", 5, 64, seed=11)
    b = ph.sample_dataset("S3", 5, 64, seed=11)
    for x, y in zip(a, b):
        assert np.array_equal(x.image, y.image)
        assert x.metadata() == y.metadata()


def test_s1_has_no_anomaly():
    for s in ph.sample_dataset("S1", 20, 64, seed=3):
        assert s.anomaly is None
        assert s.metadata()["anomaly"] is None
        assert set(np.unique(s.image)) <= {ph.BACKGROUND_HU, ph.DISK_HU, ph.RECT_HU}


@pytest.mark.parametrize("kind,host", [("S2", "rectangle"), ("S3", "disk")])
def test_anomaly_contained_in_host(kind, host):
    for s in ph.sample_dataset(kind, 50, 64, seed=5):
        assert s.anomaly.host == host
        host_shape = next(x for x in s.shapes if x.kind == host)
        assert host_shape.contains_disk(s.anomaly.center, s.anomaly.radius)
        amask = ph.anomaly_mask(s)
        assert amask.sum() > 0
        assert np.all(host_shape.mask(64)[amask])
        assert np.all(s.image[amask] == host_shape.intensity + ph.ANOMALY_DELTA_HU)


def test_kinds_share_geometry():
    s1, s2, s3 = (ph.make_sample(k, 64, seed=9, index=4) for k in ph.KINDS)
    assert s1.shapes == s2.shapes == s3.shapes
    assert np.array_equal(s1.image != s3.image, ph.anomaly_mask(s3))


def test_two_seeds_give_disjoint_anomaly_positions():
    a = {s.anomaly.center for s in ph.sample_dataset("S3", 100, 64, seed=1)}
    b = {s.anomaly.center for s in ph.sample_dataset("S3", 100, 64, seed=2)}
    assert len(a) == 100 and a.isdisjoint(b)


def test_size_ranges():
    n = 64
    for s in ph.sample_dataset("S3", 30, n, seed=8):
        disk, rect = s.shapes
        assert n / 10 <= disk.size <= n / 5
        assert all(n / 10 <= h <= n / 4 for h in rect.size)
        assert n / 40 <= s.anomaly.radius <= n / 20
