"""Both kernel backends must agree exactly, and with simple oracles."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import BACKENDS
from tourmonitor import kernels
from tourmonitor.geo import flatten_rings

SQUARE = [[(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)]]


def test_backend_is_selected():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("pt,expected", [
    ((0.5, 0.5), True), ((2, 2), False), ((0, 0), True), ((1, 0.5), True),
    ((0.5, 1), True), ((-1e-12, 0.5), False), ((1, 1), True),
])
def test_square(backend, pt, expected):
    vx, vy, starts = flatten_rings(SQUARE)
    assert backend.point_in_rings(pt[0], pt[1], vx, vy, starts) is expected


def test_hole(backend):
    rings = SQUARE + [[(0.25, 0.25), (0.75, 0.25), (0.75, 0.75), (0.25, 0.75), (0.25, 0.25)]]
    vx, vy, starts = flatten_rings(rings)
    assert not backend.point_in_rings(0.5, 0.5, vx, vy, starts)
    assert backend.point_in_rings(0.1, 0.1, vx, vy, starts)
    # on the hole's edge counts as inside
    assert backend.point_in_rings(0.25, 0.5, vx, vy, starts)


def test_batch_matches_scalar(backend):
    rng = np.random.default_rng(3)
    ring = [(math.cos(a), math.sin(a)) for a in np.linspace(0, 2 * math.pi, 9)[:-1]]
    vx, vy, starts = flatten_rings([ring + [ring[0]]])
    xs, ys = rng.uniform(-1.2, 1.2, 300), rng.uniform(-1.2, 1.2, 300)
    batch = backend.points_in_rings(xs, ys, vx, vy, starts)
    assert batch.dtype == np.uint8
    assert [bool(b) for b in batch] == [backend.point_in_rings(x, y, vx, vy, starts)
                                        for x, y in zip(xs, ys)]


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_backends_agree_on_polygons(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(3, 12))
    pts = rng.uniform(-5, 5, size=(k, 2)).round(1)
    ring = [tuple(p) for p in pts] + [tuple(pts[0])]
    vx, vy, starts = flatten_rings([ring])
    xs, ys = rng.uniform(-6, 6, 200).round(1), rng.uniform(-6, 6, 200).round(1)
    a = BACKENDS["python"].points_in_rings(xs, ys, vx, vy, starts)
    b = BACKENDS["cython"].points_in_rings(xs, ys, vx, vy, starts)
    assert np.array_equal(a, b)


def _pearson(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    da, db = a - a.mean(), b - b.mean()
    den = math.sqrt((da * da).sum() * (db * db).sum())
    return float((da * db).sum() / den) if den else math.nan


def test_phi_hand_example(backend):
    # n11=2, n10=1, n01=1, n00=2 -> (4-1)/sqrt(3*3*3*3) = 1/3
    m = np.array([[1, 1], [1, 1], [1, 0], [0, 1], [0, 0], [0, 0]], dtype=np.uint8)
    r = backend.phi_against(m, 0)
    assert r[0] == pytest.approx(1.0, abs=1e-15)
    assert r[1] == pytest.approx(1 / 3, abs=1e-15)
    assert r[1] == pytest.approx(_pearson(m[:, 0], m[:, 1]), abs=1e-15)


def test_phi_zero_variance_is_nan(backend):
    m = np.array([[1, 1, 0], [0, 1, 0], [1, 1, 0]], dtype=np.uint8)
    r = backend.phi_against(m, 0)
    assert math.isnan(r[1]) and math.isnan(r[2])


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_phi_backends_agree_with_pearson(seed):
    rng = np.random.default_rng(seed)
    m = (rng.random((int(rng.integers(2, 40)), int(rng.integers(1, 20)))) < 0.4).astype(np.uint8)
    for name, impl in BACKENDS.items():
        r = impl.phi_against(m, 0)
        for j in range(m.shape[1]):
            expected = _pearson(m[:, 0], m[:, j])
            if math.isnan(expected):
                assert math.isnan(r[j])
            else:
                assert r[j] == pytest.approx(expected, abs=1e-12)
    if len(BACKENDS) == 2:
        a = BACKENDS["python"].phi_against(m, 0)
        b = BACKENDS["cython"].phi_against(m, 0)
        assert np.array_equal(np.isnan(a), np.isnan(b))
        assert np.array_equal(a[~np.isnan(a)], b[~np.isnan(b)])


def test_fallback_selected_by_env():
    import subprocess
    import sys

    code = "from tourmonitor import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={**__import__("os").environ, "TOURMONITOR_NO_EXT": "1"})
    assert out.stdout.strip() == "python"
