import numpy as np
import pytest
from hypothesis import given, strategies as st

from craftmesh.linalg import dense_solve
from craftmesh.poisson2d import MaskBorderError, boundary_pixels, build_system, poisson_blend


def _square_mask(n=16, lo=5, size=6):
    m = np.zeros((n, n), bool)
    m[lo:lo + size, lo:lo + size] = True
    return m


def _random_mask(rng, n=16):
    m = rng.random((n, n)) < 0.5
    m[[0, -1]] = False
    m[:, [0, -1]] = False
    return m


def test_empty_mask_is_identity(rng):
    t = rng.random((12, 12, 3))
    assert np.array_equal(poisson_blend(t, rng.random((12, 12, 3)), np.zeros((12, 12), bool)), t)


def test_source_equals_target(rng):
    t = rng.random((16, 16, 3))
    out = poisson_blend(t, t, _square_mask())
    assert np.abs(out - t).max() <= 1e-9


def test_constant_source_constant_boundary():
    t = np.full((16, 16), 0.3)
    t[5:11, 5:11] = 0.9  # interior values are overwritten
    out = poisson_blend(t, np.full((16, 16), 0.7), _square_mask())
    assert np.abs(out - 0.3).max() <= 1e-9


def test_cg_matches_dense_on_square_mask(rng):
    t, s = rng.random((16, 16, 3)), rng.random((16, 16, 3))
    system, coords = build_system(t, s, _square_mask())
    xd = dense_solve(system)
    out = poisson_blend(t, s, _square_mask(), clamp=False)
    x = out[coords[:, 0], coords[:, 1]]
    assert np.linalg.norm(x - xd) <= 1e-8 * np.linalg.norm(xd)


def test_discrete_equation_holds(rng):
    t, s = rng.random((10, 10)), rng.random((10, 10))
    m = _square_mask(10, 3, 4)
    out = poisson_blend(t, s, m, clamp=False)
    for p in np.argwhere(m):
        r, c = p
        lhs = 4 * out[r, c]
        rhs = 0.0
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            q = (r + dr, c + dc)
            rhs += s[r, c] - s[q]
            if m[q]:
                lhs -= out[q]
            else:
                rhs += t[q]
        assert lhs == pytest.approx(rhs, abs=1e-8)


def test_errors():
    with pytest.raises(ValueError):
        poisson_blend(np.zeros((8, 8)), np.zeros((8, 9)), np.zeros((8, 8), bool))
    m = np.zeros((8, 8), bool)
    m[0, 3] = True
    with pytest.raises(MaskBorderError):
        poisson_blend(np.zeros((8, 8)), np.zeros((8, 8)), m)
    # erosion trims the offending pixel instead
    assert np.array_equal(poisson_blend(np.zeros((8, 8)), np.ones((8, 8)), m, erode=True), np.zeros((8, 8)))


def test_boundary_pixels():
    m = np.zeros((5, 5), bool)
    m[2, 2] = True
    b = boundary_pixels(m)
    assert sorted(map(tuple, np.argwhere(b))) == [(1, 2), (2, 1), (2, 3), (3, 2)]


def test_mixed_gradients_prefers_stronger(rng):
    t = np.zeros((12, 12))
    t[:, 6:] = 1.0  # strong edge in target
    s = np.full((12, 12), 0.5)
    m = _square_mask(12, 3, 6)
    plain = poisson_blend(t, s, m)
    mixed = poisson_blend(t, s, m, mixed=True)
    edge = lambda img: np.abs(np.diff(img[4:8, 5:8], axis=1)).max()
    assert edge(mixed) > edge(plain)


@given(st.integers(0, 2**31 - 1))
def test_maximum_principle(seed):
    rng = np.random.default_rng(seed)
    t = rng.random((16, 16))
    m = _random_mask(rng)
    out = poisson_blend(t, np.zeros_like(t), m, clamp=False)
    ring = boundary_pixels(m)
    if m.any():
        assert out[m].min() >= t[ring].min() - 1e-9
        assert out[m].max() <= t[ring].max() + 1e-9


@given(st.integers(0, 2**31 - 1))
def test_linearity_in_guidance(seed):
    rng = np.random.default_rng(seed)
    t, s1, s2 = rng.random((3, 14, 14, 2))
    m = _random_mask(rng, 14)
    kw = dict(clamp=False, tol=1e-13)
    lhs = poisson_blend(t, s1 + s2 - t, m, **kw)
    rhs = poisson_blend(t, s1, m, **kw) + poisson_blend(t, s2, m, **kw) - t
    assert np.abs(lhs - rhs)[m].max(initial=0) <= 1e-8


@given(st.integers(0, 2**31 - 1))
def test_outside_mask_bit_identical(seed):
    rng = np.random.default_rng(seed)
    t, s = rng.random((2, 16, 16, 3))
    m = _random_mask(rng)
    out = poisson_blend(t, s, m)
    assert np.array_equal(out[~m], t[~m])
    assert out.min() >= 0 and out.max() <= 1
