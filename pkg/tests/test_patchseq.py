import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from memstvit.patchseq import GRID_POSITIONS, column_to_patch, map_to_patches, maps_to_patch_array


def test_constant_column():
    p = column_to_patch(np.full((60, 3), 0.3))
    assert p.shape == (16, 16, 3) and np.all(p == 0.3)


def test_ramp_column():
    col = np.repeat((np.arange(60) / 59.0)[:, None], 3, axis=1)
    flat = column_to_patch(col)[..., 0].ravel()
    assert flat[0] == 0.0 and flat[-1] == 1.0
    assert column_to_patch(col)[0, 0, 0] == 0.0 and column_to_patch(col)[15, 15, 0] == 1.0
    assert np.all(np.diff(flat) > 0)
    np.testing.assert_allclose(flat, GRID_POSITIONS / 59.0, atol=1e-15)
    # near-uniform: within 0.23 rows of j*59/255
    assert np.abs(flat - np.arange(256) / 255.0).max() < 0.23 / 59


def test_grid_visits_every_source_row():
    assert set(np.round(GRID_POSITIONS[np.isclose(GRID_POSITIONS % 1, 0)]).astype(int)) == set(range(60))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, (60, 3), elements=st.floats(0, 1)))
def test_min_max_preserved(col):
    p = column_to_patch(col)
    np.testing.assert_array_equal(p.min(axis=(0, 1)), col.min(axis=0))
    np.testing.assert_array_equal(p.max(axis=(0, 1)), col.max(axis=0))


def test_identical_columns_identical_patches():
    m = np.repeat(np.random.default_rng(0).random((60, 1, 3)), 196, axis=1)
    p = map_to_patches(m).patches
    assert p.shape == (196, 16, 16, 3)
    assert np.all(p == p[0])


def test_swap_two_columns():
    rng = np.random.default_rng(1)
    m = rng.random((60, 196, 3))
    p = map_to_patches(m).patches
    m2 = m.copy()
    m2[:, [10, 150]] = m2[:, [150, 10]]
    p2 = map_to_patches(m2).patches
    np.testing.assert_array_equal(p2[10], p[150])
    np.testing.assert_array_equal(p2[150], p[10])
    others = np.setdiff1d(np.arange(196), [10, 150])
    np.testing.assert_array_equal(p2[others], p[others])


def test_flat_tile_and_batch():
    rng = np.random.default_rng(2)
    maps = rng.random((3, 60, 196, 3))
    seq = map_to_patches(maps[1])
    assert seq.flat().shape == (196, 768)
    np.testing.assert_array_equal(seq.flat()[5], seq.patches[5].ravel())
    tile = seq.tile()
    assert tile.shape == (224, 224, 3)
    np.testing.assert_array_equal(tile[16:32, 32:48], seq.patches[14 + 2])
    np.testing.assert_array_equal(maps_to_patch_array(maps)[1], seq.patches)


def test_bad_shapes():
    with pytest.raises(ValueError):
        column_to_patch(np.zeros((59, 3)))
    with pytest.raises(ValueError):
        map_to_patches(np.zeros((60, 195, 3)))
