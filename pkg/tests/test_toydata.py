import numpy as np

from memstvit.toydata import make_toy_dataset, real_video_maps, shuffle_columns


def test_real_maps_from_pipeline():
    maps = real_video_maps(3)
    assert len(maps) == 7
    assert all(m.values.shape == (60, 196, 3) for m in maps)


def test_shuffle_keeps_columns():
    m = np.random.default_rng(0).random((60, 196, 3))
    s = shuffle_columns(m, np.random.default_rng(1))
    assert not np.array_equal(s, m)
    key = lambda a: sorted(map(bytes, np.ascontiguousarray(a.transpose(1, 0, 2))))  # noqa: E731
    assert key(s) == key(m)


def test_dataset_balanced_and_split_by_video():
    ds = make_toy_dataset(n_real=70, seed=2)
    assert len(ds.maps) == 140 and ds.labels.sum() == 70
    for v in np.unique(ds.video):
        assert len(set(ds.split[ds.video == v])) == 1
    assert set(ds.split) == {"train", "val", "test"}
    x, y = ds.subset("train")
    assert len(x) == len(y) == int((ds.split == "train").sum())
