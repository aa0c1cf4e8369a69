import numpy as np

from pathreserve import rng


def test_stream_values_do_not_depend_on_batch_size():
    tag = rng.stream_tag("inner")
    full = rng.normals(7, tag, 3, 0, 3000)
    part = rng.normals(7, tag, 3, 1500, 700)
    np.testing.assert_array_equal(full[1500:2200], part)


def test_streams_differ_by_step_tag_and_seed():
    tag = rng.stream_tag("a")
    base = rng.normals(1, tag, 0, 0, 16)
    assert not np.array_equal(base, rng.normals(1, tag, 1, 0, 16))
    assert not np.array_equal(base, rng.normals(1, rng.stream_tag("b"), 0, 0, 16))
    assert not np.array_equal(base, rng.normals(2, tag, 0, 0, 16))


def test_antithetic_pairs_are_mirrored():
    z = rng.normals(0, 5, 0, 0, 2048, antithetic=True)
    np.testing.assert_array_equal(z[0::2], -z[1::2])


def test_uniforms_in_unit_interval():
    u = rng.uniforms(3, 9, 0, 10, 5000)
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / u.size)


def test_mean_and_se_pairs_antithetic_samples():
    x = np.array([1.0, 3.0, 2.0, 2.0, 0.0, 4.0, 5.0, -1.0])
    mean, se = rng.mean_and_se(x, antithetic=True)
    assert mean == 2.0
    assert se == 0.0
    _, se_plain = rng.mean_and_se(x)
    assert se_plain > 0


def test_mean_and_se_single_sample():
    mean, se = rng.mean_and_se(np.array([2.5]))
    assert mean == 2.5 and se == 0.0
