import numpy as np

from pamlab import randomness as rn


def test_windows_agree_with_prefix():
    full = rn.site_words(11, 0, 500)
    for start in (0, 1, 2, 3, 4, 17, 255, 401):
        window = rn.site_words(11, start, 50)
        assert np.array_equal(window, full[start:start + 50])


def test_uniforms_open_interval():
    u = rn.site_uniforms(3, 0, 200_000)
    assert u.min() > 0.0
    assert u.max() < 1.0


def test_exponentials_positive_finite():
    e = rn.site_exponentials(3, 0, 200_000)
    assert (e > 0).all()
    assert np.isfinite(e).all()


def test_streams_differ_by_seed_and_tag():
    a = rn.site_words(1, 0, 100)
    b = rn.site_words(2, 0, 100)
    assert not np.array_equal(a, b)
    g1 = rn.generator(1, rn.TAG_SPARSE, 0).standard_normal(10)
    g2 = rn.generator(1, rn.TAG_ENSEMBLE, 0).standard_normal(10)
    assert not np.array_equal(g1, g2)


def test_spawn_seed_deterministic():
    assert rn.spawn_seed(5, 1, 7) == rn.spawn_seed(5, 1, 7)
    assert rn.spawn_seed(5, 1, 7) != rn.spawn_seed(5, 1, 8)
    assert 0 <= rn.spawn_seed(5, 1, 7) < 2 ** 64
