import numpy as np
import pytest

from erspin import rng


def test_stream_reproducible_and_independent():
    a = rng.stream(5, "x", 0).random(8)
    np.testing.assert_array_equal(a, rng.stream(5, "x", 0).random(8))
    assert not np.array_equal(a, rng.stream(5, "x", 1).random(8))
    assert not np.array_equal(a, rng.stream(5, "y", 0).random(8))
    assert not np.array_equal(a, rng.stream(6, "x", 0).random(8))


def test_seed_range():
    rng.stream(2**64 - 1, "x")
    with pytest.raises(ValueError):
        rng.stream(2**64, "x")
    with pytest.raises(ValueError):
        rng.stream(-1, "x")


def test_block_sizes():
    assert rng.block_sizes(10, 4) == [4, 4, 2]
    assert rng.block_sizes(8, 4) == [4, 4]
    assert rng.block_sizes(0, 4) == []


@pytest.mark.parametrize("threads", [1, 2, 8])
def test_map_blocks_thread_invariant(threads):
    ref = rng.map_blocks(lambda g, n: g.standard_normal(n), [5, 5, 3], 9, "t", 1)
    out = rng.map_blocks(lambda g, n: g.standard_normal(n), [5, 5, 3], 9, "t", threads)
    for a, b in zip(ref, out):
        np.testing.assert_array_equal(a, b)


def test_uniformity():
    x = rng.stream(0, "u").random(200000)
    assert abs(x.mean() - 0.5) < 5 * np.sqrt(1 / 12 / x.size)
    counts = np.histogram(x, bins=20, range=(0, 1))[0]
    assert counts.min() > 0.9 * x.size / 20
