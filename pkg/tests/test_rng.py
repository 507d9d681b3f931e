import numpy as np
from hypothesis import given, strategies as st
from scipy import stats

from kpochaos.rng import SplitMix64, substream


def test_reference_sequence():
    # published splitmix64 outputs for seed 1234567
    g = SplitMix64(1234567)
    assert [g.next_u64() for _ in range(5)] == [
        6457827717110365317, 3203168211198807973, 9817491932198370423,
        4593380528125082431, 16408922859458223821,
    ]


@given(st.integers(0, 2**64 - 1), st.integers(0, 10**6))
def test_substreams_are_reproducible(seed, k):
    assert substream(seed, k).normals(3) == substream(seed, k).normals(3)


def test_substreams_differ():
    firsts = {substream(0, k).next_u64() for k in range(1000)}
    assert len(firsts) == 1000


def test_uniform_range():
    g = SplitMix64(3)
    u = np.array([g.uniform() for _ in range(20000)])
    assert u.min() > 0 and u.max() <= 1


def test_normals_are_standard():
    z = np.array(SplitMix64(42).normals(20000))
    assert abs(z.mean()) < 0.03 and abs(z.std() - 1) < 0.03
    assert stats.kstest(z, "norm").pvalue > 1e-3
