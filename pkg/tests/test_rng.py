import numpy as np
import pytest
from scipy import stats

from metrolangevin.rng import RngStream, philox4x32


def test_philox_known_answers():
    # Random123 known-answer vectors for Philox4x32-10
    assert philox4x32([0, 0, 0, 0], [0, 0]) == (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)
    assert philox4x32([0xFFFFFFFF] * 4, [0xFFFFFFFF] * 2) == (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)
    assert philox4x32([0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344], [0xA4093822, 0x299F31D0]) == (
        0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)


def test_matches_reference_implementation():
    randomgen = pytest.importorskip("randomgen")
    seed, sid, sub = 0x0123456789ABCDEF, 77, 5
    rs = RngStream(seed, sid, sub)
    for step in (0, 1, 123456):
        ctr = [step, sub, sid & 0xFFFFFFFF, sid >> 32]
        words = philox4x32(ctr, [seed & 0xFFFFFFFF, seed >> 32])
        bg = randomgen.Philox(key=seed, number=4, width=32)
        st = bg.state
        # the generator increments its 128-bit counter before producing a block
        c = (sum(w << (32 * i) for i, w in enumerate(ctr)) - 1) % (1 << 128)
        st["state"]["counter"] = np.array([(c >> (32 * i)) & 0xFFFFFFFF for i in range(4)], dtype=np.uint32)
        st["buffer_pos"] = 4
        bg.state = st
        got = tuple(int(x) for x in bg.random_raw(4))
        assert got == words
        g, u = rs.draw(step)
        assert np.isfinite(g) and 0.0 < u < 1.0


def test_determinism_and_independence():
    a = RngStream(42, 3)
    g1, u1 = a.draws(1000)
    g2, u2 = RngStream(42, 3).draws(1000)
    np.testing.assert_array_equal(g1, g2)
    np.testing.assert_array_equal(u1, u2)
    g3, _ = RngStream(42, 4).draws(1000)
    assert not np.array_equal(g1, g3)
    g4, _ = RngStream(43, 3).draws(1000)
    assert not np.array_equal(g1, g4)
    g5, _ = a.child(1).draws(1000)
    assert not np.array_equal(g1, g5)
    # random access equals sequential
    gs, us = a.draws(10, start=500)
    np.testing.assert_array_equal(gs, g1[500:510])
    assert a.draw(7) == (g1[7], u1[7])


def test_distributions():
    g, u = RngStream(2024, 11).draws(200_000)
    assert stats.kstest(g, "norm").pvalue > 1e-3
    assert stats.kstest(u, "uniform").pvalue > 1e-3
    assert u.min() > 0.0 and u.max() < 1.0
    # G and U come from the same block but must be uncorrelated
    assert abs(np.corrcoef(g, u)[0, 1]) < 4 / np.sqrt(len(g))
    h, _ = RngStream(2024, 12).draws(200_000)
    assert abs(np.corrcoef(g, h)[0, 1]) < 4 / np.sqrt(len(g))


def test_validation():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(0, 2**64)
    with pytest.raises(ValueError):
        RngStream(0, 0, 2**32)
    g, u = RngStream(2**64 - 1, 2**64 - 1).draw(0)
    assert np.isfinite(g)
