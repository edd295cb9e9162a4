import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from slfv.events import (DESK_GEOMETRY, MIXTURE_WEIGHTS, TABLE1_GEOMETRY, DomainGeometry,
                         EventStream, ShapeAtom, ShapeDistribution, event_rate,
                         mixture_probabilities, setting1_distribution, setting2_distribution,
                         setting2_weight, setting3_distribution, substream)


def test_event_rate_table1():
    assert event_rate(TABLE1_GEOMETRY) == pytest.approx(3600.0, rel=1e-12)
    assert TABLE1_GEOMETRY.C == pytest.approx(3600 / 66.4**2, rel=1e-12)


def test_event_rate_unit_domain():
    assert event_rate(DomainGeometry(1.0, 1.0, 0.5, 0.0, 1.0)) == 1.0


def test_event_rate_desk_matches_integrated_intensity():
    g = DomainGeometry(20.0, 20.0, 1 / 50, 3.2, 0.81653)
    # trapezoid rule on the padded box, exact for a constant intensity
    xs = np.linspace(-3.2, 23.2, 101)
    ys = np.linspace(-13.2, 13.2, 101)
    area = integrate.trapezoid(integrate.trapezoid(np.full((101, 101), g.C), ys), xs)
    assert event_rate(g) == pytest.approx(569.1, abs=0.05)
    assert event_rate(g) == pytest.approx(area, rel=1e-12)


def test_desk_geometry_keeps_density():
    assert DESK_GEOMETRY.C == TABLE1_GEOMETRY.C
    assert DESK_GEOMETRY.theta == pytest.approx(569.08, abs=0.01)
    assert (DESK_GEOMETRY.nx, DESK_GEOMETRY.ny) == (1321, 1321)


def test_geometry_rejects_non_integer_cells():
    with pytest.raises(ValueError):
        DomainGeometry(20.0, 20.0, 0.03, 3.2, 1.0)
    with pytest.raises(ValueError):
        DomainGeometry(20.0, 20.0, 0.02, -1.0, 1.0)


def test_margin_must_cover_half_the_largest_side():
    g = DomainGeometry(4.0, 4.0, 0.5, 0.5, 1.0)
    with pytest.raises(ValueError):
        EventStream(g, ShapeDistribution.point_mass(2.0, 0.5), 0)


def test_point_mass_shapes(rng):
    s = EventStream(DESK_GEOMETRY, setting1_distribution(0.2), rng)
    evs = [s.next_event() for _ in range(1000)]
    assert all(e.w == 0.2 and e.h == 0.2 for e in evs)
    assert all(b.t > a.t for a, b in zip(evs, evs[1:]))


def test_interarrival_mean_and_ks(rng):
    s = EventStream(TABLE1_GEOMETRY, setting1_distribution(), rng, chunk_size=4096)
    t = np.array([s.next_raw()[0] for _ in range(100_000)])
    dt = np.diff(np.concatenate(([0.0], t)))
    assert abs(dt.mean() * 3600 - 1) < 0.02
    assert stats.kstest(dt, "expon", args=(0, 1 / 3600)).pvalue > 1e-3


def test_centres_uniform_on_coarse_bins(rng):
    g = DESK_GEOMETRY
    s = EventStream(g, setting1_distribution(), rng)
    raw = np.array([s.next_raw()[1:3] for _ in range(100_000)])
    # 10 x 10 bins of (almost) equal site counts
    ib = raw[:, 0] * 10 // g.nx
    jb = raw[:, 1] * 10 // g.ny
    counts = np.bincount(ib * 10 + jb, minlength=100)
    sizes_i = np.bincount(np.arange(g.nx) * 10 // g.nx, minlength=10)
    sizes_j = np.bincount(np.arange(g.ny) * 10 // g.ny, minlength=10)
    expected = np.outer(sizes_i, sizes_j).ravel() / (g.nx * g.ny) * len(raw)
    assert stats.chisquare(counts, expected).pvalue > 1e-3


def test_shape_frequencies_within_3_sigma():
    mu = setting3_distribution(MIXTURE_WEIGHTS[1])
    s = EventStream(DESK_GEOMETRY, mu, substream(0, 0))
    n = 100_000
    atoms = np.array([s.next_raw()[3] for _ in range(n)])
    freq = np.bincount(atoms, minlength=len(mu.atoms))
    for k, a in enumerate(mu.atoms):
        sd = math.sqrt(n * a.p * (1 - a.p))
        assert abs(freq[k] - n * a.p) < 3 * sd + 1


def test_stream_is_reproducible_and_chunking_invariant():
    g, mu = DESK_GEOMETRY, setting2_distribution(4)
    a = EventStream(g, mu, substream(5, 3))
    b = EventStream(g, mu, substream(5, 3))
    ea = [a.next_event() for _ in range(5000)]
    # consume b through batches of uneven size
    eb = []
    while len(eb) < 5000:
        batch, pos = b.pending()
        k = min(777, batch.t.size - pos, 5000 - len(eb))
        for q in range(pos, pos + k):
            at = mu.atoms[batch.atom[q]]
            eb.append((batch.t[q], float(g.x_of(batch.ci[q])), float(g.y_of(batch.cj[q])), at.w, at.h))
        b.advance(k)
    assert [tuple(e) for e in ea] == eb


def test_substreams_differ():
    x = substream(1, 0).random(4)
    y = substream(1, 1).random(4)
    z = substream(2, 0).random(4)
    assert not np.array_equal(x, y) and not np.array_equal(x, z)
    assert np.array_equal(x, substream(1, 0).random(4))


def test_setting2_examples():
    mu = setting2_distribution(2, 0.2)
    assert {(a.w, a.h) for a in mu.atoms} == {(0.1, 0.2), (0.4, 0.2)}
    p = {a.w: a.p for a in mu.atoms}
    assert p[0.1] == pytest.approx(2 / 3, abs=1e-15) and p[0.4] == pytest.approx(1 / 3, abs=1e-15)
    small, big = setting2_distribution(7, 0.2).atoms
    assert (small.w, small.h, small.p) == pytest.approx((0.1, 0.2, 12 / 13), abs=1e-15)
    assert (big.w, big.h, big.p) == pytest.approx((1.4, 0.2, 1 / 13), abs=1e-15)


def test_setting2_n1_collapses():
    mu = setting2_distribution(1, 0.2)
    assert mu.atoms == (ShapeAtom(0.2, 0.2, 1.0),)
    assert setting2_weight(1) == 0


def test_setting2_rejects_n0():
    with pytest.raises(ValueError):
        setting2_distribution(0)


@given(st.integers(1, 50))
def test_setting2_weight_formula(n):
    assert setting2_weight(n) == Fraction(2 * n - 2, 2 * n - 1)
    mu = setting2_distribution(n, 0.2)
    assert mu.moment(1, 0) * mu.moment(1, 1) == pytest.approx(0.2**3, rel=1e-12)


def test_mixture4_and_mixture1_weights():
    assert np.allclose(mixture_probabilities(MIXTURE_WEIGHTS[4]), [0.5, 0, 0, 0, 0, 0, 0.5])
    assert np.allclose(mixture_probabilities(MIXTURE_WEIGHTS[1]), np.arange(1, 8) / 28)


def test_setting3_degenerate_is_mu1():
    mu = setting3_distribution((1, 0, 0, 0, 0, 0, 0), 0.2)
    assert mu.atoms == (ShapeAtom(0.2, 0.2, 1.0),)


def test_setting3_merges_identical_atoms():
    # every mu^(i), i >= 2, has the (a/2, a) atom
    mu = setting3_distribution(MIXTURE_WEIGHTS[5])
    ws = [a.w for a in mu.atoms]
    assert len(ws) == len(set(ws)) == 8
    assert math.fsum(a.p for a in mu.atoms) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("w", [(0,) * 7, (1, -1, 0, 0, 0, 0, 0), (1, 2, 3)])
def test_setting3_rejects_bad_weights(w):
    with pytest.raises(ValueError):
        setting3_distribution(w)


def test_distribution_validation():
    with pytest.raises(ValueError):
        ShapeDistribution((ShapeAtom(0.1, 0.1, 0.5),))
    with pytest.raises(ValueError):
        ShapeDistribution((ShapeAtom(0.0, 0.1, 1.0),))
    mu = ShapeDistribution((ShapeAtom(1, 1, 0.5), ShapeAtom(1, 1, 0.5), ShapeAtom(2, 1, 0.0)))
    assert mu.atoms == (ShapeAtom(1.0, 1.0, 1.0),)
    with pytest.raises(ValueError):
        mu.check_bounds(0.5, 2.0)


@given(st.lists(st.floats(0.0, 10.0), min_size=7, max_size=7).filter(lambda w: sum(w) > 1e-3))
def test_mixture_is_a_probability_law(w):
    mu = setting3_distribution(w)
    assert all(a.p > 0 for a in mu.atoms)
    assert math.fsum(a.p for a in mu.atoms) == pytest.approx(1.0, abs=1e-12)
