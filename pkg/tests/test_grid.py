import numpy as np
import pytest
from hypothesis import given, strategies as st

from slfv.events import (DESK_GEOMETRY, TABLE1_GEOMETRY, DomainGeometry, EventStream,
                         ReproductionEvent, ShapeDistribution, setting1_distribution,
                         setting2_distribution, substream)
from slfv.grid import (EventCapExceeded, apply_event, new_grid,
                       run_until_barrier, write_pgm, write_rle_csv)
from slfv.metrics import FrontRecorder, HittingRecord, HittingRecorder
from slfv.stats import ReplicateEnsemble, fit_speed

from oracles import (check_bookkeeping, grid_from_array, oracle_apply, oracle_initial,
                     oracle_sites, random_event, random_small_geom)


# ---------------------------------------------------------------------------

def test_new_grid_small_example():
    g = new_grid(DomainGeometry(4.0, 4.0, 0.5, 1.0, 1.0))
    arr = g.to_array()
    assert arr.shape == (13, 13)
    assert arr[:3].all() and not arr[3:].any()
    assert g.t_now == 0.0


@pytest.mark.parametrize("geom", [DomainGeometry(4.0, 4.0, 0.5, 1.0, 1.0), DESK_GEOMETRY,
                                  DomainGeometry(7.0, 2.0, 0.25, 0.75, 3.0)])
def test_initial_count_closed_form(geom):
    g = new_grid(geom)
    assert g.occupied_count == (geom.m_cells + 1) * geom.ny
    assert np.array_equal(g.to_array(), oracle_initial(geom))
    check_bookkeeping(g)


def test_table1_lattice_size():
    g = TABLE1_GEOMETRY
    assert g.nx == len(range(round(66.4 * 200) + 1)) == 13281
    assert g.axis_row == 6640 and g.y_of(g.axis_row) == pytest.approx(0.0, abs=1e-12)


def test_bad_geometry_rejected():
    with pytest.raises(ValueError):
        new_grid(DomainGeometry(4.1, 4.0, 0.5, 1.0, 1.0))


def test_event_inside_bulk_changes_nothing(small_geom):
    g = new_grid(small_geom)
    before = g.to_array()
    assert apply_event(g, ReproductionEvent(1.0, -1.0, 0.0, 2.0, 2.0)) is True
    assert np.array_equal(g.to_array(), before)
    # idempotent on a second application
    assert apply_event(g, ReproductionEvent(2.0, -1.0, 0.0, 2.0, 2.0)) is True
    assert np.array_equal(g.to_array(), before)
    assert g.events_applied == 2 and g.t_now == 2.0


def test_event_in_empty_area_is_ignored(small_geom):
    g = new_grid(small_geom)
    before = g.to_array()
    assert apply_event(g, ReproductionEvent(1.0, 3.0, 0.0, 2.0, 2.0)) is False
    assert np.array_equal(g.to_array(), before)
    assert g.events_ignored == 1 and g.t_now == 1.0


def test_event_off_lattice_is_ignored(small_geom):
    g = new_grid(small_geom)
    assert apply_event(g, ReproductionEvent(0.5, -50.0, 0.0, 1.0, 1.0)) is False
    assert g.events_ignored == 1


def test_event_touching_border_fills(small_geom):
    g = new_grid(small_geom)
    assert apply_event(g, ReproductionEvent(1.0, 1.0, 0.0, 2.0, 2.0)) is True
    arr = g.to_array()
    # columns x = 0..2, rows y = -1..1
    assert arr[2:5, 3:6].all() and not arr[5:].any()
    assert arr[3:5].sum() == 6


def test_events_out_of_order_rejected(small_geom):
    g = new_grid(small_geom)
    apply_event(g, ReproductionEvent(2.0, 0.0, 0.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        apply_event(g, ReproductionEvent(1.0, 0.0, 0.0, 1.0, 1.0))


def test_oracle_equivalence_randomised():
    """Kernel and oracle agree after every event on 1000 random small grids."""
    r = np.random.default_rng(12345)
    trials = 0
    for trial in range(1000):
        geom = random_small_geom(r)
        assert geom.nx <= 12 and geom.ny <= 12
        if trial % 2:
            occ = r.random((geom.nx, geom.ny)) < r.uniform(0.05, 0.6)
            g = grid_from_array(geom, occ)
            occ = occ.copy()
        else:
            g = new_grid(geom)
            occ = oracle_initial(geom)
        for k in range(100):
            ev = random_event(r, geom, float(k), lattice=(trial % 3 != 0))
            expect = oracle_apply(occ, oracle_sites(geom, *ev[1:]))
            assert apply_event(g, ev) == expect
            assert np.array_equal(g.to_array(), occ)
        check_bookkeeping(g)
        trials += 1
    assert trials >= 1000


def test_oracle_equivalence_multiword_rows():
    # rows of 209 bits span four 64-bit words
    geom = DomainGeometry(120.0, 6.0, 1.0, 44.0, 1.0)
    r = np.random.default_rng(7)
    for trial in range(30):
        occ = r.random((geom.nx, geom.ny)) < [0.02, 0.3, 0.9][trial % 3]
        g = grid_from_array(geom, occ)
        occ = occ.copy()
        for k in range(200):
            w = float(r.integers(1, 89))
            h = float(r.integers(1, 8))
            ev = ReproductionEvent(float(k), float(geom.x_of(r.integers(geom.nx))),
                                   float(geom.y_of(r.integers(geom.ny))), w, h)
            assert apply_event(g, ev) == oracle_apply(occ, oracle_sites(geom, *ev[1:]))
        assert np.array_equal(g.to_array(), occ)
        check_bookkeeping(g)


@given(st.integers(0, 2**32 - 1))
def test_occupancy_monotone_and_prefix_coupling(seed):
    r = np.random.default_rng(seed)
    geom = random_small_geom(r)
    g = new_grid(geom)
    events = [random_event(r, geom, float(k)) for k in range(60)]
    snaps = []
    for ev in events:
        prev = g.to_array()
        apply_event(g, ev)
        now = g.to_array()
        assert not (prev & ~now).any()
        snaps.append(now)
    # replaying only a prefix gives a subset of the full replay
    final = snaps[-1]
    for s in snaps:
        assert not (s & ~final).any()


def test_stream_boxes_match_rectangle_rasterisation():
    mu = setting2_distribution(7)
    s = EventStream(DESK_GEOMETRY, mu, 3)
    g = new_grid(DESK_GEOMETRY)
    for _ in range(2000):
        t, ci, cj, atom = s.next_raw()
        a = mu.atoms[atom]
        box = g.rectangle_indices(float(DESK_GEOMETRY.x_of(ci)), float(DESK_GEOMETRY.y_of(cj)), a.w, a.h)
        hw, hh = s.half_w[atom], s.half_h[atom]
        assert box == (max(ci - hw, 0), min(ci + hw, g.nx - 1), max(cj - hh, 0), min(cj + hh, g.ny - 1))


# ---------------------------------------------------------------------------

def small_run_geom():
    return DomainGeometry(6.0, 4.0, 0.5, 1.5, 0.8)


def test_barrier_adjacent_terminates_on_first_crossing():
    geom = DomainGeometry(1.0, 2.0, 1.0, 1.0, 1.0)
    mu = ShapeDistribution.point_mass(2.0, 2.0)
    g = new_grid(geom)
    res = run_until_barrier(g, EventStream(geom, mu, 1), keep_log=True)
    occ = oracle_initial(geom)
    log = res.event_log
    for k, (t, ci, cj, atom) in enumerate(log):
        ev = ReproductionEvent(t, float(geom.x_of(ci)), float(geom.y_of(cj)), 2.0, 2.0)
        oracle_apply(occ, oracle_sites(geom, *ev[1:]))
        assert occ[-1].any() == (k == len(log) - 1)
    assert g.barrier_reached and res.barrier_time == log["t"][-1]


def test_event_cap_aborts():
    geom = DESK_GEOMETRY
    with pytest.raises(EventCapExceeded):
        run_until_barrier(new_grid(geom), EventStream(geom, setting1_distribution(), 1), max_events=1000)


def test_fresh_grid_required(small_geom):
    g = new_grid(small_geom)
    apply_event(g, ReproductionEvent(1.0, 0.0, 0.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        run_until_barrier(g, EventStream(small_geom, setting1_distribution(1.0), 0))


@pytest.mark.parametrize("seed", range(5))
def test_batched_and_per_event_paths_agree(seed):
    geom = small_run_geom()
    mu = setting2_distribution(2, 1.0)
    g1, g2 = new_grid(geom), new_grid(geom)
    f1 = FrontRecorder(geom, dt=0.5, row_window=(0, geom.ny - 1))
    f2 = FrontRecorder(geom, dt=0.5, row_window=(0, geom.ny - 1))
    r1 = run_until_barrier(g1, EventStream(geom, mu, seed, chunk_size=64), [f1])
    hr = HittingRecorder(geom)
    r2 = run_until_barrier(g2, EventStream(geom, mu, seed, chunk_size=64), [f2, hr], keep_log=True)
    assert (r1.barrier_time, r1.events_applied, r1.events_ignored) == \
        (r2.barrier_time, r2.events_applied, r2.events_ignored)
    assert np.array_equal(g1.to_array(), g2.to_array())
    assert f1.series.sample_times == f2.series.sample_times and f1.series.sd == f2.series.sd
    assert r2.events_drawn == len(r2.event_log)


@pytest.mark.parametrize("seed", range(8))
def test_hitting_times_match_replay(seed):
    geom = small_run_geom()
    mu = setting2_distribution(3, 1.0)
    g = new_grid(geom)
    hr = HittingRecorder(geom)
    res = run_until_barrier(g, EventStream(geom, mu, seed), [hr], keep_log=True)
    # replay with the oracle, tracking first occupation of each axis site
    occ = oracle_initial(geom)
    ax = geom.axis_row
    tau = np.where(occ[:, ax], 0.0, np.inf)
    sigma = tau.copy()
    for t, ci, cj, atom in res.event_log:
        a = mu.atoms[atom]
        oracle_apply(occ, oracle_sites(geom, float(geom.x_of(ci)), float(geom.y_of(cj)), a.w, a.h))
        tau[np.isinf(tau) & occ[:, ax]] = t
        prefix = np.cumprod(occ[:, ax]).astype(bool)
        sigma[np.isinf(sigma) & prefix] = t
    assert np.array_equal(g.tau, tau) and np.array_equal(g.sigma, sigma)
    rec_grid, rec_hook = HittingRecord.from_grid(g), hr.record()
    for rec in (rec_grid, rec_hook):
        assert np.array_equal(rec.tau, np.where(np.isinf(tau), np.nan, tau)[geom.m_cells:],
                              equal_nan=True)
        assert np.array_equal(rec.sigma, np.where(np.isinf(sigma), np.nan, sigma)[geom.m_cells:],
                              equal_nan=True)


def test_same_seed_same_result():
    geom = DESK_GEOMETRY
    out = []
    for _ in range(2):
        g = new_grid(geom)
        r = run_until_barrier(g, EventStream(geom, setting1_distribution(), substream(9, 4)))
        out.append((r.barrier_time, r.events_applied, r.events_ignored, g.tau.tobytes(),
                    g.sigma.tobytes(), g.occ.tobytes()))
    assert out[0] == out[1]


def test_desk_run_consistent_with_speed():
    geom = DESK_GEOMETRY
    ens = None
    barrier = []
    for k in range(4):
        g = new_grid(geom)
        s = EventStream(geom, setting1_distribution(), substream(31, k))
        res = run_until_barrier(g, s)
        assert res.events_drawn == s.drawn
        rec = HittingRecord.from_grid(g)
        ens = ens or ReplicateEnsemble.for_record(rec, geom.delta)
        ens.add_hitting(rec)
        barrier.append(res.barrier_time)
    speed = fit_speed(ens).speed
    assert np.mean(barrier) * speed == pytest.approx(geom.W, rel=0.3)


def test_snapshot_writers(tmp_path, small_geom):
    g = new_grid(small_geom)
    apply_event(g, ReproductionEvent(1.0, 1.0, 0.0, 2.0, 2.0))
    write_pgm(g, tmp_path / "s.pgm")
    data = (tmp_path / "s.pgm").read_bytes()
    header = b"P5\n9 9\n255\n"
    assert data.startswith(header)
    img = np.frombuffer(data[len(header):], dtype=np.uint8).reshape(9, 9)
    assert np.array_equal(img == 0, g.to_array().T[::-1])
    write_rle_csv(g, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "j,i_start,i_end"
    runs = {tuple(map(int, l.split(","))) for l in lines[1:]}
    assert (4, 0, 4) in runs and (0, 0, 2) in runs and len(runs) == 9
