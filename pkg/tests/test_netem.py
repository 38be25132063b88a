import math

import pytest

from uavlink.netem import (
    NO_JITTER,
    DeliveryOutcome,
    EmulatedLink,
    FixedPath,
    FlyOverPath,
    GainCapacityModel,
    Geometry,
    JitterConfig,
    LinkConfig,
    Shaper,
    UndefinedGeometryError,
    WaypointPath,
    elevation_angle,
)
from uavlink.simcore import EventQueue, SeededRng


def make_link(queue=None, cfg=None, seed=1, **kwargs):
    queue = queue or EventQueue()
    cfg = cfg or LinkConfig(jitter=NO_JITTER)
    root = SeededRng(seed)
    return queue, EmulatedLink(queue, cfg, root.spawn("up"), root.spawn("down"), **kwargs)


# -- geometry ------------------------------------------------------------------


def test_elevation_horizontal_ray():
    geom = Geometry(uav_position=(10.0, 0.0, 1.5), bs_position=(0.0, 0.0, 1.5))
    assert elevation_angle(geom) == 0.0


def test_elevation_directly_overhead():
    geom = Geometry(uav_position=(0.0, 0.0, 5.0), bs_position=(0.0, 0.0, 1.0))
    assert elevation_angle(geom) == 90.0


def test_elevation_45_degrees():
    geom = Geometry(uav_position=(1.0, 0.0, 1.0), bs_position=(0.0, 0.0, 0.0))
    assert elevation_angle(geom) == pytest.approx(45.0)


def test_elevation_colocated_is_undefined():
    geom = Geometry(uav_position=(0.0, 0.0, 1.0), bs_position=(0.0, 0.0, 1.0))
    with pytest.raises(UndefinedGeometryError):
        elevation_angle(geom)


# -- capacity model ------------------------------------------------------------


def test_capacity_at_low_angle_is_nearly_full():
    model = GainCapacityModel()
    assert model.capacity_bps(0.0) >= 0.99 * 8.5e6


def test_capacity_overhead_is_nearly_floor():
    model = GainCapacityModel()
    assert model.capacity_bps(90.0) <= 1.05 * 2.0e6


def test_capacity_midpoint_at_edge_angle():
    model = GainCapacityModel()
    assert model.capacity_bps(60.0) == pytest.approx((2.0e6 + 8.5e6) / 2)


def test_capacity_monotone_nonincreasing_on_degree_grid():
    model = GainCapacityModel()
    caps = [model.capacity_bps(a) for a in range(91)]
    assert all(b <= a for a, b in zip(caps, caps[1:]))


def test_capacity_rejects_out_of_range_angle():
    with pytest.raises(ValueError):
        GainCapacityModel().capacity_bps(95.0)


# -- shaper --------------------------------------------------------------------


def test_shaper_service_time_examples():
    # 8780 bits at 8.78 Mb/s serialize in exactly 1 ms.
    assert Shaper.service_time_us(8780, 8.78e6) == 1000
    # 160-bit command frame at the downlink rate: ceil(9.66 us) = 10 us.
    assert Shaper.service_time_us(160, 16.57e6) == 10


def test_shaper_idle_departure():
    s = Shaper(8.78e6, 10_000)
    assert s.admit(1000, 0) == Shaper.service_time_us(8000, 8.78e6)


def test_shaper_sustained_overload_departs_at_rate():
    # Offered 2x the rate for 10 s: long-run departure rate == rate within 1%.
    rate = 8.78e6
    s = Shaper(rate, 100_000)
    nbytes = 1400
    interval_us = int(nbytes * 8 * 1e6 / (2 * rate))
    last_dep = 0
    delivered_bits = 0
    t = 0
    while t <= 10_000_000:
        dep = s.admit(nbytes, t)
        if dep is not None and dep <= 10_000_000:
            delivered_bits += nbytes * 8
            last_dep = dep
        t += interval_us
    assert delivered_bits / 10.0 == pytest.approx(rate, rel=0.01)
    assert last_dep <= 10_000_000


def test_shaper_tail_drops_when_queue_full():
    s = Shaper(1e6, 3000)
    assert s.admit(1500, 0) is not None
    assert s.admit(1500, 0) is not None
    assert s.admit(1500, 0) is None  # would exceed 3000 queued bytes
    assert s.dropped_queue == 1


def test_shaper_releases_queue_space_after_departures():
    s = Shaper(1e6, 3000)
    dep = s.admit(3000, 0)
    assert s.admit(10, 0) is None
    assert s.admit(10, dep) is not None


# -- link delivery -------------------------------------------------------------


def test_deliver_idle_link_arrival_time():
    # 20-byte frame: base delay + ceil(160 bits / downlink rate).
    queue, link = make_link()
    arrivals = []
    link.send_downlink(20, 0, lambda meta, t: arrivals.append(t))
    queue.run_until(1_000_000)
    assert arrivals == [13_830 + 10]


def test_deliver_loss_prob_one_drops_everything():
    queue, link = make_link(cfg=LinkConfig(jitter=NO_JITTER, random_loss_prob=1.0))
    outcomes = [link.send_downlink(20, 0, lambda m, t: None) for _ in range(100)]
    assert all(o is DeliveryOutcome.DROPPED_RANDOM for o in outcomes)


def test_deliver_preserves_order_even_with_jitter():
    cfg = LinkConfig(jitter=JitterConfig(sigma_us=5000))
    queue, link = make_link(cfg=cfg)
    arrivals = []
    for k in range(200):
        link.send_downlink(20, k, lambda m, t, k=k: arrivals.append((k, t)))
    queue.run_until(10_000_000)
    assert [k for k, _ in arrivals] == list(range(200))
    times = [t for _, t in arrivals]
    assert times == sorted(times)


def test_conservation_exact_counts():
    cfg = LinkConfig(jitter=NO_JITTER, random_loss_prob=0.3, queue_limit_bytes=4096)
    queue, link = make_link(cfg=cfg, seed=11)
    delivered = []
    n = 5000
    for k in range(n):
        queue.schedule(k * 50, lambda t: link.send_uplink(1400, t, lambda m, tt: delivered.append(tt)))
    queue.run_until(n * 50)
    c = link.uplink_counters
    assert c.offered == n
    assert c.offered == c.delivered + c.dropped_random + c.dropped_queue + c.in_flight()
    assert c.delivered == len(delivered)
    assert c.dropped_random > 0 and c.dropped_queue > 0


def test_throughput_ceiling_per_one_second_window():
    cfg = LinkConfig(jitter=NO_JITTER)
    queue, link = make_link(cfg=cfg, seed=2)
    window_bits = {}

    def on_arrive(meta, t):
        window_bits[t // 1_000_000] = window_bits.get(t // 1_000_000, 0) + meta

    nbytes = 1400
    interval = int(nbytes * 8 * 1e6 / (2 * 8.78e6))  # 2x overload
    for k in range(0, 5_000_000, interval):
        queue.schedule(k, lambda t: link.send_uplink(nbytes, t, on_arrive, meta=nbytes * 8))
    queue.run_until(5_000_000)
    for w, bits in window_bits.items():
        if w >= 1:  # full windows only
            assert bits <= 8.78e6 * 1.02


def test_uplink_rate_follows_gain_model_and_schedule():
    path = FixedPath(height_m=2.0, distance_m=0.5)
    gain = GainCapacityModel()
    queue, link = make_link(
        cfg=LinkConfig(jitter=NO_JITTER), uav_position_fn=path.position, gain_model=gain
    )
    angle = link.elevation_deg(0)
    assert angle == pytest.approx(math.degrees(math.atan2(2.0, 0.5)))
    assert link.current_uplink_rate_bps(0) == pytest.approx(
        min(8.78e6, gain.capacity_bps(angle))
    )
    cfg = LinkConfig(jitter=NO_JITTER, uplink_capacity_schedule=((0, 8.78e6), (30_000_000, 4.39e6)))
    _, link2 = make_link(cfg=cfg)
    assert link2.current_uplink_rate_bps(0) == 8.78e6
    assert link2.current_uplink_rate_bps(30_000_000) == 4.39e6


def test_height_loss_table_uses_nearest_height():
    table = ((0.0, 0.5), (1.0, 0.0), (2.0, 1.0))
    cfg = LinkConfig(jitter=NO_JITTER, height_loss_table=table)
    path = FixedPath(height_m=1.1, distance_m=10.0)
    queue, link = make_link(cfg=cfg, uav_position_fn=path.position)
    outcomes = [link.send_uplink(100, 0, lambda m, t: None) for _ in range(200)]
    assert all(o is not DeliveryOutcome.DROPPED_RANDOM for o in outcomes)  # nearest is 1.0 -> p=0


# -- flight paths ---------------------------------------------------------------


def test_flyover_path_geometry():
    path = FlyOverPath(height_m=2.0, offset_m=1.0, speed_mps=0.5, midpoint_s=30.0)
    assert path.position(30_000_000) == (0.0, 1.0, 2.0)
    x0 = path.position(0)[0]
    assert x0 == pytest.approx(-15.0)


def test_waypoint_path_interpolates_and_clamps():
    path = WaypointPath(waypoints=((0.0, 0, 0, 0), (10.0, 10, 0, 2)))
    assert path.position(5_000_000) == pytest.approx((5.0, 0.0, 1.0))
    assert path.position(20_000_000) == (10.0, 0.0, 2.0)
    with pytest.raises(ValueError):
        WaypointPath(waypoints=((5.0, 0, 0, 0), (1.0, 1, 1, 1)))


def test_link_config_validation():
    with pytest.raises(ValueError):
        LinkConfig(random_loss_prob=1.5)
    with pytest.raises(ValueError):
        LinkConfig(uplink_capacity_bps=0)
    with pytest.raises(ValueError):
        GainCapacityModel(cap_min_bps=9e6, cap_max_bps=8e6)
