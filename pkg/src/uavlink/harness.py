"""Experiment harness: builds a world from a scenario config, runs it,
aggregates metrics, and writes CSV result files.

Per run directory: summary.csv (one row), cc_log.csv (frame_id,
timestamp_us, side), video_log.csv (per-frame records), windows.csv
(per-second throughput/loss/elevation series). A sweep additionally writes a
combined summary.csv at the output root. All output is byte-deterministic in
(seed, config).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import __version__
from .cclink import CcReceiver, CcSender, ConstantStick, SineStick, StickSource, ZeroStick
from .config import ConfigValidationError, ScenarioConfig, expand_sweep, make_resolution
from .metrics import CcStats, VideoStats, match_cc_logs, video_stats
from .netem import EmulatedLink
from .simcore import EventQueue, NodeClock, SeededRng, USEC_PER_SEC, mix_seed, start_periodic_sync
from .video import EncoderModel, FpsController, VideoSession, VideoSessionResult


@dataclass
class ScenarioResult:
    scenario_id: str
    seed: int
    config_hash: str
    cfg: ScenarioConfig
    duration_us: int
    cc_stats: Optional[CcStats] = None
    cc_tx_log: list = field(default_factory=list)
    cc_rx_log: list = field(default_factory=list)
    video_stats: Optional[VideoStats] = None
    video_session: Optional[VideoSessionResult] = None
    counters: dict = field(default_factory=dict)
    out_dir: Optional[Path] = None

    def summary_row(self) -> dict:
        """Column layout: identity/traceability first, then metric columns."""
        freq = self.cfg.cc.frequencies_hz[0] if self.cfg.cc.enabled else None
        height = self.cfg.flight_path.heights_m[0]
        resolution = self.cfg.video.resolutions[0] if self.cfg.video.enabled else None
        if self.cc_stats is not None and self.cc_stats.delays_us:
            dmin, davg, dmax = self.cc_stats.delay_aggregate_us()
        elif self.video_stats is not None and self.video_stats.delays_us:
            dmin, davg, dmax = self.video_stats.delay_aggregate_us()
        else:
            dmin = davg = dmax = None
        return {
            "scenario_id": self.scenario_id,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "code_version": __version__,
            "path_kind": self.cfg.flight_path.kind,
            "freq_hz": _fmt(freq, "{:g}"),
            "height_m": f"{height:g}",
            "resolution": resolution if resolution is not None else "",
            "delay_min_us": _fmt(dmin, "{:.0f}"),
            "delay_avg_us": _fmt(davg, "{:.1f}"),
            "delay_max_us": _fmt(dmax, "{:.0f}"),
            "reliability": _fmt(
                self.cc_stats.reliability if self.cc_stats is not None else None, "{:.6f}"
            ),
            "throughput_avg_bps": _fmt(
                self.video_stats.throughput_avg_bps if self.video_stats is not None else None,
                "{:.1f}",
            ),
            "segment_loss_frac": _fmt(
                self.video_stats.segment_loss_frac if self.video_stats is not None else None,
                "{:.6f}",
            ),
        }


SUMMARY_COLUMNS = [
    "scenario_id",
    "seed",
    "config_hash",
    "code_version",
    "path_kind",
    "freq_hz",
    "height_m",
    "resolution",
    "delay_min_us",
    "delay_avg_us",
    "delay_max_us",
    "reliability",
    "throughput_avg_bps",
    "segment_loss_frac",
]


def _fmt(v, spec: str) -> str:
    return "" if v is None else spec.format(v)


def _make_stick(cfg: ScenarioConfig) -> StickSource:
    stick = cfg.cc.stick
    if stick.kind == "zeros":
        return ZeroStick()
    if stick.kind == "constant":
        return ConstantStick(stick.roll, stick.pitch, stick.yaw, stick.thrust)
    return SineStick(amplitude=stick.amplitude, period_s=stick.period_s)


def run_scenario(
    cfg: ScenarioConfig,
    out_dir: Optional[Path] = None,
    scenario_id_override: Optional[str] = None,
    seed_override: Optional[int] = None,
    write_outputs: bool = True,
) -> ScenarioResult:
    """Run one scenario in a fresh world; deterministic in (seed, config)."""
    if cfg.is_sweep():
        raise ConfigValidationError(
            "config contains sweep lists; expand them with sweep() or pass a single value"
        )
    sid, member = expand_sweep(cfg)[0]
    if scenario_id_override is not None:
        sid = scenario_id_override
    seed = cfg.seed if seed_override is None else seed_override
    duration_s = member.resolved_duration_s()
    duration_us = int(round(duration_s * USEC_PER_SEC))

    root = SeededRng(seed)
    queue = EventQueue()
    clocks = member.clocks
    clock_gcs = NodeClock(
        drift_ppm=clocks.drift_ppm_ground,
        sync_interval_s=clocks.sync_interval_s,
        max_residual_error_us=clocks.max_residual_error_us,
    )
    clock_uav = NodeClock(
        drift_ppm=clocks.drift_ppm_uav,
        sync_interval_s=clocks.sync_interval_s,
        max_residual_error_us=clocks.max_residual_error_us,
    )
    start_periodic_sync(queue, clock_gcs, root.spawn("clock.gcs"), 0)
    start_periodic_sync(queue, clock_uav, root.spawn("clock.uav"), 0)

    path = member.flight_path.to_path(member.flight_path.heights_m[0], duration_s)
    link = EmulatedLink(
        queue,
        member.link,
        root.spawn("link.up"),
        root.spawn("link.down"),
        uav_position_fn=path.position,
        bs_position=member.bs_position,
        antenna_tilt_deg=member.antenna_tilt_deg,
        gain_model=member.gain_model.to_model() if member.gain_model.enabled else None,
    )

    receiver = sender = None
    if member.cc.enabled:
        receiver = CcReceiver(
            queue,
            clock_uav,
            capacity_frames=member.cc.buffer_capacity_frames,
            poll_period_us=member.cc.poll_period_us,
            processing_time_us=member.cc.processing_time_us,
        )
        sender = CcSender(
            queue,
            link,
            clock_gcs,
            member.cc.frequencies_hz[0],
            receiver.on_datagram,
            stick_source=_make_stick(member),
            max_frames=member.cc.frames,
        )
        receiver.start()
        sender.start()

    video_session = None
    if member.video.enabled:
        resolution = make_resolution(member)
        nominal = member.video.nominal_bitrate_bps
        encoder = EncoderModel(
            nominal_bitrate_bps=nominal if nominal is not None else resolution.default_bitrate_bps(),
            reference_fps=member.video.reference_fps,
            size_jitter_cv=member.video.size_jitter_cv,
        )
        ctl = member.video.controller
        controller = FpsController(
            fps=member.video.fps,
            min_fps=ctl.min_fps,
            max_fps=ctl.max_fps,
            increase_step=ctl.increase_step,
            decrease_factor=ctl.decrease_factor,
            loss_threshold=ctl.loss_threshold,
            delay_threshold_us=ctl.delay_threshold_us,
            window_ms=ctl.window_ms,
            enabled=ctl.enabled,
        )
        video_session = VideoSession(
            queue,
            link,
            clock_uav,
            clock_gcs,
            encoder,
            controller,
            root.spawn("encoder.sizes"),
            duration_us,
            mtu_payload_bytes=member.video.mtu_payload_bytes,
            reassembly_timeout_us=member.video.reassembly_timeout_ms * 1000,
            display_latency_us=member.video.display_latency_us,
        )
        video_session.start()

    queue.run_until(duration_us)

    result = ScenarioResult(
        scenario_id=sid,
        seed=seed,
        config_hash=cfg.config_hash(),
        cfg=member,
        duration_us=duration_us,
    )
    counters: dict[str, int] = {}
    if sender is not None and receiver is not None:
        result.cc_tx_log = sender.tx_log
        result.cc_rx_log = receiver.rx_log
        result.cc_stats = match_cc_logs(sender.tx_log, receiver.rx_log)
        dc = link.downlink_counters
        counters.update(
            cc_sent=dc.offered,
            cc_received=len(receiver.rx_log),
            cc_dropped_random=dc.dropped_random,
            cc_dropped_queue=dc.dropped_queue,
            cc_overflow_drops=receiver.overflow_drops,
            cc_in_flight=dc.in_flight(),
            cc_in_buffer=len(receiver.rx_buffer),
            cc_corrupt=receiver.corrupt_frames,
        )
    if video_session is not None:
        session_result = video_session.finish()
        result.video_session = session_result
        result.video_stats = video_stats(
            session_result.log, duration_us, window_us=session_result.window_us
        )
        uc = link.uplink_counters
        counters.update(
            video_segments_sent=uc.offered,
            video_segments_delivered=uc.delivered,
            video_segments_dropped_random=uc.dropped_random,
            video_segments_dropped_queue=uc.dropped_queue,
            video_segments_in_flight=uc.in_flight(),
            video_frames_captured=result.video_stats.frames_total,
            video_frames_completed=result.video_stats.frames_completed,
            video_frames_lost=result.video_stats.frames_lost,
            video_frames_unresolved=result.video_stats.frames_unresolved,
        )
    result.counters = counters

    if write_outputs:
        base = Path(out_dir) if out_dir is not None else Path(cfg.outputs)
        run_dir = base / sid
        run_dir.mkdir(parents=True, exist_ok=True)
        _write_summary(run_dir / "summary.csv", [result.summary_row()])
        if result.cc_stats is not None:
            _write_cc_log(run_dir / "cc_log.csv", result.cc_tx_log, result.cc_rx_log)
        if result.video_session is not None:
            _write_video_log(run_dir / "video_log.csv", result.video_session)
            _write_windows(run_dir / "windows.csv", sid, result.video_session)
        result.out_dir = run_dir
    return result


@dataclass
class SweepResult:
    results: list[ScenarioResult]
    out_dir: Optional[Path] = None
    summary_path: Optional[Path] = None


def sweep(cfg: ScenarioConfig, out_dir: Optional[Path] = None) -> SweepResult:
    """Run the cross product of all sweep axes.

    Member seeds derive from the master seed and the combination index via
    splitmix64 (see :func:`uavlink.simcore.mix_seed`), so a member's result
    depends only on its position in the enumeration and the master seed.
    """
    members = expand_sweep(cfg)
    base = Path(out_dir) if out_dir is not None else Path(cfg.outputs)
    runs_dir = base / "runs"
    results = []
    for index, (sid, member) in enumerate(members):
        member_seed = mix_seed(cfg.seed, index)
        sid_full = f"{index:03d}_{sid}"
        results.append(
            run_scenario(
                member,
                out_dir=runs_dir,
                scenario_id_override=sid_full,
                seed_override=member_seed,
            )
        )
    base.mkdir(parents=True, exist_ok=True)
    summary_path = base / "summary.csv"
    _write_summary(summary_path, [r.summary_row() for r in results])
    return SweepResult(results=results, out_dir=base, summary_path=summary_path)


# -- CSV writers -------------------------------------------------------------


def _open_csv(path: Path):
    return open(path, "w", encoding="utf-8", newline="")


def _write_summary(path: Path, rows: list[dict]) -> None:
    with _open_csv(path) as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _write_cc_log(path: Path, tx_log, rx_log) -> None:
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_id", "timestamp_us", "side"])
        for frame_id, t in tx_log:
            w.writerow([frame_id, t, "tx"])
        for frame_id, t in rx_log:
            w.writerow([frame_id, t, "rx"])


def _write_video_log(path: Path, session: VideoSessionResult) -> None:
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["frame_seq", "t_vt_us", "t_vr_us", "size_bits", "segs_sent", "segs_lost", "fps_at_capture"]
        )
        for rec in session.log.frames:
            w.writerow(
                [
                    rec.frame_seq,
                    rec.t_vt_us,
                    rec.t_vr_us if rec.t_vr_us is not None else "",
                    rec.size_bits,
                    rec.segments_sent,
                    rec.segments_dropped,
                    f"{rec.fps_at_capture:.3f}",
                ]
            )


def _write_windows(path: Path, sid: str, session: VideoSessionResult) -> None:
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            [
                "scenario_id",
                "window_index",
                "start_s",
                "delivered_payload_bps",
                "delivered_wire_bps",
                "segment_loss_frac",
                "elevation_deg",
                "fps",
            ]
        )
        for win in session.windows:
            w.writerow(
                [
                    sid,
                    win.index,
                    f"{win.start_us / USEC_PER_SEC:.3f}",
                    f"{win.delivered_payload_bps(session.window_us):.1f}",
                    f"{win.delivered_wire_bps(session.window_us):.1f}",
                    f"{win.loss_frac:.6f}",
                    "" if win.elevation_deg is None else f"{win.elevation_deg:.3f}",
                    f"{win.fps:.3f}",
                ]
            )


# -- plot-ready emission ------------------------------------------------------


class PlotDataError(ValueError):
    pass


def _read_csv(path: Path) -> list[dict]:
    if not path.exists():
        raise PlotDataError(f"no results file at {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def emit_plotdata(results_dir: str | Path, kind: str, out_dir: Optional[Path] = None) -> Path:
    """Turn a results directory into a whitespace-separated plot-ready file.

    kinds: fig3 = delay/reliability vs command frequency; fig4 = delay and
    throughput per resolution x height; fig5 = per-window throughput,
    segment loss, and elevation along a fly-over.
    """
    results_dir = Path(results_dir)
    out_dir = Path(out_dir) if out_dir is not None else results_dir
    rows = _read_csv(results_dir / "summary.csv")
    if not rows:
        raise PlotDataError(f"summary.csv in {results_dir} contains no result rows")
    if kind == "fig3":
        cc_rows = [r for r in rows if r["freq_hz"] and r["delay_avg_us"]]
        if len(cc_rows) < 2:
            raise PlotDataError(
                "fig3 needs a command-frequency sweep; found "
                f"{len(cc_rows)} row(s) with cc results"
            )
        cc_rows.sort(key=lambda r: float(r["freq_hz"]))
        lines = ["# freq_hz delay_min_ms delay_avg_ms delay_max_ms reliability"]
        for r in cc_rows:
            lines.append(
                f'{float(r["freq_hz"]):g} '
                f'{float(r["delay_min_us"]) / 1000:.3f} '
                f'{float(r["delay_avg_us"]) / 1000:.3f} '
                f'{float(r["delay_max_us"]) / 1000:.3f} '
                f'{float(r["reliability"]):.6f}'
            )
        return _write_lines(out_dir / "fig3.dat", lines)
    if kind == "fig4":
        vid_rows = [r for r in rows if r["resolution"] and r["throughput_avg_bps"]]
        if not vid_rows:
            raise PlotDataError("fig4 needs video results over a resolution/height sweep; found none")
        vid_rows.sort(key=lambda r: (r["resolution"], float(r["height_m"])))
        lines = ["# resolution height_m delay_avg_ms throughput_bps"]
        for r in vid_rows:
            delay_ms = float(r["delay_avg_us"]) / 1000 if r["delay_avg_us"] else float("nan")
            lines.append(
                f'{r["resolution"]} {float(r["height_m"]):g} '
                f'{delay_ms:.3f} {float(r["throughput_avg_bps"]):.1f}'
            )
        return _write_lines(out_dir / "fig4.dat", lines)
    if kind == "fig5":
        flyover = [r for r in rows if r["path_kind"] == "flyover"]
        if not flyover:
            raise PlotDataError("fig5 needs a fly-over scenario; none found in results")
        sid = flyover[0]["scenario_id"]
        win_path = results_dir / sid / "windows.csv"
        if not win_path.exists():
            win_path = results_dir / "runs" / sid / "windows.csv"
        wins = _read_csv(win_path)
        if not wins:
            raise PlotDataError(f"fly-over run {sid} has no window series")
        lines = ["# time_s throughput_bps segment_loss_frac elevation_deg"]
        for w in wins:
            lines.append(
                f'{float(w["start_s"]):.3f} {float(w["delivered_payload_bps"]):.1f} '
                f'{float(w["segment_loss_frac"]):.6f} '
                f'{float(w["elevation_deg"]) if w["elevation_deg"] else float("nan"):.3f}'
            )
        return _write_lines(out_dir / "fig5.dat", lines)
    raise PlotDataError(f"unknown plot kind {kind!r}; expected fig3, fig4 or fig5")


def _write_lines(path: Path, lines: list[str]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
