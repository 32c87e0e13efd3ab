"""Metric sampling and CSV export.

The simulation records raw activity into a StatsRecorder (busy spans,
transfer spans, request completions, used-space samples); after the run
the recorder is resampled on a fixed period into a multivariate
MetricSeries with one named channel per controller / device metric.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError

# channels exported per run:
#   cpu_load.<controller>        core-busy fraction over the tick, in [0, 1]
#   balancer_request_time        mean latency (s) of requests finished in the tick
#   storage_traffic.<device>     MB/s moved by the device during the tick
#   used_space_delta.<device>    GB change of used space over the tick


@dataclass
class MetricSeries:
    period: float
    start: float
    channels: list[str]
    values: np.ndarray  # shape (ticks, len(channels))

    @property
    def times(self):
        return self.start + self.period * np.arange(self.values.shape[0])

    def column(self, name: str):
        return self.values[:, self.channels.index(name)]


@dataclass
class GroundTruth:
    """Injected change points: (t_star, component, kind) per anomaly."""

    entries: list[tuple[float, str, str]] = field(default_factory=list)


class StatsRecorder:
    """Accumulates raw simulation activity for post-run sampling.

    ``horizon`` is the telemetry end time; activity past it is clipped so
    byte/used-space accounting matches the exported series exactly.
    """

    def __init__(self, horizon: float):
        self.horizon = horizon
        self.cpu_spans: dict[str, list[tuple[float, float, float]]] = {}
        self.disk_spans: dict[str, list[tuple[float, float, float]]] = {}
        self.completions: list = []
        self.used_samples: dict[str, list[tuple[float, float]]] = {}
        self.initial_used: dict[str, float] = {}
        self.bytes_moved: dict[str, float] = {}

    def set_initial_used(self, device: str, used_gb: float) -> None:
        self.initial_used[device] = used_gb
        self.used_samples.setdefault(device, [])
        self.bytes_moved.setdefault(device, 0.0)
        self.disk_spans.setdefault(device, [])

    def add_cpu_busy(self, controller: str, t0: float, t1: float, fraction: float) -> None:
        if t1 > t0:
            self.cpu_spans.setdefault(controller, []).append((t0, t1, fraction))

    def add_disk_span(self, device: str, t0: float, t1: float, mb: float) -> None:
        """One span of continuous transfer at uniform rate on a device."""
        if t1 <= t0 or mb <= 0:
            return
        self.disk_spans.setdefault(device, []).append((t0, t1, mb))
        # horizon-clipped byte counter, pro rata for spans crossing the edge
        if t0 < self.horizon:
            inside = min(t1, self.horizon) - t0
            self.bytes_moved[device] = self.bytes_moved.get(device, 0.0) + mb * (
                inside / (t1 - t0)
            )

    def record_completion(self, record) -> None:
        self.completions.append(record)

    def record_used(self, t: float, device: str, used_gb: float) -> None:
        self.used_samples.setdefault(device, []).append((t, used_gb))


def _overlap(t0: float, t1: float, lo: float, hi: float) -> float:
    return max(0.0, min(t1, hi) - max(t0, lo))


def sample(
    recorder: StatsRecorder,
    controllers: list[str],
    devices: list[str],
    period: float,
    start: float = 0.0,
    end: Optional[float] = None,
) -> MetricSeries:
    """Resample recorded activity into uniform ticks.

    Tick i sits at time start + i*period and aggregates the half-open
    interval (t - period, t]; tick 0 is the initial state (all zeros).
    """
    if period <= 0:
        raise ConfigError("telemetry period must be > 0", "telemetry.period")
    if end is None:
        end = recorder.horizon
    n_ticks = math.floor((end - start) / period) + 1

    channels = (
        [f"cpu_load.{c}" for c in controllers]
        + ["balancer_request_time"]
        + [f"storage_traffic.{d}" for d in devices]
        + [f"used_space_delta.{d}" for d in devices]
    )
    values = np.zeros((n_ticks, len(channels)))
    tick_times = start + period * np.arange(n_ticks)

    col = 0
    for cid in controllers:
        for t0, t1, frac in recorder.cpu_spans.get(cid, []):
            first = max(1, math.floor((t0 - start) / period) + 1)
            last = min(n_ticks - 1, math.ceil((t1 - start) / period))
            for i in range(first, last + 1):
                ov = _overlap(t0, t1, tick_times[i] - period, tick_times[i])
                values[i, col] += frac * ov / period
        col += 1

    lat_col = col
    lat_sum = np.zeros(n_ticks)
    lat_count = np.zeros(n_ticks)
    for rec in recorder.completions:
        if rec.outcome != "ok" or rec.finish_at > end:
            continue
        i = max(0, math.ceil((rec.finish_at - start) / period - 1e-12))
        if i < n_ticks:
            lat_sum[i] += rec.latency
            lat_count[i] += 1
    nonzero = lat_count > 0
    values[nonzero, lat_col] = lat_sum[nonzero] / lat_count[nonzero]
    col += 1

    for did in devices:
        for t0, t1, mb in recorder.disk_spans.get(did, []):
            rate = mb / (t1 - t0)
            first = max(1, math.floor((t0 - start) / period) + 1)
            last = min(n_ticks - 1, math.ceil((t1 - start) / period))
            for i in range(first, last + 1):
                ov = _overlap(t0, t1, tick_times[i] - period, tick_times[i])
                values[i, col] += rate * ov / period
        col += 1

    for did in devices:
        used = np.full(n_ticks, recorder.initial_used.get(did, 0.0))
        for t, u in recorder.used_samples.get(did, []):
            if t > end:
                continue
            i = max(0, math.ceil((t - start) / period - 1e-12))
            if i < n_ticks:
                used[i:] = u
        values[1:, col] = used[1:] - used[:-1]
        col += 1

    # guard against float dust pushing utilization over 1
    for i, cid in enumerate(controllers):
        values[:, i] = np.clip(values[:, i], 0.0, 1.0)

    return MetricSeries(period=period, start=start, channels=channels, values=values)


# -- CSV round trip --------------------------------------------------------

_FMT = "%.9g"


def export_csv(series: MetricSeries, ground_truth: GroundTruth, path: str, labels_path: str) -> None:
    """Write the metric series and companion ground-truth labels.

    Values are written with 9 significant digits; parse -> write -> parse
    is a fixpoint at that precision.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + series.channels)
        times = series.times
        for i in range(series.values.shape[0]):
            writer.writerow(
                [_FMT % times[i]] + [_FMT % v for v in series.values[i]]
            )
    with open(labels_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_star", "component", "kind"])
        for t_star, component, kind in ground_truth.entries:
            writer.writerow([_FMT % t_star, component, kind])


def load_csv(path: str) -> MetricSeries:
    """Parse a metrics CSV back into a MetricSeries."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "t":
            raise ConfigError("metrics CSV must start with a 't' column header", path)
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ConfigError("metrics CSV has no data rows", path)
    data = np.asarray(rows)
    times = data[:, 0]
    period = float(times[1] - times[0]) if len(times) > 1 else 1.0
    return MetricSeries(
        period=period, start=float(times[0]), channels=header[1:], values=data[:, 1:]
    )


def load_labels(path: str) -> GroundTruth:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t_star", "component", "kind"]:
            raise ConfigError("labels CSV must have header t_star,component,kind", path)
        entries = [(float(r[0]), r[1], r[2]) for r in reader if r]
    return GroundTruth(entries=entries)
