"""Transient metrics over logged traces: overshoot, settling time, steady
error and peak deviation, evaluated per disturbance window."""
from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass

import numpy as np

from ..network import DisturbanceEvent


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class EventWindow:
    """Samples attributed to one event: [t_start, t_end).

    The window runs until the next event starts (or the log ends).
    ``t_clear`` is where the disturbance is removed, which is a source
    transition of its own; it equals ``t_end`` when the event outlasts the
    window.
    """

    index: int
    t_start: float
    t_clear: float
    t_end: float

    def segments(self) -> list[tuple[float, float]]:
        """Response intervals, one per source transition inside the window."""
        if self.t_clear < self.t_end:
            return [(self.t_start, self.t_clear), (self.t_clear, self.t_end)]
        return [(self.t_start, self.t_end)]


@dataclass(frozen=True)
class SettlingResult:
    time: float
    settled: bool


@dataclass(frozen=True)
class StepMetrics:
    overshoot_pct: float
    settling_time: float
    steady_error_pct: float
    peak_deviation: float
    reference: float = float("nan")
    settled: bool = True

    def __post_init__(self):
        if self.overshoot_pct < 0.0 or self.settling_time < 0.0:
            raise MetricsError("overshoot and settling time must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def event_windows(events: Sequence[DisturbanceEvent], t_end: float) -> list[EventWindow]:
    order = sorted(range(len(events)), key=lambda i: events[i].t_start)
    out = []
    for pos, i in enumerate(order):
        ev = events[i]
        nxt = events[order[pos + 1]].t_start if pos + 1 < len(order) else t_end
        end = min(nxt, t_end)
        out.append(EventWindow(i, ev.t_start, min(ev.t_end, end), end))
    return out


def _window(log: Mapping[str, np.ndarray], column: str, t_event: float,
            t_window_end: float | None) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(log["t"], dtype=float)
    y = np.asarray(log[column], dtype=float)
    # tolerate round-off in event times that sit on the sample grid
    eps = 1e-9 * max(1.0, abs(t_event))
    sel = t >= t_event - eps
    if t_window_end is not None:
        # half-open: a sample at the window end already sees the next transition
        sel &= t < t_window_end - eps
    if not np.any(sel):
        raise MetricsError("no samples after event")
    return t[sel], y[sel]


def pre_event_value(log: Mapping[str, np.ndarray], column: str, t_event: float) -> float:
    """Last logged value strictly before the event (first sample if none)."""
    t = np.asarray(log["t"])
    y = np.asarray(log[column])
    if len(t) == 0:
        raise MetricsError("empty log")
    k = int(np.searchsorted(t, t_event - 1e-9 * max(1.0, abs(t_event)), side="left")) - 1
    return float(y[max(k, 0)])


def compute_overshoot(log: Mapping[str, np.ndarray], column: str, t_event: float,
                      reference: float, t_window_end: float | None = None) -> float:
    """Percent excursion past the reference after the signal first crosses it.

    The side of the initial excursion is taken from the first sample that
    differs from the reference; the overshoot is the largest excursion on
    the opposite side. A signal that never crosses gives 0.
    """
    _, y = _window(log, column, t_event, t_window_end)
    e = y - reference
    nz = np.flatnonzero(e != 0.0)
    if nz.size == 0:
        return 0.0
    side = math.copysign(1.0, e[nz[0]])
    past = -side * e[nz[0]:]
    if not np.any(past > 0.0):
        return 0.0
    return float(past.max() / abs(reference) * 100.0)


def compute_settling_time(log: Mapping[str, np.ndarray], column: str, t_event: float,
                          reference: float, band_pct: float = 2.0,
                          t_window_end: float | None = None) -> SettlingResult:
    """Time after the event beyond which the signal stays inside the band.

    The band edge crossing is located by linear interpolation between
    samples. An unsettled trace reports the window length.
    """
    if band_pct <= 0.0:
        raise MetricsError("band_pct must be positive")
    t, y = _window(log, column, t_event, t_window_end)
    band = band_pct / 100.0 * abs(reference)
    err = np.abs(y - reference)
    outside = np.flatnonzero(err > band)
    length = (t_window_end if t_window_end is not None else t[-1]) - t_event
    if outside.size == 0:
        return SettlingResult(0.0, True)
    k = outside[-1]
    if k == len(t) - 1:
        return SettlingResult(float(max(length, 0.0)), False)
    e0, e1 = err[k], err[k + 1]
    frac = (e0 - band) / (e0 - e1) if e0 != e1 else 1.0
    t_cross = t[k] + frac * (t[k + 1] - t[k])
    return SettlingResult(float(max(t_cross - t_event, 0.0)), True)


def steady_error_pct(log: Mapping[str, np.ndarray], column: str, t_from: float, t_to: float,
                     reference: float, tail: float = 0.1) -> float:
    """Mean absolute deviation, in percent, over the last ``tail`` of [t_from, t_to]."""
    start = t_to - tail * (t_to - t_from)
    _, y = _window(log, column, start, t_to)
    return float(np.mean(np.abs(y - reference)) / abs(reference) * 100.0)


def peak_deviation(log: Mapping[str, np.ndarray], column: str, t_event: float,
                   reference: float, t_window_end: float | None = None) -> float:
    _, y = _window(log, column, t_event, t_window_end)
    return float(np.max(np.abs(y - reference)))


def dip_magnitude(log: Mapping[str, np.ndarray], column: str, t_event: float,
                  reference: float, t_window_end: float | None = None) -> float:
    """Largest drop below the reference (0 if the signal never goes below)."""
    _, y = _window(log, column, t_event, t_window_end)
    return float(max(0.0, reference - y.min()))


def step_metrics(log: Mapping[str, np.ndarray], column: str, window: EventWindow,
                 reference: float | None = None, band_pct: float = 2.0) -> StepMetrics:
    """All metrics of one column for one event window.

    The reference defaults to the value just before the event. Onset and
    clearing are separate step disturbances, so overshoot is evaluated on
    each response and the larger one reported. Settling is measured from
    the event start, inside the onset response when the signal recovers
    before clearing and over the whole window otherwise.
    """
    t = np.asarray(log["t"])
    if len(t) == 0 or t[-1] < window.t_start:
        raise MetricsError("no samples after event")
    ref = pre_event_value(log, column, window.t_start) if reference is None else reference
    # a truncated log closes the window just past its last sample
    last = float(t[-1]) + 1e-6 * max(1.0, float(t[-1]))
    segs = [(a, min(b, last)) for a, b in window.segments() if a < last]
    end = segs[-1][1]
    overshoot = max(compute_overshoot(log, column, a, ref, b) for a, b in segs)
    settle = compute_settling_time(log, column, window.t_start, ref, band_pct, segs[0][1])
    if not settle.settled and len(segs) > 1:
        settle = compute_settling_time(log, column, window.t_start, ref, band_pct, end)
    return StepMetrics(
        overshoot_pct=overshoot,
        settling_time=settle.time,
        steady_error_pct=steady_error_pct(log, column, window.t_start, segs[0][1], ref),
        peak_deviation=peak_deviation(log, column, window.t_start, ref, end),
        reference=ref,
        settled=settle.settled,
    )
