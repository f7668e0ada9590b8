"""Offline detector replay over a recorded trace CSV.

Useful for picking ``K`` and ``r_bar``: the recorded accelerations and
relative velocities are fed through the detector, optionally with the
predecessor's acceleration replaced by a sinusoid or perturbed by Gaussian
noise to emulate an attack that never happened in the recording.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..detector import DEFAULT_K, DEFAULT_PERSISTENCE, DEFAULT_R_BAR, DetectorState, detector_step


class MalformedTraceError(ValueError):
    pass


@dataclass(frozen=True)
class Overlay:
    """Attack emulated on the recorded predecessor acceleration.

    ``kind`` is ``"sinusoid"`` (replace with ``a*sin(2*pi*f*t + phi)``) or
    ``"gaussian"`` (add zero-mean noise of std ``sd``). Applies from ``start``.
    """

    kind: str
    a: float = 0.0
    f: float = 0.0
    phi: float = 0.0
    sd: float = 0.0
    seed: int = 0
    start: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sinusoid", "gaussian"):
            raise ValueError(f"overlay kind must be 'sinusoid' or 'gaussian', got {self.kind!r}")


@dataclass
class ReplaySeries:
    vehicle_id: int
    t: list[float] = field(default_factory=list)
    r: list[float] = field(default_factory=list)
    alarm_time: float | None = None


@dataclass
class ReplayResult:
    series: dict[int, ReplaySeries]

    @property
    def alarms(self) -> dict[int, float]:
        return {vid: s.alarm_time for vid, s in self.series.items() if s.alarm_time is not None}


def _num(row: dict, key: str, lineno: int) -> float:
    try:
        return float(row[key])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedTraceError(f"line {lineno}: bad {key!r} value {row.get(key)!r}") from exc


def load_trace(path) -> dict[float, dict[int, dict]]:
    """Rows grouped by time then vehicle id."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"t", "vehicle_id", "u_total", "v_tilde", "vtf"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise MalformedTraceError(f"{path}: trace must contain columns {sorted(need)}")
        steps: dict[float, dict[int, dict]] = {}
        for lineno, row in enumerate(reader, 2):
            t = _num(row, "t", lineno)
            vid = int(_num(row, "vehicle_id", lineno))
            steps.setdefault(t, {})[vid] = {
                "u": _num(row, "u_total", lineno),
                "v_tilde": float(row["v_tilde"]) if row["v_tilde"] != "" else None,
                "vtf": int(row["vtf"]) if row["vtf"] not in ("", None) else 0,
            }
    return steps


def replay_detector(trace_csv, K: float = DEFAULT_K, r_bar: float = DEFAULT_R_BAR,
                    persistence: float = DEFAULT_PERSISTENCE, overlay: Overlay | None = None,
                    dt: float | None = None) -> ReplayResult:
    """Run the detector over every consumed link in a recorded trace."""
    steps = load_trace(trace_csv)
    times = sorted(steps)
    if len(times) < 2 and dt is None:
        raise MalformedTraceError("need at least two time steps to infer dt")
    dt = dt if dt is not None else times[1] - times[0]
    rng = np.random.default_rng(overlay.seed) if overlay and overlay.kind == "gaussian" else None

    def pred_u(t_prev: float, u: float) -> float:
        if overlay is None or t_prev < overlay.start:
            return u
        if overlay.kind == "sinusoid":
            return overlay.a * math.sin(2.0 * math.pi * overlay.f * t_prev + overlay.phi)
        return u + float(rng.normal(0.0, overlay.sd))

    series: dict[int, ReplaySeries] = {}
    states: dict[int, tuple[int, DetectorState]] = {}
    prev = None
    for t in times:
        rows = steps[t]
        for vid in sorted(rows):
            row = rows[vid]
            src = row["vtf"]
            s = series.setdefault(vid, ReplaySeries(vid))
            r = 0.0
            if not src or row["v_tilde"] is None:
                states.pop(vid, None)
            else:
                known = states.get(vid)
                if known is None or known[0] != src or prev is None:
                    # first sample on this link only initializes the estimate
                    st, r = detector_step(DetectorState(K=K, r_bar=r_bar, persistence=persistence),
                                          0.0, 0.0, row["v_tilde"], dt)
                else:
                    prev_rows = steps[prev]
                    if vid not in prev_rows or src not in prev_rows:
                        raise MalformedTraceError(f"t={t}: missing previous row for {vid} or {src}")
                    old = known[1]
                    st, r = detector_step(old, prev_rows[vid]["u"],
                                          pred_u(prev, prev_rows[src]["u"]), row["v_tilde"], dt)
                    if st.latched and not old.latched and s.alarm_time is None:
                        s.alarm_time = t
                states[vid] = (src, st)
            s.t.append(t)
            s.r.append(r)
        prev = t
    return ReplayResult(series)
