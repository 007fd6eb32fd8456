"""Earthquake segmentation and cataloging.

An event starts at the first post-step sample where any block slips and ends
at the first subsequent sample where every block is stuck again; blocks may
stick and re-slip repeatedly inside one event.  The size of an event is the
total cumulative displacement of all blocks while it is open, and its
magnitude is the decimal (M) or natural (M1) logarithm of that total.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fileio
from .integrator import TrajectorySample

__all__ = [
    "EventRecord",
    "EventCatalog",
    "EventBuilder",
    "magnitude",
    "catalog_from_arrays",
    "write_catalog_csv",
    "read_catalog_csv",
    "write_catalog_json",
    "read_catalog_json",
]

LN10 = np.log(10.0)


def magnitude(per_block_slip: np.ndarray) -> tuple[float, float]:
    """(M, M1) for one event: log10 and natural log of the total slip.

    M1 is computed as M * ln(10) so the two magnitudes satisfy their defining
    identity exactly.
    """
    total = float(np.sum(per_block_slip))
    if not total > 0.0:
        raise ValueError(f"event total slip must be positive, got {total}")
    m = float(np.log10(total))
    return m, m * LN10


@dataclass(frozen=True)
class EventRecord:
    """One earthquake: time span, per-block slips and magnitudes."""

    start_time: float
    end_time: float
    magnitude_log10: float
    magnitude_ln: float
    participating_blocks: int
    total_slip: float
    per_block_slip: Optional[np.ndarray] = None

    @classmethod
    def from_slips(cls, start: float, end: float, slips: np.ndarray) -> "EventRecord":
        if not end > start:
            raise ValueError(f"event must span positive time: [{start}, {end}]")
        m, m1 = magnitude(slips)
        return cls(
            start_time=start,
            end_time=end,
            magnitude_log10=m,
            magnitude_ln=m1,
            participating_blocks=int(np.count_nonzero(slips > 0.0)),
            total_slip=float(np.sum(slips)),
            per_block_slip=slips.copy(),
        )


@dataclass
class EventCatalog:
    """Time-ordered, pairwise disjoint events over one observation window."""

    events: list[EventRecord]
    n_blocks: int
    window: tuple[float, float]
    meta: dict = field(default_factory=dict)

    @property
    def total_events(self) -> int:
        return len(self.events)

    def magnitudes(self, log_base: str = "ten") -> np.ndarray:
        if log_base == "ten":
            return np.array([e.magnitude_log10 for e in self.events])
        if log_base == "natural":
            return np.array([e.magnitude_ln for e in self.events])
        raise ValueError(f"unknown log_base {log_base!r}")


def catalog_from_arrays(
    starts: np.ndarray,
    ends: np.ndarray,
    slips: np.ndarray,
    *,
    n_blocks: int,
    window: tuple[float, float],
    meta: Optional[dict] = None,
) -> EventCatalog:
    records = [
        EventRecord.from_slips(float(starts[k]), float(ends[k]), slips[k])
        for k in range(starts.shape[0])
    ]
    return EventCatalog(records, n_blocks, window, meta or {})


class EventBuilder:
    """Step observer that segments a run into events.

    Construct with the pre-run state (its positions are the baseline for the
    first displacement increment), feed post-step samples in time order, then
    call :meth:`finalize`.  An event still open at the end of the window is
    discarded rather than truncated.
    """

    def __init__(self, initial_positions: np.ndarray, start_time: float = 0.0):
        self._prev = np.asarray(initial_positions, dtype=float).copy()
        self._last_time = start_time
        self._open = False
        self._acc = np.zeros_like(self._prev)
        self._start = 0.0
        self._records: list[EventRecord] = []

    def __call__(self, sample: TrajectorySample) -> None:
        self.on_step(sample)

    def on_step(self, sample: TrajectorySample) -> None:
        if sample.time <= self._last_time:
            raise ValueError(
                f"samples must arrive in time order (got t={sample.time} "
                f"after t={self._last_time})"
            )
        self._last_time = sample.time
        if not self._open and sample.any_slipping:
            self._open = True
            self._start = sample.time
            self._acc[:] = 0.0
        if self._open:
            self._acc += np.maximum(sample.positions - self._prev, 0.0)
            if not sample.any_slipping:
                self._records.append(
                    EventRecord.from_slips(self._start, sample.time, self._acc)
                )
                self._open = False
        self._prev = sample.positions.copy()

    def finalize(
        self,
        n_blocks: Optional[int] = None,
        window: Optional[tuple[float, float]] = None,
        meta: Optional[dict] = None,
    ) -> EventCatalog:
        return EventCatalog(
            list(self._records),
            self._prev.shape[0] if n_blocks is None else n_blocks,
            window if window is not None else (0.0, self._last_time),
            meta or {},
        )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_CSV_COLUMNS = ("start", "end", "magnitude_log10", "magnitude_ln", "participating_blocks")


def write_catalog_csv(path, catalog: EventCatalog, meta: Optional[dict] = None) -> None:
    info = dict(catalog.meta)
    if meta:
        info.update(meta)
    info.setdefault("n_blocks", catalog.n_blocks)
    info.setdefault("window_start", fileio.fmt(catalog.window[0]))
    info.setdefault("window_end", fileio.fmt(catalog.window[1]))
    rows = [
        (
            fileio.fmt(e.start_time),
            fileio.fmt(e.end_time),
            fileio.fmt(e.magnitude_log10),
            fileio.fmt(e.magnitude_ln),
            str(e.participating_blocks),
        )
        for e in catalog.events
    ]
    fileio.write_csv(path, _CSV_COLUMNS, rows, info)


def read_catalog_csv(path) -> EventCatalog:
    meta, rows = fileio.read_csv(path)
    events = []
    for row in rows:
        m = float(row["magnitude_log10"])
        events.append(
            EventRecord(
                start_time=float(row["start"]),
                end_time=float(row["end"]),
                magnitude_log10=m,
                magnitude_ln=float(row["magnitude_ln"]),
                participating_blocks=int(row["participating_blocks"]),
                total_slip=float(10.0 ** m),
                per_block_slip=None,
            )
        )
    n_blocks = int(meta.get("n_blocks", 0))
    window = (float(meta.get("window_start", 0.0)), float(meta.get("window_end", 0.0)))
    return EventCatalog(events, n_blocks, window, meta)


def write_catalog_json(
    path, catalog: EventCatalog, meta: Optional[dict] = None, include_slips: bool = False
) -> None:
    info = dict(catalog.meta)
    if meta:
        info.update(meta)
    payload = {
        "meta": {k: str(v) for k, v in info.items()},
        "n_blocks": catalog.n_blocks,
        "window": [catalog.window[0], catalog.window[1]],
        "events": [
            {
                "start": e.start_time,
                "end": e.end_time,
                "magnitude_log10": e.magnitude_log10,
                "magnitude_ln": e.magnitude_ln,
                "participating_blocks": e.participating_blocks,
                "total_slip": e.total_slip,
                **(
                    {"per_block_slip": e.per_block_slip.tolist()}
                    if include_slips and e.per_block_slip is not None
                    else {}
                ),
            }
            for e in catalog.events
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def read_catalog_json(path) -> EventCatalog:
    with open(path) as fh:
        payload = json.load(fh)
    events = []
    for item in payload["events"]:
        slips = item.get("per_block_slip")
        events.append(
            EventRecord(
                start_time=item["start"],
                end_time=item["end"],
                magnitude_log10=item["magnitude_log10"],
                magnitude_ln=item["magnitude_ln"],
                participating_blocks=item["participating_blocks"],
                total_slip=item["total_slip"],
                per_block_slip=None if slips is None else np.asarray(slips, dtype=float),
            )
        )
    return EventCatalog(
        events,
        payload["n_blocks"],
        tuple(payload["window"]),
        payload.get("meta", {}),
    )
