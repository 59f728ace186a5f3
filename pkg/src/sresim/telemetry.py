"""Telemetry plane: metric points, log records, trace spans, and their queries.

The store is append-only and owns the three agent-visible query surfaces
(metrics / logs / traces). Everything in here is part of the *observable*
world — injection bookkeeping must never be written to this store, only
its downstream symptoms (error logs, latency shifts, failed spans).
"""

from __future__ import annotations

import json
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

SEVERITIES = ("DEBUG", "INFO", "WARN", "ERROR")

DEFAULT_TRACE_SAMPLE_RATE = 0.01
DEFAULT_LOG_CAP = 500


@dataclass(frozen=True)
class MetricPoint:
    series: str
    labels: tuple[tuple[str, str], ...]
    timestamp: float
    value: float

    def as_dict(self) -> dict:
        return {
            "series": self.series,
            "labels": dict(self.labels),
            "timestamp": self.timestamp,
            "value": self.value,
        }


@dataclass(frozen=True)
class LogRecord:
    pod: str
    timestamp: float
    severity: str
    message: str

    def as_dict(self) -> dict:
        return {
            "pod": self.pod,
            "timestamp": self.timestamp,
            "severity": self.severity,
            "message": self.message,
        }


@dataclass
class TraceSpan:
    trace_id: str
    span_id: str
    parent_id: str | None
    service: str
    start: float
    duration: float
    status: str  # "ok" | "error" | "timeout"
    children: list["TraceSpan"] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "trace_id": self.trace_id,
            "span_id": self.span_id,
            "parent_id": self.parent_id,
            "service": self.service,
            "start": self.start,
            "duration": self.duration,
            "status": self.status,
            "children": [c.as_dict() for c in self.children],
        }

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


def _labels_key(labels: dict[str, str] | None) -> tuple[tuple[str, str], ...]:
    return tuple(sorted((labels or {}).items()))


class TelemetryStore:
    """Time-ordered sink for metrics, logs and trace trees."""

    def __init__(self):
        self._metrics: dict[tuple[str, tuple], list[MetricPoint]] = {}
        self.logs: list[LogRecord] = []
        self.traces: list[TraceSpan] = []

    # -- emission -------------------------------------------------------

    def emit_metric(self, series: str, labels: dict[str, str] | None, t: float, value: float):
        key = (series, _labels_key(labels))
        self._metrics.setdefault(key, []).append(
            MetricPoint(series, _labels_key(labels), t, value)
        )

    def emit_log(self, pod: str, t: float, severity: str, message: str) -> LogRecord:
        if severity not in SEVERITIES:
            raise ValueError(f"unknown severity {severity!r}")
        rec = LogRecord(pod, t, severity, message)
        self.logs.append(rec)
        return rec

    def emit_trace(self, root: TraceSpan):
        self.traces.append(root)

    # -- queries ----------------------------------------------------------

    def series_names(self) -> list[str]:
        return sorted({series for series, _ in self._metrics})

    def query_metrics(
        self,
        series: str,
        labels: dict[str, str] | None = None,
        start: float = 0.0,
        end: float = float("inf"),
        step: float | None = None,
    ) -> list[MetricPoint]:
        """Points for one series, label-filtered, optionally downsampled.

        With ``step`` set, at most one point is returned per step interval
        (the last one in the interval), which keeps responses desk-sized for
        long ranges.
        """
        wanted = dict(labels or {})
        out: list[MetricPoint] = []
        for (name, labkey), points in sorted(self._metrics.items()):
            if name != series:
                continue
            lab = dict(labkey)
            if any(lab.get(k) != v for k, v in wanted.items()):
                continue
            times = [p.timestamp for p in points]
            lo = bisect_left(times, start)
            hi = bisect_right(times, end)
            window = points[lo:hi]
            if step and step > 0 and window:
                picked: dict[int, MetricPoint] = {}
                for p in window:
                    picked[int((p.timestamp - start) // step)] = p
                window = [picked[i] for i in sorted(picked)]
            out.extend(window)
        out.sort(key=lambda p: (p.timestamp, p.series, p.labels))
        return out

    def search_logs(
        self,
        pod: str | None = None,
        severity: str | None = None,
        contains: str | None = None,
        start: float = 0.0,
        end: float = float("inf"),
        limit: int = DEFAULT_LOG_CAP,
    ) -> tuple[list[LogRecord], bool]:
        """Filtered, time-ordered log records plus a truncation flag."""
        hits = []
        for rec in self.logs:
            if rec.timestamp < start or rec.timestamp > end:
                continue
            if pod is not None and rec.pod != pod:
                continue
            if severity is not None and rec.severity != severity:
                continue
            if contains is not None and contains not in rec.message:
                continue
            hits.append(rec)
        hits.sort(key=lambda r: (r.timestamp, r.pod))
        truncated = len(hits) > limit
        return hits[:limit], truncated

    def get_traces(
        self,
        service: str | None = None,
        status: str | None = None,
        start: float = 0.0,
        end: float = float("inf"),
        limit: int = 100,
    ) -> list[TraceSpan]:
        """Sampled trace trees whose root overlaps the range."""
        out = []
        for root in self.traces:
            if root.start < start or root.start > end:
                continue
            if status is not None and root.status != status:
                continue
            if service is not None and not any(s.service == service for s in root.walk()):
                continue
            out.append(root)
            if len(out) >= limit:
                break
        return out

    # -- persistence --------------------------------------------------------

    def dump_jsonl(self, path: str) -> None:
        """Write the full store as JSONL (stable ordering, replay-diffable)."""
        with open(path, "w") as fh:
            for (series, labkey), points in sorted(self._metrics.items()):
                for p in points:
                    fh.write(json.dumps({"kind": "metric", **p.as_dict()}, sort_keys=True))
                    fh.write("\n")
            for rec in self.logs:
                fh.write(json.dumps({"kind": "log", **rec.as_dict()}, sort_keys=True))
                fh.write("\n")
            for root in self.traces:
                fh.write(json.dumps({"kind": "trace", **root.as_dict()}, sort_keys=True))
                fh.write("\n")
