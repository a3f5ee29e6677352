"""Timing harness for inference threads and CAM selection/worker settings.

Every cell is timed with the monotonic ``perf_counter`` clock: one warm-up
call is discarded, then the median of ``runs`` calls is reported.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence

from covct.nn.model import ModelBundle, forward
from covct.raster import Raster
from covct.scorecam import CamConfig, scorecam

MIN_RUNS = 3


def median_ms(fn: Callable[[], object], runs: int = 5, warmup: int = 1) -> float:
    if runs < 1:
        raise ValueError("runs must be >= 1")
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1000.0)
    return statistics.median(samples)


@dataclass(frozen=True)
class BenchRow:
    kind: str  # "forward" or "scorecam"
    threads: Optional[int]
    stride: Optional[int]
    workers: Optional[int]
    median_ms: float
    runs: int


@dataclass
class BenchReport:
    rows: List[BenchRow] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"rows": [asdict(r) for r in self.rows]}, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "threads", "stride", "workers", "median_ms", "runs"])
        for r in self.rows:
            w.writerow([r.kind, r.threads if r.threads is not None else "", r.stride if r.stride is not None else "",
                        r.workers if r.workers is not None else "", f"{r.median_ms:.3f}", r.runs])
        return buf.getvalue()

    def cell(self, kind: str, **where) -> BenchRow:
        for r in self.rows:
            if r.kind == kind and all(getattr(r, k) == v for k, v in where.items()):
                return r
        raise KeyError((kind, where))


def bench_forward(model: ModelBundle, img: Raster, threads_grid: Sequence[int], runs: int = 5) -> List[BenchRow]:
    runs = max(runs, MIN_RUNS)
    return [BenchRow("forward", t, None, None, median_ms(lambda: forward(model, img, threads=t), runs), runs)
            for t in threads_grid]


def bench_scorecam(model: ModelBundle, img: Raster, stride_grid: Sequence[int], workers_grid: Sequence[int],
                   runs: int = 5) -> List[BenchRow]:
    runs = max(runs, MIN_RUNS)
    rows = []
    for s in stride_grid:
        for w in workers_grid:
            cfg = CamConfig(stride=s, workers=w)
            rows.append(BenchRow("scorecam", None, s, w, median_ms(lambda: scorecam(model, img, cfg), runs), runs))
    return rows


def run_grid(model: ModelBundle, img: Raster, threads_grid=(4, 6, 8), stride_grid=(1, 4), workers_grid=(1, 8),
             runs: int = 5) -> BenchReport:
    report = BenchReport()
    if threads_grid:
        report.rows += bench_forward(model, img, threads_grid, runs)
    if stride_grid and workers_grid:
        report.rows += bench_scorecam(model, img, stride_grid, workers_grid, runs)
    return report


def reduction(baseline_ms: float, improved_ms: float) -> float:
    """Fractional time saved, e.g. 0.74 for a 74 % reduction."""
    return 1.0 - improved_ms / baseline_ms
