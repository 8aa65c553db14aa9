"""Retrieval benchmark: graph search against an exhaustive-scan baseline.

A simulated camera stream of frames, each holding a few probe embeddings
drawn from the library (optionally noised), is replayed against both
search modes. Frames are timed individually, the whole stream is repeated
several times with a discarded warmup pass, and per-frame latency is the
median across the timed repetitions.

Timing covers retrieval only; stream generation happens before the clock
starts, and nothing upstream of search (detection, alignment, embedding
inference) is represented here.
"""

from __future__ import annotations

import csv
import enum
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Callable, Optional, Sequence

import numpy as np

from .hnsw import BruteForceSearcher, HnswIndex
from .library import FeatureLibrary
from .secondary import SecondaryConfig, secondary_search

TIMING_NOTE = (
    "NOTE: timings cover the retrieval stage only. Face detection, alignment,"
    " and embedding inference are outside this benchmark."
)

MODE_GRAPH = "hnsw"
MODE_SCAN = "violence"


class StreamKind(enum.Enum):
    """Frame density profile: how many probe faces appear per frame."""

    SIMPLE = "simple"  # 1 to 5 faces
    COMPLEX = "complex"  # 6 to 15 faces

    @property
    def faces_range(self) -> tuple[int, int]:
        return (1, 5) if self is StreamKind.SIMPLE else (6, 15)


@dataclass(frozen=True)
class FrameStreamConfig:
    frame_count: int
    kind: StreamKind = StreamKind.SIMPLE
    query_noise_sigma: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.frame_count < 1:
            raise ValueError("frame_count must be positive")
        if self.query_noise_sigma < 0:
            raise ValueError("query_noise_sigma must be nonnegative")


@dataclass(frozen=True)
class Probe:
    """One face observed in a frame: the query vector and its true record."""

    values: np.ndarray
    true_id: int


def simulate_stream(
    library: FeatureLibrary,
    config: FrameStreamConfig,
) -> list[list[Probe]]:
    """Generate a reproducible stream of frames of probe embeddings.

    Each probe picks a uniform random library record and perturbs it with
    isotropic Gaussian noise of the configured sigma, then renormalizes to
    unit length. With sigma 0 the probe is the stored vector bit for bit.
    Draw order per frame is: face count, then per face the record index
    followed by its noise vector.
    """
    rng = np.random.Generator(np.random.PCG64(config.rng_seed))
    lo, hi = config.kind.faces_range
    sigma = config.query_noise_sigma
    frames: list[list[Probe]] = []
    for _ in range(config.frame_count):
        count = int(rng.integers(lo, hi + 1))
        frame = []
        for _ in range(count):
            idx = int(rng.integers(len(library)))
            base = library.records[idx].embedding.values
            if sigma == 0.0:
                values = base.copy()
            else:
                noisy = base.astype(np.float64) + rng.normal(0.0, sigma, base.shape[0])
                norm = float(np.sqrt(np.dot(noisy, noisy)))
                if norm == 0.0:
                    # vanishing chance, but renormalization must stay defined
                    values = base.copy()
                else:
                    values = (noisy / norm).astype(np.float32)
            values.setflags(write=False)
            frame.append(Probe(values=values, true_id=idx))
        frames.append(frame)
    return frames


@dataclass(frozen=True)
class BenchReport:
    """Latency and quality summary for one search mode over one stream."""

    mode: str
    stream_kind: str
    frames: int
    probes: int
    repetitions: int
    k: int
    ef: Optional[int]
    mean_ms: float
    median_ms: float
    p95_ms: float
    recall_vs_oracle: float
    timed_queries: int


def _run_frame(search: Callable, frame: Sequence[Probe], k: int, clock: Callable) -> float:
    start = clock()
    for probe in frame:
        search(probe.values, k)
    return (clock() - start) * 1000.0


def bench_compare(
    index: HnswIndex,
    library: FeatureLibrary,
    stream: Sequence[Sequence[Probe]],
    k: int = 10,
    ef: Optional[int] = None,
    repetitions: int = 3,
    warmup: int = 1,
    secondary: Optional[SecondaryConfig] = None,
    parallel: bool = False,
    clock: Callable[[], float] = time.perf_counter,
) -> tuple[BenchReport, BenchReport]:
    """Replay a pregenerated stream against graph search and full scan.

    Per repetition each frame runs graph search then the scan, so cache
    effects hit both modes alike. Warmup repetitions are discarded; at
    least three timed repetitions are required, and each frame's latency
    is its median across them. Recall compares graph top-k ids against the
    exact scan in an untimed pass. ``parallel`` spreads frames over
    threads while still timing each frame individually.
    """
    stream = [list(frame) for frame in stream]
    if not stream or all(len(f) == 0 for f in stream):
        raise ValueError("stream is empty; nothing to benchmark")
    if repetitions < 3:
        raise ValueError(f"need at least 3 timed repetitions, got {repetitions}")
    if warmup < 0:
        raise ValueError("warmup cannot be negative")
    if secondary is not None and secondary.k != k:
        raise ValueError(f"secondary config k={secondary.k} does not match k={k}")

    scan = BruteForceSearcher(
        library.vectors().astype(np.float64),
        np.arange(len(library), dtype=np.uint64),
        index.params.metric,
    )
    if secondary is not None:
        graph_search = lambda q, kk: secondary_search(index, q, secondary)
    else:
        graph_search = lambda q, kk: index.knn_search(q, kk, ef=ef)
    scan_search = scan.search

    # Quality pass, untimed: both modes are deterministic, so recall can be
    # measured once outside the clock.
    overlap = 0.0
    probes_total = 0
    for frame in stream:
        for probe in frame:
            oracle = scan_search(probe.values, k).id_set()
            got = graph_search(probe.values, k).id_set()
            overlap += len(got & oracle) / len(oracle)
            probes_total += 1
    recall = overlap / probes_total

    n_frames = len(stream)
    graph_ms = np.zeros((repetitions, n_frames))
    scan_ms = np.zeros((repetitions, n_frames))

    def one_pass(record_into: Optional[tuple[np.ndarray, np.ndarray, int]]) -> None:
        def frame_pair(fi: int) -> tuple[float, float]:
            g = _run_frame(graph_search, stream[fi], k, clock)
            s = _run_frame(scan_search, stream[fi], k, clock)
            return g, s

        if parallel:
            with ThreadPoolExecutor() as pool:
                results = list(pool.map(frame_pair, range(n_frames)))
        else:
            results = [frame_pair(fi) for fi in range(n_frames)]
        if record_into is not None:
            g_arr, s_arr, rep = record_into
            for fi, (g, s) in enumerate(results):
                g_arr[rep, fi] = g
                s_arr[rep, fi] = s

    for _ in range(warmup):
        one_pass(None)
    for rep in range(repetitions):
        one_pass((graph_ms, scan_ms, rep))

    def summarize(per_rep: np.ndarray, mode: str, rec: float, used_ef: Optional[int]) -> BenchReport:
        per_frame = np.median(per_rep, axis=0)
        return BenchReport(
            mode=mode,
            stream_kind=_stream_kind_name(stream),
            frames=n_frames,
            probes=probes_total,
            repetitions=repetitions,
            k=k,
            ef=used_ef,
            mean_ms=float(np.mean(per_frame)),
            median_ms=float(np.median(per_frame)),
            p95_ms=float(np.percentile(per_frame, 95)),
            recall_vs_oracle=rec,
            timed_queries=probes_total * repetitions,
        )

    return (
        summarize(graph_ms, MODE_GRAPH, recall, ef),
        summarize(scan_ms, MODE_SCAN, 1.0, None),
    )


def _stream_kind_name(stream: Sequence[Sequence[Probe]]) -> str:
    counts = [len(f) for f in stream]
    lo, hi = StreamKind.SIMPLE.faces_range
    if all(lo <= c <= hi for c in counts):
        return StreamKind.SIMPLE.value
    lo, hi = StreamKind.COMPLEX.faces_range
    if all(lo <= c <= hi for c in counts):
        return StreamKind.COMPLEX.value
    return "mixed"


# ----------------------------------------------------------------------
# report formatting

_CSV_COLUMNS = [f.name for f in fields(BenchReport)]


def format_report(report: BenchReport) -> str:
    lines = [
        f"mode={report.mode} stream={report.stream_kind} frames={report.frames} "
        f"probes={report.probes} reps={report.repetitions}",
        f"  per-frame latency: mean {report.mean_ms:.3f} ms, "
        f"median {report.median_ms:.3f} ms, p95 {report.p95_ms:.3f} ms",
        f"  recall vs exhaustive scan: {report.recall_vs_oracle:.4f}",
    ]
    return "\n".join(lines)


def format_reports_csv(reports: Sequence[BenchReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=_CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rep in reports:
        row = {name: getattr(rep, name) for name in _CSV_COLUMNS}
        row["ef"] = "" if rep.ef is None else rep.ef
        row["mean_ms"] = repr(rep.mean_ms)
        row["median_ms"] = repr(rep.median_ms)
        row["p95_ms"] = repr(rep.p95_ms)
        row["recall_vs_oracle"] = repr(rep.recall_vs_oracle)
        writer.writerow(row)
    return buf.getvalue()


def parse_reports_csv(text: str) -> list[BenchReport]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != _CSV_COLUMNS:
        raise ValueError(f"unexpected report columns: {reader.fieldnames}")
    out = []
    for row in reader:
        out.append(
            BenchReport(
                mode=row["mode"],
                stream_kind=row["stream_kind"],
                frames=int(row["frames"]),
                probes=int(row["probes"]),
                repetitions=int(row["repetitions"]),
                k=int(row["k"]),
                ef=None if row["ef"] == "" else int(row["ef"]),
                mean_ms=float(row["mean_ms"]),
                median_ms=float(row["median_ms"]),
                p95_ms=float(row["p95_ms"]),
                recall_vs_oracle=float(row["recall_vs_oracle"]),
                timed_queries=int(row["timed_queries"]),
            )
        )
    return out
