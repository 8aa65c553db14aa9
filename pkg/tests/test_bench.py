"""Benchmark harness tests: stream generation, timing discipline, reports."""

import numpy as np
import pytest

from facepipe import (
    BenchReport,
    FrameStreamConfig,
    HnswParams,
    StreamKind,
    bench_compare,
    format_report,
    format_reports_csv,
    index_library,
    parse_reports_csv,
    simulate_stream,
)
from facepipe.bench import MODE_GRAPH, MODE_SCAN, TIMING_NOTE


@pytest.fixture
def indexed(small_library):
    index, _ = index_library(
        small_library, HnswParams(m=4, m0=8, ef_construction=16, rng_seed=2)
    )
    return index, small_library


class TestSimulateStream:
    def test_counts_stay_in_kind_range(self, small_library):
        for kind in StreamKind:
            lo, hi = kind.faces_range
            frames = simulate_stream(
                small_library, FrameStreamConfig(frame_count=50, kind=kind)
            )
            assert len(frames) == 50
            assert all(lo <= len(f) <= hi for f in frames)

    def test_sigma_zero_is_bit_exact(self, small_library):
        frames = simulate_stream(small_library, FrameStreamConfig(frame_count=20))
        for frame in frames:
            for probe in frame:
                stored = small_library.records[probe.true_id].embedding.values
                assert probe.values.tobytes() == stored.tobytes()

    def test_noisy_probes_stay_unit_norm(self, small_library):
        frames = simulate_stream(
            small_library,
            FrameStreamConfig(frame_count=20, query_noise_sigma=0.2, rng_seed=4),
        )
        for frame in frames:
            for probe in frame:
                assert np.linalg.norm(probe.values) == pytest.approx(1.0, abs=1e-5)
                stored = small_library.records[probe.true_id].embedding.values
                assert probe.values.tobytes() != stored.tobytes()

    def test_same_seed_reproduces_exactly(self, small_library):
        cfg = FrameStreamConfig(frame_count=15, query_noise_sigma=0.1, rng_seed=9)
        a = simulate_stream(small_library, cfg)
        b = simulate_stream(small_library, cfg)
        assert [len(f) for f in a] == [len(f) for f in b]
        for fa, fb in zip(a, b):
            for pa, pb in zip(fa, fb):
                assert pa.true_id == pb.true_id
                assert pa.values.tobytes() == pb.values.tobytes()

    def test_different_seeds_differ(self, small_library):
        a = simulate_stream(small_library, FrameStreamConfig(frame_count=15, rng_seed=1))
        b = simulate_stream(small_library, FrameStreamConfig(frame_count=15, rng_seed=2))
        assert [p.true_id for f in a for p in f] != [p.true_id for f in b for p in f]

    def test_probes_are_read_only(self, small_library):
        frames = simulate_stream(small_library, FrameStreamConfig(frame_count=2))
        with pytest.raises(ValueError):
            frames[0][0].values[0] = 0.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FrameStreamConfig(frame_count=0)
        with pytest.raises(ValueError):
            FrameStreamConfig(frame_count=1, query_noise_sigma=-0.1)


class TestBenchCompare:
    def test_reports_and_perfect_recall_on_clean_stream(self, indexed):
        index, library = indexed
        stream = simulate_stream(library, FrameStreamConfig(frame_count=8, rng_seed=3))
        graph, scan = bench_compare(index, library, stream, k=5, ef=len(index))
        probes = sum(len(f) for f in stream)
        assert graph.mode == MODE_GRAPH and scan.mode == MODE_SCAN
        assert graph.stream_kind == scan.stream_kind == "simple"
        assert graph.frames == scan.frames == 8
        assert graph.probes == scan.probes == probes
        assert graph.timed_queries == probes * 3
        # ef equal to the element count makes graph search exact
        assert graph.recall_vs_oracle == pytest.approx(1.0)
        assert scan.recall_vs_oracle == 1.0
        assert graph.ef == len(index) and scan.ef is None
        for rep in (graph, scan):
            assert rep.mean_ms >= 0.0
            assert rep.p95_ms >= rep.median_ms >= 0.0

    def test_only_retrieval_sits_inside_the_clock(self, indexed):
        # a counting clock proves the timing structure: two readings per
        # frame per mode per pass, nothing for generation or recall
        index, library = indexed
        stream = simulate_stream(library, FrameStreamConfig(frame_count=6, rng_seed=3))
        ticks = {"n": 0}

        def counting_clock():
            ticks["n"] += 1
            return float(ticks["n"])

        reps, warmup = 4, 2
        bench_compare(
            index, library, stream, k=3,
            repetitions=reps, warmup=warmup, clock=counting_clock,
        )
        assert ticks["n"] == 2 * 2 * len(stream) * (reps + warmup)

    def test_median_across_repetitions(self, indexed):
        # with the counting clock every timed interval is exactly one tick,
        # so all summary statistics collapse to the tick length in ms
        index, library = indexed
        stream = simulate_stream(library, FrameStreamConfig(frame_count=4, rng_seed=3))
        ticks = {"n": 0}

        def counting_clock():
            ticks["n"] += 1
            return float(ticks["n"])

        graph, scan = bench_compare(
            index, library, stream, k=3, repetitions=3, warmup=0, clock=counting_clock,
        )
        for rep in (graph, scan):
            assert rep.mean_ms == pytest.approx(1000.0)
            assert rep.median_ms == pytest.approx(1000.0)
            assert rep.p95_ms == pytest.approx(1000.0)

    def test_parallel_matches_serial_recall_and_counts(self, indexed):
        index, library = indexed
        stream = simulate_stream(library, FrameStreamConfig(frame_count=6, rng_seed=5))
        serial, _ = bench_compare(index, library, stream, k=4, ef=16)
        par, _ = bench_compare(index, library, stream, k=4, ef=16, parallel=True)
        assert par.recall_vs_oracle == serial.recall_vs_oracle
        assert par.probes == serial.probes
        assert par.timed_queries == serial.timed_queries

    def test_secondary_mode_runs(self, indexed):
        from facepipe import SecondaryConfig

        index, library = indexed
        stream = simulate_stream(library, FrameStreamConfig(frame_count=4, rng_seed=5))
        graph, _ = bench_compare(
            index, library, stream, k=5,
            secondary=SecondaryConfig(k=5, expansion_count=2),
        )
        assert 0.0 <= graph.recall_vs_oracle <= 1.0

    def test_secondary_k_mismatch_rejected(self, indexed):
        from facepipe import SecondaryConfig

        index, library = indexed
        stream = simulate_stream(library, FrameStreamConfig(frame_count=2))
        with pytest.raises(ValueError, match="does not match"):
            bench_compare(index, library, stream, k=5, secondary=SecondaryConfig(k=3))

    def test_empty_stream_rejected(self, indexed):
        index, library = indexed
        with pytest.raises(ValueError, match="empty"):
            bench_compare(index, library, [])
        with pytest.raises(ValueError, match="empty"):
            bench_compare(index, library, [[], []])

    def test_too_few_repetitions_rejected(self, indexed):
        index, library = indexed
        stream = simulate_stream(library, FrameStreamConfig(frame_count=2))
        with pytest.raises(ValueError, match="3 timed"):
            bench_compare(index, library, stream, repetitions=2)

    def test_timing_note_mentions_scope(self):
        assert "retrieval" in TIMING_NOTE
        assert "detection" in TIMING_NOTE


class TestReportFormats:
    def sample(self):
        return [
            BenchReport(
                mode=MODE_GRAPH, stream_kind="simple", frames=10, probes=31,
                repetitions=3, k=10, ef=50, mean_ms=0.123, median_ms=0.1,
                p95_ms=0.4, recall_vs_oracle=0.97, timed_queries=93,
            ),
            BenchReport(
                mode=MODE_SCAN, stream_kind="simple", frames=10, probes=31,
                repetitions=3, k=10, ef=None, mean_ms=1.5, median_ms=1.4,
                p95_ms=2.0, recall_vs_oracle=1.0, timed_queries=93,
            ),
        ]

    def test_csv_round_trip(self):
        reports = self.sample()
        assert parse_reports_csv(format_reports_csv(reports)) == reports

    def test_csv_rejects_foreign_columns(self):
        with pytest.raises(ValueError, match="columns"):
            parse_reports_csv("a,b\n1,2\n")

    def test_text_format_mentions_key_numbers(self):
        text = format_report(self.sample()[0])
        assert "mode=hnsw" in text
        assert "0.123" in text
        assert "recall" in text
