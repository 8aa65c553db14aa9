"""Verification and identification tests: boundaries, sweeps, pair files."""

import math

import numpy as np
import pytest

from facepipe import (
    Embedding,
    PairRecord,
    ParseError,
    SecondaryConfig,
    ZeroVectorError,
    build_library,
    identify,
    index_library,
    read_pairs_file,
    threshold_sweep,
    verify_pair,
)
from tests.conftest import unit_vectors


def emb(values):
    return Embedding(values=np.asarray(values, dtype=np.float32), id=0)


def pair_with_similarity(sim: float, same: bool) -> PairRecord:
    """A pair whose cosine similarity is exactly ``sim`` by construction."""
    a = emb([1.0, 0.0])
    b = emb([sim, math.sqrt(max(1.0 - sim * sim, 0.0))])
    return PairRecord(emb_a=a, emb_b=b, same_identity=same)


def recount(pairs, threshold):
    """Independent per-pair recount used to audit sweep rows."""
    sc = sw = dc = dw = nf = 0
    for p in pairs:
        if p.emb_a is None or p.emb_b is None or \
                not np.linalg.norm(p.emb_a.values) or not np.linalg.norm(p.emb_b.values):
            nf += 1
            continue
        a, b = p.emb_a.values.astype(float), p.emb_b.values.astype(float)
        sim = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
        accept = sim >= threshold
        if p.same_identity:
            sc, sw = sc + accept, sw + (not accept)
        else:
            dw, dc = dw + accept, dc + (not accept)
    return sc, sw, dc, dw, nf


class TestVerifyPair:
    def test_identical_always_accepts(self, rng):
        v = unit_vectors(rng, 1, 8)[0]
        assert verify_pair(emb(v), emb(v), 0.99)

    def test_orthogonal_rejected_at_positive_threshold(self):
        assert not verify_pair(emb([1, 0]), emb([0, 1]), 0.1)
        assert verify_pair(emb([1, 0]), emb([0, 1]), 0.0)

    def test_boundary_is_inclusive(self):
        # 3-4-5 sides make every intermediate exact, so the computed
        # similarity is the double closest to 24/25 and equality is testable
        a, b = emb([3.0, 4.0]), emb([4.0, 3.0])
        boundary = 24.0 / 25.0
        assert verify_pair(a, b, boundary)
        assert not verify_pair(a, b, math.nextafter(boundary, 1.0))

    def test_scale_invariant(self):
        assert verify_pair(emb([2, 0]), emb([5, 0]), 1.0 - 1e-12)

    def test_zero_vector_raises(self):
        with pytest.raises(ZeroVectorError):
            verify_pair(emb([0, 0]), emb([1, 0]), 0.5)


class TestThresholdSweep:
    def test_rows_match_recount(self, rng):
        pairs = []
        for _ in range(300):
            sim = float(rng.uniform(-1, 1))
            pairs.append(pair_with_similarity(sim, same=bool(rng.integers(2))))
        pairs.append(PairRecord(emb_a=None, emb_b=emb([1, 0]), same_identity=True))
        pairs.append(PairRecord(emb_a=emb([1, 0]), emb_b=None, same_identity=False))
        thresholds = [-0.5, 0.0, 0.25, 0.6, 0.95]
        for row in threshold_sweep(pairs, thresholds):
            sc, sw, dc, dw, nf = recount(pairs, row.threshold)
            assert (row.same_correct, row.same_wrong) == (sc, sw)
            assert (row.diff_correct, row.diff_wrong) == (dc, dw)
            assert row.noface == nf
            assert row.total == len(pairs)
            assert row.accuracy == pytest.approx((sc + dc) / len(pairs))

    def test_monotone_counts_across_thresholds(self, rng):
        pairs = [pair_with_similarity(float(rng.uniform(-1, 1)), bool(rng.integers(2)))
                 for _ in range(200)]
        rows = threshold_sweep(pairs, [0.2, 0.3, 0.4, 0.5, 0.6])
        for lo, hi in zip(rows, rows[1:]):
            assert hi.same_correct <= lo.same_correct
            assert hi.diff_correct >= lo.diff_correct

    def test_zero_norm_counts_as_noface(self):
        pairs = [
            PairRecord(emb_a=emb([0.0, 0.0]), emb_b=emb([1, 0]), same_identity=True),
            pair_with_similarity(0.9, same=True),
        ]
        (row,) = threshold_sweep(pairs, [0.5])
        assert row.noface == 1
        assert row.same_correct == 1
        assert row.accuracy == pytest.approx(0.5)

    def test_boundary_pair_counts_as_accept(self):
        pairs = [pair_with_similarity(0.4, same=True)]
        (row,) = threshold_sweep(pairs, [0.4])
        assert row.same_correct == 1 and row.same_wrong == 0

    def test_order_independent(self, rng):
        pairs = [pair_with_similarity(float(rng.uniform(-1, 1)), bool(rng.integers(2)))
                 for _ in range(50)]
        fwd = threshold_sweep(pairs, [0.3])
        rev = threshold_sweep(list(reversed(pairs)), [0.3])
        assert fwd == rev

    def test_empty_inputs_rejected(self):
        with pytest.raises(ValueError):
            threshold_sweep([], [0.5])
        with pytest.raises(ValueError):
            threshold_sweep([pair_with_similarity(0.5, True)], [])


class TestIdentify:
    @pytest.fixture
    def gallery(self, rng):
        vecs = unit_vectors(rng, 20, 16)
        lib = build_library([(f"id{i:02d}", vecs[i]) for i in range(20)])
        index, labels = index_library(lib)
        return index, labels, vecs

    def test_exact_match_named(self, gallery):
        index, labels, vecs = gallery
        assert identify(vecs[5], index, labels, threshold=0.99) == "id05"

    def test_below_threshold_is_unknown(self, gallery, rng):
        index, labels, vecs = gallery
        # a fresh random direction in 16-d is far from every gallery vector
        q = unit_vectors(rng, 1, 16)[0]
        sims = vecs @ q
        assert identify(q, index, labels, threshold=float(sims.max()) + 0.01) is None

    def test_threshold_boundary_accepts(self, gallery):
        index, labels, vecs = gallery
        assert identify(vecs[3], index, labels, threshold=1.0) == "id03"

    def test_accepts_embedding_query(self, gallery):
        index, labels, vecs = gallery
        q = Embedding(values=vecs[7], id=0)
        assert identify(q, index, labels, threshold=0.9) == "id07"

    def test_secondary_route_agrees_on_clear_match(self, gallery):
        index, labels, vecs = gallery
        cfg = SecondaryConfig(k=3, expansion_count=2)
        assert identify(vecs[11], index, labels, threshold=0.9, secondary=cfg) == "id11"

    def test_noisy_probe_of_known_identity(self, gallery, rng):
        index, labels, vecs = gallery
        q = vecs[2] + rng.normal(scale=0.02, size=16).astype(np.float32)
        q /= np.linalg.norm(q)
        assert identify(q, index, labels, threshold=0.8) == "id02"


class TestReadPairsFile:
    def write_emb(self, tmp_path, name, values):
        (tmp_path / name).write_text(" ".join(repr(float(v)) for v in values) + "\n")
        return name

    def test_round_trip_with_noface_and_comments(self, tmp_path):
        a = self.write_emb(tmp_path, "a.txt", [1.0, 0.0])
        b = self.write_emb(tmp_path, "b.txt", [0.0, 1.0])
        listing = tmp_path / "pairs.txt"
        listing.write_text(
            "# verification set\n"
            f"{a} {b} 0\n"
            f"{a} {a} 1\n"
            f"- {b} 1\n"
        )
        pairs = read_pairs_file(listing)
        assert len(pairs) == 3
        assert not pairs[0].same_identity
        np.testing.assert_array_equal(pairs[0].emb_b.values, [0.0, 1.0])
        assert pairs[1].same_identity
        assert pairs[2].emb_a is None
        assert pairs[2].emb_b is not None

    def test_relative_paths_resolve_against_listing(self, tmp_path):
        sub = tmp_path / "embs"
        sub.mkdir()
        self.write_emb(sub, "x.txt", [3.0, 4.0])
        listing = tmp_path / "pairs.txt"
        listing.write_text("embs/x.txt embs/x.txt 1\n")
        pairs = read_pairs_file(listing)
        np.testing.assert_array_equal(pairs[0].emb_a.values, [3.0, 4.0])

    def test_absolute_paths_honored(self, tmp_path):
        name = self.write_emb(tmp_path, "x.txt", [1.0])
        listing = tmp_path / "elsewhere.txt"
        listing.write_text(f"{tmp_path / name} {tmp_path / name} 1\n")
        assert len(read_pairs_file(listing)) == 1

    def test_wrong_field_count(self, tmp_path):
        listing = tmp_path / "pairs.txt"
        listing.write_text("a.txt b.txt\n")
        with pytest.raises(ParseError, match=":1:"):
            read_pairs_file(listing)

    def test_bad_label(self, tmp_path):
        listing = tmp_path / "pairs.txt"
        listing.write_text("- - maybe\n")
        with pytest.raises(ParseError, match="label"):
            read_pairs_file(listing)

    def test_empty_listing(self, tmp_path):
        listing = tmp_path / "pairs.txt"
        listing.write_text("# nothing\n")
        with pytest.raises(ParseError, match="no pairs"):
            read_pairs_file(listing)

    def test_sweep_over_file_pairs(self, tmp_path):
        a = self.write_emb(tmp_path, "a.txt", [1.0, 0.0])
        b = self.write_emb(tmp_path, "b.txt", [0.0, 1.0])
        listing = tmp_path / "pairs.txt"
        listing.write_text(f"{a} {a} 1\n{a} {b} 0\n- {b} 0\n")
        (row,) = threshold_sweep(read_pairs_file(listing), [0.5])
        assert (row.same_correct, row.diff_correct, row.noface) == (1, 1, 1)
        assert row.accuracy == pytest.approx(2 / 3)
