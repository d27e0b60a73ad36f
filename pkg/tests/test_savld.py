"""Label dictionary: file formats, k-NN vs a brute-force oracle, overlap targets."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modality_gate.savld import (EmbeddingFormatError, OverlapConfig, Savld,
                                 SavldFormatError, build_savld, load_embeddings,
                                 make_table, parse_savld, relevance_target,
                                 serialize_savld)


def knn_oracle(video, audio, k, metric):
    """Independent all-pairs k-NN: plain python loops, ties by insertion order."""
    entries = {}
    for vlab, vvec in zip(video.labels, video.vectors):
        scored = []
        for idx, (alab, avec) in enumerate(zip(audio.labels, audio.vectors)):
            if metric == "euclidean":
                d = math.sqrt(sum((x - y) ** 2 for x, y in zip(vvec, avec)))
            elif metric == "manhattan":
                d = sum(abs(x - y) for x, y in zip(vvec, avec))
            else:
                nv = math.sqrt(sum(x * x for x in vvec))
                na = math.sqrt(sum(y * y for y in avec))
                if nv == 0.0 or na == 0.0:
                    cos = 0.0
                else:
                    cos = sum(x * y for x, y in zip(vvec, avec)) / (nv * na)
                d = 1.0 - cos
            scored.append((d, idx, alab))
        scored.sort(key=lambda pair: (pair[0], pair[1]))
        entries[vlab] = tuple(lab for _, _, lab in scored[:k])
    return entries


def random_table(rng, n, dim, prefix):
    vectors = rng.normal(size=(n, dim))
    return make_table(((f"{prefix}{i}", vectors[i]) for i in range(n)), dim)


class TestEmbeddingFiles:
    def test_parse_valid_file(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("dim=3\n# comment\nWalking\t1.0,2.0,3.0\nrunning\t-1,0.5,0\n")
        table = load_embeddings(path)
        assert table.dim == 3
        assert table.labels == ("walking", "running")
        np.testing.assert_allclose(table.vectors[1], [-1.0, 0.5, 0.0])

    def test_dimension_mismatch(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("dim=3\nwalking\t1.0,2.0\n")
        with pytest.raises(EmbeddingFormatError, match="expected 3"):
            load_embeddings(path)

    def test_duplicate_after_lowercasing(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("dim=2\nWriting\t1,2\nwriting\t3,4\n")
        with pytest.raises(EmbeddingFormatError, match="duplicate"):
            load_embeddings(path)

    def test_non_numeric_token(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("dim=2\nwalking\t1.0,abc\n")
        with pytest.raises(EmbeddingFormatError, match="non-numeric"):
            load_embeddings(path)


class TestBuild:
    def test_hand_example(self):
        video = make_table([("v", [1.0, 0.0])], 2)
        audio = make_table([("a1", [1.0, 0.0]), ("a2", [0.0, 1.0]), ("a3", [-1.0, 0.0])], 2)
        # oracle by hand: distances 0, sqrt(2), 2
        savld = build_savld(video, audio, k=2, metric="euclidean")
        assert savld.entries["v"] == ("a1", "a2")

    def test_full_k_is_sorted_exhaustive(self):
        rng = np.random.default_rng(0)
        video = random_table(rng, 3, 4, "v")
        audio = random_table(rng, 6, 4, "a")
        savld = build_savld(video, audio, k=6, metric="manhattan")
        for entry in savld.entries.values():
            assert sorted(entry) == sorted(audio.labels)

    def test_identical_tables_self_nearest(self):
        rng = np.random.default_rng(1)
        table = random_table(rng, 5, 3, "x")
        for metric in ("euclidean", "manhattan", "cosine"):
            savld = build_savld(table, table, k=1, metric=metric)
            assert all(savld.entries[lab] == (lab,) for lab in table.labels)

    def test_k_too_large(self):
        rng = np.random.default_rng(2)
        with pytest.raises(ValueError, match="exceeds"):
            build_savld(random_table(rng, 2, 3, "v"), random_table(rng, 2, 3, "a"),
                        k=3, metric="euclidean")

    def test_dim_mismatch(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValueError, match="dims differ"):
            build_savld(random_table(rng, 2, 3, "v"), random_table(rng, 2, 4, "a"),
                        k=1, metric="euclidean")

    @pytest.mark.parametrize("metric", ["euclidean", "manhattan", "cosine"])
    def test_matches_oracle_random_tables(self, metric):
        rng = np.random.default_rng(99)
        for _ in range(8):
            video = random_table(rng, int(rng.integers(1, 20)), int(rng.integers(1, 8)), "v")
            audio = make_table(
                ((f"a{i}", v) for i, v in enumerate(rng.normal(size=(int(rng.integers(2, 25)), video.dim)))),
                video.dim)
            k = int(rng.integers(1, len(audio) + 1))
            assert build_savld(video, audio, k, metric).entries == knn_oracle(video, audio, k, metric)

    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 100.0))
    @settings(max_examples=25, deadline=None)
    def test_cosine_scale_invariance(self, seed, scale):
        rng = np.random.default_rng(seed)
        video = random_table(rng, 4, 3, "v")
        audio = random_table(rng, 7, 3, "a")
        scaled_v = make_table(zip(video.labels, video.vectors * scale), 3)
        scaled_a = make_table(zip(audio.labels, audio.vectors * scale), 3)
        base = build_savld(video, audio, k=3, metric="cosine")
        scaled = build_savld(scaled_v, scaled_a, k=3, metric="cosine")
        assert base == scaled


class TestSerialization:
    def test_table_row_rendering(self, tmp_path):
        savld = Savld(k=5, entries={
            "writing": ("writing", "speech", "typing", "chatter", "mechanisms")})
        path = tmp_path / "savld.tsv"
        serialize_savld(savld, path)
        assert path.read_text() == "writing\twriting;speech;typing;chatter;mechanisms\n"

    def test_round_trip_identity(self, tmp_path):
        rng = np.random.default_rng(5)
        video = random_table(rng, 6, 4, "v")
        audio = random_table(rng, 9, 4, "a")
        savld = build_savld(video, audio, k=4, metric="cosine")
        path = tmp_path / "savld.tsv"
        serialize_savld(savld, path)
        assert parse_savld(path) == savld

    def test_inconsistent_k(self, tmp_path):
        path = tmp_path / "savld.tsv"
        path.write_text("v0\ta;b;c;d\nv1\ta;b;c;d;e\n")
        with pytest.raises(SavldFormatError, match="expected 4"):
            parse_savld(path)

    def test_duplicate_video_label(self, tmp_path):
        path = tmp_path / "savld.tsv"
        path.write_text("v0\ta;b\nv0\tb;c\n")
        with pytest.raises(SavldFormatError, match="duplicate"):
            parse_savld(path)


def overlap_oracle(k, ya, inter, method):
    """Set-enumeration oracle: materialize concrete sets, score them directly."""
    predicted = {f"p{i}" for i in range(ya - inter)} | {f"c{i}" for i in range(inter)}
    relevant = {f"r{i}" for i in range(k - inter)} | {f"c{i}" for i in range(inter)}
    i = len(predicted & relevant)
    u = len(predicted | relevant)
    raw = i / u if method == "iou" else 2 * i / (len(predicted) + len(relevant))
    best = min(k, ya)
    raw_max = best / (k + ya - best) if method == "iou" else 2 * best / (k + ya)
    return raw / raw_max, sorted(predicted), sorted(relevant)


class TestRelevanceTarget:
    def test_maximal_intersection_both_methods(self):
        for method in ("iou", "dice"):
            value, pred, rel = overlap_oracle(10, 20, 10, method)
            cfg = OverlapConfig(k=10, ya=20, method=method)
            assert relevance_target(pred, rel, cfg) == 1.0 == value

    def test_disjoint_is_zero(self):
        cfg = OverlapConfig(k=3, ya=4, method="iou")
        assert relevance_target(["a", "b", "c", "d"], ["x", "y", "z"], cfg) == 0.0

    def test_hand_values_k10_ya20_inter5(self):
        # iou: raw 5/25 = 0.2, max 0.5 -> 0.4; dice: raw 10/30, max 20/30 -> 0.5
        v_iou, pred, rel = overlap_oracle(10, 20, 5, "iou")
        assert v_iou == pytest.approx(0.4)
        assert relevance_target(pred, rel, OverlapConfig(10, 20, "iou")) == pytest.approx(0.4)
        v_dice, pred, rel = overlap_oracle(10, 20, 5, "dice")
        assert v_dice == pytest.approx(0.5)
        assert relevance_target(pred, rel, OverlapConfig(10, 20, "dice")) == pytest.approx(0.5)

    @given(st.integers(1, 25), st.integers(1, 25), st.data(),
           st.sampled_from(["iou", "dice"]))
    @settings(max_examples=150, deadline=None)
    def test_matches_enumeration_oracle(self, k, ya, data, method):
        inter = data.draw(st.integers(0, min(k, ya)))
        expected, pred, rel = overlap_oracle(k, ya, inter, method)
        got = relevance_target(pred, rel, OverlapConfig(k, ya, method))
        assert got == expected
        assert 0.0 <= got <= 1.0
        assert (got == 0.0) == (inter == 0)
        assert (got == 1.0) == (inter == min(k, ya))

    @given(st.integers(1, 12), st.integers(1, 12), st.sampled_from(["iou", "dice"]))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_intersection(self, k, ya, method):
        cfg = OverlapConfig(k, ya, method)
        values = [relevance_target(*overlap_oracle(k, ya, i, method)[1:], cfg)
                  for i in range(min(k, ya) + 1)]
        assert all(a <= b for a, b in zip(values, values[1:]))

    @given(st.integers(1, 12), st.data(), st.sampled_from(["iou", "dice"]))
    @settings(max_examples=60, deadline=None)
    def test_symmetric_when_k_equals_ya(self, k, data, method):
        inter = data.draw(st.integers(0, k))
        _, pred, rel = overlap_oracle(k, k, inter, method)
        cfg = OverlapConfig(k, k, method)
        assert relevance_target(pred, rel, cfg) == relevance_target(rel, pred, cfg)

    def test_rejects_wrong_sizes(self):
        cfg = OverlapConfig(k=2, ya=2, method="iou")
        with pytest.raises(ValueError):
            relevance_target(["a"], ["x", "y"], cfg)
        with pytest.raises(ValueError):
            relevance_target(["a", "a"], ["x", "y"], cfg)
