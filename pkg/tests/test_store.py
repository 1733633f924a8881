import numpy as np
import pytest

from conceptlink.errors import BuildError, DimensionMismatchError, ModelFormatError
from conceptlink.store import (
    NAME_SEP,
    attach_vectors,
    build_cdb,
    build_vcb,
    fallback_vector,
    load_model,
    save_model,
)
from conceptlink.textpipe import Pipeline


def brute_force_subnames(cdb):
    out = set()
    for record in cdb.concepts.values():
        for name in record.names:
            toks = name.normalized_tokens
            if len(toks) > 1:
                for k in range(1, len(toks)):
                    out.add(NAME_SEP.join(toks[:k]))
    return out


class TestBuildCdb:
    def test_basic_build(self):
        rows = [
            ("C1", "heart failure"),
            ("C1", "cardiac failure"),
            ("C2", "kidney failure"),
        ]
        cdb = build_cdb(rows)
        assert len(cdb.concepts) == 2
        assert len(cdb.name_index) == 3
        assert cdb.subname_index == {"heart", "cardiac", "kidney"}

    def test_shared_name_not_unique(self):
        cdb = build_cdb([("C1", "HR"), ("C2", "HR")])
        for record in cdb.concepts.values():
            assert all(not n.is_unique for n in record.names)

    def test_single_name_unique(self):
        cdb = build_cdb([("C0024117", "Chronic Obstructive Airway Disease")])
        (record,) = cdb.concepts.values()
        assert record.names[0].is_unique

    def test_duplicate_rows_collapse(self):
        cdb = build_cdb([("C1", "fever"), ("C1", "fever")])
        assert len(cdb.concepts["C1"].names) == 1

    def test_malformed_rows_skipped_zero_valid_is_error(self):
        cdb = build_cdb([("", "x"), ("C1", "fever")])
        assert list(cdb.concepts) == ["C1"]
        with pytest.raises(BuildError):
            build_cdb([("", "x"), ("C2", "")])

    def test_uniqueness_consistent_with_index(self):
        rows = [
            ("C1", "fever"), ("C2", "fever"), ("C1", "pyrexia"),
            ("C3", "cold"), ("C4", "common cold"),
        ]
        cdb = build_cdb(rows)
        for record in cdb.concepts.values():
            for name in record.names:
                assert name.is_unique == (len(cdb.name_index[name.key]) == 1)

    def test_subname_index_matches_brute_force(self):
        rows = [
            ("C1", "chronic obstructive airway disease"),
            ("C2", "airway disease"),
            ("C3", "fever"),
        ]
        cdb = build_cdb(rows)
        assert cdb.subname_index == brute_force_subnames(cdb)

    def test_idempotent(self):
        rows = [("C1", "heart failure"), ("C2", "kidney failure")]
        a = build_cdb(rows)
        b = build_cdb(rows)
        assert a.name_index == b.name_index
        assert a.subname_index == b.subname_index
        assert set(a.concepts) == set(b.concepts)

    def test_abbreviation_flags(self):
        cdb = build_cdb([("C1", "HR"), ("C1", "heart rate")])
        names = {n.raw: n for n in cdb.concepts["C1"].names}
        assert names["HR"].is_abbreviation
        assert not names["heart rate"].is_abbreviation
        assert "hr" in cdb.abbrev_keys


class TestBuildVcb:
    def test_counts(self):
        vcb = build_vcb(iter("a a b".split()))
        assert vcb.count("a") == 2
        assert vcb.count("b") == 1

    def test_min_count(self):
        vcb = build_vcb(iter("a a b".split()), min_count=2)
        assert "a" in vcb
        assert "b" not in vcb

    def test_many_repeats(self):
        vcb = build_vcb(iter(["fever"] * 1000))
        assert vcb.count("fever") == 1000

    def test_empty_corpus_is_error(self):
        with pytest.raises(BuildError):
            build_vcb(iter([]))


class TestAttachVectors:
    def test_passthrough(self, tmp_path):
        vcb = build_vcb(iter(["fever"]))
        path = tmp_path / "vecs.txt"
        path.write_text("1 2\nfever 0.1 0.2\n")
        attach_vectors(vcb, path)
        entry = vcb.entries["fever"]
        assert entry.vector.tolist() == [0.1, 0.2]
        assert not entry.is_fallback

    def test_missing_word_gets_flagged_fallback(self, tmp_path):
        vcb = build_vcb(iter(["fever", "chills"]))
        path = tmp_path / "vecs.txt"
        path.write_text("1 2\nfever 0.1 0.2\n")
        attach_vectors(vcb, path)
        assert vcb.entries["chills"].is_fallback
        assert vcb.entries["chills"].vector.shape == (2,)

    def test_empty_file_all_fallback(self, tmp_path):
        vcb = build_vcb(iter(["fever", "chills"]))
        path = tmp_path / "vecs.txt"
        path.write_text("")
        attach_vectors(vcb, path)
        assert all(e.is_fallback for e in vcb.entries.values())

    def test_inconsistent_dims_error(self, tmp_path):
        vcb = build_vcb(iter(["fever"]))
        path = tmp_path / "vecs.txt"
        path.write_text("2 2\nfever 0.1 0.2\nchills 0.1 0.2 0.3\n")
        with pytest.raises(DimensionMismatchError, match="chills"):
            attach_vectors(vcb, path)


def test_fallback_vector_deterministic_unit():
    a = fallback_vector("fever", 50)
    b = fallback_vector("fever", 50)
    assert np.array_equal(a, b)
    assert np.isclose(np.linalg.norm(a), 1.0)
    assert not np.array_equal(a, fallback_vector("chills", 50))


class TestSaveLoad:
    def make_store(self):
        cdb = build_cdb([("C1", "heart failure"), ("C2", "fever")])
        cdb.concepts["C1"].vector_long = np.array([0.5, -0.25])
        cdb.concepts["C1"].vector_short = np.array([0.1, 0.9])
        cdb.concepts["C1"].train_count = 7
        vcb = build_vcb(iter("fever fever heart".split()), dim=2)
        return cdb, vcb

    def test_round_trip(self, tmp_path):
        cdb, vcb = self.make_store()
        path = tmp_path / "model.bin"
        save_model(path, cdb, vcb)
        cdb2, vcb2, _ = load_model(path)
        assert set(cdb2.concepts) == set(cdb.concepts)
        assert cdb2.concepts["C1"].train_count == 7
        assert np.array_equal(cdb2.concepts["C1"].vector_long, cdb.concepts["C1"].vector_long)
        assert cdb2.name_index == cdb.name_index
        assert {w: e.count for w, e in vcb2.entries.items()} == {
            w: e.count for w, e in vcb.entries.items()
        }

    def test_truncated_file_errors(self, tmp_path):
        cdb, vcb = self.make_store()
        path = tmp_path / "model.bin"
        save_model(path, cdb, vcb)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_future_version_errors(self, tmp_path):
        cdb, vcb = self.make_store()
        path = tmp_path / "model.bin"
        save_model(path, cdb, vcb)
        blob = bytearray(path.read_bytes())
        blob[4:8] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(ModelFormatError, match="version"):
            load_model(path)

    def test_not_a_model_file(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"definitely not a model")
        with pytest.raises(ModelFormatError):
            load_model(path)
