import numpy as np
import pytest

from ptmfuse.config import toy_config
from ptmfuse.errors import ConfigError, FormatError, InputError
from ptmfuse.features import encoders as enc
from ptmfuse.features.align import AlignParams, align_dims
from ptmfuse.features.bundle import FeatureBundle, ResidueEmbedder, stack_bundles, stream_dims
from ptmfuse.features.embfile import EmbeddingFile, load_embedding, write_embedding_file
from ptmfuse.features.records import SampleRecord, iter_fasta, read_dataset_tsv, window_at
from ptmfuse.nn import Init
from ptmfuse.tensor import Tensor

# BLOSUM62 as transcribed in an unrelated feature-extraction tool
REFERENCE_BLOSUM = {
    "A": [4, -1, -2, -2, 0, -1, -1, 0, -2, -1, -1, -1, -1, -2, -1, 1, 0, -3, -2, 0],
    "R": [-1, 5, 0, -2, -3, 1, 0, -2, 0, -3, -2, 2, -1, -3, -2, -1, -1, -3, -2, -3],
    "N": [-2, 0, 6, 1, -3, 0, 0, 0, 1, -3, -3, 0, -2, -3, -2, 1, 0, -4, -2, -3],
    "D": [-2, -2, 1, 6, -3, 0, 2, -1, -1, -3, -4, -1, -3, -3, -1, 0, -1, -4, -3, -3],
    "C": [0, -3, -3, -3, 9, -3, -4, -3, -3, -1, -1, -3, -1, -2, -3, -1, -1, -2, -2, -1],
    "Q": [-1, 1, 0, 0, -3, 5, 2, -2, 0, -3, -2, 1, 0, -3, -1, 0, -1, -2, -1, -2],
    "E": [-1, 0, 0, 2, -4, 2, 5, -2, 0, -3, -3, 1, -2, -3, -1, 0, -1, -3, -2, -2],
    "G": [0, -2, 0, -1, -3, -2, -2, 6, -2, -4, -4, -2, -3, -3, -2, 0, -2, -2, -3, -3],
    "H": [-2, 0, 1, -1, -3, 0, 0, -2, 8, -3, -3, -1, -2, -1, -2, -1, -2, -2, 2, -3],
    "I": [-1, -3, -3, -3, -1, -3, -3, -4, -3, 4, 2, -3, 1, 0, -3, -2, -1, -3, -1, 3],
    "L": [-1, -2, -3, -4, -1, -2, -3, -4, -3, 2, 4, -2, 2, 0, -3, -2, -1, -2, -1, 1],
    "K": [-1, 2, 0, -1, -3, 1, 1, -2, -1, -3, -2, 5, -1, -3, -1, 0, -1, -3, -2, -2],
    "M": [-1, -1, -2, -3, -1, 0, -2, -3, -2, 1, 2, -1, 5, 0, -2, -1, -1, -1, -1, 1],
    "F": [-2, -3, -3, -3, -2, -3, -3, -3, -1, 0, 0, -3, 0, 6, -4, -2, -2, 1, 3, -1],
    "P": [-1, -2, -2, -1, -3, -1, -1, -2, -2, -3, -3, -1, -2, -4, 7, -1, -1, -4, -3, -2],
    "S": [1, -1, 1, 0, -1, 0, 0, 0, -1, -2, -2, 0, -1, -2, -1, 4, 1, -3, -2, -2],
    "T": [0, -1, 0, -1, -1, -1, -1, -2, -2, -1, -1, -1, -1, -2, -1, 1, 5, -2, -2, 0],
    "W": [-3, -3, -4, -4, -2, -2, -3, -2, -2, -3, -2, -3, -1, 1, -4, -3, -2, 11, 2, -3],
    "Y": [-2, -2, -2, -3, -2, -1, -2, -3, 2, -1, -1, -2, -1, 3, -3, -2, -2, 2, 7, -1],
    "V": [0, -3, -3, -3, -1, -2, -2, -3, -3, 3, 1, -2, 1, -1, -2, -2, 0, -3, -1, 4],
}

# Kyte-Doolittle hydropathy
KYTE_DOOLITTLE = {
    "A": 1.8, "R": -4.5, "N": -3.5, "D": -3.5, "C": 2.5, "Q": -3.5, "E": -3.5, "G": -0.4, "H": -3.2, "I": 4.5,
    "L": 3.8, "K": -3.9, "M": 1.9, "F": 2.8, "P": -1.6, "S": -0.8, "T": -0.7, "W": -0.9, "Y": -1.3, "V": 4.2,
}


class TestBlosum:
    def test_matches_reference(self):
        for aa, row in REFERENCE_BLOSUM.items():
            np.testing.assert_array_equal(enc.encode_blosum62(aa)[0], row)

    def test_symmetric(self):
        t = enc.blosum62_table()
        np.testing.assert_array_equal(t, t.T)

    def test_pad_rows_zero(self):
        np.testing.assert_array_equal(enc.encode_blosum62("XXXXX"), 0.0)
        assert enc.encode_blosum62("XKX").shape == (3, 20)

    def test_bad_residue(self):
        with pytest.raises(InputError, match="position 2"):
            enc.encode_blosum62("AZA")


class TestAaindex:
    def test_kyte_doolittle_values(self):
        raw = enc.aaindex_raw()["KYTJ820101"]
        np.testing.assert_allclose(raw, [KYTE_DOOLITTLE[a] for a in enc.AMINO_ACIDS])

    def test_znormalized_columns(self):
        cols = enc.encode_aaindex(enc.AMINO_ACIDS)
        assert cols.shape == (20, len(enc.DEFAULT_AAINDEX))
        np.testing.assert_allclose(cols.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(cols.std(axis=0), 1.0, atol=1e-12)

    def test_order_preserved(self):
        col = enc.encode_aaindex(enc.AMINO_ACIDS, ("KYTJ820101",))[:, 0]
        raw = np.array([KYTE_DOOLITTLE[a] for a in enc.AMINO_ACIDS])
        assert (np.argsort(col, kind="stable") == np.argsort(raw, kind="stable")).all()

    def test_constant_index_zero(self):
        table = {"FLAT": np.full(20, 3.0)}
        np.testing.assert_array_equal(enc.encode_aaindex("ACD", ("FLAT",), table), 0.0)

    def test_unknown_id(self):
        with pytest.raises(ConfigError):
            enc.encode_aaindex("A", ("NOPE000000",))

    def test_pad_zero(self):
        np.testing.assert_array_equal(enc.encode_aaindex("XXX"), 0.0)


class TestPseaac:
    def test_homopolymer(self):
        v = enc.pseaac_vector("A" * 9, 3)
        expected = np.zeros(23)
        expected[enc.AA_INDEX["A"]] = 1.0
        np.testing.assert_allclose(v, expected, atol=1e-15)

    def test_sums_to_one(self, rng):
        for _ in range(20):
            w = "".join(rng.choice(list(enc.AMINO_ACIDS), size=15))
            assert enc.pseaac_vector(w, 5).sum() == pytest.approx(1.0, abs=1e-12)

    def test_reversal_invariant(self):
        w = "MKVLAAGKTEW"
        np.testing.assert_allclose(enc.pseaac_vector(w, 4), enc.pseaac_vector(w[::-1], 4), rtol=1e-12)

    def test_pads_ignored(self):
        np.testing.assert_array_equal(enc.pseaac_vector("XXMKVLAX", 2), enc.pseaac_vector("MKVLA", 2))
        tiled = enc.encode_pseaac("XMKVLA", 2)
        np.testing.assert_array_equal(tiled[0], 0.0)
        np.testing.assert_array_equal(tiled[1], tiled[5])

    def test_lambda_too_large(self):
        with pytest.raises(ConfigError):
            enc.pseaac_vector("MKV", 3)


class TestEmbeddingFile:
    def test_round_trip(self, tmp_path, rng):
        recs = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(5, 4))}
        path = tmp_path / "e.uptm"
        write_embedding_file(path, recs, dtype="<f8")
        ef = EmbeddingFile(path)
        assert ef.ids == ["a", "b"]
        for k, v in recs.items():
            np.testing.assert_array_equal(ef.get(k), v)

    def test_f32_round_trip(self, tmp_path, rng):
        m = rng.normal(size=(2, 3))
        write_embedding_file(tmp_path / "e.uptm", {"x": m})
        np.testing.assert_array_equal(EmbeddingFile(tmp_path / "e.uptm").get("x"), m.astype(np.float32))

    def test_truncated(self, tmp_path):
        path = tmp_path / "e.uptm"
        write_embedding_file(path, {"a": np.ones((4, 8))})
        data = path.read_bytes()
        path.write_bytes(data[:60])
        with pytest.raises(FormatError, match="expected 128 bytes, found 40"):
            EmbeddingFile(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "e.uptm"
        path.write_bytes(b"NOPE" + bytes(30))
        with pytest.raises(FormatError, match="magic"):
            EmbeddingFile(path)

    def test_column_mismatch(self, tmp_path):
        path = tmp_path / "e.uptm"
        write_embedding_file(path, {"p": np.zeros((2, 1280))})
        with pytest.raises(FormatError, match="file has 1280, expected 1024"):
            load_embedding(path, "p", 1024)

    def test_missing_record(self, tmp_path):
        path = tmp_path / "e.uptm"
        write_embedding_file(path, {"p": np.ones((2, 3))})
        with pytest.raises(InputError):
            load_embedding(path, "q", 3)
        with pytest.warns(UserWarning):
            z = load_embedding(path, "q", 3, missing="zeros", rows=4)
        np.testing.assert_array_equal(z, np.zeros((4, 3)))

    def test_mixed_widths_rejected(self, tmp_path):
        with pytest.raises(FormatError):
            write_embedding_file(tmp_path / "e.uptm", {"a": np.ones((1, 2)), "b": np.ones((1, 3))})


class TestRecords:
    def test_window_at_pads(self):
        assert window_at("MKV", 0, 5) == "XXMKV"
        assert window_at("MKV", 2, 5) == "MKVXX"

    def test_tsv_errors_name_line(self, tmp_path):
        path = tmp_path / "d.tsv"
        path.write_text("id\twindow\tlabel\na\tAAKAA\t1\nb\tAAKAA\t0\nc\tAAKBA\t1\n")
        with pytest.raises(InputError, match="line 4"):
            read_dataset_tsv(path, 5)

    def test_tsv_reads(self, tmp_path):
        path = tmp_path / "d.tsv"
        path.write_text("id\twindow\tlabel\na\tAAKAA\t1\nb\txxkaa\t0\n")
        recs = read_dataset_tsv(path, 5)
        assert [(r.id, r.window, r.label) for r in recs] == [("a", "AAKAA", 1), ("b", "XXKAA", 0)]

    def test_pad_center_rejected(self):
        with pytest.raises(InputError):
            SampleRecord("r", "AAXAA", 0)

    def test_fasta_wrapped(self, tmp_path):
        path = tmp_path / "p.fa"
        path.write_text(">p1 desc\nMKV\nLA\n>p2\nGG\n")
        assert list(iter_fasta(path)) == [("p1", "MKVLA", 1), ("p2", "GG", 4)]


class TestAlign:
    def test_shape(self, rng):
        p = AlignParams.init(Init(rng), 12, 256)
        out = align_dims(Tensor(rng.normal(size=(2, 5, 12))), 256, p)
        assert out.shape == (2, 5, 256)

    def test_zero_in_zero_out(self, rng):
        p = AlignParams.init(Init(rng), 7, 16, strict=False)
        np.testing.assert_array_equal(align_dims(Tensor(np.zeros((1, 4, 7))), 16, p, strict=False).data, 0.0)

    def test_strict_targets(self, rng):
        with pytest.raises(ConfigError):
            AlignParams.init(Init(rng), 12, 100)


class TestBundle:
    def test_embedder_shapes(self):
        cfg = toy_config()
        b = ResidueEmbedder(cfg).bundle(SampleRecord("r", "XXMKKLAVX", 1))
        b.check(cfg)
        dims = stream_dims(cfg)
        for name, mat in zip(("master_a", "master_b", "ember", "pseaac", "blosum", "aaindex"), b.streams()):
            assert mat.shape == (9, dims[name])
            np.testing.assert_array_equal(mat[0], 0.0)

    def test_embedder_deterministic(self):
        cfg = toy_config()
        r = SampleRecord("r", "AMKKLAVGT", 1)
        a, b = ResidueEmbedder(cfg, 3).bundle(r), ResidueEmbedder(cfg, 3).bundle(r)
        for x, y in zip(a.streams(), b.streams()):
            np.testing.assert_array_equal(x, y)

    def test_stack(self):
        cfg = toy_config()
        emb = ResidueEmbedder(cfg)
        bundles = [emb.bundle(SampleRecord(str(i), "AMKKLAVGT", 0)) for i in range(3)]
        batch = stack_bundles(bundles)
        assert batch.size == 3 and batch.master_a.shape == (3, 9, stream_dims(cfg)["master_a"])

    def test_check_rejects_wrong_width(self):
        cfg = toy_config()
        good = ResidueEmbedder(cfg).bundle(SampleRecord("r", "AMKKLAVGT", 0))
        bad = FeatureBundle(np.zeros((9, 3)), *list(good.streams())[1:])
        with pytest.raises(ConfigError, match="master_a"):
            bad.check(cfg)
