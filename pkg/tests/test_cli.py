import json

import numpy as np
import pytest

from ptmfuse.cli import main, worker_count
from ptmfuse.errors import ConfigError
from ptmfuse.features.embfile import EmbeddingFile, write_embedding_file
from ptmfuse.features.encoders import AMINO_ACIDS

WINDOWS = ["AAKAAGS", "XAKLMVT", "MVKLLAA", "GGKSSTT", "PLKQRSA", "AMKVLGT", "EEKDDRR", "HHKWYFC", "NQKSTAV",
           "VVKIILL"]


def _dataset(path, windows=WINDOWS):
    lines = ["id\twindow\tlabel"] + [f"r{i}\t{w}\t{i % 2}" for i, w in enumerate(windows)]
    path.write_text("\n".join(lines) + "\n")
    return path


def _small_config(path, **synth):
    doc = {"synth": {"n_train": 6, "n_test": 4, "separation": 3.0, **synth}, "model": {"batch_size": 8}}
    path.write_text(json.dumps(doc))
    return str(path)


class TestEncode:
    def test_three_files(self, tmp_path, capsys):
        src = _dataset(tmp_path / "d.tsv")
        out = tmp_path / "enc"
        assert main(["encode", str(src), "--len", "7", "--out-dir", str(out)]) == 0
        dims = {"pseaac": 25, "blosum62": 20, "aaindex": 31}
        for name, cols in dims.items():
            ef = EmbeddingFile(out / f"{name}.uptm")
            assert len(ef) == 10 and ef.cols == cols
            assert all(ef.get(r).shape == (7, cols) for r in ef.ids)
        assert "10 records" in capsys.readouterr().out

    def test_rerun_identical(self, tmp_path):
        src = _dataset(tmp_path / "d.tsv")
        blobs = []
        for run in range(2):
            out = tmp_path / f"enc{run}"
            main(["encode", str(src), "--len", "7", "--out-dir", str(out)])
            blobs.append([(out / f"{n}.uptm").read_bytes() for n in ("pseaac", "blosum62", "aaindex")])
        assert blobs[0] == blobs[1]

    def test_bad_residue_line(self, tmp_path, capsys):
        windows = list(WINDOWS)
        windows[2] = "MVKLZAA"
        src = _dataset(tmp_path / "d.tsv", windows)
        assert main(["encode", str(src), "--len", "7", "--out-dir", str(tmp_path / "o")]) == 2
        assert "line 4" in capsys.readouterr().err

    def test_fasta(self, tmp_path):
        src = tmp_path / "p.fasta"
        src.write_text(">p1\nMKVLAAGKTE\n>p2\nGGSKLLM\n")
        out = tmp_path / "enc"
        assert main(["encode", str(src), "--out-dir", str(out)]) == 0
        ef = EmbeddingFile(out / "blosum62.uptm")
        assert ef.ids == ["p1", "p2"] and ef.get("p1").shape == (10, 20)

    def test_missing_input(self, tmp_path):
        assert main(["encode", str(tmp_path / "nope.tsv"), "--out-dir", str(tmp_path)]) == 3


class TestTrainEval:
    def _train(self, tmp_path, name, cfg):
        out = tmp_path / name
        code = main(["train", "--synthetic", "--seed", "7", "--dims", "16", "--epochs", "1", "--config", cfg,
                     "--out-dir", str(out)])
        assert code == 0
        return out

    def test_reproducible(self, tmp_path):
        cfg = _small_config(tmp_path / "c.json")
        a, b = self._train(tmp_path, "a", cfg), self._train(tmp_path, "b", cfg)
        assert (a / "checkpoint.uptm").read_bytes() == (b / "checkpoint.uptm").read_bytes()
        assert (a / "metrics.json").read_text() == (b / "metrics.json").read_text()
        saved = json.loads((a / "config.json").read_text())
        assert saved["model"]["seed"] == 7 and saved["model"]["d_m"] == 16

    def test_eval_checkpoint(self, tmp_path, capsys):
        cfg = _small_config(tmp_path / "c.json")
        out = self._train(tmp_path, "a", cfg)
        capsys.readouterr()
        code = main(["eval", "--synthetic", "--seed", "7", "--dims", "16", "--config", cfg,
                     "--checkpoint", str(out / "checkpoint.uptm"), "--out-dir", str(tmp_path / "ev")])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report == json.loads((out / "metrics.json").read_text())

    def test_from_files(self, tmp_path):
        rng = np.random.default_rng(0)
        src = _dataset(tmp_path / "d.tsv")
        ids = [f"r{i}" for i in range(10)]
        write_embedding_file(tmp_path / "t5.uptm", {r: rng.normal(size=(7, 32)) for r in ids})
        write_embedding_file(tmp_path / "esm.uptm", {r: rng.normal(size=(7, 40)) for r in ids})
        code = main(["train", "--dims", "16", "--len", "7", "--epochs", "1", "--train-tsv", str(src),
                     "--test-tsv", str(src), "--prott5", str(tmp_path / "t5.uptm"), "--esm2",
                     str(tmp_path / "esm.uptm"), "--ember-missing", "zeros", "--out-dir", str(tmp_path / "o")])
        assert code == 0 and (tmp_path / "o" / "history.tsv").exists()

    def test_missing_embeddings(self, tmp_path, capsys):
        src = _dataset(tmp_path / "d.tsv")
        assert main(["train", "--dims", "16", "--len", "7", "--train-tsv", str(src), "--out-dir",
                     str(tmp_path / "o")]) == 2
        assert "prott5" in capsys.readouterr().err

    def test_missing_train_file(self, tmp_path):
        assert main(["train", "--dims", "16", "--train-tsv", str(tmp_path / "nope.tsv"), "--synthetic",
                     "--out-dir", str(tmp_path / "o")]) == 3

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"model": {"widht": 3}}))
        assert main(["train", "--synthetic", "--dims", "16", "--config", str(cfg)]) == 2
        assert "widht" in capsys.readouterr().err

    def test_bad_thread_cap(self, monkeypatch):
        monkeypatch.setenv("UPTM_THREADS", "many")
        with pytest.raises(ConfigError):
            worker_count()
        monkeypatch.setenv("UPTM_THREADS", "1")
        assert worker_count() == 1


class TestScan:
    def test_protein(self, tmp_path, capsys):
        rng = np.random.default_rng(2)
        seq = "".join(rng.choice(list(AMINO_ACIDS), size=136))
        fasta = tmp_path / "p.fa"
        fasta.write_text(f">prot\n{seq[:70]}\n{seq[70:]}\n")
        out = tmp_path / "scan"
        assert main(["scan", "--synthetic", "--dims", "16", "--fasta", str(fasta), "--out-dir", str(out)]) == 0
        rows = (out / "scan_prot.tsv").read_text().strip().split("\n")
        assert len(rows) == 137
        for line in rows[1:]:
            pos, res, prob, call = line.split("\t")
            assert res == seq[int(pos) - 1]
            if res != "K":
                assert float(prob) == 0.0 and call == "0"
            else:
                assert call == str(int(float(prob) >= 0.5))

    def test_invalid_residue(self, tmp_path, capsys):
        fasta = tmp_path / "p.fa"
        fasta.write_text(">a\nMKVLLAGST\n>b\nMKBVLLAGS\n")
        assert main(["scan", "--synthetic", "--dims", "16", "--fasta", str(fasta), "--out-dir",
                     str(tmp_path / "o")]) == 2
        assert "line 3" in capsys.readouterr().err


class TestAblateGradcheck:
    def test_ablate_rows(self, tmp_path, capsys):
        cfg = _small_config(tmp_path / "c.json")
        out = tmp_path / "ab"
        assert main(["ablate", "--synthetic", "--dims", "16", "--epochs", "1", "--config", cfg,
                     "--out-dir", str(out)]) == 0
        rows = (out / "ablation.tsv").read_text().strip().split("\n")
        assert len(rows) == 9 and rows[1].startswith("Full Model")
        assert len(json.loads((out / "ablation.json").read_text())) == 8

    def test_gradcheck(self, capsys):
        assert main(["gradcheck"]) == 0
        text = capsys.readouterr().out
        assert "pipeline" in text and "FAIL" not in text
