import numpy as np
import pytest

from signfusion.cli import main
from signfusion.dataio import save_keypoints


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


TINY_CONFIG = """
batch_size = 4
epochs = 120
encoder_layers = 1
decoder_layers = 1
heads = 2
learning_rate = 0.01
ffn_dim = 24
embed_dim = 8
stgcn_layers = 1
lstm_layers = 1
label_smoothing = 0.0
beam_size = 2
validate_every = 10
seed = 3
vocab_size = 40
feature_dim = 6
clip_window = 4
clip_stride = 4
dropout = 0.0
max_decode_len = 16
"""


@pytest.fixture()
def tiny_world(tmp_path):
    rng = np.random.default_rng(0)
    texts = ["gut", "tag", "morgen", "nacht"]
    rows = []
    for i, text in enumerate(texts):
        save_keypoints(tmp_path / f"kp{i}.txt",
                       0.5 * rng.standard_normal((8, 33, 3)))
        rows.append(f"s{i}\tkp{i}.txt\t-\t{text}")
    manifest = tmp_path / "train.tsv"
    write_lines(manifest, rows)
    config = tmp_path / "run.conf"
    config.write_text(TINY_CONFIG, encoding="utf-8")
    return tmp_path, manifest, config, texts


class TestEvaluate:
    def test_identical_files_score_hundred(self, tmp_path, capsys):
        ref = tmp_path / "ref.txt"
        hyp = tmp_path / "hyp.txt"
        lines = ["der hund rennt schnell weg", "die katze schläft gern tief"]
        write_lines(ref, lines)
        write_lines(hyp, lines)
        code, out, _ = run(capsys, "evaluate", "--ref", str(ref),
                           "--hyp", str(hyp))
        assert code == 0
        for n in (1, 2, 3, 4):
            assert f"BLEU-{n} = 100.00" in out
        assert "BP = 1.000000" in out

    def test_report_order_and_blacklist(self, tmp_path, capsys):
        ref = tmp_path / "ref.txt"
        hyp = tmp_path / "hyp.txt"
        bl = tmp_path / "bl.txt"
        write_lines(ref, ["und nun regen im norden heute"])
        write_lines(hyp, ["und nun regen im norden heute"])
        write_lines(bl, ["und"])
        code, out, _ = run(capsys, "evaluate", "--ref", str(ref),
                           "--hyp", str(hyp), "--blacklist", str(bl))
        assert code == 0
        lines = [line.split(" = ")[0] for line in out.strip().splitlines()]
        assert lines == ["BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "rBLEU",
                         "BP", "hyp_len", "ref_len"]
        assert "rBLEU = 100.00" in out

    def test_length_mismatch_is_parse_error(self, tmp_path, capsys):
        ref = tmp_path / "ref.txt"
        hyp = tmp_path / "hyp.txt"
        write_lines(ref, ["a", "b"])
        write_lines(hyp, ["a"])
        code, _, err = run(capsys, "evaluate", "--ref", str(ref),
                           "--hyp", str(hyp))
        assert code != 0
        assert err.splitlines()[0] == "E_PARSE"


class TestBlacklistCommand:
    def test_top_one(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.txt"
        out_file = tmp_path / "bl.txt"
        write_lines(corpus, ["a b a", "a c"])
        code, out, _ = run(capsys, "blacklist", "--corpus", str(corpus),
                           "--top", "1", "--out", str(out_file))
        assert code == 0
        assert out_file.read_text(encoding="utf-8").strip() == "a"


class TestBuildVocab:
    def test_writes_vocab_file(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.txt"
        write_lines(corpus, ["guten abend", "guten morgen"])
        out_file = tmp_path / "corpus.vocab"
        code, out, _ = run(capsys, "build-vocab", "--corpus", str(corpus),
                           "--size", "30", "--out", str(out_file))
        assert code == 0
        assert out_file.exists()
        assert "#MERGES" in out_file.read_text(encoding="utf-8")


class TestDumpGraph:
    def test_writes_csvs(self, tmp_path, capsys):
        code, out, _ = run(capsys, "dump-graph", "--out", str(tmp_path))
        assert code == 0
        adjacency = tmp_path / "adjacency_hop1.csv"
        assert adjacency.exists()
        rows = adjacency.read_text(encoding="utf-8").strip().splitlines()
        assert len(rows) == 33
        assert all(len(r.split(",")) == 33 for r in rows)
        normalized = np.loadtxt(tmp_path / "normalized_hop0.csv", delimiter=",")
        np.testing.assert_allclose(normalized, np.eye(33))


class TestUsageErrors:
    def test_unknown_subcommand(self, capsys):
        code, _, err = run(capsys, "frobnicate")
        assert code == 2
        assert err.splitlines()[0] == "E_USAGE"
        assert "usage" in err.lower()

    def test_unknown_flag(self, capsys):
        code, _, err = run(capsys, "evaluate", "--nope", "x")
        assert code == 2
        assert err.splitlines()[0] == "E_USAGE"

    def test_missing_file_has_code_line(self, tmp_path, capsys):
        code, _, err = run(capsys, "evaluate", "--ref", str(tmp_path / "x"),
                           "--hyp", str(tmp_path / "y"))
        assert code != 0
        assert err.splitlines()[0].startswith("E_")


class TestTrainTranslateLoop:
    def test_end_to_end(self, tiny_world, capsys):
        tmp_path, manifest, config, texts = tiny_world
        out_dir = tmp_path / "ckpt"
        code, out, err = run(capsys, "train", "--config", str(config),
                             "--manifest", str(manifest),
                             "--out", str(out_dir))
        assert code == 0, err
        assert (out_dir / "last.ckpt").exists()
        assert "model parameters:" in out

        code, out, err = run(capsys, "translate",
                             "--checkpoint", str(out_dir / "last.ckpt"),
                             "--keypoints", str(tmp_path / "kp0.txt"))
        assert code == 0, err
        first = out.strip()
        code, out, _ = run(capsys, "translate",
                           "--checkpoint", str(out_dir / "last.ckpt"),
                           "--keypoints", str(tmp_path / "kp0.txt"))
        assert out.strip() == first  # deterministic decode
        assert first == texts[0]

    def test_corrupt_checkpoint_reports_code(self, tiny_world, capsys):
        tmp_path, manifest, config, _ = tiny_world
        bogus = tmp_path / "bogus.ckpt"
        bogus.write_bytes(b"definitely not a checkpoint")
        code, _, err = run(capsys, "translate", "--checkpoint", str(bogus),
                           "--keypoints", str(tmp_path / "kp0.txt"))
        assert code != 0
        assert err.splitlines()[0] == "E_CHECKPOINT"

    def test_malformed_keypoints_report_code(self, tiny_world, capsys):
        tmp_path, manifest, config, _ = tiny_world
        bad = tmp_path / "bad.txt"
        bad.write_text("0 1 2 3\n", encoding="utf-8")
        rows = [f"s0\t{bad.name}\t-\thallo"]
        broken = tmp_path / "broken.tsv"
        write_lines(broken, rows)
        code, _, err = run(capsys, "train", "--config", str(config),
                           "--manifest", str(broken))
        assert code != 0
        assert err.splitlines()[0] == "E_PARSE"


class TestGradcheckCommand:
    def test_exits_zero_and_reports_error_bound(self, capsys):
        code, out, _ = run(capsys, "gradcheck")
        assert code == 0
        assert "max relative error" in out
        worst = float(out.strip().splitlines()[-1].split()[3])
        assert worst <= 1e-4
