"""End-to-end command-line tests plus the config / PNG / worker-pool
helpers the commands are built from.

Commands run in-process through cli.main(argv) so exit codes and
stderr text can be asserted directly.
"""

import os

import numpy as np
import pytest
from PIL import Image

from dropsr import cli
from dropsr.config import (
    ConfigError,
    model_config_from,
    parse_config_text,
    train_config_from,
)
from dropsr.parallel import thread_map, worker_count
from dropsr.pngio import read_png, write_png
from dropsr.rng import derive_stream, uniform_array


def _write_corpus(dirpath, n=3, size=48, seed=77):
    dirpath.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        img = uniform_array(derive_stream(seed, i), 3 * size * size).reshape(3, size, size)
        write_png(dirpath / f"im{i}.png", img)
    return dirpath


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    return _write_corpus(tmp_path_factory.mktemp("corpus") / "hr")


@pytest.fixture(scope="module")
def toy_ckpt(tmp_path_factory, corpus):
    """Checkpoint from a short real training run, shared across tests."""
    root = tmp_path_factory.mktemp("train")
    cfg = root / "toy.cfg"
    cfg.write_text(
        "model.n_blocks = 1\n"
        "model.n_feats = 6\n"
        "model.scale = 2\n"
        "train.iters = 30\n"
        "train.batch = 2\n"
        "train.lr_patch = 10\n"
        "train.seed = 4\n"
        f"train.corpus = {corpus}\n"
    )
    out = root / "toy.srdk"
    assert cli.main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    return out


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


class TestConfig:
    def test_parse_basic(self):
        values = parse_config_text(
            "# a comment\n"
            "\n"
            "model.scale = 4\n"
            "train.lr0 = 1e-3\n"
            "train.mode = multi_degradation\n"
        )
        assert values == {
            "model.scale": 4,
            "train.lr0": 1e-3,
            "train.mode": "multi_degradation",
        }
        assert type(values["model.scale"]) is int

    def test_order_insensitive(self):
        a = parse_config_text("model.scale = 2\ntrain.iters = 5\n")
        b = parse_config_text("train.iters = 5\nmodel.scale = 2\n")
        assert a == b

    def test_unknown_key_names_line(self):
        with pytest.raises(ConfigError, match=r"line 2: unknown key 'model\.depth'"):
            parse_config_text("model.scale = 2\nmodel.depth = 9\n")

    def test_duplicate_key_names_both_lines(self):
        with pytest.raises(ConfigError, match=r"line 3: duplicate key .*\(first set on line 1\)"):
            parse_config_text("model.scale = 2\n\nmodel.scale = 4\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="expected 'key = value'"):
            parse_config_text("model.scale 2\n")

    def test_bad_cast_names_type(self):
        with pytest.raises(ConfigError, match="bad int value 'two'"):
            parse_config_text("model.scale = two\n")

    def test_source_in_message(self):
        with pytest.raises(ConfigError, match=r"^my\.cfg, line 1"):
            parse_config_text("bogus = 1\n", source="my.cfg")

    def test_model_config_dropout_wiring(self):
        values = parse_config_text(
            "model.position = last_conv\n"
            "model.dropout_p = 0.5\n"
            "model.dropout_dimension = channel\n"
            "model.n_feats = 8\n"
        )
        cfg = model_config_from(values)
        assert cfg.position == "last_conv"
        assert cfg.n_feats == 8
        assert cfg.dropout.p == 0.5
        assert cfg.dropout.dimension == "channel"

    def test_model_config_defaults(self):
        cfg = model_config_from({})
        assert cfg.dropout.p == 0.0
        assert cfg.position == "none"

    def test_model_config_invalid_value_is_config_error(self):
        with pytest.raises(ConfigError):
            model_config_from({"model.position": "sideways"})

    def test_train_config_requires_iters(self):
        with pytest.raises(ConfigError, match="train.iters"):
            train_config_from({"train.batch": 4})

    def test_train_config_returns_corpus(self):
        cfg, corpus_dir = train_config_from(
            {"train.iters": 10, "train.batch": 4, "train.corpus": "imgs"}
        )
        assert cfg.iters == 10
        assert cfg.batch == 4
        assert corpus_dir == "imgs"
        _, none_dir = train_config_from({"train.iters": 1})
        assert none_dir is None


# ---------------------------------------------------------------------------
# PNG I/O
# ---------------------------------------------------------------------------


class TestPng:
    def test_round_trip_exact_on_quantized_values(self, tmp_path):
        levels = np.arange(48, dtype=np.float64) / 255.0
        img = np.tile(levels, (3, 48, 1))
        path = tmp_path / "q.png"
        write_png(path, img)
        back = read_png(path)
        assert back.shape == (3, 48, 48)
        assert back.dtype == np.float64
        assert np.array_equal(back, img)

    def test_write_clips(self, tmp_path):
        img = np.zeros((3, 2, 2))
        img[:, 0, 0] = -0.5
        img[:, 1, 1] = 1.5
        path = tmp_path / "c.png"
        write_png(path, img)
        raw = np.asarray(Image.open(path)).transpose(2, 0, 1)
        assert raw[0, 0, 0] == 0
        assert raw[0, 1, 1] == 255

    def test_write_rejects_bad_shape(self, tmp_path):
        with pytest.raises(ValueError, match="expected a \\(3, H, W\\)"):
            write_png(tmp_path / "x.png", np.zeros((48, 48)))


# ---------------------------------------------------------------------------
# Worker pool
# ---------------------------------------------------------------------------


class TestParallel:
    def test_default_positive(self, monkeypatch):
        monkeypatch.delenv("DROPSR_THREADS", raising=False)
        assert worker_count() >= 1

    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("DROPSR_THREADS", "3")
        assert worker_count() == 3

    def test_env_rejects_garbage(self, monkeypatch):
        monkeypatch.setenv("DROPSR_THREADS", "many")
        with pytest.raises(ValueError, match="positive integer"):
            worker_count()

    def test_env_rejects_zero(self, monkeypatch):
        monkeypatch.setenv("DROPSR_THREADS", "0")
        with pytest.raises(ValueError, match=">= 1"):
            worker_count()

    def test_threaded_map_keeps_order(self, monkeypatch):
        monkeypatch.setenv("DROPSR_THREADS", "4")
        assert thread_map(lambda v: v * v, range(20)) == [v * v for v in range(20)]

    def test_sequential_map_matches(self, monkeypatch):
        monkeypatch.setenv("DROPSR_THREADS", "1")
        assert thread_map(str, [2, 1, 0]) == ["2", "1", "0"]


# ---------------------------------------------------------------------------
# degrade command
# ---------------------------------------------------------------------------


class TestCmdDegrade:
    def test_clean_scale4_size_contract(self, tmp_path):
        src = _write_corpus(tmp_path / "hr", n=1, size=64, seed=5)
        out = tmp_path / "lr"
        rc = cli.main(
            ["degrade", "--in", str(src), "--out", str(out), "--kind", "clean", "--scale", "4"]
        )
        assert rc == 0
        with Image.open(out / "im0_clean.png") as im:
            assert im.size == (16, 16)

    def test_sample_reruns_identical(self, corpus, tmp_path):
        args = ["degrade", "--in", str(corpus), "--sample", "--seed", "7"]
        assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
        assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
        names_a = sorted(p.name for p in (tmp_path / "a").iterdir())
        names_b = sorted(p.name for p in (tmp_path / "b").iterdir())
        assert names_a == names_b
        for name in names_a:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_manifest_lists_four_ops_in_order(self, corpus, tmp_path):
        out = tmp_path / "lr"
        assert cli.main(
            ["degrade", "--in", str(corpus), "--out", str(out), "--kind", "b+n+j"]
        ) == 0
        text = (out / "im0_b+n+j.manifest.txt").read_text()
        ops = [line.split()[0] for line in text.splitlines() if not line.startswith("#")]
        assert ops == ["blur", "resize", "noise", "jpeg"]

    def test_unknown_kind_lists_valid_ones(self, corpus, tmp_path, capsys):
        rc = cli.main(
            ["degrade", "--in", str(corpus), "--out", str(tmp_path / "o"), "--kind", "fog"]
        )
        assert rc == 1
        err = capsys.readouterr().err
        for kind in ("clean", "b", "n", "j", "b+n", "b+j", "n+j", "b+n+j"):
            assert kind in err

    def test_missing_input_dir(self, tmp_path, capsys):
        rc = cli.main(
            ["degrade", "--in", str(tmp_path / "ghost"), "--out", str(tmp_path / "o"), "--kind", "clean"]
        )
        assert rc == 1
        assert "ghost" in capsys.readouterr().err

    def test_kind_and_sample_conflict(self, corpus, tmp_path):
        rc = cli.main(
            ["degrade", "--in", str(corpus), "--out", str(tmp_path / "o"), "--kind", "clean", "--sample"]
        )
        assert rc == 1


# ---------------------------------------------------------------------------
# train command
# ---------------------------------------------------------------------------


class TestCmdTrain:
    def test_checkpoint_magic_and_log(self, toy_ckpt):
        assert toy_ckpt.read_bytes()[:5] == b"SRDK1"
        log = toy_ckpt.with_suffix(".log.csv")
        lines = log.read_text().splitlines()
        assert lines[0] == "iter,lr,loss,val_psnr"
        assert len(lines) == 31

    def test_missing_corpus_dir_names_path(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("train.iters = 5\ntrain.corpus = /no/such/dir\n")
        rc = cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "x.srdk")])
        assert rc == 1
        assert "/no/such/dir" in capsys.readouterr().err

    def test_duplicate_key_cites_line(self, tmp_path, capsys):
        cfg = tmp_path / "dup.cfg"
        cfg.write_text("train.iters = 5\ntrain.iters = 6\n")
        rc = cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "x.srdk")])
        assert rc == 1
        err = capsys.readouterr().err
        assert "line 2" in err
        assert "duplicate" in err

    def test_missing_corpus_key(self, tmp_path, capsys):
        cfg = tmp_path / "nc.cfg"
        cfg.write_text("train.iters = 5\n")
        rc = cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "x.srdk")])
        assert rc == 1
        assert "train.corpus" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# eval command
# ---------------------------------------------------------------------------


class TestCmdEval:
    def test_two_kinds_two_summary_rows(self, toy_ckpt, corpus, tmp_path, capsys):
        out = tmp_path / "rep"
        rc = cli.main(
            [
                "eval",
                "--ckpt", str(toy_ckpt),
                "--datasets", f"toyset={corpus}",
                "--kinds", "clean,noise",
                "--out", str(out),
            ]
        )
        assert rc == 0
        summary = (out / "eval_summary.csv").read_text().splitlines()
        assert summary[0] == "model,degradation,dataset,mean_psnr_db,images"
        assert len(summary) == 3
        assert summary[1].startswith("toy,clean,toyset,")
        assert summary[2].startswith("toy,n,toyset,")
        report = (out / "eval_report.csv").read_text().splitlines()
        assert len(report) == 1 + 2 * 3
        assert "toyset clean" in capsys.readouterr().out

    def test_rerun_byte_identical(self, toy_ckpt, corpus, tmp_path):
        args = ["eval", "--ckpt", str(toy_ckpt), "--datasets", str(corpus), "--kinds", "n+j"]
        assert cli.main(args + ["--out", str(tmp_path / "r1")]) == 0
        assert cli.main(args + ["--out", str(tmp_path / "r2")]) == 0
        for name in ("eval_report.csv", "eval_summary.csv"):
            assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()

    def test_bare_dir_dataset_named_by_dirname(self, toy_ckpt, corpus, tmp_path):
        out = tmp_path / "rep"
        assert cli.main(
            ["eval", "--ckpt", str(toy_ckpt), "--datasets", str(corpus), "--kinds", "clean", "--out", str(out)]
        ) == 0
        assert ",clean,hr," in (out / "eval_summary.csv").read_text().splitlines()[1]

    def test_unknown_kind_is_usage_error(self, toy_ckpt, corpus, tmp_path, capsys):
        rc = cli.main(
            ["eval", "--ckpt", str(toy_ckpt), "--datasets", str(corpus), "--kinds", "clean,fog"]
        )
        assert rc == 1
        assert "b+n+j" in capsys.readouterr().err

    def test_missing_checkpoint_is_runtime_error(self, corpus, tmp_path, capsys):
        rc = cli.main(
            ["eval", "--ckpt", str(tmp_path / "no.srdk"), "--datasets", str(corpus), "--kinds", "clean"]
        )
        assert rc == 2


# ---------------------------------------------------------------------------
# analyze command
# ---------------------------------------------------------------------------


class TestCmdAnalyze:
    def test_csm_writes_map_per_channel(self, toy_ckpt, corpus, tmp_path, capsys):
        out = tmp_path / "csm"
        rc = cli.main(
            ["analyze", "--ckpt", str(toy_ckpt), "--mode", "csm", "--in", str(corpus), "--out", str(out)]
        )
        assert rc == 0
        assert sorted(p.name for p in out.glob("*.pgm")) == [f"map_{c:02d}.pgm" for c in range(6)]
        lines = (out / "saliency.csv").read_text().splitlines()
        assert lines[0] == "channel,score"
        assert len(lines) == 7
        assert "strongest channel" in capsys.readouterr().out

    def test_ablate_curve_has_baseline_row(self, toy_ckpt, corpus, tmp_path):
        out = tmp_path / "abl"
        rc = cli.main(
            ["analyze", "--ckpt", str(toy_ckpt), "--mode", "ablate", "--in", str(corpus), "--out", str(out)]
        )
        assert rc == 0
        curve = (out / "psnr_curve.csv").read_text().splitlines()
        assert curve[0] == "k,psnr"
        assert len(curve) == 1 + 6 + 1
        assert curve[1].startswith("0,")
        ablation = (out / "ablation.csv").read_text().splitlines()
        assert ablation[0] == "channel,rescale,psnr_after,delta"
        assert len(ablation) == 7

    def test_ddr_prints_chi_and_writes_projection(self, toy_ckpt, corpus, tmp_path, capsys):
        out = tmp_path / "ddr"
        rc = cli.main(
            [
                "analyze",
                "--ckpt", str(toy_ckpt),
                "--mode", "ddr",
                "--in", str(corpus),
                "--kinds", "clean,n,b",
                "--out", str(out),
            ]
        )
        assert rc == 0
        assert "CHI = " in capsys.readouterr().out
        proj = (out / "projection.csv").read_text().splitlines()
        assert proj[1] == "x,y,kind"
        assert len(proj) == 2 + 3 * 3
        assert (out / "ddr.csv").exists()

    def test_ddr_requires_two_kinds(self, toy_ckpt, corpus, tmp_path, capsys):
        rc = cli.main(
            ["analyze", "--ckpt", str(toy_ckpt), "--mode", "ddr", "--in", str(corpus), "--kinds", "clean"]
        )
        assert rc == 1
        assert "2 degradation kinds" in capsys.readouterr().err

    def test_bad_mode_is_usage_error(self, toy_ckpt, corpus):
        rc = cli.main(
            ["analyze", "--ckpt", str(toy_ckpt), "--mode", "magic", "--in", str(corpus)]
        )
        assert rc == 1


def test_no_command_is_usage_error():
    assert cli.main([]) == 1


def test_threads_env_reaches_eval(toy_ckpt, corpus, tmp_path, monkeypatch):
    """Thread count must not change results; parallel and sequential
    evaluation emit identical bytes."""
    args = ["eval", "--ckpt", str(toy_ckpt), "--datasets", str(corpus), "--kinds", "b"]
    monkeypatch.setenv("DROPSR_THREADS", "1")
    assert cli.main(args + ["--out", str(tmp_path / "seq")]) == 0
    monkeypatch.setenv("DROPSR_THREADS", "4")
    assert cli.main(args + ["--out", str(tmp_path / "par")]) == 0
    assert (tmp_path / "seq" / "eval_report.csv").read_bytes() == (
        tmp_path / "par" / "eval_report.csv"
    ).read_bytes()
