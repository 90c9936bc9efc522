"""Configuration parsing and the command-line interface contract."""

import json
import shutil

import numpy as np
import pytest

from chartex import chartgen, cli
from chartex.config import Config, ConfigError, load_config, parse_config

from conftest import render_clean


class TestConfig:
    def test_defaults(self):
        assert parse_config("") == Config()

    def test_override_comments_and_blanks(self):
        cfg = parse_config("# tuning\n\nblur_kernel = 7  # odd\nresidual_factor=0.5\n")
        assert cfg.blur_kernel == 7
        assert cfg.residual_factor == 0.5
        assert cfg.open_kernel == Config().open_kernel

    @pytest.mark.parametrize(
        "text,fragment",
        [
            ("no_such_key = 1", "line 1"),
            ("blur_kernel = soon", "integer"),
            ("blur_kernel = 99", "outside"),
            ("\n\nblur_kernel", "line 3"),
        ],
    )
    def test_errors_carry_line_numbers(self, text, fragment):
        with pytest.raises(ConfigError, match=fragment):
            parse_config(text)

    def test_hash_stable_and_sensitive(self):
        assert Config().hash == Config().hash
        assert parse_config("blur_kernel=7").hash != Config().hash
        assert len(Config().hash) == 12

    def test_load_config_none_gives_defaults(self):
        assert load_config(None) == Config()


@pytest.fixture(scope="module")
def mini_corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    chartgen.generate_corpus(3, 123, d)
    return d


class TestGen:
    def test_gen_writes_corpus(self, tmp_path, capsys):
        out = tmp_path / "c"
        assert cli.main(["gen", "4", str(out), "--seed", "9"]) == 0
        assert len(list(out.glob("*.png"))) == 4
        assert len(list(out.glob("*.truth.json"))) == 4
        assert len(capsys.readouterr().out.splitlines()) == 4

    def test_gen_unwritable_dir_is_io_error(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert cli.main(["gen", "1", str(blocker / "sub")]) == 1
        assert "error" in capsys.readouterr().err


class TestExtract:
    def test_extract_single_chart(self, mini_corpus, tmp_path, capsys):
        png = sorted(mini_corpus.glob("*.png"))[0]
        work = tmp_path / "w"
        work.mkdir()
        shutil.copy(png, work / png.name)
        assert cli.main(["extract", str(work / png.name)]) == 0
        out = work / (png.name[: -len(".png")] + ".chart.json")
        data = json.loads(out.read_text())
        for key in ("title", "x_label", "y_label", "x_ticks", "y_ticks", "bars", "provenance"):
            assert key in data
        prov = data["provenance"]
        assert prov["config_hash"] == Config().hash
        assert "gated_by" in prov and "warnings" in prov

    def test_extract_directory_batch(self, mini_corpus, tmp_path):
        work = tmp_path / "w"
        shutil.copytree(mini_corpus, work)
        assert cli.main(["extract", str(work)]) == 0
        assert len(list(work.glob("*.chart.json"))) == 3

    def test_missing_file_is_io_error(self, tmp_path, capsys):
        assert cli.main(["extract", str(tmp_path / "nope.png")]) == 1
        assert "nope.png" in capsys.readouterr().err

    def test_blank_image_extracts_nothing(self, tmp_path, capsys):
        blank = np.full((200, 300, 3), 255, dtype=np.uint8)
        p = tmp_path / "blank.png"
        chartgen.save_png(blank, p)
        assert cli.main(["extract", str(p)]) == 2

    def test_canonical_json_six_significant_digits(self, mini_corpus, tmp_path):
        png = sorted(mini_corpus.glob("*.png"))[0]
        work = tmp_path / "w"
        work.mkdir()
        shutil.copy(png, work / png.name)
        cli.main(["extract", str(work / png.name)])
        out = work / (png.name[: -len(".png")] + ".chart.json")
        text = out.read_text()
        data = json.loads(text)

        def floats(o):
            if isinstance(o, float):
                yield o
            elif isinstance(o, dict):
                for v in o.values():
                    yield from floats(v)
            elif isinstance(o, list):
                for v in o:
                    yield from floats(v)

        for f in floats(data):
            assert f == float(f"{f:.6g}")
        # keys sorted at every level
        assert list(data) == sorted(data)

    def test_extract_is_deterministic(self, mini_corpus, tmp_path):
        png = sorted(mini_corpus.glob("*.png"))[0]
        outs = []
        for name in ("a", "b"):
            work = tmp_path / name
            work.mkdir()
            shutil.copy(png, work / png.name)
            cli.main(["extract", str(work / png.name)])
            outs.append((work / (png.name[:-4] + ".chart.json")).read_bytes())
        assert outs[0] == outs[1]

    def test_debug_dir_gets_intermediates(self, mini_corpus, tmp_path):
        png = sorted(mini_corpus.glob("*.png"))[0]
        work = tmp_path / "w"
        work.mkdir()
        shutil.copy(png, work / png.name)
        dbg = tmp_path / "dbg"
        assert cli.main(["extract", str(work / png.name), "--debug-dir", str(dbg)]) == 0
        assert list(dbg.glob("*.png"))

    def test_csv_output(self, mini_corpus, tmp_path):
        png = sorted(mini_corpus.glob("*.png"))[0]
        work = tmp_path / "w"
        work.mkdir()
        shutil.copy(png, work / png.name)
        assert cli.main(["extract", str(work / png.name), "--csv"]) == 0
        csv = (work / (png.name[:-4] + ".chart.csv")).read_text()
        assert csv.splitlines()[0].startswith("category,")


class TestEvalAndPipeline:
    def test_pipeline_end_to_end(self, mini_corpus, tmp_path, capsys):
        work = tmp_path / "w"
        shutil.copytree(mini_corpus, work)
        assert cli.main(["pipeline", str(work)]) == 0
        report = json.loads((work / "report.json").read_text())
        assert report["classes"]["x_tick"]["pct"] is not None
        assert (work / "report.txt").exists()
        assert (work / "bland_altman.csv").read_text().startswith("mean,diff")
        txt = (work / "report.txt").read_text()
        assert cli.GATE_NOTE.splitlines()[0] in txt

    def test_eval_against_separate_truth_dir(self, mini_corpus, tmp_path):
        work = tmp_path / "w"
        shutil.copytree(mini_corpus, work)
        cli.main(["extract", str(work)])
        pred = tmp_path / "pred"
        pred.mkdir()
        for f in work.glob("*.chart.json"):
            shutil.move(str(f), pred / f.name)
        assert cli.main(["eval", str(pred), str(work)]) == 0
        assert (pred / "report.json").exists()

    def test_eval_with_no_overlap_is_exit_2(self, tmp_path, capsys):
        pred = tmp_path / "pred"
        pred.mkdir()
        (pred / "x.chart.json").write_text("{}")
        truth = tmp_path / "truth"
        truth.mkdir()
        (truth / "y.truth.json").write_text("{}")
        assert cli.main(["eval", str(pred), str(truth)]) == 2

    def test_stem_mismatch_warns(self, mini_corpus, tmp_path, capsys):
        work = tmp_path / "w"
        shutil.copytree(mini_corpus, work)
        cli.main(["extract", str(work)])
        extra = work / "orphan.truth.json"
        extra.write_text("{}")
        cli.main(["eval", str(work), str(work)])
        assert "orphan" in capsys.readouterr().err


class TestUsage:
    def test_no_subcommand_is_usage_error(self, capsys):
        with pytest.raises(SystemExit):
            cli.main([])

    def test_ocr_cmd_env_var_is_honored(self, tmp_path, monkeypatch, capsys):
        # an OCR command that always fails must not crash extraction
        monkeypatch.setenv("CHARTEX_OCR_CMD", "false")
        img, _ = render_clean(0)
        p = tmp_path / "c.png"
        chartgen.save_png(img, p)
        rc = cli.main(["extract", str(p)])
        assert rc == 1  # unusable OCR command reports as an error, not a crash
        assert "false" in capsys.readouterr().err
