import csv
import re

import numpy as np
import pytest

from looptf.cli import main, parse_lengths
from looptf.experiments import mean_stderr
from looptf.train import TrainConfig, run_training

TINY = "task=parity\ndim=16\nheads=2\nbatch=8\nsteps=6\ninterval=2\nceiling=3\neval_every=0\n"


@pytest.fixture(scope="module")
def ckpt(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    run_training(TrainConfig.from_text(TINY), out_dir=out)
    return out / "model.ckpt"


def data_rows(text):
    return list(csv.DictReader(ln for ln in text.splitlines() if not ln.startswith("#")))


class TestLengths:
    def test_forms(self):
        assert parse_lengths("9-12") == [9, 10, 11, 12]
        assert parse_lengths("1-2,8") == [1, 2, 8]

    @pytest.mark.parametrize("bad", ["", "0", "a-b", "3,x"])
    def test_bad(self, bad):
        with pytest.raises(Exception):
            parse_lengths(bad)


class TestTrain:
    def test_dry_run(self, tmp_path, capsys):
        cfg = tmp_path / "p.cfg"
        cfg.write_text(TINY)
        assert main(["train", str(cfg), "--dry-run", "--seed", "4"]) == 0
        out = capsys.readouterr().out
        assert TrainConfig.from_text(out).seed == 4 and "dim=16" in out

    def test_missing_file(self, capsys):
        assert main(["train", "/nonexistent/x.cfg"]) == 1
        assert "/nonexistent/x.cfg" in capsys.readouterr().err

    def test_bad_key(self, tmp_path, capsys):
        cfg = tmp_path / "p.cfg"
        cfg.write_text(TINY + "learning_speed=3\n")
        assert main(["train", str(cfg)]) == 1
        assert "learning_speed" in capsys.readouterr().err

    def test_usage_error_is_config_error(self):
        with pytest.raises(SystemExit) as e:
            main(["train", "--no-such-flag"])
        assert e.value.code == 1

    def test_seed_repeat_identical(self, tmp_path):
        cfg = tmp_path / "p.cfg"
        cfg.write_text(TINY)
        for name in ("a", "b"):
            assert main(["train", str(cfg), "--out", str(tmp_path / name)]) == 0
        assert (tmp_path / "a/train_report.csv").read_bytes() == (tmp_path / "b/train_report.csv").read_bytes()

    def test_output_root_env(self, tmp_path, monkeypatch):
        cfg = tmp_path / "p.cfg"
        cfg.write_text(TINY.replace("steps=6", "steps=2"))
        monkeypatch.setenv("LOOPTF_OUT", str(tmp_path / "root"))
        assert main(["train", str(cfg)]) == 0
        assert (tmp_path / "root/p-seed0/model.ckpt").exists()

    def test_resume(self, tmp_path):
        cfg = tmp_path / "p.cfg"
        cfg.write_text(TINY)
        main(["train", str(cfg), "--out", str(tmp_path / "r"), "--stop-at", "3"])
        assert main(["train", str(cfg), "--out", str(tmp_path / "r"), "--resume"]) == 0
        main(["train", str(cfg), "--out", str(tmp_path / "f")])
        assert (tmp_path / "r/train_report.csv").read_bytes() == (tmp_path / "f/train_report.csv").read_bytes()


class TestEval:
    def test_reference_scores_one(self, tmp_path):
        out = tmp_path / "ref.csv"
        assert main(["eval", "--reference", "--task", "copy", "--lengths", "1-12", "--samples", "32",
                     "--out", str(out)]) == 0
        rows = data_rows(out.read_text())
        assert len(rows) == 12 and all(float(r["exact_match"]) == 1.0 for r in rows)

    def test_untrained_near_chance(self, tmp_path, ckpt):
        out = tmp_path / "e.csv"
        assert main(["eval", str(ckpt), "--lengths", "2,5,9", "--samples", "128", "--out", str(out),
                     "--svg", str(tmp_path / "e.svg")]) == 0
        text = out.read_text()
        assert "train_ceiling=3" in text.splitlines()[0]
        rows = data_rows(text)
        assert [int(r["length"]) for r in rows] == [2, 5, 9]
        assert all(float(r["exact_match"]) < 0.6 for r in rows)
        assert (tmp_path / "e.svg").read_text().count('class="marker"') == 1

    def test_maxconf_criterion(self, tmp_path, ckpt):
        out = tmp_path / "m.csv"
        assert main(["eval", str(ckpt), "--lengths", "3", "--samples", "16", "--criterion", "maxconf",
                     "--out", str(out)]) == 0
        assert "criterion=maxconf" in out.read_text()

    def test_task_mismatch(self, ckpt, capsys):
        assert main(["eval", str(ckpt), "--task", "copy", "--lengths", "3"]) == 1
        assert "parity" in capsys.readouterr().err

    def test_missing_checkpoint(self, tmp_path):
        assert main(["eval", str(tmp_path / "none.ckpt"), "--lengths", "3"]) == 1


class TestStopCurve:
    def test_outputs(self, tmp_path, ckpt):
        out = tmp_path / "sc.csv"
        assert main(["stopcurve", str(ckpt), "--length", "4", "--t-max", "7", "--samples", "16",
                     "--out", str(out)]) == 0
        text = out.read_text()
        svg = out.with_suffix(".svg").read_text()
        rows = data_rows(text)
        assert [int(r["step"]) for r in rows] == list(range(1, 8))
        chosen = int(re.search(r"chosen_step=(\d+)", text).group(1))
        assert chosen == 1 + int(np.argmin([float(r["self_ce"]) for r in rows]))
        assert svg.count('class="marker"') == 1 and svg.count("<line") == 1
        assert f'data-step="{chosen}"' in svg
        first = (text, svg)
        main(["stopcurve", str(ckpt), "--length", "4", "--t-max", "7", "--samples", "16", "--out", str(out)])
        assert (out.read_text(), out.with_suffix(".svg").read_text()) == first


class TestOracleCheck:
    def test_parity_count(self, capsys):
        assert main(["oracle-check", "parity", "--n-max", "10"]) == 0
        assert "2046 cases pass" in capsys.readouterr().out

    @pytest.mark.parametrize("task,n", [("copy", 10), ("addition", 6)])
    def test_pass(self, task, n):
        assert main(["oracle-check", task, "--n-max", str(n)]) == 0

    def test_mismatch_exit(self, monkeypatch, capsys):
        import looptf.verify as verify
        import looptf.programs as programs
        broken = dict(programs.LOOP_PROGRAMS)
        broken[programs.TaskId.PARITY] = lambda seq, t: programs.parity_loop(seq, max(t - 1, 1))
        monkeypatch.setattr(verify, "LOOP_PROGRAMS", broken)
        assert main(["oracle-check", "parity", "--n-max", "4"]) == 2
        assert "MISMATCH" in capsys.readouterr().out

    def test_bad_n(self):
        assert main(["oracle-check", "parity", "--n-max", "0"]) == 1


class TestSweep:
    def test_mean_stderr_matches_rows(self, tmp_path):
        (tmp_path / "p.cfg").write_text(TINY.replace("steps=6", "steps=3"))
        (tmp_path / "s.sweep").write_text("configs=p.cfg\nseeds=0,1,2\nlengths=2,4\nsamples=16\n")
        assert main(["sweep", str(tmp_path / "s.sweep"), "--out", str(tmp_path / "out")]) == 0
        rows = data_rows((tmp_path / "out/results.csv").read_text())
        summary = data_rows((tmp_path / "out/summary.csv").read_text())
        assert len(rows) == 6 and len(summary) == 2
        for s in summary:
            vals = [float(r["exact_match"]) for r in rows if r["length"] == s["length"]]
            m, se = mean_stderr(vals)
            assert float(s["mean"]) == m and float(s["stderr"]) == se and int(s["seeds"]) == 3
            assert float(s["stderr"]) == pytest.approx(np.std(vals, ddof=1) / np.sqrt(3))

    def test_bad_spec(self, tmp_path):
        (tmp_path / "s.sweep").write_text("configs=p.cfg\ncolour=red\n")
        assert main(["sweep", str(tmp_path / "s.sweep")]) == 1
        assert main(["sweep", str(tmp_path / "absent.sweep")]) == 1
