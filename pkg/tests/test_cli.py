"""CLI surface: subcommands, exit codes, reports, fault injection."""

import json

import numpy as np
import pytest

from msfusion.cli import main
from msfusion.ntsr import save_tensor
from msfusion.tensor import Tensor, make_rng

from conftest import uniform


@pytest.fixture(scope="module")
def check_report(tmp_path_factory):
    """One full `check` run shared by the tests that inspect its report."""
    path = tmp_path_factory.mktemp("check") / "report.json"
    code = main(["check", "--seed", "42", "--report", str(path)])
    return code, json.loads(path.read_text())


class TestCheck:
    def test_passes_with_default_seed(self, check_report):
        code, doc = check_report
        assert code == 0
        assert doc["status"] == "pass"
        assert doc["schema"] == 1

    def test_lists_at_least_twenty_named_checks(self, check_report):
        _code, doc = check_report
        names = [c["name"] for c in doc["checks"]]
        assert len(names) >= 20
        assert len(names) == len(set(names))

    def test_f32_mode_uses_relaxed_tolerance(self, tmp_path):
        path = tmp_path / "report.json"
        code = main(["check", "--seed", "42", "--dtype", "f32", "--report", str(path)])
        assert code == 0
        doc = json.loads(path.read_text())
        oracle = next(c for c in doc["checks"] if c["name"] == "tensor.conv_oracle")
        assert oracle["tolerance"] == 1e-3

    def test_fault_injection_fails_oracle_only(self, tmp_path):
        path = tmp_path / "report.json"
        code = main(["check", "--seed", "42", "--inject-fault", "--report", str(path)])
        assert code == 1
        doc = json.loads(path.read_text())
        by_name = {c["name"]: c for c in doc["checks"]}
        assert by_name["tensor.conv_oracle"]["passed"] is False
        assert by_name["fmds.roundtrip_grid"]["passed"] is True
        assert doc["status"] == "fail"


class TestGradcheckCommand:
    def test_refuses_f32(self, capsys):
        code = main(["gradcheck", "--dtype", "f32"])
        assert code == 2
        assert "float64" in capsys.readouterr().err

    def test_rejects_bad_eps(self, capsys):
        code = main(["gradcheck", "--eps", "0"])
        assert code == 2

    def test_impossible_tolerance_fails(self, tmp_path):
        path = tmp_path / "report.json"
        code = main(["gradcheck", "--tol", "1e-12", "--report", str(path)])
        assert code == 1
        doc = json.loads(path.read_text())
        assert doc["status"] == "fail"
        assert any(not c["passed"] for c in doc["checks"])


class TestBench:
    def test_small_shape_runs(self, tmp_path, capsys):
        path = tmp_path / "report.json"
        code = main(["bench", "--shape", "1,4,8,8", "--iters", "3", "--report", str(path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "fmds_forward" in out
        assert "conv2d_dw3x3[naive]" in out
        doc = json.loads(path.read_text())
        names = [c["name"] for c in doc["checks"]]
        assert "agmf_forward[full]" in names
        assert "agmf_forward[no-fmds]" in names

    def test_single_iteration_has_no_warmup(self, capsys, tmp_path):
        path = tmp_path / "report.json"
        code = main(["bench", "--shape", "1,2,4,4", "--iters", "1", "--report", str(path)])
        assert code == 0
        doc = json.loads(path.read_text())
        assert all("warmup=0" in c["detail"] for c in doc["checks"])

    def test_odd_shape_rejected(self, capsys):
        code = main(["bench", "--shape", "1,2,5,4", "--iters", "1"])
        assert code == 2


class TestCount:
    def test_fmds_reference_case(self, capsys):
        code = main(["count", "--module", "fmds", "--channels", "4", "--no-bias"])
        assert code == 0
        assert "484" in capsys.readouterr().out

    def test_flop_total_equals_stage_sum(self, tmp_path):
        path = tmp_path / "report.json"
        code = main(
            ["count", "--module", "fmds", "--channels", "16",
             "--input-shape", "1,16,32,32", "--report", str(path)]
        )
        assert code == 0
        doc = json.loads(path.read_text())
        stages = {
            c["name"]: int(c["detail"])
            for c in doc["checks"]
            if c["name"].startswith("count.flops.") and c["name"] != "count.flops.total"
        }
        total = next(int(c["detail"]) for c in doc["checks"] if c["name"] == "count.flops.total")
        assert total == sum(stages.values())

    def test_agmf_variant_ordering(self, capsys):
        main(["count", "--module", "agmf", "--channels", "4"])
        full = int(capsys.readouterr().out.splitlines()[0].split()[-1])
        main(["count", "--module", "agmf", "--channels", "4", "--variant", "no-fmds"])
        lean = int(capsys.readouterr().out.splitlines()[0].split()[-1])
        assert lean < full

    def test_config_file(self, tmp_path, capsys):
        cfg = {
            "module": "fmds", "in_channels": 1, "out_channels": 1,
            "kernels": [3, 5, 7], "bias": False, "dtype": "f64", "seed": 1,
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        code = main(["count", "--module", "fmds", "--config", str(path)])
        assert code == 0
        assert "106" in capsys.readouterr().out

    def test_config_module_mismatch(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"module": "agmf", "channels": 2, "seed": 1}))
        code = main(["count", "--module", "fmds", "--config", str(path)])
        assert code == 2


class TestDump:
    def _save(self, tmp_path, shape, constant=None):
        rng = make_rng(3)
        if constant is None:
            t = uniform(rng, shape, np.float32)
        else:
            t = Tensor.full(shape, constant, dtype=np.float32)
        path = tmp_path / "in.ntsr"
        save_tensor(path, t)
        return path

    def test_constant_input_gives_all_128(self, tmp_path):
        src = self._save(tmp_path, (1, 3, 8, 8), constant=2.5)
        out = tmp_path / "dumps"
        assert main(["dump", "--input", str(src), "--module", "fmds", "--out", str(out)]) == 0
        img = (out / "00_input.pgm").read_bytes()
        header = b"P5\n8 8\n255\n"
        assert img.startswith(header)
        assert set(img[len(header):]) == {128}

    def test_agmf_full_writes_three_stages(self, tmp_path):
        src = self._save(tmp_path, (1, 3, 64, 64))
        out = tmp_path / "dumps"
        code = main(
            ["dump", "--input", str(src), "--module", "agmf", "--variant", "full", "--out", str(out)]
        )
        assert code == 0
        files = sorted(p.name for p in out.iterdir())
        assert files == ["00_input.pgm", "01_fmds.pgm", "02_agmf.pgm"]
        for p in out.iterdir():
            assert p.read_bytes().startswith(b"P5\n64 64\n255\n")

    def test_no_fmds_variant_writes_two_stages(self, tmp_path):
        src = self._save(tmp_path, (1, 3, 8, 8))
        out = tmp_path / "dumps"
        code = main(
            ["dump", "--input", str(src), "--module", "agmf", "--variant", "no-fmds", "--out", str(out)]
        )
        assert code == 0
        assert sorted(p.name for p in out.iterdir()) == ["00_input.pgm", "01_agmf.pgm"]

    def test_truncated_input_reports_byte_count(self, tmp_path, capsys):
        src = self._save(tmp_path, (1, 3, 8, 8))
        src.write_bytes(src.read_bytes()[:-10])
        code = main(["dump", "--input", str(src), "--module", "fmds", "--out", str(tmp_path / "d")])
        assert code == 2
        err = capsys.readouterr().err
        assert "expected" in err and "data bytes" in err

    def test_odd_extent_rejected(self, tmp_path, capsys):
        src = self._save(tmp_path, (1, 3, 7, 8))
        code = main(["dump", "--input", str(src), "--module", "fmds", "--out", str(tmp_path / "d")])
        assert code == 2
        assert "even" in capsys.readouterr().err


def test_count_reports_are_deterministic(tmp_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert main(
            ["count", "--module", "agmf", "--channels", "3", "--report", str(p), "--redact-timings"]
        ) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
