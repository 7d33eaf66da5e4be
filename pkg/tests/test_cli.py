import json
import re
import subprocess
import sys

import numpy as np
import pytest

from oracles import ipf_oracle
from poststrat_harmonize.cli import git_blob_hash, main
from poststrat_harmonize.csvio import (
    SCHEMA_LINE, CsvFormatError, read_results, read_summary, write_summary,
)
from poststrat_harmonize.simstudy import SummaryRecord

TINY = {
    "grid": {"conditions": ["all_different"], "p_nb_male_values": [0.5],
             "representations": ["under"], "methods": ["remove_nb", "known_proportions"],
             "replicates": 1, "base_seed": 5},
    "population": {"size": 20000},
    "mrp": {"keep": 200, "warmup": 200},
    "workers": 1,
}


def write_config(tmp_path, data, name="cfg.json"):
    data = dict(data, output_dir=str(tmp_path / "out"))
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("sim")
    code = main(["simulate", "--config", str(write_config(tmp, TINY))])
    return code, tmp / "out"


class TestSimulate:
    def test_missing_config(self, capsys, tmp_path):
        path = tmp_path / "absent.json"
        assert main(["simulate", "--config", str(path)]) == 1
        assert str(path) in capsys.readouterr().err

    def test_invalid_config(self, tmp_path):
        path = write_config(tmp_path, {"grid": {"replicates": 0}})
        assert main(["simulate", "--config", str(path)]) == 2

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(dict(TINY, output_dir=str(blocker / "sub"))))
        assert main(["simulate", "--config", str(path)]) == 1

    def test_outputs(self, simulated):
        code, out = simulated
        assert code == 0
        for name in ("results.csv", "summary.csv", "manifest.json"):
            assert (out / name).exists()
        lines = (out / "results.csv").read_text().splitlines()
        assert lines[0] == SCHEMA_LINE
        assert lines[1].startswith("replicate,condition,p_nb_male,representation,method")
        records = read_results(out / "results.csv")
        assert len(records) == 2 * 2 * 6
        summary = read_summary(out / "summary.csv")
        assert len(summary) == 2 * 2 * 6 - 2  # no NB estimate after removal

    def test_manifest(self, simulated):
        _, out = simulated
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 5
        assert manifest["config"]["grid"]["replicates"] == 1
        data = (out / "results.csv").read_bytes()
        assert manifest["outputs"]["results.csv"] == git_blob_hash(data)

    def test_deterministic(self, simulated, tmp_path):
        _, out = simulated
        assert main(["simulate", "--config", str(write_config(tmp_path, TINY))]) == 0
        assert (tmp_path / "out" / "results.csv").read_bytes() == (out / "results.csv").read_bytes()
        m1 = json.loads((out / "manifest.json").read_text())
        m2 = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert m1["content_hash"] == m2["content_hash"]

    def test_seed_env_changes_hash(self, simulated, tmp_path, monkeypatch):
        _, out = simulated
        monkeypatch.setenv("PH_SEED", "6")
        assert main(["simulate", "--config", str(write_config(tmp_path, TINY))]) == 0
        m1 = json.loads((out / "manifest.json").read_text())
        m2 = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert m2["seed"] == 6
        assert m1["content_hash"] != m2["content_hash"]

    def test_partial_grid_exit(self, tmp_path):
        data = json.loads(json.dumps(TINY))
        data["sampling"] = {"n": 40, "under_multiplier": 1e-9}
        assert main(["simulate", "--config", str(write_config(tmp_path, data))]) == 3
        records = read_results(tmp_path / "out" / "results.csv")
        assert records and all(r.flagged for r in records)

    def test_hash_function(self):
        # git hash-object of "hello\n"
        assert git_blob_hash(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def _write_rake_inputs(tmp_path, table, row_t, col_t, extra_margin=None):
    rows = ["unit_id,row,col"]
    uid = 0
    for (i, j), c in np.ndenumerate(np.asarray(table)):
        for _ in range(c):
            uid += 1
            rows.append(f"{uid},{i},{j}")
    (tmp_path / "sample.csv").write_text("\n".join(rows) + "\n")
    m = ["variable,level,target"]
    m += [f"row,{k},{t}" for k, t in enumerate(row_t)]
    m += [f"col,{k},{t}" for k, t in enumerate(col_t)]
    if extra_margin:
        m.append(extra_margin)
    (tmp_path / "margins.csv").write_text("\n".join(m) + "\n")


class TestRake:
    def _run(self, tmp_path, *extra):
        return main(["rake", "--sample", str(tmp_path / "sample.csv"), "--margins",
                     str(tmp_path / "margins.csv"), "--out", str(tmp_path / "w.csv"), *extra])

    def _weights(self, tmp_path):
        lines = (tmp_path / "w.csv").read_text().splitlines()
        assert lines[0] == "unit_id,weight"
        return np.array([float(l.split(",")[1]) for l in lines[1:]])

    def test_oracle(self, tmp_path, capsys):
        table = [[10, 20], [30, 40]]
        _write_rake_inputs(tmp_path, table, [50, 50], [50, 50])
        assert self._run(tmp_path) == 0
        w = self._weights(tmp_path)
        oracle = ipf_oracle(table, [50, 50], [50, 50]) / np.asarray(table)
        np.testing.assert_allclose(w, np.repeat(oracle.ravel(), np.ravel(table)), rtol=1e-6)
        assert "rake converged" in capsys.readouterr().out

    def test_proportional(self, tmp_path, capsys):
        _write_rake_inputs(tmp_path, [[10, 20], [30, 40]], [60, 140], [80, 120])
        assert self._run(tmp_path) == 0
        np.testing.assert_allclose(self._weights(tmp_path), 2.0)
        assert "1 cycles" in capsys.readouterr().out

    def test_missing_level_exit_4(self, tmp_path, capsys):
        _write_rake_inputs(tmp_path, [[10, 20], [30, 40]], [50, 47, 3], [50, 50])
        assert self._run(tmp_path) == 4
        assert "row=2" in capsys.readouterr().err

    def test_bad_margin_row(self, tmp_path, capsys):
        _write_rake_inputs(tmp_path, [[1, 1], [1, 1]], [2, 2], [2, 2], extra_margin="col,3")
        assert self._run(tmp_path) == 2
        assert "line 6" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert self._run(tmp_path) == 1


class TestReport:
    def _one_row(self, tmp_path):
        row = SummaryRecord("all_different", 0.5, "under", "remove_nb", "weighted",
                            "population_mean", 0.2, 0.1, 0.3, 1.0, 0.9, 1.1, 10)
        path = tmp_path / "summary.csv"
        write_summary(path, [row])
        return path

    def test_one_row_one_point(self, tmp_path):
        path = self._one_row(tmp_path)
        assert main(["report", "--summary", str(path), "--out", str(tmp_path / "r"),
                     "--metrics", "bias"]) == 0
        svgs = list((tmp_path / "r").glob("*.svg"))
        assert len(svgs) == 1
        text = svgs[0].read_text()
        assert text.count('class="point"') == 1 and text.count('class="segment"') == 1
        assert (tmp_path / "r" / "all_different_bias.txt").exists()

    def test_roundtrip_from_simulate(self, simulated, tmp_path):
        _, out = simulated
        assert main(["report", "--summary", str(out / "summary.csv"), "--out",
                     str(tmp_path / "r")]) == 0
        svgs = sorted(p.name for p in (tmp_path / "r").glob("*.svg"))
        assert svgs == ["all_different_bias.svg", "all_different_width.svg"]
        summary = read_summary(out / "summary.csv")
        text = (tmp_path / "r" / "all_different_bias.svg").read_text()
        assert text.count('class="point"') == len(summary)

    def test_malformed(self, tmp_path, capsys):
        path = self._one_row(tmp_path)
        lines = path.read_text().splitlines()
        lines.append("all_different,0.5,under,remove_nb,weighted,population_mean,oops")
        path.write_text("\n".join(lines) + "\n")
        assert main(["report", "--summary", str(path), "--out", str(tmp_path / "r")]) == 2
        assert "line 4" in capsys.readouterr().err

    def test_non_numeric(self, tmp_path, capsys):
        path = self._one_row(tmp_path)
        path.write_text(path.read_text().replace("0.2,", "abc,", 1))
        assert main(["report", "--summary", str(path), "--out", str(tmp_path / "r")]) == 2
        assert "line 3" in capsys.readouterr().err

    def test_empty(self, tmp_path):
        path = tmp_path / "summary.csv"
        write_summary(path, [])
        assert main(["report", "--summary", str(path), "--out", str(tmp_path / "r")]) == 2

    def test_wrong_schema(self, tmp_path):
        path = tmp_path / "summary.csv"
        path.write_text("# poststrat-harmonize v9\na,b\n")
        with pytest.raises(CsvFormatError) as err:
            read_summary(path)
        assert err.value.line == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "poststrat_harmonize", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert re.search(r"simulate.*rake.*report", proc.stdout.replace("\n", " "))
