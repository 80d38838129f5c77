import csv
import json

import numpy as np
import pytest
import yaml

from decompens.cli import main
from decompens.config import dump_config
from decompens.data_pipeline import ingest_csv
from fixtures import tiny_config


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "cfg.yaml"
    dump_config(tiny_config(pipelines=("single+none", "emd+sum")), path)
    return path


@pytest.fixture
def flow_csv(tmp_path, cfg_file):
    path = tmp_path / "flow.csv"
    assert main(["generate", "--config", str(cfg_file), "--seed", "3", "--out", str(path)]) == 0
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_generate_writes_ingestible_csv(flow_csv):
    header = _rows(flow_csv)[0]
    assert header[:2] == ["timestamp", "flow"]
    series = ingest_csv(flow_csv)
    assert len(series) == 2 * 24 * 60 and np.all(series.values >= 0)


@pytest.mark.parametrize("method", ["EMD", "EEMD", "CEEMDAN"])
def test_decompose_dump_columns_and_closure(tmp_path, flow_csv, method):
    out = tmp_path / "imfs.csv"
    assert main(["decompose", "--input", str(flow_csv), "--method", method, "--trials", "3",
                 "--start", "100", "--length", "300", "--out", str(out)]) == 0
    rows = _rows(out)
    m = len(rows[0]) - 2
    assert rows[0] == ["t"] + [f"imf_{i + 1}" for i in range(m)] + ["residue"]
    assert len(rows) == 301 and rows[1][0] == "100"
    values = np.array(rows[1:], dtype=float)
    flow = ingest_csv(flow_csv).values[100:400]
    assert np.max(np.abs(values[:, 1:].sum(axis=1) - flow)) <= 1e-9 * np.abs(flow).max()


def test_train_evaluate_report_cycle(tmp_path, cfg_file, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg_file), "--out", str(out)]) == 0
    assert "emd+sum" in capsys.readouterr().out
    metrics = (out / "metrics.csv").read_bytes()
    assert (out / "checkpoints" / "repeat_1" / "emd" / "stacker_sum.npz").is_file()

    ev = tmp_path / "eval"
    assert main(["evaluate", "--config", str(cfg_file), "--checkpoints",
                 str(out / "checkpoints"), "--out", str(ev)]) == 0
    assert (ev / "metrics.csv").read_bytes() == metrics

    assert main(["report", "--input", str(out / "report.json"), "--format", "csv",
                 "--out", str(tmp_path / "again.csv")]) == 0
    assert (tmp_path / "again.csv").read_bytes() == metrics
    capsys.readouterr()
    assert main(["report", "--input", str(out / "report.json")]) == 0
    assert "**" in capsys.readouterr().out


def test_train_on_csv_with_overrides(tmp_path, cfg_file, flow_csv):
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg_file), "--data", str(flow_csv),
                 "--method", "single", "--repeats", "1", "--input-minutes", "20",
                 "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["labels"] == ["single+none"] and report["input_minutes"] == 20


def test_profile_reports_stage_medians(tmp_path, cfg_file):
    out = tmp_path / "profile.json"
    assert main(["profile", "--config", str(cfg_file), "--runs", "1", "--out", str(out)]) == 0
    prof = json.loads(out.read_text())["median_stage_minutes"]
    assert set(prof) == {"single", "emd"}
    assert prof["single"]["decompose_min"] == 0


def test_invalid_pairing_exits_with_error(tmp_path, cfg_file):
    assert main(["train", "--config", str(cfg_file), "--method", "single+sum",
                 "--out", str(tmp_path / "x")]) == 2


def test_config_version_is_enforced(tmp_path):
    d = tiny_config().to_dict()
    d["schema_version"] = 99
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(d))
    assert main(["train", "--config", str(path), "--out", str(tmp_path / "x")]) == 2
    del d["schema_version"]
    path.write_text(yaml.safe_dump(d))
    assert main(["train", "--config", str(path), "--out", str(tmp_path / "x")]) == 2


def test_missing_input_file_exits_with_error(tmp_path):
    assert main(["decompose", "--input", str(tmp_path / "none.csv"),
                 "--out", str(tmp_path / "o.csv")]) == 2
