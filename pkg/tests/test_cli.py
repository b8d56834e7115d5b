import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from hqcnn import cli, train

TABLE = Path(__file__).parent / "data" / "published_summary.csv"


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("kind,count", [("baseline", 11065), ("hybrid1", 9983), ("hybrid2", 8901), ("hybrid4", 4177)])
def test_param_count(capsys, tmp_path, kind, count):
    code, out, _ = run(capsys, "--out-dir", tmp_path, "param-count", kind)
    assert code == 0 and out.strip() == str(count)


def test_rank_top_row_and_manifest(capsys, tmp_path):
    code, out, _ = run(capsys, "--out-dir", tmp_path, "rank", TABLE)
    assert code == 0
    assert out.splitlines()[0] == "ROI 1, 0.965"
    manifest = json.loads((tmp_path / "manifest-rank.json").read_text())
    assert manifest["command"] == "rank" and "ranking.csv" in manifest["artifacts"]
    assert {"config", "seed", "started_at", "wall_clock_seconds"} <= manifest.keys()


def test_ttest_writes_all_pairings(capsys, tmp_path):
    code, out, _ = run(capsys, "--out-dir", tmp_path, "ttest", TABLE)
    assert code == 0
    assert len(out.splitlines()) == 6
    with (tmp_path / "ttest.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [(r["a"], r["b"]) for r in rows] == list(cli.TTEST_PAIRS)


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["param-count", "hybrid3"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_data_error_exits_1(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("roi,baseline\nx,0.5\n")
    code, _, err = run(capsys, "--out-dir", tmp_path, "rank", bad)
    assert code == 1 and "error" in err
    code, _, err = run(capsys, "--out-dir", tmp_path, "sbfc", "--dataset", tmp_path / "missing.csv")
    assert code == 1


def test_config_file_then_flags(capsys, tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[synthetic]\nn_healthy = 3\nn_emci = 4\n")
    run(capsys, "--out-dir", tmp_path, "--config", ini, "gen-data", "--n-emci", "2")
    manifest = json.loads((tmp_path / "manifest-gen-data.json").read_text())
    assert manifest["config"]["n_healthy"] == 3
    assert manifest["config"]["n_emci"] == 2


def test_pipeline_is_deterministic(capsys, tmp_path):
    hashes = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run(capsys, "--out-dir", out, "gen-data", "--n-healthy", "10", "--n-emci", "10")[0] == 0
        assert run(capsys, "--out-dir", out, "sbfc", "--dataset", out / "dataset.csv", "--seeds", "1,84")[0] == 0
        assert run(capsys, "--out-dir", out, "sweep", "--dataset", out / "dataset.csv", "--rois", "1",
                   "--specs", "baseline,hybrid2", "--epochs", "1")[0] == 0
        hashes.append({cmd: json.loads((out / f"manifest-{cmd}.json").read_text())["artifacts"]
                       for cmd in ("gen-data", "sbfc", "sweep")})
    assert hashes[0] == hashes[1]

    # a lone train run reproduces its sweep cell
    out = tmp_path / "a"
    code, text, _ = run(capsys, "--out-dir", out, "train", "--dataset", out / "dataset.csv", "--roi", "1",
                        "--spec", "hybrid2", "--fold", "4", "--epochs", "1")
    metrics = json.loads((out / "train-roi1-hybrid2-fold4.json").read_text())
    assert metrics["balanced_accuracy"] == train.read_results(out / "results.csv")[(1, "hybrid2", 4)]


def test_parse_rois():
    assert cli.parse_rois("1-3,84") == [1, 2, 3, 84]
    assert len(cli.parse_rois("all")) == 116


def test_module_entry_point(tmp_path):
    done = subprocess.run([sys.executable, "-m", "hqcnn", "--out-dir", str(tmp_path), "param-count", "hybrid1"],
                          capture_output=True, text=True)
    assert done.returncode == 0
    assert done.stdout.strip() == "9983"
