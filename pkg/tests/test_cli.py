import json
from importlib.resources import files

import pytest

from privrobust import __version__
from privrobust.cli import main
from privrobust.io import parse_samples, read_table

SIX = "[[0.42,0.18],[0.16,0.24]]"
DATA = str(files("privrobust") / "data" / "synthetic_2x2.csv")


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_measure_identity(capsys):
    code, out, _ = run(capsys, "measure", "--matrix", SIX, "--mechanism", "[[1,0],[0,1]]")
    assert code == 0
    rows = read_table(out, is_text=True)
    assert float(rows[0]["value"]) == pytest.approx(0.66)


def test_measure_product_chi2(capsys):
    code, out, _ = run(
        capsys, "measure", "--matrix", "[[0.12,0.28],[0.18,0.42]]", "--mechanism", "[[0.9,0.1],[0.3,0.7]]",
        "--leakage", "f:chi2",
    )
    assert code == 0
    assert abs(float(read_table(out, is_text=True)[0]["value"])) <= 1e-12


def test_malformed_csv(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("s,x\na,b\nc\n")
    code, _, err = run(capsys, "measure", "--samples", str(bad), "--mechanism", "[[1,0],[0,1]]")
    assert code == 2
    assert f"{bad}:3:" in err


def test_bound_table(capsys):
    code, out, _ = run(capsys, "bound", "--samples", DATA, "--measures", "pc,sibson(inf),maxal(2)")
    assert code == 0
    rows = read_table(out, is_text=True)
    by = {(r["measure"], r["side"]): r for r in rows}
    assert float(by["pc", "privacy"]["constant"]) == 1.0
    assert float(by["sibson(inf)", "utility"]["bound"]) == 0.0
    assert float(by["pc", "privacy"]["bound"]) == pytest.approx(0.0794, abs=1e-4)


def test_bound_shannon_unsupported(capsys):
    code, _, err = run(capsys, "bound", "--matrix", SIX, "--n", "100", "--measures", "shannon")
    assert code == 2 and "Unsupported" in err


def test_bound_needs_n(capsys):
    assert run(capsys, "bound", "--matrix", SIX)[0] == 2


def test_exit_codes(capsys):
    assert run(capsys, "design", "--matrix", SIX, "--eps", "0.1")[0] == 3
    assert run(capsys, "design", "--matrix", SIX, "--eps", "0.7", "--family", "grid:9:0.01")[0] == 4
    assert run(capsys, "measure", "--matrix", "[[0.5,0.6]]", "--mechanism", "[[1],[1]]")[0] == 2
    assert run(capsys, "uniform", "--matrix", SIX, "--eps", "0.61", "--r", "0.05")[0] == 3
    with pytest.raises(SystemExit) as exc:
        main(["measure", "--matrix", "not json"])
    assert exc.value.code == 2


def test_experiment_requires_seed(capsys):
    code, _, err = run(capsys, "experiment", "discrepancy", "--trials", "2")
    assert code == 2 and "seed" in err


def test_config_and_override(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"matrix": [[0.42, 0.18], [0.16, 0.24]], "eps": 0.9, "family": "rr"}))
    _, full, _ = run(capsys, "design", "--config", str(cfg))
    _, tight, _ = run(capsys, "design", "--config", str(cfg), "--eps", "0.62")
    assert full != tight
    assert float(read_table(full, is_text=True)[0]["y0"]) == 1.0


def test_bad_config(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{\n  oops\n}")
    code, _, err = run(capsys, "design", "--config", str(cfg))
    assert code == 2 and f"{cfg}:2:" in err


def test_sidecar_and_determinism(capsys, tmp_path):
    outputs = []
    for k in range(2):
        prefix = tmp_path / f"run{k}"
        code, _, _ = run(
            capsys, "experiment", "discrepancy", "--seed", "7", "--trials", "3", "--n-values", "100,400",
            "--out", str(prefix),
        )
        assert code == 0
        outputs.append(((tmp_path / f"run{k}.csv").read_bytes(), (tmp_path / f"run{k}.json").read_text()))
    assert outputs[0][0] == outputs[1][0]
    side = json.loads(outputs[0][1])
    assert side["version"] == __version__
    assert side["command"] == "experiment"
    assert side["config"]["seed"] == 7 and side["config"]["n_values"] == [100, 400]
    rows = read_table(outputs[0][0].decode(), is_text=True)
    assert len(rows) == 6


def test_preprocess(capsys, tmp_path):
    code, out, _ = run(capsys, "preprocess", "--samples", DATA, "--gamma", "0.0")
    assert code == 0
    original = open(DATA).read()
    assert out == original

    prefix = tmp_path / "merged"
    assert run(capsys, "preprocess", "--samples", DATA, "--gamma", "1.0", "--out", str(prefix))[0] == 0
    merged = parse_samples((tmp_path / "merged.csv").read_text())
    assert merged.x_alphabet.labels == ("__merged__",)
    side = json.loads((tmp_path / "merged.json").read_text())
    assert side["merge_map"]["kept"] == []

    again = tmp_path / "again"
    assert run(capsys, "preprocess", "--samples", DATA, "--map", str(prefix) + ".json", "--out", str(again))[0] == 0
    assert (tmp_path / "again.csv").read_text() == (tmp_path / "merged.csv").read_text()


def test_uniform_command(capsys):
    code, out, _ = run(capsys, "uniform", "--matrix", SIX, "--eps", "0.68", "--r", "0.02", "--m", "100")
    assert code == 0
    row = read_table(out, is_text=True)[0]
    assert row["pass"] == "true" and float(row["shrunk_eps"]) == pytest.approx(0.66)


def test_mechanism_csv(capsys, tmp_path):
    prefix = tmp_path / "d"
    assert run(capsys, "design", "--matrix", SIX, "--eps", "0.62", "--out", str(prefix))[0] == 0
    code, out, _ = run(capsys, "measure", "--matrix", SIX, "--mechanism-csv", str(prefix) + ".csv")
    assert code == 0
    assert float(read_table(out, is_text=True)[0]["value"]) <= 0.62 + 1e-9
