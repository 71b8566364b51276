import csv
import json

import numpy as np
import pytest

from cgcert.cli import UsageError, main, parse_noise, parse_state
from cgcert.statespace import DensityMatrix, HilbertStructure, save_state


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_state_and_noise_specs():
    rho, name, params = parse_state("dicke:4,2")
    assert name == "dicke" and params == ("4", "2") and rho.structure.local_dims == (2,) * 4
    assert parse_noise("ad:0.3@1") == ("ad", 0.3, (1,))
    assert parse_noise("white:0.5") == ("white", 0.5, None)
    for bad in ("white", "xx:0.1", "bf:abc"):
        with pytest.raises(UsageError):
            parse_noise(bad)


def test_detect_ghz3(capsys, tmp_path):
    out = tmp_path / "res.json"
    trace = tmp_path / "trace.jsonl"
    code, stdout, _ = run(capsys, "detect", "--state", "ghz:3", "--noise", "white:0.5", "--k", "3",
                          "--out", str(out), "--trace", str(trace))
    assert code == 0
    assert json.loads(stdout)["verdict"] == "HeuristicEntangled"
    payload = json.loads(out.read_text())
    assert payload["numbers"]["r"] < 0.2
    assert {"command", "config", "seeds", "version", "wall_time", "host"} <= set(payload["manifest"])
    lines = trace.read_text().splitlines()
    assert lines and all("f" in json.loads(x) for x in lines)


def test_detect_maximally_mixed_certified_separable(capsys):
    code, stdout, _ = run(capsys, "detect", "--state", "bell", "--noise", "white:1.0")
    assert code == 0
    res = json.loads(stdout)
    assert res["verdict"] == "SeparabilityCertified"
    assert res["numbers"]["epsilon"] <= res["numbers"]["radius"]


def test_detect_deterministic(capsys, tmp_path):
    payloads = []
    for i in range(2):
        path = tmp_path / f"r{i}.json"
        assert run(capsys, "detect", "--state", "ghz:3", "--noise", "white:0.6", "--k", "2",
                   "--seed", "3", "--out", str(path))[0] == 0
        payload = json.loads(path.read_text())
        payload["manifest"].pop("wall_time")
        payloads.append(json.dumps(payload, sort_keys=True))
    assert payloads[0] == payloads[1]


@pytest.mark.parametrize("argv", [
    ("detect", "--state", "nosuch:3"),
    ("detect", "--state", "ghz:3", "--noise", "bogus:0.1"),
    ("detect", "--state", "ghz:3", "--noise", "white:1.5"),
    ("detect",),
])
def test_detect_bad_input(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 1
    assert err


def test_net_examples(capsys, tmp_path):
    code, stdout, _ = run(capsys, "net", "--dims", "2,2", "--n", "1", "--cache-dir", str(tmp_path))
    stats = json.loads(stdout)
    assert code == 0 and stats["vertices"] == 64 and stats["eta"] == pytest.approx(0.25)
    assert list(tmp_path.glob("*.json"))
    code, stdout, _ = run(capsys, "net", "--dims", "3,3", "--n", "2", "--cache-dir", str(tmp_path))
    assert json.loads(stdout)["eta"] == pytest.approx(4 / 14)


def test_net_cap_refusal(capsys, tmp_path):
    code, _, err = run(capsys, "net", "--dims", "2,2,2,2,2", "--n", "4", "--cache-dir", str(tmp_path))
    assert code == 1
    assert "refused" in err and "exceeds cap" in err


def test_robustness_bit_flip(capsys, tmp_path):
    code, stdout, _ = run(capsys, "robustness", "--state", "bell", "--channel", "bf",
                          "--out-dir", str(tmp_path))
    assert code == 0
    row = json.loads(stdout.splitlines()[0])
    assert row["p_ent"] <= 0.5 <= row["p_sep"] and row["gap"] <= 0.002
    report = json.loads((tmp_path / "report.json").read_text())
    assert "manifest" in report and report["rows"][0]["channel"] == "bf"
    with open(tmp_path / "report.csv") as fh:
        assert float(next(csv.DictReader(fh))["p_sep"]) == row["p_sep"]
    probes = (tmp_path / "probes.jsonl").read_text().splitlines()
    assert len(probes) == row["probes"]


def test_robustness_bracket_failure(capsys, tmp_path):
    state = tmp_path / "zero.json"
    save_state(DensityMatrix(np.diag([1.0, 0, 0, 0]), HilbertStructure.qubits(2)), state)
    code, _, err = run(capsys, "robustness", "--state", str(state), "--channel", "white",
                       "--target-gap", "0.05", "--out-dir", str(tmp_path))
    assert code == 2
    assert "bracket failure" in err
