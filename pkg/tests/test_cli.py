import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from blockshadow.cli import main
from blockshadow.pauli import ObservableSum, PauliString, build_cluster_heisenberg
from blockshadow.serialize import to_json_text, write_json


def run_cli(args):
    return main(args)


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_targets(path, n=4):
    obs = build_cluster_heisenberg(n)
    write_json(path, obs.to_json())


def test_serializer_float_digits(tmp_path):
    text = to_json_text({"x": 0.1, "y": [1, 2.5], "z": "ab"})
    assert text == '{"x":0.10000000000000001,"y":[1,2.5],"z":"ab"}'


def test_acquire_deterministic_bytes(workdir):
    args = "acquire --state zero --n 4 --k 2 --nu 20 --ns 4 --seed 7 --out ds.json".split()
    assert run_cli(args) == 0
    h1 = digest(workdir / "ds.json")
    data = json.loads((workdir / "ds.json").read_text())
    assert len(data["records"]) == 20
    assert run_cli(args) == 0
    assert digest(workdir / "ds.json") == h1


def test_acquire_rejects_bad_block_size(workdir):
    args = "acquire --state zero --n 4 --k 3 --nu 5 --ns 1 --seed 7".split()
    assert run_cli(args) == 2


def test_acquire_rejects_bad_state(workdir):
    args = "acquire --state nonsense --n 4 --k 2 --nu 5 --ns 1 --seed 7".split()
    assert run_cli(args) == 2


def test_missing_file_is_data_error(workdir):
    write_targets(workdir / "targets.json")
    args = "estimate --dataset missing.json --targets targets.json".split()
    assert run_cli(args) == 3


def test_estimate_identity_and_csv(workdir):
    run_cli("acquire --state zero --n 2 --k 1 --nu 50 --ns 2 --seed 3 --out ds.json".split())
    obs = ObservableSum(2, [(1.0, PauliString.identity(2)), (1.0, PauliString.from_text("ZI"))])
    write_json(workdir / "targets.json", obs.to_json())
    assert run_cli("estimate --dataset ds.json --targets targets.json --out est.csv".split()) == 0
    lines = (workdir / "est.csv").read_text().strip().splitlines()
    assert lines[0].startswith("observable,mean,stderr")
    ident_row = [l for l in lines if l.startswith("II,")][0]
    assert ident_row.split(",")[1] == "1"


def test_purity_and_fidelity_commands(workdir):
    run_cli("acquire --state ghz --n 4 --k 2 --nu 400 --ns 4 --seed 9 --out ds.json".split())
    assert run_cli("purity --dataset ds.json --out p.csv".split()) == 0
    val = float((workdir / "p.csv").read_text().strip().splitlines()[1].split(",")[1])
    assert abs(val - 1.0) < 0.25
    assert run_cli("fidelity --dataset ds.json --target-state ghz --out f.csv".split()) == 0
    fval = float((workdir / "f.csv").read_text().strip().splitlines()[1].split(",")[1])
    assert abs(fval - 1.0) < 0.25


def test_crm_command(workdir):
    run_cli("acquire --state ghz --n 2 --k 1 --nu 200 --ns 2 --seed 11 --out ds.json".split())
    obs = ObservableSum(2, [(1.0, PauliString.from_text("ZZ"))])
    write_json(workdir / "targets.json", obs.to_json())
    assert (
        run_cli("crm --dataset ds.json --sigma ghz --targets targets.json --out crm.csv".split())
        == 0
    )
    val = float((workdir / "crm.csv").read_text().strip().splitlines()[1].split(",")[1])
    assert abs(val - 1.0) < 0.2


def test_sff_command(workdir):
    h = build_cluster_heisenberg(3)
    write_json(workdir / "h.json", h.to_json())
    args = "sff --hamiltonian h.json --t 0.0 --n 3 --k 1 --m 50 --seed 5 --out sff.csv".split()
    assert run_cli(args) == 0
    val = float((workdir / "sff.csv").read_text().strip().splitlines()[1].split(",")[1])
    assert val == 1.0


def test_calibrate_and_mitigate_commands(workdir):
    write_json(
        workdir / "noise.json",
        {"kind": "model1", "layers": [{"scope": "per_block", "probs": {"XI": 0.05, "IX": 0.05}}]},
    )
    run_cli(
        "acquire --state zero --n 4 --k 2 --nu 2000 --ns 8 --seed 13 --noise noise.json --out cal.json".split()
    )
    assert run_cli("calibrate --dataset cal.json --out report.json".split()) == 0
    report = json.loads((workdir / "report.json").read_text())
    assert set(report["labels"]) == {"0", "1"}
    run_cli(
        "acquire --state ghz --n 4 --k 2 --nu 1500 --ns 8 --seed 14 --noise noise.json --out ds.json".split()
    )
    obs = ObservableSum(4, [(1.0, PauliString.from_text("ZZII"))])
    write_json(workdir / "targets.json", obs.to_json())
    assert (
        run_cli(
            "mitigate --dataset ds.json --targets targets.json --report report.json --out mit.csv".split()
        )
        == 0
    )


def test_derandomize_command(workdir):
    write_targets(workdir / "targets.json", n=4)
    args = (
        "derandomize --targets targets.json --k 2 --eps 0.9 --min-cover 5 "
        "--out plan.json --coverage cov.csv --compare-k 1,2 --compare-out cmp.csv"
    ).split()
    assert run_cli(args) == 0
    plan = json.loads((workdir / "plan.json").read_text())
    assert plan["conf"] <= plan["expected_conf"] + 1e-9
    cov_lines = (workdir / "cov.csv").read_text().strip().splitlines()[1:]
    assert all(int(line.split(",")[1]) >= 5 for line in cov_lines)
    cmp_lines = (workdir / "cmp.csv").read_text().strip().splitlines()[1:]
    assert len(cmp_lines) == 2


def test_phase_scan_command(workdir):
    args = (
        "phase-scan --n 6 --k 2 --t 10 --ns 20 --w-points 7 --seed 21 "
        "--out scan.csv --fit-out fit.json"
    ).split()
    assert run_cli(args) == 0
    lines = (workdir / "scan.csv").read_text().strip().splitlines()
    assert lines[0] == "w,pc1,pc1_stderr"
    assert len(lines) == 8
    fit = json.loads((workdir / "fit.json").read_text())
    assert {"a", "b", "c", "w0", "w0_stderr", "residual"} <= set(fit)
    assert run_cli("phase-scan --n 5 --k 1 --seed 2".split()) == 2


def test_verify_command(capsys):
    assert run_cli(["verify"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5
    assert "FAIL" not in out


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "blockshadow.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "acquire" in proc.stdout
