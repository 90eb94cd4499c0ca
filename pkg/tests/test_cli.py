import json
import subprocess
import sys

from restart_bandits.cli import main


def test_index_json(tmp_path, capsys):
    assert main(["index", "--model", "A", "--ell", "3", "--family", "2"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["model"] == "A" and len(d["w"]) == 4
    assert main(["index", "--model", "B", "--ell", "2", "--out", str(tmp_path / "w.csv")]) == 0
    assert (tmp_path / "w.csv").read_text().startswith("s,k,w\n")


def test_index_from_arm_file(tmp_path, capsys):
    from restart_bandits.arm import save_arm, structured_arm
    save_arm(structured_arm(3, 0.3, 3, 5), tmp_path / "arm.json")
    assert main(["index", "--arm", str(tmp_path / "arm.json"), "--out",
                 str(tmp_path / "w.json")]) == 0
    assert json.load(open(tmp_path / "w.json"))["ell"] == 3


def test_eval(capsys):
    assert main(["eval", "--model", "B", "--theta", "1,2,3,4", "--ell", "4"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "s,k,D,N" and len(lines) == 1 + 4 * 5


def test_verify_exit_codes(tmp_path, capsys):
    assert main(["verify", "--none"]) == 0
    assert main(["verify", "--suite", "assumptions", "--corpus-size", "3"]) == 0
    assert main(["verify", "--suite", "assumptions", "--corpus-size", "3", "--inject-fault",
                 "--out", str(tmp_path / "r.json")]) == 1
    assert json.load(open(tmp_path / "r.json"))["passed"] is False


def test_run_small(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("families: [2]\nmodels: [A]\n")
    assert main(["run", "exp1", "--config", str(cfg), "--paths", "20", "--horizon", "30",
                 "--out", str(tmp_path / "o")]) == 0
    assert "alpha_opt_A_m1.csv" in capsys.readouterr().out


def test_validation_error_exit_code(tmp_path, capsys):
    assert main(["run", "exp2", "--paths", "0", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "restart_bandits", "verify", "--none"],
                       capture_output=True, text=True)
    assert r.returncode == 0
