import csv
import hashlib
import io
import json
import math
import os
import subprocess
import sys

import pytest

from tokentiming import cli


def run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_capacity_single(capsys):
    code, out, _ = run(["capacity", "--mu", "1", "--tau", "1"], capsys)
    assert code == 0
    (r,) = rows(out)
    assert float(r["capacity_nats"]) == pytest.approx(math.log(1 + 1 / math.e))
    assert float(r["capacity_bits"]) == pytest.approx(math.log2(1 + 1 / math.e))
    assert float(r["abs_gap"]) < 1e-3


def test_capacity_sweep_monotone(capsys):
    code, out, _ = run(["capacity", "--sweep-mutau", "0:10:0.5", "--no-numeric"], capsys)
    assert code == 0
    rs = rows(out)
    assert len(rs) == 21
    caps = [float(r["capacity_nats"]) for r in rs]
    assert all(b > a for a, b in zip(caps, caps[1:]))


def test_capacity_bits(capsys):
    _, nats, _ = run(["capacity", "--tau", "2"], capsys)
    _, bits, _ = run(["capacity", "--tau", "2", "--bits"], capsys)
    a, b = rows(nats)[0], rows(bits)[0]
    assert float(b["numeric_capacity"]) == pytest.approx(float(a["numeric_capacity"]) / math.log(2))


def test_ordent_examples(capsys):
    _, out, _ = run(["ordent", "--case", "mean", "--mu", "1", "--tau", "1", "--M", "2"], capsys)
    assert float(rows(out)[0]["closed_form_nats"]) == pytest.approx(0.5 * math.log(2))
    _, out, _ = run(["ordent", "--case", "deadline", "--M", "1", "--mc-reps", "200"], capsys)
    r = rows(out)[0]
    for col in ("closed_form_nats", "pipeline_nats", "mc_mean", "log_M_factorial"):
        assert float(r[col]) == 0.0


def test_ordent_sweep_equality(capsys):
    code, out, _ = run(["ordent", "--case", "deadline", "--M-sweep", "2:8", "--mc-reps", "20000", "--seed", "7"], capsys)
    assert code == 0
    rs = rows(out)
    assert [int(r["M"]) for r in rs] == list(range(2, 9))
    for r in rs:
        assert abs(float(r["closed_form_nats"]) - float(r["mc_mean"])) <= 3 * float(r["mc_stderr"])


def test_ordent_custom_requires_density(capsys):
    code, _, err = run(["ordent", "--case", "custom"], capsys)
    assert code == 1 and "density" in err


def test_ordent_custom_density(tmp_path, capsys):
    f = tmp_path / "law.txt"
    f.write_text("# half atom, half uniform\natom 0 0.5\npiece 0 2 const\n")
    code, out, _ = run(["ordent", "--case", "custom", "--density", str(f), "--M", "3"], capsys)
    assert code == 0
    r = rows(out)[0]
    assert r["closed_form_nats"] == ""
    assert 0 < float(r["pipeline_nats"]) < math.lgamma(4)


def test_density_file_validation(tmp_path):
    f = tmp_path / "bad.txt"
    f.write_text("atom 0 0.5\npiece 0 1 const 0.3\n")
    with pytest.raises(cli.UsageError):
        cli.load_density(str(f))
    f.write_text("blob 1 2\n")
    with pytest.raises(cli.UsageError):
        cli.load_density(str(f))
    f.write_text("atom 1 0.25\npiece 0 1 exp 2.0 0.25\npiece 1 inf exp 1.0\n")
    dens = cli.load_density(str(f))
    assert dens.total_mass() == pytest.approx(1.0, abs=1e-12)


def test_asymptotics(capsys):
    _, out, _ = run(["asymptotics", "--rho", "1", "--M", "2000"], capsys)
    r = rows(out)[0]
    assert float(r["cq_upper"]) == pytest.approx(math.log(5))
    assert float(r["finite_M_deadline"]) / float(r["h_over_m_deadline_limit"]) == pytest.approx(1, abs=0.01)
    _, out, _ = run(["asymptotics", "--rho-sweep", "1:100:33"], capsys)
    rs = rows(out)
    assert float(rs[-1]["cq_upper"]) == pytest.approx(math.log(4), abs=0.02)
    for col in ("h_over_m_mean_limit", "h_over_m_deadline_limit"):
        v = [float(r[col]) for r in rs]
        assert all(b > a for a, b in zip(v, v[1:]))


def test_json_output_and_manifest(tmp_path, capsys):
    out = tmp_path / "cap.json"
    code, _, _ = run(["capacity", "--sweep-mutau", "0.5:1.5:0.5", "--format", "json", "--out", str(out)], capsys)
    assert code == 0
    data = json.loads(out.read_text())
    assert data["mu_tau"] == [0.5, 1.0, 1.5]
    man = json.loads((tmp_path / "cap.json.manifest.json").read_text())
    assert man["command"] == "capacity"
    assert man["output_digest"] == "sha256:" + hashlib.sha256(out.read_bytes()).hexdigest()
    assert man["version"] and man["timestamp"]


def test_manifest_digest_stable(tmp_path, capsys):
    digests = []
    for i in range(2):
        out = tmp_path / f"o{i}.csv"
        run(["ordent", "--M-sweep", "2:4", "--mc-reps", "500", "--seed", "3", "--out", str(out)], capsys)
        digests.append(json.loads((tmp_path / f"o{i}.csv.manifest.json").read_text())["output_digest"])
    assert digests[0] == digests[1]


def test_seed_env_fallback(monkeypatch, capsys):
    monkeypatch.setenv("TOKEN_TIMING_SEED", "3")
    _, a, _ = run(["ordent", "--M", "4", "--mc-reps", "500"], capsys)
    _, b, _ = run(["ordent", "--M", "4", "--mc-reps", "500", "--seed", "3"], capsys)
    assert a == b
    monkeypatch.setenv("TOKEN_TIMING_SEED", "x")
    code, _, _ = run(["ordent", "--M", "4", "--mc-reps", "500"], capsys)
    assert code == 1


def test_usage_errors(capsys):
    assert run(["capacity", "--tau", "-1"], capsys)[0] == 1
    assert run(["capacity", "--sweep-mutau", "1:0:1"], capsys)[0] == 1
    assert run(["ordent", "--mc-reps", "50"], capsys)[0] == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["nope"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["capacity", "--format", "xml"])
    assert exc.value.code == 1


def test_nonconvergence_exit_code(monkeypatch, capsys):
    from tokentiming import deadline

    def boom(*a, **k):
        raise deadline.ConvergenceError("stuck")

    monkeypatch.setattr(deadline, "numeric_capacity", boom)
    assert run(["capacity", "--tau", "1"], capsys)[0] == 3


def test_verify_suite_pass_and_fail(capsys):
    code, out, _ = run(["verify", "theorem2"], capsys)
    assert code == 0 and out.count("PASS") == 4
    code, out, _ = run(["verify", "theorem9", "--quick", "--seed", "7"], capsys)
    assert code == 2
    assert "FAIL" in out and "gamma_S0_prime_reference" in out


def test_csv_format_details(capsys):
    _, out, _ = run(["asymptotics", "--rho", "0.5"], capsys)
    assert "\r" not in out
    assert out.splitlines()[0] == "rho,h_over_m_mean_limit,h_over_m_deadline_limit,cq_upper"


def test_console_script_installed():
    exe = os.path.join(os.path.dirname(sys.executable), "tokentiming")
    cmd = [exe] if os.path.exists(exe) else [sys.executable, "-m", "tokentiming.cli"]
    res = subprocess.run(cmd + ["asymptotics", "--rho", "1"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("rho,")
