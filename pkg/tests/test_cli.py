import json
import math

import numpy as np
import pytest
from scipy.special import gammaln

from balanced.cli import EXIT_ACCURACY, EXIT_DOMAIN, EXIT_OK, EXIT_USAGE, main, parse_grid
from balanced.errors import DomainError
from balanced.solver import read_solution


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _table(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    cols = lines[0].split(",")
    return [dict(zip(cols, l.split(","))) for l in lines[1:]]


class TestGrid:
    def test_forms(self):
        assert parse_grid("1,2.5") == [1.0, 2.5]
        assert parse_grid("0:1:3") == [0.0, 0.5, 1.0]

    def test_bad(self):
        with pytest.raises(DomainError):
            parse_grid("a:b")


class TestExitCodes:
    def test_usage(self, capsys):
        assert run(capsys, "bogus")[0] == EXIT_USAGE
        assert run(capsys)[0] == EXIT_USAGE
        assert run(capsys, "solve", "--order", "x")[0] == EXIT_USAGE

    def test_domain(self, capsys):
        code, out, err = run(capsys, "solve", "--beta", "1.5")
        assert code == EXIT_DOMAIN and "domain error" in err

    def test_accuracy_with_partial(self, capsys):
        code, out, err = run(capsys, "refined", "--m", "1.009", "--epsilon", "0.01")
        assert code == EXIT_ACCURACY
        assert "# status=partial" in out


class TestCommands:
    def test_solve_round_trip(self, capsys, tmp_path):
        path = tmp_path / "sol.csv"
        code, _, _ = run(capsys, "solve", "--beta", "0", "--output", str(path))
        assert code == EXIT_OK
        seq = read_solution(str(path))
        assert np.max(np.abs(seq.lambdas[:31] - gammaln(np.arange(31) + 1.0))) < 1e-4
        code, out, _ = run(capsys, "residuals", "--input", str(path))
        assert code == EXIT_OK
        assert all(float(r["deviation"]) <= 1e-8 for r in _table(out))

    def test_solve_json(self, capsys):
        code, out, _ = run(capsys, "solve", "--beta", "0.5", "--format", "json")
        doc = json.loads(out)
        assert doc["meta"]["command"] == "solve"
        assert doc["rows"][0]["lambda_i"] == 0.0
        assert math.exp(-doc["rows"][1]["lambda_i"]) > 1.0

    def test_audit(self, capsys):
        code, out, _ = run(capsys, "audit", "--points", "5")
        assert code == EXIT_OK
        rows = {r["name"]: r for r in _table(out)}
        assert abs(float(rows["c0"]["computed"]) - 0.612003) < 1e-4
        assert "# all_passed=True" in out

    def test_contraction(self, capsys):
        code, out, _ = run(capsys, "contraction")
        last = _table(out)[-1]
        assert float(last["m"]) < 1.01 and float(last["q_prime"]) > 0.158

    def test_reruns_identical(self, capsys):
        a = run(capsys, "dominating-table", "--m", "1,2,10")[1]
        b = run(capsys, "dominating-table", "--m", "1,2,10")[1]
        assert a == b
        assert a.startswith("# balanced ")

    def test_header_lists_params(self, capsys):
        out = run(capsys, "qtilde", "--m", "2")[1]
        assert "# command=qtilde" in out and "# m=2" in out

    def test_factorial_asymptotics(self, capsys):
        code, out, _ = run(capsys, "asymptotics", "--factorial", "--order", "200", "--grid", "50")
        (row,) = _table(out)
        assert float(row["variance_over_x"]) == pytest.approx(1.0, rel=1e-6)

    def test_output_file_atomic(self, capsys, tmp_path):
        path = tmp_path / "t.json"
        code, out, _ = run(capsys, "beta-scan", "--grid", "0,0.5", "--format", "json",
                           "--output", str(path))
        assert code == EXIT_OK and out == ""
        doc = json.loads(path.read_text())
        assert len(doc["rows"]) == 2
        assert list(tmp_path.iterdir()) == [path]

    def test_module_entry(self):
        import subprocess
        import sys
        r = subprocess.run([sys.executable, "-m", "balanced", "qtilde", "--m", "1"],
                           capture_output=True, text=True)
        assert r.returncode == 0 and "q_tilde" in r.stdout
