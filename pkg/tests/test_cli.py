import io
import json
import subprocess
import sys

import pytest

from hoferlab.cli import EXIT_INCONCLUSIVE, EXIT_OK, EXIT_REFUTED, EXIT_STRUCTURAL, run

LEAVES = [
    ["complex", "validate"], ["complex", "homology"], ["complex", "classify"],
    ["filtration", "validate"], ["filtration", "spectral"], ["filtration", "essential"],
    ["filtration", "verdict"], ["essential"], ["morse", "build"], ["orbits", "scan"],
    ["orbits", "twist"], ["hofer"], ["certify", "thm15"], ["certify", "thm16"],
    ["certify", "negside"], ["certify", "short-time"],
]


def call(*argv):
    buf = io.StringIO()
    code = run(list(argv), stdout=buf)
    text = buf.getvalue()
    return code, (json.loads(text) if text.startswith("{") else text)


@pytest.mark.parametrize("leaf", LEAVES, ids=lambda l: "-".join(l))
def test_help_for_every_subcommand(leaf, capsys):
    with pytest.raises(SystemExit) as info:
        run(leaf + ["--help"])
    assert info.value.code == 0
    assert "usage: hoferlab " + " ".join(leaf) in capsys.readouterr().out


def test_usage_error_is_structural(capsys):
    assert run(["orbits", "scan", "--grid", "8"]) == EXIT_STRUCTURAL
    assert "--system" in capsys.readouterr().err
    assert run(["nonsense"]) == EXIT_STRUCTURAL


def test_parse_errors_carry_location(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{"basis": [\n {"id": "a", "degree": 1},\n]}')
    assert run(["complex", "validate", str(p)]) == EXIT_STRUCTURAL
    assert "broken.json:3:" in capsys.readouterr().err
    assert run(["complex", "validate", "no-such-thing"]) == EXIT_STRUCTURAL


def test_complex_commands():
    code, rep = call("complex", "homology", "two-top")
    assert code == EXIT_OK and rep["result"]["ranks"] == {"2": 2}
    code, rep = call("complex", "validate", "bad-square")
    assert code == EXIT_REFUTED and not rep["result"]["valid"]
    assert call("complex", "homology", "bad-square")[0] == EXIT_STRUCTURAL


def test_filtration_verdicts():
    code, rep = call("filtration", "verdict", "--complex", "pushdown",
                     "--filtration", "pushdown-values", "--element", "P", "--class", "P")
    assert code == EXIT_REFUTED
    ess = rep["result"]["essentiality"]
    assert ess["condition2"]["counterexample"] == ["a"]
    code, rep = call("filtration", "verdict", "--complex", "pushdown",
                     "--filtration", "pushup-values", "--element", "P", "--class", "P")
    assert rep["result"]["essentiality"]["condition2"]["holds"]
    code, rep = call("filtration", "verdict", "--complex", "two-top",
                     "--filtration", "two-top-values", "--element", "P")
    assert code == EXIT_OK and rep["result"]["certified"]
    code, rep = call("filtration", "spectral", "--complex", "two-top",
                     "--filtration", "two-top-values")
    assert code == EXIT_OK and rep["result"]["spectral_value"] == 1.0


def test_defaults_recorded_in_report():
    code, rep = call("orbits", "scan", "--system", "eps-cos", "--grid", "8")
    assert code == EXIT_OK
    params = rep["parameters"]
    assert params["grid"] == 8 and params["tol"] == 1e-10 and "steps" in params
    assert params["system"] == "eps-cos" and rep["command"] == "orbits scan"
    assert len(rep["result"]["orbits"]) == 4


def test_inconclusive_exit_code():
    code, rep = call("orbits", "scan", "--system", "zero-torus", "--grid", "8")
    assert code == EXIT_INCONCLUSIVE and rep["result"]["status"] == "non-isolated fixed-point set"


def test_text_format():
    code, text = call("certify", "negside", "--system", "eps-cos", "--Q", "0.3,0.2",
                      "--format", "text")
    assert code == EXIT_REFUTED
    assert text.startswith("command: certify negside")
    assert "refuted-hypothesis" in text


def test_morse_round_trip(tmp_path):
    cxp, fp = tmp_path / "cx.json", tmp_path / "f.json"
    code, rep = call("morse", "build", "--system", "cos-cos", "--grid", "32",
                     "--out-complex", str(cxp), "--out-filtration", str(fp))
    assert code == EXIT_OK
    res = rep["result"]
    assert res["spectral_value"] == pytest.approx(2.0)
    assert res["spectral_value"] <= res["grid_max"] + 1e-12
    top = res["fundamental_class"]
    assert len(top) == 1
    code, rep = call("essential", "--complex", str(cxp), "--filtration", str(fp),
                     "--element", top[0], "--class", "top")
    assert code == EXIT_OK and rep["result"]["verdict"]


def test_byte_determinism(tmp_path):
    outs = []
    for i in range(2):
        p = tmp_path / f"out{i}.json"
        assert run(["hofer", "--system", "eps-cos", "--grid", "16", "--nodes", "4",
                    "--output", str(p)]) == EXIT_OK
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]
    rep = json.loads(outs[0])
    assert rep["result"]["positive"] == pytest.approx(0.1, abs=1e-12)


def test_console_script_entry():
    r = subprocess.run([sys.executable, "-m", "hoferlab.cli", "complex", "homology", "two-top"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["command"] == "complex homology"
