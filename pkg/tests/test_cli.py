from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from app import certify
from app.main import main
from app.pin_wiggle import PinWiggleError

ROOT = Path(__file__).resolve().parents[1]
DOT_ARGS = ["certify", "--phi", "dot", "--set1", "middle:1/3@[0,1]#8", "--pin", "1,1", "--delta", "1/10"]


@pytest.fixture(autouse=True)
def repo_cwd(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.chdir(ROOT)
    monkeypatch.setenv("THICK_JSON_LOGS", "false")
    monkeypatch.setenv("LOG_LEVEL", "WARNING")


@pytest.fixture
def dot_file(tmp_path: Path) -> Path:
    path = tmp_path / "dot.json"
    assert main([*DOT_ARGS, "--out", str(path)]) == 0
    return path


def test_thickness_of_middle_thirds(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["thickness", "middle:1/3@[0,1]#6"]) == 0
    out = capsys.readouterr().out
    assert "tau = 1 (~1.000000)" in out
    assert "dim_H >= 0.630930" in out


def test_thickness_json_with_epsilon(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["thickness", "middle:1/5@[0,1]#3", "--epsilon", "1/10", "--depth", "5", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["tau"] == "2"
    assert data["tau_eps"] == "2"
    assert data["set"] == "middle:1/5@[0,1]#5"
    assert len(data["entries"]) == 2 * (2**5 - 1)


def test_thickness_marks_stage_only_sections(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["thickness", "section:middle:1/3@[0,1]#4/[1/162,1]"]) == 0
    assert "stage thickness only" in capsys.readouterr().out


@pytest.mark.parametrize(
    ("argv", "code"),
    [
        (["thickness", "middle:1/3@[0,1]"], 2),
        (["thickness", "explicit:{[0,1]}"], 4),
        (["thickness", "middle:1/3@[0,1]#3", "--epsilon", "1"], 2),
        (["certify", "--phi", "dot", "--set1", "middle:1/3@[0,1]#8", "--pin", "1,1", "--delta", "1/2"], 5),
        (["certify", "--phi", "dot", "--set1", "middle:1/3@[0,1]#8", "--pin", "0,1", "--delta", "0"], 5),
        (["certify", "--phi", "dist", "--set1", "middle:1/3@[0,1]#8", "--pin", "0,0"], 4),
        (["certify", "--phi", "dist", "--pin", "1;1"], 2),
        (["certify", "--phi", "cosine", "--pin", "0,0"], 2),
        (["certify", "--phi", "dist"], 2),
        (["certify", "--phi", "dist", "--tree", "chain:0"], 7),
        (["certify", "--phi", "dist", "--tree", "chain1", "--skeleton", "no-such-skeleton"], 7),
        (["certify", "--phi", "dot", "--engine", "middle-thirds", "--pin", "1,1"], 5),
        (DOT_ARGS + ["--engine", "thickness"], 4),
    ],
)
def test_exit_codes(argv: list[str], code: int, capsys: pytest.CaptureFixture[str]) -> None:
    assert main(argv) == code
    assert capsys.readouterr().out.startswith("error:")


def test_invalid_settings_exit_with_usage_code(monkeypatch: pytest.MonkeyPatch, capsys: pytest.CaptureFixture[str]) -> None:
    monkeypatch.setenv("THICK_SEARCH_BUDGET", "0")
    assert main(["thickness", "middle:1/3@[0,1]#2"]) == 2
    assert "THICK_SEARCH_BUDGET" in capsys.readouterr().out


def test_certify_prints_document(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(DOT_ARGS) == 0
    document = json.loads(capsys.readouterr().out)
    assert document["payload"]["kind"] == "dot_pin"
    assert document["payload"]["t_interval"]["lo"] == "11/10"
    assert document["payload"]["t_interval"]["hi"] == "9/5"


def test_certify_writes_metrics(tmp_path: Path) -> None:
    metrics = tmp_path / "metrics.jsonl"
    assert main([*DOT_ARGS, "--out", str(tmp_path / "c.json"), "--metrics", str(metrics)]) == 0
    event = json.loads(metrics.read_text(encoding="utf-8").splitlines()[0])
    assert event["command"] == "certify"
    assert event["certificates_emitted_total"] == 1


def test_verify_passes_and_stamps(dot_file: Path, capsys: pytest.CaptureFixture[str]) -> None:
    capsys.readouterr()
    assert main(["verify", str(dot_file), "--grid", "9", "--stamp"]) == 0
    assert capsys.readouterr().out.startswith("verification pass")
    stamped = json.loads(dot_file.read_text(encoding="utf-8"))
    assert stamped["verification"]["status"] == "pass"
    assert main(["verify", str(dot_file), "--no-oracle"]) == 0


def test_verify_json_and_csv(dot_file: Path, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    rows = tmp_path / "rows.csv"
    capsys.readouterr()
    assert main(["verify", str(dot_file), "--grid", "4", "--csv", str(rows), "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["status"] == "pass"
    assert data["oracle"]["checked_pins"] == 4
    with rows.open(encoding="utf-8") as fh:
        assert len(list(csv.DictReader(fh))) == 4 * 128
    assert main(["verify", str(dot_file), "--grid", "4", "--t-grid", "10", "--csv", str(rows)]) == 0
    with rows.open(encoding="utf-8") as fh:
        assert len(list(csv.DictReader(fh))) == 4 * 10


@pytest.mark.parametrize("field", ["t_interval", "delta", "pin"])
def test_corrupted_certificate_fails(dot_file: Path, field: str, capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["verify", str(dot_file), "--no-oracle", "--corrupt-for-test", field, "--stamp"]) == 3
    assert "verification fail" in capsys.readouterr().out
    assert json.loads(dot_file.read_text(encoding="utf-8"))["verification"] is None


def test_unknown_corruption_field(dot_file: Path) -> None:
    assert main(["verify", str(dot_file), "--corrupt-for-test", "windows"]) == 2


def test_verify_refuses_shallow_oracle(dot_file: Path) -> None:
    assert main(["verify", str(dot_file), "--depth", "4"]) == 8


def test_verify_rejects_edited_payload(dot_file: Path) -> None:
    document = json.loads(dot_file.read_text(encoding="utf-8"))
    document["payload"]["delta"] = "1/20"
    dot_file.write_text(json.dumps(document), encoding="utf-8")
    assert main(["verify", str(dot_file)]) == 2


def test_verify_rejects_broken_json(tmp_path: Path) -> None:
    path = tmp_path / "broken.json"
    path.write_text("{", encoding="utf-8")
    assert main(["verify", str(path)]) == 2


def test_plot_writes_svg(dot_file: Path, tmp_path: Path) -> None:
    out = tmp_path / "figs" / "dot.svg"
    assert main(["plot", str(dot_file), "--out", str(out)]) == 0
    text = out.read_text(encoding="utf-8")
    assert text.startswith("<?xml")
    assert text.rstrip().endswith("</svg>")


def test_missing_subcommand_is_usage_error() -> None:
    with pytest.raises(SystemExit) as exc_info:
        main([])
    assert exc_info.value.code == 2


@pytest.mark.slow
def test_thickness_engine_skips_the_dot_shortcut(monkeypatch: pytest.MonkeyPatch, capsys: pytest.CaptureFixture[str]) -> None:
    seen: list[object] = []

    def fake_phi_pin_window(*args: object) -> None:
        seen.append(args[-1])
        raise PinWiggleError("stopped", code="budget_exhausted")

    monkeypatch.setattr(certify, "phi_pin_window", fake_phi_pin_window)
    argv = ["certify", "--phi", "dot", "--set1", "middle:1/5@[0,1]#6", "--pin", "1,1", "--delta", "1/100"]
    assert main(argv + ["--engine", "thickness"]) == 6
    assert seen == ["thickness"]
    assert main(argv + ["--engine", "auto"]) == 0
    assert seen == ["thickness"]
    capsys.readouterr()


def test_selftest(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["selftest", "--trials", "5", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["passed"] is True
    assert {c["check"] for c in data["checks"]} >= {"gap_lemma_agreement", "dot_mutations"}


@pytest.mark.slow
def test_distance_round_trip(tmp_path: Path) -> None:
    path = tmp_path / "dist.json"
    assert main(["certify", "--phi", "dist", "--pin", "0,0", "--out", str(path)]) == 0
    assert main(["verify", str(path), "--grid", "16"]) == 0
    assert main(["verify", str(path), "--no-oracle", "--corrupt-for-test", "anchor"]) == 3
