from __future__ import annotations

import json
import os
from fractions import Fraction
from pathlib import Path

import pytest

from app.config import SearchDefaults, Settings, load_dotenv

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(autouse=True)
def clean_env(monkeypatch: pytest.MonkeyPatch) -> None:
    for name in list(os.environ):
        if name.startswith("THICK_") or name == "LOG_LEVEL":
            monkeypatch.delenv(name, raising=False)


def test_settings_defaults() -> None:
    settings = Settings.from_env()
    assert settings.precision_bits == 128
    assert (settings.oracle_grid, settings.oracle_t_grid) == (128, 128)
    assert settings.log_level == "INFO"
    assert settings.json_logs is True
    assert settings.precision_policy.bits_for_attempt(1) == 128


def test_settings_read_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("THICK_PRECISION_BITS", "64")
    monkeypatch.setenv("THICK_PRECISION_CAP_BITS", "256")
    monkeypatch.setenv("THICK_ORACLE_GRID", "16")
    monkeypatch.setenv("THICK_ORACLE_T_GRID", "32")
    monkeypatch.setenv("THICK_JSON_LOGS", "off")
    monkeypatch.setenv("LOG_LEVEL", "debug")

    settings = Settings.from_env()
    assert settings.precision_policy.bits_for_attempt(3) == 256
    assert settings.oracle_grid == 16
    assert settings.oracle_t_grid == 32
    assert settings.json_logs is False
    assert settings.log_level == "DEBUG"


@pytest.mark.parametrize("value", ["0", "-3", "many"])
def test_settings_reject_non_positive_integers(monkeypatch: pytest.MonkeyPatch, value: str) -> None:
    monkeypatch.setenv("THICK_SEARCH_BUDGET", value)
    with pytest.raises(ValueError, match="THICK_SEARCH_BUDGET"):
        Settings.from_env()


def test_settings_reject_cap_below_start(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("THICK_PRECISION_BITS", "512")
    monkeypatch.setenv("THICK_PRECISION_CAP_BITS", "256")
    with pytest.raises(ValueError, match="THICK_PRECISION_CAP_BITS"):
        Settings.from_env()


def test_settings_reject_unknown_log_level(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("LOG_LEVEL", "chatty")
    with pytest.raises(ValueError, match="LOG_LEVEL"):
        Settings.from_env()


def test_shipped_search_defaults_load() -> None:
    defaults = SearchDefaults.from_path(ROOT / "config" / "search_defaults.json")
    assert defaults.skeletons["chain1"] == ((Fraction(0), Fraction(0)), (Fraction(1), Fraction(1)))
    assert defaults.tree_edges["star4"] == ((1, 2), (1, 3), (1, 4))
    assert defaults.parameters.offset_span == 24


def test_search_defaults_with_budget() -> None:
    defaults = SearchDefaults.from_path(ROOT / "config" / "search_defaults.json")
    params = defaults.with_budget(Settings(search_budget=5, derivative_budget=99))
    assert params.max_halvings == 5
    assert params.derivative_budget == 99
    assert params.ratio_pieces == defaults.parameters.ratio_pieces


@pytest.mark.parametrize(
    ("content", "message"),
    [
        ({"search": {"warp_factor": 3}}, "unknown search parameters"),
        ({"search": {"offset_span": 0}}, "positive integer"),
        ({"skeletons": {"bad": {"points": [["0", "0"]], "edges": [[1, 2]]}}}, "one edge fewer"),
        ({"skeletons": {"bad": {"points": [["0"]], "edges": []}}}, r"\[x, y\]"),
    ],
)
def test_search_defaults_reject_bad_files(tmp_path: Path, content: dict, message: str) -> None:
    path = tmp_path / "defaults.json"
    path.write_text(json.dumps(content), encoding="utf-8")
    with pytest.raises(ValueError, match=message):
        SearchDefaults.from_path(path)


def test_load_dotenv_keeps_existing_values(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    env_file = tmp_path / ".env"
    env_file.write_text('# tuning\nTHICK_ORACLE_GRID="36"\nLOG_LEVEL=WARNING\nnot a pair\n', encoding="utf-8")
    monkeypatch.setenv("LOG_LEVEL", "ERROR")
    monkeypatch.delenv("THICK_ORACLE_GRID", raising=False)
    load_dotenv(env_file)
    assert os.environ["THICK_ORACLE_GRID"] == "36"
    assert os.environ["LOG_LEVEL"] == "ERROR"
    del os.environ["THICK_ORACLE_GRID"]
    load_dotenv(tmp_path / "missing.env")
    assert "THICK_ORACLE_GRID" not in os.environ
