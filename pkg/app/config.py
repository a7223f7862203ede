from __future__ import annotations

import json
import os
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any

from app.intervals import DEFAULT_PRECISION_BITS
from app.pin_wiggle import SearchParameters
from app.precision import DEFAULT_PRECISION_CAP_BITS, PrecisionPolicy

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def _parse_bool(value: str | None, default: bool = False) -> bool:
    if value is None:
        return default
    return value.strip().lower() in {"1", "true", "yes", "on"}


def _positive_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw.strip())
    except ValueError:
        raise ValueError(f"{name} must be a positive integer") from None
    if value <= 0:
        raise ValueError(f"{name} must be a positive integer")
    return value


@dataclass(frozen=True)
class Settings:
    precision_bits: int = DEFAULT_PRECISION_BITS
    precision_cap_bits: int = DEFAULT_PRECISION_CAP_BITS
    log_level: str = "INFO"
    oracle_grid: int = 128
    oracle_t_grid: int = 128
    oracle_pair_cap: int = 2**26
    derivative_budget: int = 2**14
    search_budget: int = 64
    search_defaults_path: str = "config/search_defaults.json"
    json_logs: bool = True

    @property
    def precision_policy(self) -> PrecisionPolicy:
        return PrecisionPolicy(start_bits=self.precision_bits, cap_bits=self.precision_cap_bits)

    @classmethod
    def from_env(cls) -> "Settings":
        precision_bits = _positive_int("THICK_PRECISION_BITS", DEFAULT_PRECISION_BITS)
        cap_bits = _positive_int("THICK_PRECISION_CAP_BITS", DEFAULT_PRECISION_CAP_BITS)
        if cap_bits < precision_bits:
            raise ValueError("THICK_PRECISION_CAP_BITS must be at least THICK_PRECISION_BITS")

        log_level = os.getenv("LOG_LEVEL", "INFO").strip().upper()
        if log_level not in LOG_LEVELS:
            raise ValueError(f"LOG_LEVEL must be one of: {', '.join(LOG_LEVELS)}")

        return cls(
            precision_bits=precision_bits,
            precision_cap_bits=cap_bits,
            log_level=log_level,
            oracle_grid=_positive_int("THICK_ORACLE_GRID", 128),
            oracle_t_grid=_positive_int("THICK_ORACLE_T_GRID", 128),
            oracle_pair_cap=_positive_int("THICK_ORACLE_PAIR_CAP", 2**26),
            derivative_budget=_positive_int("THICK_DERIVATIVE_BUDGET", 2**14),
            search_budget=_positive_int("THICK_SEARCH_BUDGET", 64),
            search_defaults_path=os.getenv("THICK_SEARCH_DEFAULTS_PATH", "config/search_defaults.json"),
            json_logs=_parse_bool(os.getenv("THICK_JSON_LOGS"), default=True),
        )


def _point(raw: Any) -> tuple[Fraction, Fraction]:
    if not isinstance(raw, list) or len(raw) != 2:
        raise ValueError("skeleton points must be [x, y] pairs")
    return Fraction(str(raw[0])), Fraction(str(raw[1]))


@dataclass(frozen=True)
class SearchDefaults:
    """Search tuning and the documented skeletons, loaded from JSON."""

    parameters: SearchParameters
    skeletons: dict[str, tuple[tuple[Fraction, Fraction], ...]]
    tree_edges: dict[str, tuple[tuple[int, int], ...]]

    @classmethod
    def from_path(cls, path: str | Path) -> "SearchDefaults":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError("search defaults file must contain a JSON object")
        search = data.get("search", {})
        if not isinstance(search, dict):
            raise ValueError("'search' must be an object")
        known = SearchParameters.__dataclass_fields__
        unknown = sorted(set(search) - set(known))
        if unknown:
            raise ValueError(f"unknown search parameters: {', '.join(unknown)}")
        for key, value in search.items():
            if not isinstance(value, int) or value <= 0:
                raise ValueError(f"search.{key} must be a positive integer")
        skeletons: dict[str, tuple[tuple[Fraction, Fraction], ...]] = {}
        edges: dict[str, tuple[tuple[int, int], ...]] = {}
        for name, entry in data.get("skeletons", {}).items():
            skeletons[name] = tuple(_point(p) for p in entry.get("points", []))
            edges[name] = tuple((int(a), int(b)) for a, b in entry.get("edges", []))
            if len(edges[name]) != len(skeletons[name]) - 1:
                raise ValueError(f"skeleton {name} must have one edge fewer than points")
        return cls(parameters=SearchParameters(**search), skeletons=skeletons, tree_edges=edges)

    def with_budget(self, settings: Settings) -> SearchParameters:
        params = self.parameters
        return SearchParameters(
            max_halvings=settings.search_budget,
            offset_span=params.offset_span,
            sigma_halvings=params.sigma_halvings,
            ratio_pieces=params.ratio_pieces,
            anchor_candidates=params.anchor_candidates,
            epsilon_bits=params.epsilon_bits,
            derivative_budget=settings.derivative_budget,
        )


def load_dotenv(path: str | Path = ".env") -> None:
    env_path = Path(path)
    if not env_path.exists():
        return
    for line in env_path.read_text(encoding="utf-8").splitlines():
        entry = line.strip()
        if not entry or entry.startswith("#") or "=" not in entry:
            continue
        key, value = entry.split("=", 1)
        key = key.strip()
        value = value.strip().strip('"').strip("'")
        os.environ.setdefault(key, value)
