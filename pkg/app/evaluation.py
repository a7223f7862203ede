from __future__ import annotations

import argparse
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from app.cantor_core import (
    CantorCoreError,
    StageSet,
    affine_image,
    build_middle_set,
    build_set,
    epsilon_thickness,
    hausdorff_lower_bound,
    thickness,
)
from app.certify import (
    EXIT_OK,
    CertifyRequest,
    check_certificate,
    exit_code_for,
    is_known_error,
    issue_certificate,
)
from app.config import SearchDefaults, Settings, load_dotenv
from app.geometry import GeometryError, PhiSpec, PinCurve, as_pair, image_stage_thickness, image_thickness_lower_bound
from app.intervals import CertifiedInterval
from app.mutation import fields_for, mutate_certificate
from app.newhouse import gap_lemma_intersect
from app.oracle import brute_force_intersection
from app.pin_wiggle import SearchParameters, dot_pin_window


@dataclass
class CheckResult:
    check: str
    passed: bool
    trials: int
    detail: str | None = None


def evaluate_thickness_case(case: dict[str, Any]) -> dict[str, Any]:
    spec = str(case.get("set", "")).strip()
    expected = case.get("expected_tau")
    try:
        stage = build_set(spec)
        tau = thickness(stage).tau
    except CantorCoreError as exc:
        matched = expected is None and case.get("expected_error") == exc.code
        return {"set": spec, "status": "ok" if matched else "error", "matched": matched, "error": exc.code}
    except ValueError as exc:
        return {"set": spec, "status": "error", "matched": False, "error": "parse_error", "details": str(exc)}
    matched = expected is not None and tau == Fraction(str(expected))
    row: dict[str, Any] = {"set": spec, "status": "ok", "tau": str(tau), "matched": matched}
    if "epsilon" in case:
        tau_eps = epsilon_thickness(stage, Fraction(str(case["epsilon"]))).tau_eps
        row["tau_eps"] = str(tau_eps)
        row["matched"] = matched and tau_eps == Fraction(str(case["expected_tau_eps"]))
    return row


def evaluate_certificate_case(
    case: dict[str, Any], params: SearchParameters, defaults: SearchDefaults | None, run_oracle: bool
) -> dict[str, Any]:
    name = str(case.get("id", "unnamed"))
    fields = {key: case[key] for key in CertifyRequest.__dataclass_fields__ if key in case}
    request = CertifyRequest(**fields)
    expected_exit = int(case.get("expected_exit", EXIT_OK))
    try:
        cert = issue_certificate(request, params, defaults)
    except Exception as exc:  # noqa: BLE001
        if not is_known_error(exc):
            return {"id": name, "status": "error", "matched": False, "error": "unhandled_exception", "details": str(exc)}
        code = exit_code_for(exc)
        return {"id": name, "status": "ok", "exit_code": code, "matched": code == expected_exit, "details": str(exc)}
    outcome = check_certificate(cert, params, run_oracle=run_oracle)
    matched = expected_exit == EXIT_OK and outcome.passed
    expected_t = case.get("expected_t_interval")
    if expected_t is not None:
        recorded = cert.t_interval if isinstance(cert.t_interval, tuple) else (cert.t_interval.lo, cert.t_interval.hi)
        matched = matched and tuple(recorded) == tuple(Fraction(str(v)) for v in expected_t)
    expected_edges = case.get("expected_edges")
    if expected_edges is not None:
        matched = matched and len(getattr(cert, "edge_intervals", ())) == int(expected_edges)
    return {
        "id": name,
        "status": "ok",
        "exit_code": EXIT_OK,
        "matched": matched,
        "violations": outcome.violations,
        "warnings": outcome.warnings,
    }


def run_evaluation(
    dataset_path: Path,
    params: SearchParameters,
    defaults: SearchDefaults | None = None,
    include_slow: bool = False,
    run_oracle: bool = True,
) -> dict[str, Any]:
    payload = json.loads(dataset_path.read_text(encoding="utf-8"))
    if not isinstance(payload, dict):
        raise ValueError("Dataset JSON must be an object with a 'cases' array.")
    cases = payload.get("cases")
    if not isinstance(cases, list) or not cases:
        raise ValueError("Dataset JSON requires a non-empty 'cases' array.")

    results = []
    skipped = 0
    for case in cases:
        if case.get("slow") and not include_slow:
            skipped += 1
            continue
        if "set" in case:
            results.append(evaluate_thickness_case(case))
        else:
            results.append(evaluate_certificate_case(case, params, defaults, run_oracle))
    matched = sum(1 for r in results if r.get("matched"))
    return {
        "dataset": str(dataset_path),
        "summary": {
            "cases_total": len(results),
            "matched_total": matched,
            "skipped_slow": skipped,
            "pass_rate": round(matched / len(results), 4) if results else 0.0,
        },
        "results": results,
    }


# randomized property trials


def _random_middle_set(rng: np.random.Generator, max_depth: int) -> StageSet:
    ratio = Fraction(int(rng.integers(1, 4)), int(rng.integers(4, 9)))
    return build_middle_set(ratio, (Fraction(0), Fraction(1)), int(rng.integers(1, max_depth + 1)))


def check_thickness_exactness() -> CheckResult:
    trials = 0
    one_third = Fraction(1, 3)
    for depth in range(1, 11):
        trials += 1
        if thickness(build_middle_set(one_third, (Fraction(0), Fraction(1)), depth)).tau != 1:
            return CheckResult("thickness_exact", False, trials, f"middle-thirds stage {depth}")
    for k in (6, 10, 40):
        for depth in range(1, 9):
            trials += 1
            tau = thickness(build_middle_set(Fraction(2, k), (Fraction(0), Fraction(1)), depth)).tau
            if tau != Fraction(k - 2, 4):
                return CheckResult("thickness_exact", False, trials, f"middle-2/{k} stage {depth} gave {tau}")
    return CheckResult("thickness_exact", True, trials)


def check_affine_invariance(rng: np.random.Generator, trials: int) -> CheckResult:
    for i in range(trials):
        stage = _random_middle_set(rng, 5)
        scale = Fraction(int(rng.integers(1, 50)), int(rng.integers(1, 50))) * (1 if rng.random() < 0.5 else -1)
        shift = Fraction(int(rng.integers(-100, 100)), int(rng.integers(1, 20)))
        if thickness(affine_image(stage, scale, shift)).tau != thickness(stage).tau:
            return CheckResult("affine_invariance", False, i + 1, f"{stage.descriptor} scale={scale} shift={shift}")
    return CheckResult("affine_invariance", True, trials)


def check_gap_lemma_agreement(rng: np.random.Generator, trials: int) -> CheckResult:
    ratios = (Fraction(1, 3), Fraction(1, 4), Fraction(1, 5))
    for i in range(trials):
        r1 = ratios[int(rng.integers(0, 3))]
        r2 = ratios[int(rng.integers(0, 3))]
        start = Fraction(int(rng.integers(1, 10)), 10)
        length = 1 - start + Fraction(int(rng.integers(1, 10)), 10)
        a = build_middle_set(r1, (Fraction(0), Fraction(1)), int(rng.integers(1, 7)))
        b = build_middle_set(r2, (start, start + length), int(rng.integers(1, 7)))
        witness = gap_lemma_intersect(a, b)
        point = witness.point
        if point is None or not (a.contains(point) and b.contains(point)):
            return CheckResult("gap_lemma_agreement", False, i + 1, f"{a.descriptor} vs {b.descriptor}")
        if brute_force_intersection(a, b) is None:
            return CheckResult("gap_lemma_agreement", False, i + 1, "sweep found no overlap")
    return CheckResult("gap_lemma_agreement", True, trials)


def check_image_thickness(rng: np.random.Generator, trials: int = 100) -> CheckResult:
    stage = build_middle_set(Fraction(1, 5), (Fraction(0), Fraction(1)), 6)
    corners = [Fraction(3, 5) + Fraction(3, 25) * i + Fraction(6, 125) * j for i in (0, 2) for j in (0, 2)]
    for i in range(trials):
        corner = corners[int(rng.integers(0, len(corners)))]
        window = (corner, corner + Fraction(8, 125))
        pin = (Fraction(-int(rng.integers(0, 17)), 32), Fraction(-int(rng.integers(0, 17)), 32))
        target = 2 + Fraction(int(rng.integers(0, 33)), 32)
        curve = PinCurve(PhiSpec("euclidean"), as_pair(pin), CertifiedInterval.exact(target))
        try:
            bound = image_thickness_lower_bound(stage, window, curve, Fraction(1, 4))
        except GeometryError as exc:
            return CheckResult("image_thickness", False, i + 1, f"window {window} pin {pin}: {exc}")
        if not 0 < bound <= image_stage_thickness(stage, window, curve):
            return CheckResult("image_thickness", False, i + 1, f"window {window} pin {pin} t={target} bound={bound}")
    return CheckResult("image_thickness", True, trials)


def check_dimension_bound() -> CheckResult:
    ok = abs(hausdorff_lower_bound(1) - math.log(2) / math.log(3)) < 1e-12
    ok = ok and abs(hausdorff_lower_bound(Fraction(1, 2)) - 0.5) < 1e-12
    return CheckResult("dimension_bound", ok, 2)


def check_dot_mutations() -> CheckResult:
    stage = build_middle_set(Fraction(1, 3), (Fraction(0), Fraction(1)), 8)
    cert = dot_pin_window(stage, stage, (Fraction(1), Fraction(1)), Fraction(1, 10))
    if cert.t_interval != (Fraction(11, 10), Fraction(9, 5)) or cert.formula_length != Fraction(7, 10):
        return CheckResult("dot_mutations", False, 1, f"unexpected target interval {cert.t_interval}")
    params = SearchParameters()
    if not check_certificate(cert, params, run_oracle=False).passed:
        return CheckResult("dot_mutations", False, 1, "fresh certificate fails")
    fields = fields_for(cert)
    for name in fields:
        if check_certificate(mutate_certificate(cert, name), params, run_oracle=False).passed:
            return CheckResult("dot_mutations", False, len(fields), f"mutant {name} survived")
    return CheckResult("dot_mutations", True, len(fields) + 1)


def run_property_trials(seed: int = 0, trials: int = 1000) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [
        check_thickness_exactness(),
        check_affine_invariance(rng, trials),
        check_gap_lemma_agreement(rng, trials),
        check_image_thickness(rng, min(trials, 100)),
        check_dimension_bound(),
        check_dot_mutations(),
    ]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Evaluate thickness values and certificates against golden sets.")
    parser.add_argument(
        "--dataset",
        action="append",
        default=None,
        help="Dataset JSON with a top-level 'cases' array; repeatable.",
    )
    parser.add_argument("--slow", action="store_true", help="Also run cases marked slow.")
    parser.add_argument("--no-oracle", action="store_true", help="Skip brute-force oracle passes.")
    parser.add_argument("--seed", type=int, default=0, help="Seed for randomized property trials.")
    parser.add_argument("--trials", type=int, default=1000, help="Randomized trials per property.")
    parser.add_argument(
        "--output",
        default="logs/golden_eval_report.json",
        help="Where to write full JSON report.",
    )
    parser.add_argument(
        "--fail-under",
        type=float,
        default=0.0,
        help="Exit with code 1 if the pass rate is below this value.",
    )
    return parser


def main() -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args()
    settings = Settings.from_env()
    datasets = [Path(p) for p in (args.dataset or ["eval/golden_thickness.json", "eval/golden_certificates.json"])]
    for path in datasets:
        if not path.exists():
            parser.error(f"Dataset file not found: {path}")

    defaults_path = Path(settings.search_defaults_path)
    defaults = SearchDefaults.from_path(defaults_path) if defaults_path.exists() else None
    params = defaults.with_budget(settings) if defaults else SearchParameters(max_halvings=settings.search_budget)

    reports = [run_evaluation(p, params, defaults, include_slow=args.slow, run_oracle=not args.no_oracle) for p in datasets]
    properties = run_property_trials(args.seed, args.trials)
    cases_total = sum(r["summary"]["cases_total"] for r in reports)
    matched_total = sum(r["summary"]["matched_total"] for r in reports)
    pass_rate = round(matched_total / cases_total, 4) if cases_total else 0.0
    report = {
        "summary": {"cases_total": cases_total, "matched_total": matched_total, "pass_rate": pass_rate},
        "datasets": reports,
        "properties": [result.__dict__ for result in properties],
    }

    output_path = Path(args.output)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_text(json.dumps(report, indent=2), encoding="utf-8")

    print(f"Golden evaluation complete | cases={cases_total} matched={matched_total} pass_rate={pass_rate}")
    for result in properties:
        print(f"Property {result.check}: {'pass' if result.passed else 'FAIL'} ({result.trials} trials)")
    print(f"Report written to: {output_path}")

    if not all(result.passed for result in properties):
        return 1
    fail_under = float(args.fail_under)
    if fail_under > 0 and pass_rate < fail_under:
        print(f"Pass rate {pass_rate} is below fail-under threshold {fail_under}")
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
