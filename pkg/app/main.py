from __future__ import annotations

import argparse
import json
import logging
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from app.cantor_core import (
    ThicknessEntry,
    build_set,
    epsilon_thickness,
    hausdorff_lower_bound,
    parse_set_spec,
    thickness,
    with_depth,
)
from app.certificates import from_document, interval_dict, read_document, to_document, write_document
from app.certify import (
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VERIFY_FAILED,
    CertifyRequest,
    check_certificate,
    exit_code_for,
    is_known_error,
    issue_certificate,
    parse_rational,
)
from app.config import SearchDefaults, Settings, load_dotenv
from app.evaluation import run_evaluation, run_property_trials
from app.intervals import working_precision
from app.logger import configure_logging, log_certificate_event
from app.metrics import JsonlMetricsSink, MetricsCollector
from app.mutation import mutate_certificate
from app.oracle import write_rows_csv
from app.pin_wiggle import SearchParameters
from app.precision import counting_escalations, set_default_policy
from app.svg import plot_certificate
from app.validation import validate_and_score

logger = logging.getLogger(__name__)


def _print(data: dict[str, Any], as_json: bool, lines: list[str]) -> None:
    if as_json:
        print(json.dumps(data, indent=2, sort_keys=True))
        return
    for line in lines:
        print(line)


def _search_parameters(settings: Settings, budget: int | None) -> tuple[SearchParameters, SearchDefaults | None]:
    path = Path(settings.search_defaults_path)
    defaults = SearchDefaults.from_path(path) if path.exists() else None
    params = defaults.with_budget(settings) if defaults else SearchParameters(
        max_halvings=settings.search_budget, derivative_budget=settings.derivative_budget
    )
    if budget is not None:
        params = replace(params, max_halvings=budget)
    return params, defaults


def _entry_dict(entry: ThicknessEntry) -> dict[str, Any]:
    return {
        "endpoint": str(entry.endpoint),
        "side": entry.side,
        "gap": interval_dict(*entry.gap),
        "bridge": interval_dict(*entry.bridge),
        "ratio": str(entry.ratio),
    }


def run_thickness(spec_text: str, epsilon: str | None, depth: int | None, as_json: bool) -> int:
    spec = parse_set_spec(spec_text)
    if depth is not None:
        spec = with_depth(spec, depth)
    stage = build_set(spec)
    report = thickness(stage)
    data: dict[str, Any] = {
        "set": stage.descriptor,
        "tau": str(report.tau),
        "tau_approx": float(report.tau),
        "argmin": _entry_dict(report.argmin),
        "dimension_lower_bound": hausdorff_lower_bound(report.tau),
        "limit_valid": stage.limit_valid,
        "entries": [_entry_dict(e) for e in report.entries],
    }
    lines = [f"tau = {report.tau} (~{float(report.tau):.6f})"]
    if epsilon is not None:
        eps_report = epsilon_thickness(stage, parse_rational(epsilon, "epsilon"))
        data["epsilon"] = str(eps_report.epsilon)
        data["tau_eps"] = str(eps_report.tau_eps)
        data["tau_eps_approx"] = float(eps_report.tau_eps)
        lines.append(f"tau_eps = {eps_report.tau_eps} (~{float(eps_report.tau_eps):.6f}) at epsilon = {eps_report.epsilon}")
    lines.append(f"dim_H >= {data['dimension_lower_bound']:.6f}")
    if not stage.limit_valid:
        lines.append("note: stage thickness only; not a bound for a limit set")
    _print(data, as_json, lines)
    return EXIT_OK


def run_certify(args: argparse.Namespace, settings: Settings) -> int:
    params, defaults = _search_parameters(settings, args.budget)
    metrics = MetricsCollector()
    request = CertifyRequest(
        phi=args.phi,
        set1=args.set1,
        set2=args.set2,
        pin=args.pin,
        delta=args.delta,
        tree=args.tree,
        skeleton=args.skeleton,
        engine=args.engine,
        depth=args.depth,
        domain_a=args.domain_a,
        domain_b=args.domain_b,
    )
    cert = issue_certificate(request, params, defaults, metrics)
    document = to_document(cert)
    log_certificate_event(
        logger, logging.INFO, "Certificate written", certificate_id=document["certificate_id"], command="certify"
    )
    if args.out:
        write_document(document, args.out)
    if args.metrics:
        JsonlMetricsSink(args.metrics).emit({"command": "certify", **metrics.snapshot()})
    if args.out and not args.json:
        print(f"certificate {document['certificate_id'][:12]} written to {args.out}")
        if not cert.limit_valid:
            print("note: stage-only certificate; the stage sets do not carry limit thickness")
        return EXIT_OK
    print(json.dumps(document, indent=2, sort_keys=True))
    return EXIT_OK


def run_verify(args: argparse.Namespace, settings: Settings) -> int:
    params, _ = _search_parameters(settings, None)
    metrics = MetricsCollector()
    started = time.perf_counter()
    document = read_document(args.certificate)
    cert, _model = from_document(document)
    scored = validate_and_score(document)
    if args.corrupt_for_test:
        cert = mutate_certificate(cert, args.corrupt_for_test)
    with counting_escalations(metrics):
        outcome = check_certificate(
            cert,
            params,
            depth=args.depth,
            pin_grid=args.grid or settings.oracle_grid,
            t_grid=args.t_grid or settings.oracle_t_grid,
            pair_cap=settings.oracle_pair_cap,
            seed=args.seed,
            with_rows=bool(args.csv),
            run_oracle=not args.no_oracle,
        )
    violations = [f"{v['code']}: {v['message']}" for v in scored["violations"] if v["severity"] == "error"]
    violations.extend(outcome.violations)
    warnings = outcome.warnings + [v["message"] for v in scored["violations"] if v["severity"] == "warning"]
    status = "pass" if not violations else "fail"
    latency_ms = int((time.perf_counter() - started) * 1000)

    metrics.increment("verification_pass" if status == "pass" else "verification_fail")
    metrics.observe_latency(latency_ms)
    log_certificate_event(
        logger,
        logging.INFO if status == "pass" else logging.WARNING,
        "Certificate verified",
        certificate_id=document.get("certificate_id"),
        command="verify",
        outcome=status,
        latency_ms=latency_ms,
    )
    if args.metrics:
        JsonlMetricsSink(args.metrics).emit({"command": "verify", **metrics.snapshot()})
    if args.csv and outcome.oracle is not None:
        write_rows_csv(outcome.oracle.rows, args.csv)
    if args.stamp and status == "pass" and not args.corrupt_for_test:
        document["verification"] = {
            "verified_at_utc": datetime.now(timezone.utc).isoformat(),
            "status": status,
            "violations": [],
            "oracle_depth": args.depth,
        }
        write_document(document, args.certificate)

    report = outcome.oracle
    data = {
        "certificate_id": document.get("certificate_id"),
        "status": status,
        "violations": violations,
        "warnings": warnings,
        "oracle": None
        if report is None
        else {
            "resolution": report.resolution,
            "checked_pins": report.checked_pins,
            "checked_targets": report.checked_targets,
            "max_residual": report.max_residual,
            "failures": len(report.failures),
        },
    }
    lines = [f"verification {status}"]
    lines.extend(f"  violation: {v}" for v in violations)
    lines.extend(f"  warning: {w}" for w in warnings)
    if report is not None:
        lines.append(
            f"  oracle: {report.checked_targets} targets, worst residual {report.max_residual:.3e} "
            f"(resolution {report.resolution:.3e})"
        )
    _print(data, args.json, lines)
    return EXIT_OK if status == "pass" else EXIT_VERIFY_FAILED


def run_plot(certificate_path: str, out: str) -> int:
    cert, _ = from_document(read_document(certificate_path))
    plot_certificate(cert).save(out)
    print(f"figure written to {out}")
    return EXIT_OK


def run_selftest(seed: int, trials: int, as_json: bool, settings: Settings) -> int:
    params, defaults = _search_parameters(settings, None)
    results = run_property_trials(seed, trials)
    golden = [
        run_evaluation(path, params, defaults)
        for path in (Path("eval/golden_thickness.json"), Path("eval/golden_certificates.json"))
        if path.exists()
    ]
    golden_ok = all(r["summary"]["matched_total"] == r["summary"]["cases_total"] for r in golden)
    passed = golden_ok and all(r.passed for r in results)
    lines = [f"golden {r['dataset']}: {r['summary']['matched_total']}/{r['summary']['cases_total']} matched" for r in golden]
    lines += [
        f"{r.check}: {'pass' if r.passed else 'FAIL'} ({r.trials} trials)" + (f" {r.detail}" if r.detail else "")
        for r in results
    ]
    _print(
        {"seed": seed, "passed": passed, "checks": [r.__dict__ for r in results], "golden": [r["summary"] for r in golden]},
        as_json,
        lines,
    )
    return EXIT_OK if passed else EXIT_VERIFY_FAILED


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Thickness, pin-wiggling and tree certificates for Cantor products")
    subparsers = parser.add_subparsers(dest="command", required=True)

    thick = subparsers.add_parser("thickness", help="Exact thickness of a stage set")
    thick.add_argument("set_spec")
    thick.add_argument("--epsilon", default=None)
    thick.add_argument("--depth", type=int, default=None)
    thick.add_argument("--json", action="store_true")

    certify = subparsers.add_parser("certify", help="Emit a pin or tree certificate")
    certify.add_argument("--phi", default="dist", help="dist, dot, pnorm:<p> or implicit:<base>")
    certify.add_argument("--set1", default="middle:1/5@[0,1]#8")
    certify.add_argument("--set2", default="same")
    certify.add_argument("--pin", default=None, help="Pin point written as x,y")
    certify.add_argument("--delta", default=None, help="Pin box half-width for dot certificates")
    certify.add_argument("--tree", default=None, help="chain:k, star:n, a named skeleton, or an edge file")
    certify.add_argument("--skeleton", default=None, help="Named skeleton or a file of x y lines")
    certify.add_argument("--engine", choices=["auto", "thickness", "middle-thirds"], default="auto")
    certify.add_argument("--depth", type=int, default=None)
    certify.add_argument("--budget", type=int, default=None)
    certify.add_argument("--domain-a", default=None)
    certify.add_argument("--domain-b", default=None)
    certify.add_argument("--out", default=None)
    certify.add_argument("--metrics", default=None, help="Append a metrics snapshot to this JSONL file")
    certify.add_argument("--json", action="store_true")

    verify = subparsers.add_parser("verify", help="Re-check a certificate file")
    verify.add_argument("certificate")
    verify.add_argument("--depth", type=int, default=None, help="Oracle stage depth; at least the certificate's")
    verify.add_argument("--grid", type=int, default=None, help="Oracle pin count, rounded up to a square lattice")
    verify.add_argument("--t-grid", type=int, default=None, help="Oracle target count per pin")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--stamp", action="store_true")
    verify.add_argument("--corrupt-for-test", default=None, metavar="FIELD")
    verify.add_argument("--csv", default=None, help="Write one oracle row per grid cell")
    verify.add_argument("--no-oracle", action="store_true")
    verify.add_argument("--metrics", default=None)
    verify.add_argument("--json", action="store_true")

    plot = subparsers.add_parser("plot", help="Render a certificate as SVG")
    plot.add_argument("certificate")
    plot.add_argument("--out", required=True)

    selftest = subparsers.add_parser("selftest", help="Run randomized property trials")
    selftest.add_argument("--seed", type=int, default=0)
    selftest.add_argument("--trials", type=int, default=1000)
    selftest.add_argument("--json", action="store_true")
    return parser


def _dispatch(args: argparse.Namespace, settings: Settings) -> int:
    if args.command == "thickness":
        return run_thickness(args.set_spec, args.epsilon, args.depth, args.json)
    if args.command == "certify":
        return run_certify(args, settings)
    if args.command == "verify":
        return run_verify(args, settings)
    if args.command == "plot":
        return run_plot(args.certificate, args.out)
    if args.command == "selftest":
        return run_selftest(args.seed, args.trials, args.json, settings)
    return EXIT_USAGE


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        settings = Settings.from_env()
    except ValueError as exc:
        print(f"error: {exc}")
        return EXIT_USAGE
    configure_logging(settings.log_level, json_logs=settings.json_logs)
    set_default_policy(settings.precision_policy)
    try:
        with working_precision(settings.precision_bits):
            return _dispatch(args, settings)
    except Exception as exc:  # noqa: BLE001
        if not is_known_error(exc):
            raise
        code = exit_code_for(exc)
        log_certificate_event(logger, logging.ERROR, str(exc), command=args.command, outcome=getattr(exc, "code", None))
        print(f"error: {exc}")
        return code


if __name__ == "__main__":
    raise SystemExit(main())
