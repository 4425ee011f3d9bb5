"""
Command-line entry point.

Exit codes: 0 success, 1 unexpected error, 2 unreadable input or configuration,
3 degenerate geometry or too little data, 4 infeasible matching.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from .config import get_settings, load_run_config
from .exceptions import ConfigError, MarkerMatchError
from .models.run_config import MatchingMode, PriorVariant, QCScale, RunConfig
from .models.report import AlignmentReport
from .models.transform import AffineTransform
from .services.alignment import AlignmentService
from .services.overlay import emit_overlay, render_qc_overlay
from .services.spot_io import (
    atomic_write_text,
    parse_column_mapping,
    parse_spot_file,
    write_report,
    write_spot_file,
    write_trace,
)
from .services.synthetic import generate_synthetic
from .telemetry import configure_tracing, shutdown_tracing, stage

logger = logging.getLogger("markermatch.cli")

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# gross_flat is the screening prior; it needs marker-only input
MAIN_PRIORS = [v.value for v in PriorVariant if v is not PriorVariant.GROSS_FLAT]


def setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, get_settings().log_level.upper())
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "prior": args.prior,
        "sigma_star2": args.sigma_star2,
        "cluster_radius": args.cluster_radius,
        "qc_markers": args.qc_markers,
        "p_m": args.p_m,
        "qc_scale": args.qc_scale,
        "convergence_exponent": args.convergence_exponent,
        "max_iterations": args.max_iterations,
        "sigma2": args.sigma2,
        "omega_margin": args.omega_margin,
        "matching": args.matching,
        "n_markers": args.n_markers,
    }


def _run_config(args: argparse.Namespace, extra: Optional[Dict[str, Any]] = None) -> RunConfig:
    overrides = _overrides(args)
    overrides.update(extra or {})
    try:
        return load_run_config(args.config, overrides)
    except ValidationError as e:
        raise ConfigError(f"invalid run configuration: {e}")


def _emit(report_json: str, out: Optional[str]) -> None:
    if out:
        atomic_write_text(out, report_json)
    else:
        sys.stdout.write(report_json)


def cmd_align(args: argparse.Namespace) -> int:
    config = _run_config(args)
    service = AlignmentService(get_settings())
    run = service.align_files(
        Path(args.mu),
        Path(args.x),
        config,
        columns=parse_column_mapping(args.columns),
        reverse_check=args.reverse_check,
    )
    _emit(run.report.model_dump_json(indent=2) + "\n", args.out)
    if args.trace:
        write_trace(run.trace, args.trace)
    if args.overlay:
        emit_overlay(run.report, run.mu, run.x, args.overlay)
    if not run.report.converged:
        logger.warning("EM did not converge; the report is from the last iteration")
    return 0


def cmd_qc_markers(args: argparse.Namespace) -> int:
    config = _run_config(args)
    columns = parse_column_mapping(args.columns)
    with stage("parse"):
        mu = parse_spot_file(args.mu, columns, config.n_markers)
        x = parse_spot_file(args.x, columns, config.n_markers)
    k = max(mu.n_slots, x.n_slots)
    qc = AlignmentService(get_settings()).screen(mu.padded(k), x.padded(k), config)
    _emit(qc.report.model_dump_json(indent=2) + "\n", args.out)
    if args.overlay:
        atomic_write_text(
            args.overlay,
            render_qc_overlay(
                qc.report, qc.mu_markers, qc.x_markers, qc.labels, qc.before, qc.after
            ),
        )
    for entry in qc.report.markers:
        if entry.marker not in qc.report.retained_markers:
            logger.info(f"Marker {entry.marker}: {entry.outcome.value}")
    return 0


def _parse_warp(text: str) -> AffineTransform:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"--warp '{text}' is not a list of numbers")
    if len(values) != 6:
        raise ConfigError("--warp takes a11,a12,a21,a22,b1,b2")
    return AffineTransform(A=np.array(values[:4]).reshape(2, 2), b=np.array(values[4:]))


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        config = RunConfig(seed=args.seed, n_markers=args.n_markers)
    except ValidationError as e:
        raise ConfigError(f"invalid run configuration: {e}")
    try:
        pair = generate_synthetic(
            config,
            n_points=args.n_points,
            warp=_parse_warp(args.warp),
            noise_sd=args.noise_sd,
            spurious_rate=args.spurious_rate,
            missing_rate=args.missing_rate,
            corrupt_markers=args.corrupt_markers,
            corruption_distance=args.corruption_distance,
            dropout_rate=args.dropout_rate,
            min_separation=args.min_separation,
        )
    except ValueError as e:
        raise ConfigError(f"invalid synthetic parameters: {e}")
    out_dir = Path(args.out_dir)
    write_spot_file(pair.mu, out_dir / "mu.tsv")
    write_spot_file(pair.x, out_dir / "x.tsv")
    write_report(pair.truth, out_dir / "truth.json")
    return 0


def cmd_overlay(args: argparse.Namespace) -> int:
    try:
        report = AlignmentReport.model_validate_json(Path(args.report).read_text(encoding="utf-8"))
    except (OSError, ValidationError) as e:
        raise ConfigError(f"cannot read report {args.report}: {e}")
    columns = parse_column_mapping(args.columns)
    mu = parse_spot_file(args.mu, columns)
    x = parse_spot_file(args.x, columns)
    emit_overlay(report, mu, x, args.out)
    return 0


def cmd_batch(args: argparse.Namespace) -> int:
    config = _run_config(args)
    summary = AlignmentService(get_settings()).run_batch(
        Path(args.manifest), config, max_workers=args.workers
    )
    _emit(summary.model_dump_json(indent=2) + "\n", args.summary)
    return summary.exit_code


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    settings = get_settings()
    uvicorn.run(
        "markermatch.main:app",
        host=args.host or settings.api_host,
        port=args.port or settings.api_port,
        log_level=settings.log_level.lower(),
    )
    return 0


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("run parameters (override the config file)")
    group.add_argument("--prior", choices=MAIN_PRIORS, help="Marker-identity prior")
    group.add_argument("--sigma2", type=float, help="Error variance (px^2)")
    group.add_argument("--sigma-star2", type=float, help="Marker-prior variance (px^2)")
    group.add_argument("--cluster-radius", type=float, help="Cluster prior radius (px)")
    group.add_argument("--p-m", type=float, help="Marker-identity probability")
    group.add_argument(
        "-l", "--convergence-exponent", type=float, help="Stop at mean squared change 10^-l"
    )
    group.add_argument("--max-iterations", type=int)
    group.add_argument("--matching", choices=[v.value for v in MatchingMode])
    group.add_argument("--omega-margin", type=float, help="Background margin in sigma")
    group.add_argument("--n-markers", type=int, help="K; default from the files")
    group.add_argument(
        "--qc-markers",
        dest="qc_markers",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="Screen markers before aligning",
    )
    group.add_argument(
        "--qc-scale",
        choices=[v.value for v in QCScale],
        help="Screening sigma^2 when --sigma2 is unset",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="markermatch", description="EM alignment of spot configurations with markers"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging and EM trace")
    parser.add_argument("--config", type=Path, help="Run configuration YAML")
    sub = parser.add_subparsers(dest="command", required=True)

    p_align = sub.add_parser("align", help="Align MU onto X and match spots")
    p_align.add_argument("mu", help="Spot file mapped onto x")
    p_align.add_argument("x", help="Reference spot file")
    p_align.add_argument("-o", "--out", help="Report path (default: stdout)")
    p_align.add_argument("--overlay", help="Also write an SVG overlay")
    p_align.add_argument("--trace", help="Write the EM trace as JSON lines")
    p_align.add_argument("--reverse-check", action="store_true", help="Also align X onto MU")
    p_align.add_argument("--columns", help="Column mapping, e.g. spot_id=ID,x=X,y=Y,marker=M")
    _add_run_options(p_align)
    p_align.set_defaults(func=cmd_align)

    p_qc = sub.add_parser("qc-markers", help="Flag grossly misallocated markers")
    p_qc.add_argument("mu")
    p_qc.add_argument("x")
    p_qc.add_argument("-o", "--out", help="Report path (default: stdout)")
    p_qc.add_argument("--overlay", help="SVG of marker pairs before and after exclusion")
    p_qc.add_argument("--columns")
    _add_run_options(p_qc)
    p_qc.set_defaults(func=cmd_qc_markers)

    p_synth = sub.add_parser("synth", help="Write a synthetic spot file pair with ground truth")
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--n-points", type=int, default=100)
    p_synth.add_argument("--n-markers", type=int, default=12)
    p_synth.add_argument("--warp", default="1,0,0,1,0,0", help="a11,a12,a21,a22,b1,b2")
    p_synth.add_argument("--noise-sd", type=float, default=0.0)
    p_synth.add_argument("--spurious-rate", type=float, default=0.0)
    p_synth.add_argument("--missing-rate", type=float, default=0.0)
    p_synth.add_argument("--dropout-rate", type=float, default=0.0)
    p_synth.add_argument("--corrupt-markers", type=int, default=0)
    p_synth.add_argument("--corruption-distance", type=float)
    p_synth.add_argument("--min-separation", type=float, default=0.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    p_overlay = sub.add_parser("overlay", help="Render a report over its spot files")
    p_overlay.add_argument("report")
    p_overlay.add_argument("mu")
    p_overlay.add_argument("x")
    p_overlay.add_argument("-o", "--out", required=True)
    p_overlay.add_argument("--columns")
    p_overlay.set_defaults(func=cmd_overlay)

    p_batch = sub.add_parser("batch", help="Align every pair in a YAML manifest")
    p_batch.add_argument("manifest")
    p_batch.add_argument("--workers", type=int, help="Thread pool size (default from manifest)")
    p_batch.add_argument("--summary", help="Summary path (default: stdout)")
    _add_run_options(p_batch)
    p_batch.set_defaults(func=cmd_batch)

    p_serve = sub.add_parser("serve", help="Run the HTTP API")
    p_serve.add_argument("--host")
    p_serve.add_argument("--port", type=int)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    configure_tracing(get_settings())
    try:
        return int(args.func(args))
    except MarkerMatchError as e:
        logger.error(str(e))
        return e.exit_code
    except Exception:
        logger.exception("Unexpected error")
        return 1
    finally:
        shutdown_tracing()


if __name__ == "__main__":
    sys.exit(main())
