"""Command-line entry point: ``tomokit reconstruct | simulate | validate``.

Exit codes: 0 success, 1 Monte Carlo check outside tolerance, 2 bad input or
failed computation.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .counts import DEFAULT_DELTA_THETA
from .exceptions import TomographyError
from .linear import DensityMatrix, build_tomography_set
from .mle import OptimizerOptions, mle_reconstruct
from .projection import default_states
from .report import SCHEMA, AnalysisOptions, analyze, emit, file_digest, format_counts, ingest
from .synthetic import NOISE_MODES, GeneratorConfig, generate_counts
from .validation import monte_carlo_validate

VAR_TOL = 0.15
RHO_TOL = 0.20


def _named_states() -> dict[str, np.ndarray]:
    e = np.eye(4)
    bell = lambda a, b, sign: (e[a] + sign * e[b]) / math.sqrt(2)  # noqa: E731
    kets = {"HH": e[0], "HV": e[1], "VH": e[2], "VV": e[3],
            "phi+": bell(0, 3, 1), "phi-": bell(0, 3, -1), "psi+": bell(1, 2, 1), "psi-": bell(1, 2, -1)}
    out = {k: np.outer(v, v.conj()) for k, v in kets.items()}
    out["mixed"] = np.eye(4) / 4
    out["werner"] = 0.9 * out["phi+"] + 0.1 * out["mixed"]
    return out


def _load_rho(args) -> DensityMatrix:
    if args.rho:
        path = Path(args.rho)
        if path.suffix == ".npy":
            return DensityMatrix(np.load(path))
        data = json.loads(path.read_text())
        if isinstance(data, dict):  # a complex matrix block as written in reports
            data = [[complex(c["re"], c["im"]) for c in row] for row in data["data"]]
        return DensityMatrix(np.array(data, dtype=complex))
    return DensityMatrix(_named_states()[args.state])


def _add_state_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--state", choices=sorted(_named_states()), default="werner", help="named true state")
    g.add_argument("--rho", help="true density matrix (.npy, or JSON nested list / report matrix block)")


def _add_common(p):
    p.add_argument("--delta-theta-deg", type=float, default=math.degrees(DEFAULT_DELTA_THETA),
                   help="RMS waveplate setting error in degrees (default 0.25)")
    p.add_argument("--exact-covariance", action="store_true",
                   help="keep the cross term of the count covariance in the error budget")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tomokit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tomokit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    rec = sub.add_parser("reconstruct", help="estimate a state from a counts file")
    rec.add_argument("counts", help="CSV: nu,label,h1_deg,q1_deg,h2_deg,q2_deg,count (angle columns optional)")
    rec.add_argument("--linear-only", action="store_true", help="skip the maximum-likelihood fit")
    rec.add_argument("--format", choices=("json", "text"), default="text")
    rec.add_argument("--max-evals", type=int, default=OptimizerOptions.max_evals)
    rec.add_argument("--rel-tol", type=float, default=OptimizerOptions.rel_tol)
    rec.add_argument("--param-tol", type=float, default=OptimizerOptions.param_tol)
    rec.add_argument("--s-path", choices=("model", "counts"), default=None,
                     help="s values used in the error budget (default: model for MLE, counts for linear)")
    rec.add_argument("--mc-validate", type=int, default=0, metavar="N",
                     help="also run an N-trial Monte Carlo check of the error bars")
    rec.add_argument("-o", "--output", help="write the report here instead of stdout")
    _add_common(rec)

    sim = sub.add_parser("simulate", help="write a synthetic counts file")
    _add_state_args(sim)
    sim.add_argument("--flux", type=float, default=10_000.0, help="expected counts scale N")
    sim.add_argument("--noise", choices=NOISE_MODES, default="poisson")
    sim.add_argument("-o", "--output", help="counts CSV path (default stdout)")
    _add_common(sim)

    val = sub.add_parser("validate", help="Monte Carlo check of the analytic error bars")
    src = val.add_mutually_exclusive_group()
    src.add_argument("--counts", help="use the MLE estimate from this counts file as the true state")
    src.add_argument("--state", choices=sorted(_named_states()), help="named true state (default werner)")
    src.add_argument("--rho", help="true density matrix file")
    val.add_argument("--flux", type=float, default=None, help="expected counts scale (default 10000 or the file's N)")
    val.add_argument("--trials", type=int, default=10_000)
    val.add_argument("--normalization", choices=("fixed", "observed"), default=None,
                     help="divide counts by the true flux (fixed) or by each trial's basis sum (observed); "
                          "default fixed, or observed with --exact-covariance")
    val.add_argument("--format", choices=("json", "text"), default="text")
    _add_common(val)
    return parser


def _write(data: bytes, output: str | None) -> None:
    if output:
        Path(output).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _error(exc: Exception, fmt: str) -> int:
    print(f"tomokit: error: {exc}", file=sys.stderr)
    if fmt == "json":
        body = {"schema": SCHEMA, "error": {"type": type(exc).__name__, "message": str(exc)}}
        for attr in ("row", "column"):
            if getattr(exc, attr, None) is not None:
                body["error"][attr] = getattr(exc, attr)
        sys.stdout.write(json.dumps(body, indent=2) + "\n")
    return 2


def cmd_reconstruct(args) -> int:
    dtheta = math.radians(args.delta_theta_deg)
    record, tset = ingest(args.counts, delta_theta=dtheta)
    opts = AnalysisOptions(
        linear_only=args.linear_only,
        delta_theta=dtheta,
        optimizer=OptimizerOptions(max_evals=args.max_evals, rel_tol=args.rel_tol, param_tol=args.param_tol),
        exact_covariance=args.exact_covariance,
        s_path=args.s_path,
        mc_trials=args.mc_validate,
        seed=args.seed,
    )
    source = {"path": str(args.counts), "sha256": file_digest(args.counts)}
    rep = analyze(record, tset, opts, source=source)
    _write(emit(rep, args.format), args.output)
    return 0


def cmd_simulate(args) -> int:
    cfg = GeneratorConfig(
        _load_rho(args), total_flux=args.flux, delta_theta=math.radians(args.delta_theta_deg),
        noise_mode=args.noise, seed=args.seed,
    )
    tset = build_tomography_set(default_states())
    record = generate_counts(cfg, tset)
    _write(format_counts(record, tset).encode(), args.output)
    return 0


def cmd_validate(args) -> int:
    tset = build_tomography_set(default_states())
    flux = args.flux
    if args.counts:
        record, tset = ingest(args.counts)
        rho = mle_reconstruct(record, tset).rho
        flux = flux or record.normalization
    else:
        if not args.rho and not args.state:
            args.state = "werner"
        rho = _load_rho(args)
    cfg = GeneratorConfig(
        rho, total_flux=flux or 10_000.0, delta_theta=math.radians(args.delta_theta_deg),
        noise_mode="poisson_plus_jitter", seed=args.seed,
    )
    norm = args.normalization or ("observed" if args.exact_covariance else "fixed")
    res = monte_carlo_validate(cfg, tset, args.trials, args.seed, norm, args.exact_covariance)
    ok_var = res.worst_var_deviation() <= VAR_TOL
    ok_rho = not res.worst_rho_deviation() > RHO_TOL  # nan (not assessed) passes
    if args.format == "json":
        body = {
            "schema": SCHEMA, "validation": {
                "trials": res.trials, "seed": res.seed, "normalization": res.normalization,
                "exact_covariance": args.exact_covariance,
                "lambda": res.lam.tolist(), "empirical_var_s": res.empirical_var_s.tolist(),
                "var_ratio": res.var_ratio.tolist(), "rho_ratio": res.rho_ratio.tolist(),
                "assessed": res.assessed.tolist(), "var_ok": ok_var, "rho_ok": ok_rho,
            },
        }
        _write((json.dumps(body, indent=2) + "\n").encode(), None)
    else:
        lines = [f"Monte Carlo: {res.trials} trials, seed {res.seed}, {res.normalization} normalization"]
        lines.append("  nu   Var(s) emp    Lambda      ratio")
        for i in range(16):
            mark = "" if res.assessed[i] else "  (too few counts, not assessed)"
            lines.append(f"  {i + 1:>2}  {res.empirical_var_s[i]:.4e}  {res.lam[i]:.4e}  {res.var_ratio[i]:.3f}{mark}")
        lines.append(f"Var(s) within {VAR_TOL:.0%}: {'PASS' if ok_var else 'FAIL'} (worst {res.worst_var_deviation():.3f})")
        lines.append(f"element std within {RHO_TOL:.0%}: {'PASS' if ok_rho else 'FAIL'} (worst {res.worst_rho_deviation():.3f})")
        _write(("\n".join(lines) + "\n").encode(), None)
    return 0 if ok_var and ok_rho else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fmt = getattr(args, "format", "text")
    handler = {"reconstruct": cmd_reconstruct, "simulate": cmd_simulate, "validate": cmd_validate}[args.command]
    try:
        return handler(args)
    except (TomographyError, OSError, ValueError) as exc:
        return _error(exc, fmt)


if __name__ == "__main__":
    sys.exit(main())
