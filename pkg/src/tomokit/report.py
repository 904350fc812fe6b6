"""Counts-file ingestion, the full analysis pipeline, and report serialisation."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .counts import DEFAULT_DELTA_THETA, CountRecord
from .exceptions import ParseError, TomographyError
from .linear import (
    DensityMatrix,
    PhysicalityReport,
    TomographySet,
    build_tomography_set,
    linear_reconstruct,
    physicality_report,
)
from .measures import (
    concurrence,
    entanglement_of_formation,
    linear_entropy,
    tangle,
    von_neumann_entropy,
)
from .mle import MLEResult, OptimizerOptions, mle_reconstruct
from .projection import DEFAULT_DESIGN_DEG, WaveplateSetting, default_states, two_photon_state
from .synthetic import GeneratorConfig
from .uncertainty import ErrorBudget, full_error_budget, lambda_variances, rho_element_errors
from .validation import ValidationResult, monte_carlo_validate

SCHEMA = "tomo-report/1"
HEADER = ("nu", "label", "h1_deg", "q1_deg", "h2_deg", "q2_deg", "count")
ANGLE_COLUMNS = HEADER[2:6]
MLE_CAVEAT = (
    "Error bars on the maximum-likelihood estimate reuse the linear propagation formulas "
    "with s recomputed from the estimate; uncertainty introduced by the likelihood fit "
    "itself is not included."
)


# --- counts files ----------------------------------------------------------


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"cannot parse {text!r} as a number", row=row, column=column) from None
    if not math.isfinite(value):
        raise ParseError(f"value {text!r} is not finite", row=row, column=column)
    return value


def parse_counts(text: str, delta_theta: float = DEFAULT_DELTA_THETA) -> tuple[CountRecord, TomographySet]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("file is empty", row=1) from None
    for col in ("nu", "count"):
        if col not in header:
            raise ParseError("required column missing from header", row=1, column=col)
    unknown = [h for h in header if h not in HEADER]
    if unknown:
        raise ParseError(f"unknown column {unknown[0]!r}", row=1, column=unknown[0])
    present = [c for c in ANGLE_COLUMNS if c in header]
    if present and len(present) != 4:
        missing = next(c for c in ANGLE_COLUMNS if c not in header)
        raise ParseError("angle columns must be given all together or not at all", row=1, column=missing)
    has_angles = bool(present)
    idx = {h: i for i, h in enumerate(header)}

    rows: dict[int, tuple] = {}
    for row_no, fields in enumerate(reader, start=2):
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(fields)}", row=row_no)
        get = lambda c: fields[idx[c]].strip()  # noqa: E731
        nu_text = get("nu")
        try:
            nu = int(nu_text)
        except ValueError:
            raise ParseError(f"cannot parse {nu_text!r} as an integer", row=row_no, column="nu") from None
        if not 1 <= nu <= 16:
            raise ParseError(f"nu = {nu} outside 1..16", row=row_no, column="nu")
        if nu in rows:
            raise ParseError(f"duplicate nu = {nu} (first seen on row {rows[nu][0]})", row=row_no, column="nu")
        count = _parse_float(get("count"), row_no, "count")
        if count < 0:
            raise ParseError(f"negative count {count}", row=row_no, column="count")
        angles = tuple(_parse_float(get(c), row_no, c) for c in ANGLE_COLUMNS) if has_angles else None
        label = get("label") if "label" in idx else ""
        rows[nu] = (row_no, count, angles, label)

    missing = [nu for nu in range(1, 17) if nu not in rows]
    if missing:
        raise ParseError(f"missing rows for nu = {', '.join(map(str, missing))}", column="nu")

    n = [rows[nu][1] for nu in range(1, 17)]
    if has_angles:
        states = []
        for nu in range(1, 17):
            _, _, angles, label = rows[nu]
            states.append(two_photon_state(WaveplateSetting.from_degrees(*angles), label=label or None))
    else:
        states = default_states()
    tset = build_tomography_set(states)
    record = CountRecord(n, settings=tuple(s.setting for s in states), delta_theta=delta_theta)
    return record, tset


def ingest(path, delta_theta: float = DEFAULT_DELTA_THETA) -> tuple[CountRecord, TomographySet]:
    return parse_counts(Path(path).read_text(), delta_theta=delta_theta)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _fmt_number(x: float) -> str:
    return str(int(x)) if float(x).is_integer() and abs(x) < 2**53 else repr(float(x))


def _fmt_angle(rad: float) -> str:
    """Shortest degree string that reads back to exactly the same radians."""
    deg = math.degrees(rad)
    for digits in (10, 12, 15, 17):
        text = f"{deg:.{digits}g}"
        if WaveplateSetting.from_degrees(float(text), 0, 0, 0).h1 == rad:
            return text
    return repr(deg)


def format_counts(record: CountRecord, tset: TomographySet | None = None) -> str:
    """CSV text in the counts-file format (angles always written, in degrees)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    labels = [s.label for s in tset.states] if tset is not None else [r[0] for r in DEFAULT_DESIGN_DEG]
    for nu, (setting, count) in enumerate(zip(record.settings, record.n), start=1):
        w.writerow([nu, labels[nu - 1], *(_fmt_angle(a) for a in setting.as_tuple()), _fmt_number(count)])
    return buf.getvalue()


# --- analysis ----------------------------------------------------------------


@dataclass(frozen=True)
class AnalysisOptions:
    linear_only: bool = False
    delta_theta: float | None = None  # radians; None keeps the record's value
    optimizer: OptimizerOptions = OptimizerOptions()
    exact_covariance: bool = False
    s_path: str | None = None  # "model" or "counts"; default depends on the estimator
    mc_trials: int = 0
    seed: int = 0

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["delta_theta_deg"] = None if self.delta_theta is None else math.degrees(self.delta_theta)
        del d["delta_theta"]
        return d


@dataclass
class AnalysisReport:
    counts: CountRecord
    tset: TomographySet
    linear_rho: DensityMatrix
    linear_physicality: PhysicalityReport
    mle: MLEResult | None
    estimator: str
    measures: dict[str, float]
    budget: ErrorBudget | None
    alternate_sigmas: dict[str, float] | None
    validation: list[ValidationResult]
    provenance: dict
    notes: list[str] = field(default_factory=list)

    @property
    def estimate(self) -> DensityMatrix:
        return self.mle.rho if self.mle is not None else self.linear_rho


def _measures(rho: DensityMatrix) -> dict[str, float]:
    c, _ = concurrence(rho)
    return {
        "entropy": von_neumann_entropy(rho).value,
        "linear_entropy": linear_entropy(rho).value,
        "concurrence": c.value,
        "tangle": tangle(c).value,
        "eof": entanglement_of_formation(c).value,
    }


def analyze(
    record: CountRecord,
    tset: TomographySet,
    options: AnalysisOptions = AnalysisOptions(),
    source: dict | None = None,
) -> AnalysisReport:
    if options.delta_theta is not None:
        record = dataclasses.replace(record, delta_theta=options.delta_theta)
    notes: list[str] = []
    rho_lin, _ = linear_reconstruct(record, tset)
    phys = physicality_report(rho_lin)
    if not phys.physical:
        notes.append(f"linear estimate is not physical (min eigenvalue {phys.eigenvalues[-1]:.6g})")

    mle = None
    if not options.linear_only:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            mle = mle_reconstruct(record, tset, options.optimizer)
        notes.extend(str(w.message) for w in caught)
    estimator = "linear" if mle is None else "mle"
    rho = rho_lin if mle is None else mle.rho

    s_path = options.s_path or ("counts" if mle is None else "model")
    measures: dict[str, float] = {}
    budget = None
    alternate = None
    if rho.physical:
        measures = _measures(rho)
        budget = full_error_budget(
            rho, record, tset, s_path=s_path, exact_covariance=options.exact_covariance
        )
        notes.extend(budget.notes)
        if mle is not None:
            other = "counts" if s_path == "model" else "model"
            alternate = dict(
                full_error_budget(rho, record, tset, s_path=other, exact_covariance=options.exact_covariance).measure_sigmas
            )
            notes.append(MLE_CAVEAT)
    else:
        notes.append("derived measures skipped: estimate is not physical")
        s = record.s()
        budget = lambda_variances(record, s, tset, exact_covariance=options.exact_covariance)
        budget = dataclasses.replace(budget, rho_sigma=rho_element_errors(budget, tset))

    validation = []
    if options.mc_trials > 0:
        if not rho.physical:
            raise TomographyError("Monte Carlo validation needs a physical estimate; drop --linear-only")
        cfg = GeneratorConfig(
            rho, total_flux=record.normalization, delta_theta=record.delta_theta,
            noise_mode="poisson_plus_jitter", seed=options.seed,
        )
        for norm in ("fixed", "observed"):
            validation.append(
                monte_carlo_validate(cfg, tset, options.mc_trials, options.seed, norm, options.exact_covariance)
            )

    provenance = {
        "tool": "tomokit",
        "version": __version__,
        "options": options.as_dict() | {"s_path": s_path},
        "input": source or {},
    }
    return AnalysisReport(
        counts=record, tset=tset, linear_rho=rho_lin, linear_physicality=phys, mle=mle,
        estimator=estimator, measures=measures, budget=budget, alternate_sigmas=alternate,
        validation=validation, provenance=provenance, notes=notes,
    )


# --- emission ----------------------------------------------------------------


def complex_matrix_json(m) -> dict:
    m = np.asarray(m, dtype=complex)
    return {
        "dims": m.shape[0],
        "data": [[{"re": float(z.real), "im": float(z.imag)} for z in row] for row in m],
    }


def real_matrix_json(m) -> dict:
    m = np.asarray(m, dtype=float)
    return {"dims": m.shape[0], "data": [[float(x) for x in row] for row in m]}


def _physicality_json(p: PhysicalityReport) -> dict:
    return {
        "eigenvalues": [float(x) for x in p.eigenvalues],
        "trace_rho_squared": p.trace_rho_squared,
        "physical": p.physical,
    }


def report_to_dict(rep: AnalysisReport) -> dict:
    labels = [s.label for s in rep.tset.states]
    out = {
        "schema": SCHEMA,
        "estimator": rep.estimator,
        "counts": {
            "n": [float(x) for x in rep.counts.n],
            "labels": labels,
            "normalization": rep.counts.normalization,
            "delta_theta_deg": math.degrees(rep.counts.delta_theta),
        },
        "linear": {"rho": complex_matrix_json(rep.linear_rho.matrix), "physicality": _physicality_json(rep.linear_physicality)},
        "mle": None,
        "measures": {},
        "lambda_table": None,
        "rho_sigma": None,
        "validation": [],
        "plot_data": {},
        "notes": list(rep.notes),
        "provenance": rep.provenance,
    }
    if rep.mle is not None:
        m = rep.mle
        out["mle"] = {
            "rho": complex_matrix_json(m.rho.matrix),
            "physicality": _physicality_json(physicality_report(m.rho)),
            "t": [float(x) for x in m.t.t],
            "likelihood": m.likelihood,
            "converged": m.converged,
            "iterations": m.iterations,
            "evaluations": m.evaluations,
        }
    sig = rep.budget.measure_sigmas if rep.budget is not None else {}
    for name, value in rep.measures.items():
        entry = {"value": value}
        if name in sig:
            entry["sigma"] = sig[name]
        if rep.alternate_sigmas and name in rep.alternate_sigmas:
            entry["sigma_alternate_s_path"] = rep.alternate_sigmas[name]
        out["measures"][name] = entry
    if rep.budget is not None:
        b = rep.budget
        out["lambda_table"] = [
            {"nu": i + 1, "label": labels[i], "s": float(b.s[i]), "lambda": float(b.lam[i]),
             "count_term": float(b.count_term[i]), "angle_term": float(b.angle_term[i])}
            for i in range(len(b.lam))
        ]
        if b.rho_sigma is not None:
            out["rho_sigma"] = real_matrix_json(b.rho_sigma)
    for v in rep.validation:
        out["validation"].append({
            "trials": v.trials, "seed": v.seed, "normalization": v.normalization,
            "var_ratio": [float(x) for x in v.var_ratio],
            "assessed": [bool(x) for x in v.assessed],
            "rho_ratio": real_matrix_json(v.rho_ratio),
            "worst_var_deviation": v.worst_var_deviation(),
            "worst_rho_deviation": None if math.isnan(v.worst_rho_deviation()) else v.worst_rho_deviation(),
        })
    # plot-ready series: bar heights of the estimate and the error budget split
    est = rep.estimate.matrix
    out["plot_data"] = {
        "rho_bars": {"basis": ["HH", "HV", "VH", "VV"], "real": real_matrix_json(est.real), "imag": real_matrix_json(est.imag)},
        "lambda_split": None if rep.budget is None else {
            "labels": labels,
            "count_term": [float(x) for x in rep.budget.count_term],
            "angle_term": [float(x) for x in rep.budget.angle_term],
        },
        "likelihood_history": None if rep.mle is None else [float(x) for x in rep.mle.history],
    }
    return out


def _fmt_complex(z: complex) -> str:
    re, im = round(z.real, 4) + 0.0, round(z.imag, 4) + 0.0
    if im == 0.0:
        return f"{re:.4f}"
    return f"{re:.4f}{im:+.4f}i"


def format_matrix(m) -> list[str]:
    cells = [[_fmt_complex(complex(z)) for z in row] for row in np.asarray(m)]
    width = max(len(c) for row in cells for c in row)
    return ["  ".join(c.rjust(width) for c in row) for row in cells]


def report_to_text(rep: AnalysisReport) -> str:
    lines = [f"tomokit {__version__}  schema {SCHEMA}"]
    if rep.provenance.get("input", {}).get("sha256"):
        lines.append(f"input sha256 {rep.provenance['input']['sha256']}")
    lines.append(f"normalization N = {rep.counts.normalization:g}")
    lines += ["", "linear estimate:"] + format_matrix(rep.linear_rho.matrix)
    p = rep.linear_physicality
    lines.append("eigenvalues: " + " ".join(f"{x:.6g}" for x in p.eigenvalues))
    lines.append(f"Tr(rho^2) = {p.trace_rho_squared:.4f}   physical: {'yes' if p.physical else 'no'}")
    if rep.mle is not None:
        m = rep.mle
        lines += ["", "maximum-likelihood estimate:"] + format_matrix(m.rho.matrix)
        lines.append("eigenvalues: " + " ".join(f"{x:.6g}" for x in m.rho.eig.values))
        lines.append(f"Tr(rho^2) = {m.rho.purity():.4f}   L = {m.likelihood:.6g}")
        lines.append(f"converged: {'yes' if m.converged else 'no'} ({m.iterations} iterations, {m.evaluations} evaluations)")
    if rep.measures:
        sig = rep.budget.measure_sigmas if rep.budget is not None else {}
        lines += ["", "measures:"]
        for name, value in rep.measures.items():
            tail = f" +/- {sig[name]:.4f}" if name in sig else ""
            lines.append(f"  {name:<15} {value:.4f}{tail}")
    if rep.budget is not None:
        b = rep.budget
        lines += ["", "  nu  label          s       Lambda   count term   angle term"]
        for i, st in enumerate(rep.tset.states):
            lines.append(
                f"  {i + 1:>2}  {st.label:<5} {b.s[i]:>9.4f}  {b.lam[i]:.4e}  {b.count_term[i]:.4e}  {b.angle_term[i]:.4e}"
            )
        if b.rho_sigma is not None:
            lines += ["", "element errors |d rho_ij|:"] + format_matrix(b.rho_sigma)
    for v in rep.validation:
        lines.append("")
        lines.append(
            f"Monte Carlo ({v.trials} trials, seed {v.seed}, {v.normalization} N): "
            f"worst |Var ratio - 1| = {v.worst_var_deviation():.3f}, "
            f"worst |std ratio - 1| = {v.worst_rho_deviation():.3f}"
        )
    if rep.notes:
        lines += ["", "notes:"] + [f"  - {n}" for n in rep.notes]
    return "\n".join(lines) + "\n"


def emit(rep: AnalysisReport, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (json.dumps(report_to_dict(rep), indent=2) + "\n").encode()
    if fmt == "text":
        return report_to_text(rep).encode()
    raise ValueError(f"unknown format {fmt!r}")
