import json
import logging
import os
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .errors import InsufficientData, InvalidArgument, MalformedInput, NoConvergence, SingularJacobian
from .models import (
    SCHEMA_VERSION, AdjustedAlphaRecord, AnalysisReport, FitFile, Interval, PermutationRecord,
    ScenarioFile, SimReport, SimScenario, SubjectFitRecord,
)
from .modules.curves import CurveSpec, get_curve
from .modules.detection import Detection, detect
from .modules.fitting import FitOptions, SubjectFit, fit_subject
from .modules.harness import MATRICES, full_scale, run_scenario, write_report, write_summary
from .modules.inference import p_adjust
from .modules.resampling import Covariance, GroupFits, Method
from .modules.table_io import by_group, common_grid, read_long_csv, read_p_values, write_p_values
from .modules.utils import STREAM_BOOTSTRAP, STREAM_PERMUTATION, stream_rng

logger = logging.getLogger(__name__)


def _write_json(path: str, payload: str) -> None:
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(payload)
    logger.info("wrote %s", path)


# --- fit ---

def fit_to_record(fit: SubjectFit, spec: CurveSpec) -> SubjectFitRecord:
    names = spec.param_names
    return SubjectFitRecord(
        subject_id=fit.subject_id,
        group=fit.group,
        pair_id=fit.pair_id,
        params={n: float(v) for n, v in zip(names, fit.theta_hat)},
        se={n: float(v) for n, v in zip(names, fit.se)},
        phi=fit.phi_hat,
        sigma=fit.sigma_hat,
        converged=fit.converged,
        rss=fit.rss,
        n_iter=fit.n_iter,
        cov=None if fit.cov is None else np.asarray(fit.cov, dtype=float).tolist(),
    )


def record_to_fit(rec: SubjectFitRecord, spec: CurveSpec) -> SubjectFit:
    try:
        theta = np.array([rec.params[n] for n in spec.param_names], dtype=float)
        se = np.array([rec.se[n] for n in spec.param_names], dtype=float)
    except KeyError as e:
        raise MalformedInput(f"subject {rec.subject_id}: missing parameter {e.args[0]} for {spec.name}")
    return SubjectFit(theta_hat=theta, se=se, phi_hat=rec.phi, sigma_hat=rec.sigma, converged=rec.converged,
                      rss=rec.rss, n_iter=rec.n_iter, subject_id=rec.subject_id, group=rec.group,
                      pair_id=rec.pair_id, cov=None if rec.cov is None else np.array(rec.cov, dtype=float))


def cmd_fit(input_path: str, curve: str = "logistic4", ar1: bool = True, max_iter: int = 200,
            tol: float = 1e-10, out: str = "fits.json") -> FitFile:
    """Fit every subject of a long-format CSV and write the fit file."""
    spec = get_curve(curve)
    series = read_long_csv(input_path)
    times = common_grid(series)
    opts = FitOptions(max_iter=max_iter, xtol=tol, ftol=tol)

    records: List[SubjectFitRecord] = []
    warnings: List[str] = []
    for s in series:
        try:
            fit = fit_subject(s, spec, ar1=ar1, opts=opts)
        except (SingularJacobian, InsufficientData) as e:
            warnings.append(f"subject {s.subject_id}: fit failed: {e.detail}")
            logger.warning("subject %s: fit failed: %s", s.subject_id, e.detail)
            continue
        if not fit.converged:
            warnings.append(f"subject {s.subject_id}: did not converge")
            logger.warning("subject %s: did not converge within %d iterations", s.subject_id, max_iter)
        records.append(fit_to_record(fit, spec))

    fit_file = FitFile(curve=spec.name, ar1=ar1, times=[float(t) for t in times], fits=records, warnings=warnings)
    _write_json(out, fit_file.model_dump_json(indent=2))
    converged = sum(r.converged for r in records)
    if converged == 0:
        raise NoConvergence(f"none of {len(series)} subjects converged")
    logger.info("fitted %d subjects, %d converged", len(series), converged)
    return fit_file


# --- test ---

def load_fit_file(path: str) -> FitFile:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return FitFile.model_validate_json(f.read())
    except FileNotFoundError:
        raise MalformedInput(f"fit file not found: {path}")
    except ValidationError as e:
        raise MalformedInput(f"{path} is not a valid fit file: {e.error_count()} problem(s), "
                             f"first: {e.errors()[0]['msg']}")


def load_groups(fit_file: FitFile) -> Tuple[GroupFits, GroupFits]:
    spec = get_curve(fit_file.curve)
    groups = by_group(record_to_fit(r, spec) for r in fit_file.fits)
    if len(groups) != 2:
        raise InvalidArgument(f"expected exactly 2 groups, found {len(groups)}: {', '.join(sorted(groups))}")
    g1, g2 = (GroupFits.from_fits(name, groups[name], spec) for name in sorted(groups))
    for g in (g1, g2):
        if g.n == 0:
            raise NoConvergence(f"group {g.group} has no converged subjects")
    return g1, g2


def detection_report(found: Detection, g1: GroupFits, g2: GroupFits, alpha: float, seed: int,
                     paired: bool, redraw_observed: bool = False) -> AnalysisReport:
    adjusted = permutation = None
    if found.adjusted is not None:
        a = found.adjusted
        adjusted = AdjustedAlphaRecord(alpha=a.alpha, alpha_star=a.alpha_star, rho=a.rho, T=a.T)
    if found.permutation is not None:
        p = found.permutation
        permutation = PermutationRecord(threshold=p.threshold, p_value=p.p_value,
                                        n_permutations=int(p.null_max.size), redraw_observed=redraw_observed)
    return AnalysisReport(
        schema_version=SCHEMA_VERSION,
        method=found.method.value,
        paired=paired,
        alpha=alpha,
        seed=seed,
        groups=[g1.group, g2.group],
        times=[float(t) for t in found.stats.times],
        stats=[float(v) for v in found.stats.stats],
        threshold=found.threshold,
        adjusted_alpha=adjusted,
        permutation=permutation,
        intervals=[Interval(start=s, end=e) for s, e in found.intervals],
    )


def report_frame(found: Detection, g1: GroupFits, g2: GroupFits) -> pd.DataFrame:
    times = np.asarray(found.stats.times, dtype=float)
    frame = pd.DataFrame({"time": times, "stat": found.stats.stats, "significant": found.mask})
    for g in (g1, g2):
        frame[f"mean_{g.group}"] = np.atleast_2d(g.spec.eval(g.thetas, times)).mean(axis=0)
    return frame


def cmd_test(fits_path: str, method: str = "hetboot", paired: bool = False, alpha: float = 0.05,
             B: int = 1000, P: int = 1000, seed: int = 0, out: str = "report.json",
             redraw_observed: bool = False, covariance: str = "diagonal") -> AnalysisReport:
    """Run one detection method on a fit file; writes report.json and a per-time CSV beside it."""
    method = Method(method)
    fit_file = load_fit_file(fits_path)
    g1, g2 = load_groups(fit_file)
    times = np.asarray(fit_file.times, dtype=float)
    stream = STREAM_PERMUTATION if method == Method.PERM else STREAM_BOOTSTRAP
    found = detect(method, g1, g2, times, alpha, stream_rng(seed, stream), paired=paired, B=B, P=P,
                   redraw_observed=redraw_observed, covariance=Covariance(covariance))

    report = detection_report(found, g1, g2, alpha, seed, paired, redraw_observed)
    _write_json(out, report.model_dump_json(indent=2))
    csv_path = os.path.splitext(out)[0] + ".csv"
    report_frame(found, g1, g2).to_csv(csv_path, index=False)
    logger.info("wrote %s", csv_path)
    return report


# --- sim ---

def load_scenarios(path: str) -> List[SimScenario]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise MalformedInput(f"scenario file not found: {path}")
    except json.JSONDecodeError as e:
        raise MalformedInput(f"{path} is not valid JSON: {e.msg} (line {e.lineno})")
    try:
        if isinstance(raw, dict) and "scenarios" in raw:
            return ScenarioFile.model_validate(raw).scenarios
        return [SimScenario.model_validate(raw)]
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(map(str, first["loc"]))
        raise MalformedInput(f"{path}: {where}: {first['msg']}")


def cmd_sim(scenario_path: str, out_dir: str = "sim_out", workers: Optional[int] = None) -> List[SimReport]:
    """Run every scenario in the file; several scenarios get one sub-directory each plus summary.csv."""
    scenarios = load_scenarios(scenario_path)
    reports = []
    for i, sc in enumerate(scenarios):
        run = run_scenario(sc, workers=workers)
        target = out_dir if len(scenarios) == 1 else os.path.join(out_dir, sc.name or f"scenario_{i + 1:02d}")
        write_report(run, target)
        reports.append(run.report)
    if len(scenarios) > 1:
        write_summary(reports, out_dir)
    return reports


def cmd_matrix(which: str, out_dir: str, full: bool = False) -> List[SimScenario]:
    """Write the cells of one scenario matrix as JSON files plus a combined scenarios file."""
    try:
        cells = MATRICES[which]()
    except KeyError:
        raise InvalidArgument(f"unknown matrix '{which}'; choose one of {', '.join(MATRICES)}")
    if full:
        cells = [full_scale(c) for c in cells]
    os.makedirs(out_dir, exist_ok=True)
    for cell in cells:
        _write_json(os.path.join(out_dir, f"{cell.name}.json"), cell.model_dump_json(indent=2, exclude_none=True))
    combined = ScenarioFile(scenarios=cells)
    _write_json(os.path.join(out_dir, f"{which}_matrix.json"), combined.model_dump_json(indent=2, exclude_none=True))
    return cells


# --- padjust ---

def cmd_padjust(input_path: str, rho: float, alpha: float = 0.05, out: str = "padjust.csv") -> Dict[str, int]:
    p = read_p_values(input_path)
    adjusted = p_adjust(p, rho)
    write_p_values(out, p, adjusted, alpha)
    return {"n": int(p.size), "significant": int(np.sum(adjusted <= alpha))}
