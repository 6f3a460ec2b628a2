"""Monte Carlo replicates over simulation scenarios.

Replicate r draws everything from ``stream_rng(seed, STREAM_REPLICATE, r, attempt, j)``:
j = 0 for data generation, j = 1 + position in ``METHODS`` for each method. Results
therefore do not depend on the worker count or on which other methods run.
"""
import logging
import os
from dataclasses import dataclass, field
from functools import partial
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..errors import (
    DegenerateParams, InsufficientData, NoConvergence, SingularJacobian, UnknownScenario, ZeroVariance,
)
from ..models import (
    METHODS, GridConfig, MethodReport, PowerRecord, ReplicateRow, SimReport, SimScenario,
)
from .curves import CurveSpec
from .detection import detect
from .fitting import SubjectFit, SubjectSeries, fit_subject
from .metrics import (
    aggregate_fwer, aggregate_median_pcer, aggregate_power, replicate_outcome, summarize_methods,
)
from .resampling import GroupFits, Method
from .simgen import SCENARIOS, generate_scenario
from .utils import STREAM_REPLICATE, stream_rng

logger = logging.getLogger(__name__)

FULL_LOGISTIC_GRID = GridConfig(start=0.0, stop=1600.0, n_points=401)
FULL_PIECEWISE_GRID = GridConfig(start=-1.0, stop=1.0, n_points=401)


@dataclass
class ReplicateResult:
    replicate: int
    times: np.ndarray
    null_region: np.ndarray
    effect_region: np.ndarray
    masks: Dict[str, np.ndarray] = field(default_factory=dict)
    degenerate: Dict[str, bool] = field(default_factory=dict)
    nonconverged: int = 0
    redraws: int = 0


@dataclass
class ScenarioRun:
    report: SimReport
    masks: Dict[str, np.ndarray]


def _fit_group(series: Sequence[SubjectSeries], spec: CurveSpec, ar1: bool) -> Tuple[List[SubjectFit], int]:
    fits, failed = [], 0
    for s in series:
        try:
            fit = fit_subject(s, spec, ar1=ar1)
        except (SingularJacobian, InsufficientData, DegenerateParams) as e:
            logger.debug("subject %s: fit failed (%s)", s.subject_id, e.detail)
            failed += 1
            continue
        if fit.converged:
            fits.append(fit)
        else:
            failed += 1
    return fits, failed


def _keep_complete_pairs(fits1: List[SubjectFit], fits2: List[SubjectFit]):
    shared = {f.pair_id for f in fits1} & {f.pair_id for f in fits2}
    return [f for f in fits1 if f.pair_id in shared], [f for f in fits2 if f.pair_id in shared]


def run_replicate(sc: SimScenario, r: int) -> ReplicateResult:
    """Generate, fit and test one replicate, redrawing while fewer than ``min_converged`` fit."""
    redraws, nonconverged = 0, 0
    for attempt in range(sc.max_redraws + 1):
        data = generate_scenario(sc, stream_rng(sc.seed, STREAM_REPLICATE, r, attempt, 0))
        fits1, bad1 = _fit_group(data.group1, data.spec, sc.ar1_fit)
        fits2, bad2 = _fit_group(data.group2, data.spec, sc.ar1_fit)
        nonconverged += bad1 + bad2
        if data.paired:
            fits1, fits2 = _keep_complete_pairs(fits1, fits2)
        n1, n2 = len(data.group1), len(data.group2)
        if len(fits1) >= sc.min_converged * n1 and len(fits2) >= sc.min_converged * n2:
            break
        redraws += 1
        logger.warning("replicate %d attempt %d: only %d/%d and %d/%d subjects converged, redrawing",
                       r, attempt, len(fits1), n1, len(fits2), n2)
    else:
        raise NoConvergence(f"replicate {r}: fewer than {sc.min_converged:.0%} of subjects converged "
                            f"in {sc.max_redraws + 1} attempts")

    labels = data.labels
    g1 = GroupFits(group=labels[0], fits=fits1, spec=data.spec)
    g2 = GroupFits(group=labels[1], fits=fits2, spec=data.spec)
    result = ReplicateResult(replicate=r, times=data.times, null_region=data.null_region,
                             effect_region=data.effect_region, nonconverged=nonconverged, redraws=redraws)
    for name in sc.methods:
        rng = stream_rng(sc.seed, STREAM_REPLICATE, r, attempt, 1 + METHODS.index(name))
        try:
            found = detect(Method(name), g1, g2, data.times, sc.alpha, rng, paired=data.paired, B=sc.B, P=sc.P)
            result.masks[name] = np.asarray(found.mask, dtype=bool)
            result.degenerate[name] = False
        except ZeroVariance as e:
            logger.warning("replicate %d, %s: %s; counted as no detection", r, name, e.detail)
            result.masks[name] = np.zeros(data.times.size, dtype=bool)
            result.degenerate[name] = True
    return result


def _replicates(sc: SimScenario, workers: int) -> List[ReplicateResult]:
    task = partial(run_replicate, sc)
    step = max(1, sc.replicates // 10)
    results: List[ReplicateResult] = []
    if workers <= 1:
        iterator = map(task, range(sc.replicates))
        pool = None
    else:
        pool = Pool(processes=workers)
        iterator = pool.imap(task, range(sc.replicates))
    try:
        for res in iterator:
            results.append(res)
            if len(results) % step == 0 or len(results) == sc.replicates:
                logger.info("%s: %d/%d replicates done", sc.name or sc.kind, len(results), sc.replicates)
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return results


def run_scenario(sc: SimScenario, workers: Optional[int] = None) -> ScenarioRun:
    """All replicates of one scenario, folded in replicate order."""
    if sc.kind not in SCENARIOS:
        raise UnknownScenario(f"Unknown scenario kind '{sc.kind}'. Choose one of: {', '.join(SCENARIOS)}.")
    workers = max(1, min(workers or 1, sc.replicates, os.cpu_count() or 1))
    logger.info("running %s (%d replicates, %d worker(s))", sc.name or sc.kind, sc.replicates, workers)
    results = _replicates(sc, workers)

    first = results[0]
    times, null, effect = first.times, first.null_region, first.effect_region
    masks = {name: np.stack([res.masks[name] for res in results]) for name in sc.methods}
    methods: Dict[str, MethodReport] = {}
    for name in sc.methods:
        power = None
        if effect.any():
            summary = aggregate_power(masks[name], effect, times, null_region=null)
            q = summary.onset_quartiles or (None, None, None)
            power = PowerRecord(alpha=summary.alpha, beta=summary.beta, power=summary.power,
                                onset_q1=q[0], onset_median=q[1], onset_q3=q[2])
        methods[name] = MethodReport(
            method=name,
            fwer=aggregate_fwer(masks[name], null),
            median_pcer=aggregate_median_pcer(masks[name], null),
            per_time_rate=[float(v) for v in masks[name].mean(axis=0)],
            power=power,
            degenerate_replicates=sum(res.degenerate[name] for res in results),
        )

    rows = []
    for res in results:
        for name in sc.methods:
            out = replicate_outcome(res.masks[name], times, null, effect)
            rows.append(ReplicateRow(replicate=res.replicate, method=name, null_detection=out.null_detection,
                                     any_detection=out.any_detection, onset=out.onset,
                                     n_significant=out.n_significant))

    report = SimReport(
        scenario=sc,
        times=[float(t) for t in times],
        replicates=len(results),
        nonconverged_subjects=sum(res.nonconverged for res in results),
        redrawn_replicates=sum(res.redraws > 0 for res in results),
        methods=methods,
        replicate_rows=rows,
    )
    if report.redrawn_replicates:
        logger.warning("%s: %d replicate(s) redrawn for non-convergence", sc.name or sc.kind,
                       report.redrawn_replicates)
    return ScenarioRun(report=report, masks=masks)


# --- scenario matrices ---

def _cell_name(prefix: str, **axes) -> str:
    return prefix + "".join(f"_{k}-{v}" for k, v in axes.items())


def fwer_matrix(base: Optional[SimScenario] = None) -> List[SimScenario]:
    """Sixteen null cells: unpaired hom/het means, identical and noisy pairing under het means,
    each crossed with AR(1) error and AR(1) fitting."""
    base = base or SimScenario(kind="fwer_logistic")
    cells = []
    for heterogeneous, paired in ((False, "none"), (True, "none"), (True, "identical"), (True, "noisy")):
        for ar1_error in (True, False):
            for ar1_fit in (True, False):
                means = "het" if heterogeneous else "hom"
                cells.append(base.model_copy(update=dict(
                    kind="fwer_logistic", heterogeneous=heterogeneous, paired=paired,
                    ar1_error=ar1_error, ar1_fit=ar1_fit,
                    name=_cell_name("fwer", means=means, paired=paired, arerr=int(ar1_error), arfit=int(ar1_fit)),
                )))
    return cells


def piecewise_matrix(base: Optional[SimScenario] = None) -> List[SimScenario]:
    base = base or SimScenario(kind="power_piecewise")
    cells = []
    for heterogeneous in (False, True):
        for ar1_error in (True, False):
            for ar1_fit in (True, False):
                means = "het" if heterogeneous else "hom"
                cells.append(base.model_copy(update=dict(
                    kind="power_piecewise", heterogeneous=heterogeneous, paired="none",
                    ar1_error=ar1_error, ar1_fit=ar1_fit,
                    name=_cell_name("piecewise", means=means, arerr=int(ar1_error), arfit=int(ar1_fit)),
                )))
    return cells


def shift_matrix(base: Optional[SimScenario] = None) -> List[SimScenario]:
    base = base or SimScenario(kind="power_shift")
    cells = []
    for shift in (50.0, 150.0):
        for sd in (60.0, 120.0):
            for paired in ("none", "identical"):
                cells.append(base.model_copy(update=dict(
                    kind="power_shift", heterogeneous=True, shift=shift, crossover_sd=sd, paired=paired,
                    name=_cell_name("shift", shift=int(shift), sd=int(sd), paired=paired),
                )))
    return cells


MATRICES = {"fwer": fwer_matrix, "piecewise": piecewise_matrix, "shift": shift_matrix}


def full_scale(sc: SimScenario) -> SimScenario:
    """The same cell at 1000 replicates on the 401-point grid."""
    grid = FULL_PIECEWISE_GRID if sc.kind == "power_piecewise" else FULL_LOGISTIC_GRID
    return sc.model_copy(update=dict(grid=grid, replicates=1000))


# --- report files ---

def curves_frame(run: ScenarioRun) -> pd.DataFrame:
    times = run.report.times
    frames = [pd.DataFrame({"time": times, "method": name, "rate": mr.per_time_rate})
              for name, mr in run.report.methods.items()]
    return pd.concat(frames, ignore_index=True)


def replicates_frame(run: ScenarioRun) -> pd.DataFrame:
    columns = ["replicate", "method", "null_detection", "any_detection", "onset", "n_significant"]
    return pd.DataFrame([row.model_dump() for row in run.report.replicate_rows], columns=columns)


def write_report(run: ScenarioRun, out_dir: str) -> List[str]:
    """report.json, curves.csv and replicates.csv under ``out_dir``; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, name) for name in ("report.json", "curves.csv", "replicates.csv")]
    with open(paths[0], "w", encoding="utf-8") as f:
        f.write(run.report.model_dump_json(indent=2))
    curves_frame(run).to_csv(paths[1], index=False)
    replicates_frame(run).to_csv(paths[2], index=False)
    for p in paths:
        logger.info("wrote %s", p)
    return paths


def write_summary(reports: Sequence[SimReport], out_dir: str) -> str:
    path = os.path.join(out_dir, "summary.csv")
    summarize_methods(reports).to_csv(path, index=False)
    logger.info("wrote %s", path)
    return path
