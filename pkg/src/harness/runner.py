"""Seeded ensembles over a tolerance grid, result tables, manifests and comparisons.

Output layout of one experiment directory:

    records/tolXX_repYYY.json   one RunRecord per run
    summaries/tolXX.json        one EnsembleSummary per tolerance, carrying the
                                complexity fit once the grid has three tolerances
    errors.csv work.csv qq.csv theta.csv levels.csv
    manifest.json metrics.prom
"""
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, Field

from diagnostics.ensemble import (
    ComplexityFit,
    EnsembleSummary,
    complexity_fit,
    confidence_table,
    estimator_accuracy_diag,
    expected_complexity,
    normality_check,
    work_percentiles,
)
from mlmc.continuation import run_cmlmc
from mlmc.estimator import level_stats_from_dict
from mlmc.records import RunRecord
from mlmc.standard import run_smlmc
from samplers import reference_value
from samplers.base import CoupledSampler
from shared.errors import ManifestMismatchError, MLMCError
from shared.metrics import record_run, run_timer, write_metrics
from shared.models import MeshHierarchy
from shared.utils import calculate_file_hash, config_hash, ensure_directory_exists, read_json, write_json

from .config import ExperimentConfig, continuation_config, make_sampler, standard_config

logger = structlog.get_logger(__name__)

RUN_STATUSES = ("success", "tolerance_unreachable", "sampling_failure", "calibration_unavailable")

ERRORS_COLUMNS = ["tol", "rep", "estimate", "reference", "error", "error_estimate", "exceeded"]
WORK_COLUMNS = ["tol", "rep", "model_work", "measured_cost", "final_L", "theta_final", "iterations"]
QQ_COLUMNS = ["rank", "normalized_error", "normal_quantile"]
THETA_COLUMNS = ["tol", "rep", "theta_final"]
LEVELS_COLUMNS = ["tol", "rep", "final_L"]


class ManifestEntry(BaseModel):
    tol_index: int
    tol: float
    rep: int
    seed: int
    status: str
    record: Optional[str] = None
    record_sha256: Optional[str] = None
    estimate: Optional[float] = None
    error_estimate: Optional[float] = None
    model_work: float = 0.0
    measured_cost: float = 0.0


class Manifest(BaseModel):
    name: str
    variant: str
    algorithm: str
    sampler: str
    config_hash: str
    config: Dict[str, Any]
    tolerances: List[float]
    repetitions: int
    base_seed: int
    reference: float
    output_dir: str
    runs: List[ManifestEntry] = Field(default_factory=list)
    summaries: List[str] = Field(default_factory=list)
    complexity: Optional[ComplexityFit] = None
    outputs: List[str] = Field(default_factory=list)

    @property
    def failed(self) -> int:
        return sum(1 for r in self.runs if r.status != "success")


def record_name(tol_index: int, rep: int) -> str:
    return f"tol{tol_index:02d}_rep{rep:03d}.json"


def run_single(cfg: ExperimentConfig, sampler: CoupledSampler, tol: float, seed: int) -> RunRecord:
    """One run of the configured algorithm; failures become a record with a status"""
    algorithm = cfg.algorithm.name
    log = logger.bind(algorithm=algorithm, tol=tol, seed=seed)
    with run_timer(algorithm) as timer:
        try:
            if algorithm == "cmlmc":
                record = run_cmlmc(sampler, continuation_config(cfg, sampler, tol), seed)
            else:
                record = run_smlmc(sampler, standard_config(cfg, tol), seed)
        except MLMCError as exc:
            status = exc.status if exc.status in RUN_STATUSES else "internal_error"
            log.warning("run_failed", status=status, error=str(exc))
            record = RunRecord(algorithm=algorithm, sampler=sampler.describe(), tol=tol, seed=seed,
                               status=status, message=str(exc))
        except Exception as exc:
            log.exception("run_crashed")
            record = RunRecord(algorithm=algorithm, sampler=sampler.describe(), tol=tol, seed=seed,
                               status="internal_error", message=repr(exc))
    record_run(algorithm, record.status)
    log.info("run_complete", status=record.status, estimate=record.estimate, seconds=round(timer.elapsed, 4))
    return record


def ensemble_complexity(summaries: Sequence[EnsembleSummary], s2: float) -> Optional[ComplexityFit]:
    """Fit the work rate across the tolerance grid and attach it to every summary"""
    if len({s.tol for s in summaries}) < 3:
        return None
    fit = complexity_fit(summaries, s2)
    for summary in summaries:
        summary.fitted_complexity = (fit.s1_hat, fit.residual)
    return fit


def _write_table(rows: List[Dict[str, Any]], columns: List[str], path: str) -> str:
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
    return path


def run_experiment(cfg: ExperimentConfig, threads: int = 1, out_dir: Optional[str] = None) -> Manifest:
    out = out_dir or cfg.output_dir or "results"
    ensure_directory_exists(os.path.join(out, "records"))
    ensure_directory_exists(os.path.join(out, "summaries"))

    sampler = make_sampler(cfg)
    reference = cfg.reference if cfg.reference is not None else reference_value(sampler)
    jobs: List[Tuple[int, float, int]] = [
        (ti, tol, rep) for ti, tol in enumerate(cfg.tolerances) for rep in range(cfg.repetitions)
    ]
    log = logger.bind(experiment=cfg.name, variant=cfg.variant_label())
    log.info("experiment_started", runs=len(jobs), threads=threads, reference=reference)

    def execute(job: Tuple[int, float, int]) -> RunRecord:
        _, tol, rep = job
        return run_single(cfg, sampler, tol, cfg.base_seed + rep)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        records = list(pool.map(execute, jobs))

    manifest = Manifest(
        name=cfg.name,
        variant=cfg.variant_label(),
        algorithm=cfg.algorithm.name,
        sampler=cfg.sampler.name,
        config_hash=config_hash(cfg.model_dump(mode="json")),
        config=cfg.model_dump(mode="json"),
        tolerances=list(cfg.tolerances),
        repetitions=cfg.repetitions,
        base_seed=cfg.base_seed,
        reference=reference,
        output_dir=out,
    )

    by_tol: Dict[int, List[RunRecord]] = {}
    for (ti, tol, rep), record in zip(jobs, records):
        by_tol.setdefault(ti, []).append(record)
        path, digest = None, None
        if cfg.emit.records:
            path = os.path.join("records", record_name(ti, rep))
            write_json(os.path.join(out, path), record.to_dict())
            digest = calculate_file_hash(os.path.join(out, path))
            manifest.outputs.append(path)
        manifest.runs.append(ManifestEntry(
            tol_index=ti, tol=tol, rep=rep, seed=record.seed, status=record.status,
            record=path, record_sha256=digest,
            estimate=record.estimate, error_estimate=record.error_estimate,
            model_work=record.total_model_work, measured_cost=record.total_measured_cost,
        ))

    summaries: Dict[int, EnsembleSummary] = {}
    for ti, tol in enumerate(cfg.tolerances):
        if not any(r.succeeded for r in by_tol.get(ti, [])):
            log.warning("no_successful_runs", tol=tol)
            continue
        summaries[ti] = confidence_table(by_tol[ti], reference, tol)

    _, s2 = expected_complexity(sampler.nominal_q1, sampler.nominal_q2, sampler.hierarchy.gamma)
    manifest.complexity = ensemble_complexity(list(summaries.values()), s2)
    if manifest.complexity is not None:
        log.info("complexity_fitted", s1_hat=manifest.complexity.s1_hat, s2=s2)

    for ti, summary in summaries.items():
        path = os.path.join("summaries", f"tol{ti:02d}.json")
        write_json(os.path.join(out, path), summary.model_dump(mode="json"))
        manifest.summaries.append(path)

    manifest.outputs.extend(write_tables(cfg, jobs, records, reference, out))
    write_metrics(out)
    manifest.outputs.append("metrics.prom")
    write_json(os.path.join(out, "manifest.json"), manifest.model_dump(mode="json"))
    log.info("experiment_complete", failed=manifest.failed, output_dir=out)
    return manifest


def write_tables(cfg: ExperimentConfig, jobs: Sequence[Tuple[int, float, int]], records: Sequence[RunRecord],
                 reference: float, out: str) -> List[str]:
    """Plot-ready CSV tables; failed runs are left out"""
    errors, work, theta, levels = [], [], [], []
    for (_, tol, rep), record in zip(jobs, records):
        if not record.succeeded:
            continue
        error = record.estimate - reference
        errors.append({"tol": tol, "rep": rep, "estimate": record.estimate, "reference": reference,
                       "error": error, "error_estimate": record.error_estimate, "exceeded": abs(error) > tol})
        work.append({"tol": tol, "rep": rep, "model_work": record.total_model_work,
                     "measured_cost": record.total_measured_cost, "final_L": record.final_L,
                     "theta_final": record.theta_final, "iterations": len(record.iterations)})
        theta.append({"tol": tol, "rep": rep, "theta_final": record.theta_final})
        levels.append({"tol": tol, "rep": rep, "final_L": record.final_L})

    written = []
    tables = [
        (cfg.emit.errors, errors, ERRORS_COLUMNS, "errors.csv"),
        (cfg.emit.work, work, WORK_COLUMNS, "work.csv"),
        (cfg.emit.theta, theta, THETA_COLUMNS, "theta.csv"),
        (cfg.emit.levels, levels, LEVELS_COLUMNS, "levels.csv"),
    ]
    for enabled, rows, columns, name in tables:
        if enabled:
            _write_table(rows, columns, os.path.join(out, name))
            written.append(name)

    if cfg.emit.qq:
        # QQ data for the finest tolerance of the grid
        finest = min(cfg.tolerances)
        finest_records = [r for (_, tol, _), r in zip(jobs, records) if tol == finest and r.succeeded]
        _write_table(qq_rows(finest_records, reference), QQ_COLUMNS, os.path.join(out, "qq.csv"))
        written.append("qq.csv")
    return written


def qq_rows(records: Sequence[RunRecord], reference: float) -> List[Dict[str, Any]]:
    usable = [r for r in records if r.estimator_variance]
    if not usable:
        return []
    report = normality_check(usable, reference)
    return [{"rank": i + 1, "normalized_error": e, "normal_quantile": q}
            for i, (e, q) in enumerate(zip(report.normalized_errors, report.normal_quantiles))]


def load_manifest(path: str) -> Manifest:
    if os.path.isdir(path):
        path = os.path.join(path, "manifest.json")
    return Manifest.model_validate(read_json(path))


def load_records(manifest: Manifest) -> List[Tuple[ManifestEntry, RunRecord]]:
    pairs = []
    for entry in manifest.runs:
        if entry.record is None:
            continue
        record = RunRecord.model_validate(read_json(os.path.join(manifest.output_dir, entry.record)))
        pairs.append((entry, record))
    return pairs


def compare_algorithms(manifests: Sequence[Manifest]) -> pd.DataFrame:
    """Work percentiles per tolerance and variant, normalized by the CMLMC median"""
    if not manifests:
        raise ManifestMismatchError("nothing to compare")
    first = manifests[0]
    for other in manifests[1:]:
        if other.sampler != first.sampler or other.tolerances != first.tolerances:
            raise ManifestMismatchError(
                f"{other.variant} ({other.sampler}, {other.tolerances}) does not match "
                f"{first.variant} ({first.sampler}, {first.tolerances})"
            )
    baseline = next((m for m in manifests if m.algorithm == "cmlmc"), first)

    def works(manifest: Manifest, ti: int, field: str = "model_work") -> List[float]:
        return [getattr(r, field) for r in manifest.runs if r.tol_index == ti and r.status == "success"]

    rows = []
    for ti, tol in enumerate(first.tolerances):
        base = works(baseline, ti)
        base_median = float(np.median(base)) if base else float("nan")
        for manifest in manifests:
            w = works(manifest, ti)
            if not w:
                continue
            p5, p50, p95 = work_percentiles(w)
            rows.append({
                "tol": tol,
                "variant": manifest.variant,
                "runs": len(w),
                "median_work": p50,
                "p5_work": p5,
                "p95_work": p95,
                "normalized_median": p50 / base_median,
                "normalized_p5": p5 / base_median,
                "normalized_p95": p95 / base_median,
                "median_measured_cost": float(np.median(works(manifest, ti, "measured_cost"))),
            })
    return pd.DataFrame(rows)


def diagnose(manifest: Manifest, out: Optional[str] = None) -> List[str]:
    """Recompute summaries, QQ data and per-level accuracy reports from stored records"""
    out = out or os.path.join(manifest.output_dir, "diagnostics")
    ensure_directory_exists(out)
    pairs = load_records(manifest)
    written = []

    accuracy_rows = []
    summaries: Dict[int, EnsembleSummary] = {}
    for ti, tol in enumerate(manifest.tolerances):
        records = [record for entry, record in pairs if entry.tol_index == ti]
        if not any(r.succeeded for r in records):
            continue
        summaries[ti] = confidence_table(records, manifest.reference, tol)

        path = os.path.join(out, f"qq_tol{ti:02d}.csv")
        _write_table(qq_rows([r for r in records if r.succeeded], manifest.reference), QQ_COLUMNS, path)
        written.append(path)

        for entry, record in pairs:
            if entry.tol_index != ti or not record.succeeded:
                continue
            accuracy_rows.extend(_accuracy_rows(entry, record))

    fit = None
    if summaries:
        first = next(record for _, record in pairs if record.succeeded)
        _, s2 = expected_complexity(first.sampler.get("nominal_q1", 1.0), first.sampler.get("nominal_q2", 1.0),
                                    first.sampler["gamma"])
        fit = ensemble_complexity(list(summaries.values()), s2)
    for ti, summary in summaries.items():
        path = os.path.join(out, f"summary_tol{ti:02d}.json")
        write_json(path, summary.model_dump(mode="json"))
        written.append(path)
    if fit is not None:
        path = os.path.join(out, "complexity.json")
        write_json(path, fit.model_dump(mode="json"))
        written.append(path)

    path = os.path.join(out, "accuracy.csv")
    _write_table(accuracy_rows, ["tol", "rep", "level", "count", "variance", "kurtosis",
                                 "variance_rel_error_sq", "qw_factor"], path)
    written.append(path)
    logger.info("diagnostics_written", manifest=manifest.name, files=len(written))
    return written


def _accuracy_rows(entry: ManifestEntry, record: RunRecord) -> List[Dict[str, Any]]:
    stats = [level_stats_from_dict(d) for d in record.level_stats if d["count"] >= 4]
    last = record.iterations[-1] if record.iterations else None
    if last is not None and last.params is not None:
        q1, q2 = last.params.q1, last.params.q2
    else:
        q1, q2 = record.sampler.get("nominal_q1", 1.0), record.sampler.get("nominal_q2", 1.0)
    hier = MeshHierarchy(h0=record.sampler["h0"], beta=record.sampler["beta"], gamma=record.sampler["gamma"])
    return [{"tol": entry.tol, "rep": entry.rep, **row.model_dump()}
            for row in estimator_accuracy_diag(stats, hier, q1, q2)]
