"""Experiment orchestration: seeded sweep cells, CSV persistence, aggregation.

Every cell of a sweep owns an independent random substream derived from
(master_seed, sigma2-index, N-index, M-index, repetition), so results are
identical whether cells run serially or on a worker pool.  Raw records are
immutable; averaging happens in a separate aggregation step.
"""
import csv
import io as _io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import ExperimentConfig
from .data import build_data_matrices, check_generalized_slater, noise_model_from_bound
from .errors import RolloutOverflowError, SamplingError, ScenarioDdcError
from .fleet import (
    FleetDistribution,
    RolloutConfig,
    SystemSample,
    UniformBoxLaw,
    default_benchmark_fleet,
    sample_system,
    simulate_trajectory,
)
from .io import save_raster_csv
from .synthesis import (
    Infeasible,
    NumericalFailure,
    SynthesisCertificate,
    assemble_scenario_lmi,
    solve_feasibility,
)
from .validation import (
    area_variance,
    centroid_dispersion,
    consistent_set_raster_1d,
    estimate_alpha,
)

RAW_HEADER = (
    "sigma2,N,M,rep,seed,slater_ok,feasible,"
    "alpha_hat_spectral,alpha_hat_quadratic,solve_time_ms,status"
)
AGG_HEADER = "sigma2,N,M,stab_freq,feas_freq,reps"

STATUS_OK = "ok"
STATUS_INFEASIBLE = "infeasible"
STATUS_FAILURE = "solver-failure"


@dataclass(frozen=True)
class ExperimentRecord:
    """One (sigma2, N, M, repetition) cell of a sweep.

    Wall-clock solve time is carried for reporting but excluded from record
    comparison (and from the CSV by default) so reruns stay reproducible.
    """

    sigma2: float
    N: int
    M: int
    rep: int
    seed: int
    slater_ok: float
    feasible: bool
    alpha_hat_spectral: Optional[float]
    alpha_hat_quadratic: Optional[float]
    solve_time_ms: float = field(compare=False)
    status: str = "ok"


def cell_seed(master_seed: int, i_sigma: int, i_N: int, i_M: int, rep: int) -> int:
    """Deterministic seed for one sweep cell."""
    ss = np.random.SeedSequence(
        master_seed, spawn_key=(i_sigma, i_N, i_M, rep)
    )
    return int(ss.generate_state(1, np.uint64)[0])


def _attempt_rng(seed: int, slot: int, attempt: int):
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(0, slot, attempt))
    )


def _validation_seed(seed: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(1,))
    return int(ss.generate_state(1, np.uint64)[0])


def collect_scenarios(
    dist: FleetDistribution,
    N: int,
    rollout_cfg: RolloutConfig,
    seed: int,
    retry_cap: int = 5,
) -> Tuple[list, list, int]:
    """Draw N accepted (data, system) pairs, re-recording rejected rollouts.

    A rollout is rejected when it overflows the state cap or when its data
    fails the regularity precheck; each retry redraws a fresh system (an
    exploding open-loop rollout is a property of the system at that horizon,
    not of the particular noise draw).  Slots still failing after
    ``retry_cap`` retries are dropped; the caller records the acceptance
    fraction.
    """
    qmi = noise_model_from_bound(rollout_cfg.wbar, rollout_cfg.M, dist.nx)
    dms, systems = [], []
    accepted = 0
    for slot in range(N):
        for attempt in range(retry_cap + 1):
            rng = _attempt_rng(seed, slot, attempt)
            try:
                theta = sample_system(dist, rng, draw_index=slot)
                traj = simulate_trajectory(theta, rollout_cfg, rng)
            except (RolloutOverflowError, SamplingError):
                continue
            dm = build_data_matrices(traj)
            if not check_generalized_slater(dm, qmi).satisfied:
                continue
            dms.append(dm)
            systems.append(theta)
            accepted += 1
            break
    return dms, systems, accepted


def run_cell(
    cfg: ExperimentConfig, sigma2: float, N: int, M: int, rep: int, seed: int
) -> ExperimentRecord:
    """Generate data, synthesize, and validate for one sweep cell."""
    dist = default_benchmark_fleet(sigma2, truncation=cfg.fleet.truncation)
    rollout_cfg = RolloutConfig(
        M=M,
        wbar=cfg.fleet.wbar,
        input_law=cfg.fleet.make_input_law(),
        x0_law=cfg.fleet.make_x0_law(),
        seed=seed,
    )
    dms, systems, accepted = collect_scenarios(
        dist, N, rollout_cfg, seed, retry_cap=cfg.solver.retry_cap
    )
    slater_ok = accepted / N
    if not dms:
        return ExperimentRecord(
            sigma2=sigma2, N=N, M=M, rep=rep, seed=seed, slater_ok=0.0,
            feasible=False, alpha_hat_spectral=None, alpha_hat_quadratic=None,
            solve_time_ms=0.0, status=STATUS_FAILURE,
        )
    qmi = noise_model_from_bound(cfg.fleet.wbar, M, dist.nx)
    problem = assemble_scenario_lmi(dms, [qmi] * len(dms), delta=cfg.solver.delta)
    t0 = time.perf_counter()
    outcome = solve_feasibility(
        problem,
        cfg.solver.backends,
        objective=cfg.solver.objective,
        feasibility_tol=cfg.solver.feasibility_tol,
    )
    solve_ms = (time.perf_counter() - t0) * 1e3
    if isinstance(outcome, SynthesisCertificate):
        report = estimate_alpha(
            outcome.K, outcome.P, dist, cfg.sweep.n_test, _validation_seed(seed)
        )
        return ExperimentRecord(
            sigma2=sigma2, N=N, M=M, rep=rep, seed=seed, slater_ok=slater_ok,
            feasible=True,
            alpha_hat_spectral=report.alpha_hat_spectral,
            alpha_hat_quadratic=report.alpha_hat_quadratic,
            solve_time_ms=solve_ms, status=STATUS_OK,
        )
    status = STATUS_INFEASIBLE if isinstance(outcome, Infeasible) else STATUS_FAILURE
    return ExperimentRecord(
        sigma2=sigma2, N=N, M=M, rep=rep, seed=seed, slater_ok=slater_ok,
        feasible=False, alpha_hat_spectral=None, alpha_hat_quadratic=None,
        solve_time_ms=solve_ms, status=status,
    )


def _run_cell_safe(args):
    cfg, sigma2, N, M, rep, seed = args
    try:
        return run_cell(cfg, sigma2, N, M, rep, seed)
    except ScenarioDdcError:
        return ExperimentRecord(
            sigma2=sigma2, N=N, M=M, rep=rep, seed=seed, slater_ok=0.0,
            feasible=False, alpha_hat_spectral=None, alpha_hat_quadratic=None,
            solve_time_ms=0.0, status=STATUS_FAILURE,
        )


def _format_float(value) -> str:
    return repr(float(value))


def _record_row(record: ExperimentRecord, timings: bool) -> str:
    return ",".join([
        _format_float(record.sigma2),
        str(record.N),
        str(record.M),
        str(record.rep),
        str(record.seed),
        _format_float(record.slater_ok),
        "true" if record.feasible else "false",
        "" if record.alpha_hat_spectral is None else _format_float(record.alpha_hat_spectral),
        "" if record.alpha_hat_quadratic is None else _format_float(record.alpha_hat_quadratic),
        _format_float(record.solve_time_ms) if timings else "",
        record.status,
    ])


def provenance_line(label: str) -> str:
    from . import __version__

    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return f"# scenario-ddc {__version__} {label} generated {stamp}"


class RawRecordWriter:
    """Incremental raw-record CSV writer with a provenance header line."""

    def __init__(self, path, label: str, timings: bool = False):
        self.path = Path(path)
        self.timings = timings
        self._fh = open(self.path, "w")
        self._fh.write(provenance_line(label) + "\n")
        self._fh.write(RAW_HEADER + "\n")
        self._fh.flush()

    def write(self, record: ExperimentRecord):
        self._fh.write(_record_row(record, self.timings) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()


def read_records_csv(path) -> List[ExperimentRecord]:
    """Parse a raw-record CSV (provenance comment lines are skipped)."""
    records = []
    with open(path, newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(_io.StringIO("".join(rows)))
    for row in reader:
        records.append(ExperimentRecord(
            sigma2=float(row["sigma2"]),
            N=int(row["N"]),
            M=int(row["M"]),
            rep=int(row["rep"]),
            seed=int(row["seed"]),
            slater_ok=float(row["slater_ok"]),
            feasible=row["feasible"] == "true",
            alpha_hat_spectral=float(row["alpha_hat_spectral"]) if row["alpha_hat_spectral"] else None,
            alpha_hat_quadratic=float(row["alpha_hat_quadratic"]) if row["alpha_hat_quadratic"] else None,
            solve_time_ms=float(row["solve_time_ms"]) if row["solve_time_ms"] else 0.0,
            status=row["status"],
        ))
    return records


@dataclass(frozen=True)
class AggregateRow:
    sigma2: float
    N: int
    M: int
    stab_freq: Optional[float]  # mean over feasible repetitions of 1 - alpha_hat
    feas_freq: float
    reps: int


def aggregate_records(records: Sequence[ExperimentRecord]) -> List[AggregateRow]:
    """Average repetitions per cell; stability uses the spectral estimate."""
    groups = {}
    for rec in records:
        groups.setdefault((rec.sigma2, rec.N, rec.M), []).append(rec)
    rows = []
    for (sigma2, N, M), recs in sorted(groups.items()):
        feasible = [r for r in recs if r.feasible]
        stab = (
            float(np.mean([1.0 - r.alpha_hat_spectral for r in feasible]))
            if feasible else None
        )
        rows.append(AggregateRow(
            sigma2=sigma2, N=N, M=M,
            stab_freq=stab,
            feas_freq=len(feasible) / len(recs),
            reps=len(recs),
        ))
    return rows


def write_aggregate_csv(path, rows: Sequence[AggregateRow], label: str) -> None:
    lines = [provenance_line(label), AGG_HEADER]
    for row in rows:
        lines.append(",".join([
            _format_float(row.sigma2),
            str(row.N),
            str(row.M),
            "" if row.stab_freq is None else _format_float(row.stab_freq),
            _format_float(row.feas_freq),
            str(row.reps),
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


def _run_cells(cfg, cells, writer, threads: int) -> List[ExperimentRecord]:
    """Run cells on a bounded pool, flushing records in deterministic order."""
    jobs = [(cfg, sigma2, N, M, rep, seed) for (sigma2, N, M, rep, seed) in cells]
    records: List[ExperimentRecord] = []
    if threads <= 1:
        for job in jobs:
            rec = _run_cell_safe(job)
            records.append(rec)
            writer.write(rec)
        return records
    with ProcessPoolExecutor(max_workers=threads) as pool:
        for rec in pool.map(_run_cell_safe, jobs):
            records.append(rec)
            writer.write(rec)
    return records


def run_heatmap_sigma_N(
    cfg: ExperimentConfig, out_dir, threads: int = 1
) -> List[ExperimentRecord]:
    """Sweep sigma2 x N at fixed horizon M (taken from the fleet block)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    M = cfg.fleet.M
    cells = []
    for i_s, sigma2 in enumerate(cfg.sweep.sigma2_values):
        for i_n, N in enumerate(cfg.sweep.N_values):
            for rep in range(cfg.sweep.repetitions):
                seed = cell_seed(cfg.master_seed, i_s, i_n, 0, rep)
                cells.append((sigma2, N, M, rep, seed))
    writer = RawRecordWriter(
        out / "heatmap_sigma_N_raw.csv", "heatmap-sigma-n", cfg.output.timings
    )
    try:
        records = _run_cells(cfg, cells, writer, threads)
    finally:
        writer.close()
    rows = aggregate_records(records)
    write_aggregate_csv(out / "heatmap_sigma_N_agg.csv", rows, "heatmap-sigma-n")
    if cfg.output.figures:
        from .plotting import heatmap_figure

        heatmap_figure(
            rows, x_field="sigma2", path=out / "heatmap_sigma_N.png",
            title=f"stability/feasibility frequency (M={M})",
        )
    return records


def run_heatmap_M_N(
    cfg: ExperimentConfig, out_dir, threads: int = 1
) -> List[ExperimentRecord]:
    """Sweep M x N at fixed sigma2 (taken from the fleet block)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sigma2 = cfg.fleet.sigma2
    cells = []
    for i_m, M in enumerate(cfg.sweep.M_values):
        for i_n, N in enumerate(cfg.sweep.N_values):
            for rep in range(cfg.sweep.repetitions):
                seed = cell_seed(cfg.master_seed, 0, i_n, i_m, rep)
                cells.append((sigma2, N, M, rep, seed))
    writer = RawRecordWriter(
        out / "heatmap_M_N_raw.csv", "heatmap-m-n", cfg.output.timings
    )
    try:
        records = _run_cells(cfg, cells, writer, threads)
    finally:
        writer.close()
    rows = aggregate_records(records)
    write_aggregate_csv(out / "heatmap_M_N_agg.csv", rows, "heatmap-m-n")
    if cfg.output.figures:
        from .plotting import heatmap_figure

        heatmap_figure(
            rows, x_field="M", path=out / "heatmap_M_N.png",
            title=f"stability/feasibility frequency (sigma2={sigma2:g})",
        )
    return records


def run_uncertainty_sets_1d(cfg: ExperimentConfig, out_dir) -> dict:
    """Consistent-set rasters for a fixed scalar system at several horizons.

    Emits one raster CSV per (horizon, seed) pair plus a summary CSV with
    the centroid dispersion and area variance per horizon.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    uc = cfg.uncertainty
    theta = SystemSample(A=np.array([[uc.A]]), B=np.array([[uc.B]]))
    summary = []
    rasters_by_M = {}
    for i_m, M in enumerate(uc.M_values):
        rollout_cfg = RolloutConfig(
            M=M, wbar=uc.wbar,
            input_law=UniformBoxLaw(uc.input_magnitude),
            x0_law=UniformBoxLaw(1.0),
        )
        qmi = noise_model_from_bound(uc.wbar, M, 1)
        rasters = []
        for k in range(uc.n_seeds):
            ss = np.random.SeedSequence(cfg.master_seed, spawn_key=(2, i_m, k))
            seed_k = int(ss.generate_state(1, np.uint64)[0])
            rng = np.random.default_rng(seed_k)
            traj = simulate_trajectory(theta, rollout_cfg, rng, seed=seed_k)
            dm = build_data_matrices(traj)
            raster = consistent_set_raster_1d(
                dm, qmi, uc.window, uc.resolution, seed=seed_k
            )
            save_raster_csv(out / f"raster_M{M}_seed{k}.csv", raster)
            rasters.append(raster)
        rasters_by_M[M] = rasters
        summary.append((
            M,
            centroid_dispersion(rasters) if len(rasters) >= 2 else 0.0,
            area_variance(rasters) if len(rasters) >= 2 else 0.0,
            len(rasters),
        ))
    lines = [provenance_line("uncertainty-sets-1d"), "M,centroid_dispersion,area_variance,n_rasters"]
    for M, disp, avar, count in summary:
        lines.append(f"{M},{disp!r},{avar!r},{count}")
    (out / "uncertainty_summary.csv").write_text("\n".join(lines) + "\n")
    if cfg.output.figures:
        from .plotting import rasters_figure

        rasters_figure(
            rasters_by_M, truth=(uc.A, uc.B), path=out / "uncertainty_sets.png",
        )
    return rasters_by_M
