"""Semidefinite feasibility backends.

A problem is handed to a backend in packed form: a linear objective over a
real decision vector plus constraints ``F0 + sum_j x_j Fj >> 0`` given by
dense symmetric matrices.  Backends translate that into the conic standard
form ``A x + s = b, s in PSD`` using scaled lower-triangle vectorization and
call an installed conic solver.  A backend reports a status *hint* and the
raw point; callers are expected to re-verify any claimed-feasible point with
an independent eigenvalue check rather than trust solver tolerances.
"""
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from ._linalg import svec, svec_size, svec_upper

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
FAILURE = "failure"


@dataclass(frozen=True)
class PackedConstraint:
    """One PSD constraint: F0 + sum over (j, Fj) of x_j * Fj must be PSD."""

    F0: np.ndarray
    coeffs: Tuple[Tuple[int, np.ndarray], ...]

    @property
    def size(self):
        return self.F0.shape[0]


@dataclass(frozen=True)
class PackedSdp:
    """Backend-facing problem: minimize c @ x subject to PSD constraints."""

    n_dec: int
    constraints: Tuple[PackedConstraint, ...]
    c: Optional[np.ndarray] = None  # None means pure feasibility (zero objective)

    def cone_matrices(self, vectorize=svec):
        """Assemble (A, b, cone_sizes) for `A x + s = b, s in PSD cones`.

        ``vectorize`` selects the solver's triangle ordering (SCS packs the
        lower triangle column-major, clarabel the upper triangle
        column-major; they differ for cone sizes above 2).
        """
        sizes = [con.size for con in self.constraints]
        rows = sum(svec_size(k) for k in sizes)
        b = np.empty(rows)
        A = sparse.lil_matrix((rows, self.n_dec))
        offset = 0
        for con in self.constraints:
            m = svec_size(con.size)
            b[offset:offset + m] = vectorize(con.F0)
            for j, Fj in con.coeffs:
                A[offset:offset + m, j] = -vectorize(Fj).reshape(-1, 1)
            offset += m
        return A.tocsc(), b, sizes

    def objective_vector(self):
        if self.c is None:
            return np.zeros(self.n_dec)
        return np.asarray(self.c, dtype=float)


@dataclass(frozen=True)
class BackendResult:
    """Status hint plus the raw decision point (when the solver produced one)."""

    status: str  # FEASIBLE / INFEASIBLE / FAILURE
    x: Optional[np.ndarray]
    info: dict = field(default_factory=dict)


class ClarabelBackend:
    """Interior-point backend (direct wrapper around the clarabel solver)."""

    def __init__(self, tol=1e-10, max_iter=200, time_limit=120.0, name="clarabel"):
        self.tol = tol
        self.max_iter = max_iter
        self.time_limit = time_limit
        self.name = name

    def solve(self, problem: PackedSdp) -> BackendResult:
        import clarabel

        A, b, sizes = problem.cone_matrices(vectorize=svec_upper)
        cones = [clarabel.PSDTriangleConeT(k) for k in sizes]
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.max_iter = self.max_iter
        settings.time_limit = self.time_limit
        settings.tol_gap_abs = self.tol
        settings.tol_gap_rel = self.tol
        settings.tol_feas = self.tol
        P = sparse.csc_matrix((problem.n_dec, problem.n_dec))
        q = problem.objective_vector()
        t0 = time.perf_counter()
        try:
            solver = clarabel.DefaultSolver(P, q, A, b, cones, settings)
            solution = solver.solve()
        except BaseException as exc:  # rust panics surface in various guises
            return BackendResult(FAILURE, None, {
                "backend": self.name, "error": f"{type(exc).__name__}: {exc}",
            })
        status = str(solution.status)
        info = {
            "backend": self.name,
            "raw_status": status,
            "iterations": solution.iterations,
            "solve_time": time.perf_counter() - t0,
        }
        x = np.asarray(solution.x, dtype=float) if solution.x is not None else None
        if status in ("Solved", "AlmostSolved"):
            return BackendResult(FEASIBLE, x, info)
        if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            return BackendResult(INFEASIBLE, None, info)
        # MaxIterations etc. may still carry a usable point; let the caller
        # try to verify it instead of discarding outright.
        return BackendResult(FAILURE, x, info)


class ScsBackend:
    """First-order backend (direct wrapper around SCS); robust fallback."""

    def __init__(self, eps=1e-7, max_iters=20000, time_limit=120.0, name="scs"):
        self.eps = eps
        self.max_iters = max_iters
        self.time_limit = time_limit
        self.name = name

    def solve(self, problem: PackedSdp) -> BackendResult:
        import scs

        A, b, sizes = problem.cone_matrices(vectorize=svec)
        data = dict(A=A, b=b, c=problem.objective_vector())
        cone = dict(s=sizes)
        t0 = time.perf_counter()
        try:
            out = scs.solve(
                data,
                cone,
                verbose=False,
                eps_abs=self.eps,
                eps_rel=self.eps,
                eps_infeas=1e-9,
                max_iters=self.max_iters,
                time_limit_secs=self.time_limit,
            )
        except BaseException as exc:
            return BackendResult(FAILURE, None, {
                "backend": self.name, "error": f"{type(exc).__name__}: {exc}",
            })
        status_val = out["info"]["status_val"]
        info = {
            "backend": self.name,
            "raw_status": out["info"]["status"],
            "iterations": out["info"]["iter"],
            "solve_time": time.perf_counter() - t0,
        }
        x = np.asarray(out["x"], dtype=float) if out.get("x") is not None else None
        if status_val in (1, 2):  # solved / solved-inaccurate
            info["accurate"] = status_val == 1
            return BackendResult(FEASIBLE, x, info)
        if status_val in (-2, -7):  # infeasible / infeasible-inaccurate
            info["accurate"] = status_val == -2
            return BackendResult(INFEASIBLE, None, info)
        return BackendResult(FAILURE, x, info)


def default_backend_ladder() -> List:
    """Escalation order used when the caller does not pin a backend."""
    return [
        ClarabelBackend(),
        ScsBackend(eps=1e-7, max_iters=20000),
        ScsBackend(eps=1e-5, max_iters=50000, name="scs-loose"),
    ]


def resolve_backends(spec) -> Sequence:
    """Map a backend spec (None, name, instance, or list) to a ladder."""
    if spec is None:
        return default_backend_ladder()
    if isinstance(spec, str):
        return [_backend_from_name(spec)]
    if isinstance(spec, (list, tuple)):
        return [b if not isinstance(b, str) else _backend_from_name(b) for b in spec]
    return [spec]


def _backend_from_name(name: str):
    key = name.strip().lower()
    if key == "clarabel":
        return ClarabelBackend()
    if key == "scs":
        return ScsBackend()
    if key == "scs-loose":
        return ScsBackend(eps=1e-5, max_iters=50000, name="scs-loose")
    raise ValueError(f"unknown backend {name!r}; expected clarabel, scs, or scs-loose")
