"""End-to-end orchestration: level-by-level surrogate builds, surrogate-based
posterior sampling, and the conventional direct-model chain used as oracle.

The build loop alternates three steps until a stopping rule fires: evaluate
the forward model at every new grid point (through the cache when one is
attached), fold the new values into hierarchical surpluses, and generate the
next level's points from the surpluses of the current deepest level.  The
three stopping rules are the maximum level, all deepest-level surpluses
within tolerance, and the evaluation budget.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bayes import LikelihoodSpec, PosteriorSpec, PriorSpec
from .errors import ConfigurationError, DirectRunRefusedError
from .grid import MultiIndex, point_coordinates
from .interpolant import (
    SparseGrid,
    SurrogateModel,
    compute_surpluses,
    refine,
    surplus_scales,
)
from .mcmc import (
    Chain,
    ChainDiagnostics,
    DramConfig,
    diagnostics,
    joint_histogram,
    marginal_histogram,
    sample,
    save_histogram_csv,
    save_joint_histogram_csv,
)
from .models import ForwardModel
from .persistence import EvalCache

TERM_MAX_LEVEL = "max-level"
TERM_TOLERANCE = "tolerance"
TERM_BUDGET = "budget"

_TERMINATION_TEXT = {
    TERM_MAX_LEVEL: "maximum level reached",
    TERM_TOLERANCE: "all surpluses below tolerance",
    TERM_BUDGET: "evaluation budget reached",
}


@dataclass
class BuildPlan:
    """Controls of the adaptive build loop."""

    start_level: int = 2
    max_level: int = 6
    alpha: float = 1e-3
    alpha_mode: str = "relative"
    budget: int | None = None  # cap on distinct grid points evaluated
    model_id: str = ""

    def __post_init__(self):
        if self.start_level < 0 or self.max_level < self.start_level:
            raise ConfigurationError("need 0 <= start_level <= max_level")
        if self.alpha < 0:
            raise ConfigurationError("tolerance alpha must be >= 0")
        if self.alpha_mode not in ("relative", "absolute"):
            raise ConfigurationError(f"unknown alpha mode {self.alpha_mode!r}")


@dataclass
class LevelRecord:
    level: int
    points_added: int
    points_total: int
    evals_total: int
    fresh_calls_total: int
    max_surplus: float            # raw magnitude over the new level
    max_surplus_normalized: float
    seconds: float


@dataclass
class RunReport:
    """Per-level workload table plus the termination reason of a build."""

    model_id: str
    alpha: float
    alpha_mode: str
    records: list[LevelRecord] = field(default_factory=list)
    termination: str = ""

    @property
    def total_evaluations(self) -> int:
        return self.records[-1].evals_total if self.records else 0

    def to_text(self) -> str:
        lines = [
            f"model: {self.model_id}   tolerance: {self.alpha:g} ({self.alpha_mode})",
            "level  new_pts  total_pts  evals  fresh  max_surplus  normalized  seconds",
        ]
        for r in self.records:
            lines.append(
                f"{r.level:5d}  {r.points_added:7d}  {r.points_total:9d}  "
                f"{r.evals_total:5d}  {r.fresh_calls_total:5d}  {r.max_surplus:11.4g}  "
                f"{r.max_surplus_normalized:10.4g}  {r.seconds:7.2f}"
            )
        lines.append(f"termination: {_TERMINATION_TEXT.get(self.termination, self.termination)}")
        return "\n".join(lines)


def evaluate_grid_points(
    model: ForwardModel,
    points: list[MultiIndex],
    cache: EvalCache | None = None,
    jobs: int = 1,
) -> np.ndarray:
    """Model outputs at grid points, cache-aware, order-preserving.

    With ``jobs > 1`` fresh evaluations run on a thread pool (the external
    backend releases the interpreter lock while its process runs).  Cache
    entries written before a failure survive it, so interrupted builds resume
    from where they stopped.
    """
    domain = model.spec.domain
    outputs: list[np.ndarray | None] = [None] * len(points)
    fresh: list[tuple[int, MultiIndex]] = []
    for k, p in enumerate(points):
        hit = cache.get(p) if cache is not None else None
        if hit is not None:
            outputs[k] = hit
        else:
            fresh.append((k, p))

    def run_one(item):
        k, p = item
        value = model(point_coordinates(p, domain))
        if cache is not None:
            cache.put(p, value)
        return k, value

    if jobs > 1 and len(fresh) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for k, value in pool.map(run_one, fresh):
                outputs[k] = value
    else:
        for item in fresh:
            k, value = run_one(item)
            outputs[k] = value
    return np.array([np.asarray(v, dtype=float) for v in outputs])


def build_surrogate(
    model: ForwardModel,
    plan: BuildPlan,
    cache: EvalCache | None = None,
    jobs: int = 1,
) -> tuple[SurrogateModel, RunReport]:
    """Grow an adaptive sparse-grid surrogate of ``model`` level by level.

    Starts from the isotropic grid at ``plan.start_level`` and keeps adding
    the children of out-of-tolerance deepest-level points until the maximum
    level, the tolerance, or the evaluation budget stops it.  Already-cached
    points are never re-evaluated; the budget counts distinct grid points
    (cache hits included), so resumed builds terminate exactly like
    uninterrupted ones.
    """
    ndim = model.spec.n_inputs
    model_id = plan.model_id or model.spec.name
    grid = SparseGrid.isotropic(ndim, plan.start_level)
    if plan.budget is not None and plan.budget < len(grid):
        raise ConfigurationError(
            f"budget {plan.budget} is below the starting-grid size {len(grid)}"
        )
    report = RunReport(model_id=model_id, alpha=plan.alpha, alpha_mode=plan.alpha_mode)

    t0 = time.perf_counter()
    calls_before = model.calls
    values = evaluate_grid_points(model, list(grid.points), cache=cache, jobs=jobs)
    surrogate = compute_surpluses(
        grid,
        values,
        domain=model.spec.domain,
        alpha=plan.alpha,
        alpha_mode=plan.alpha_mode,
        model_id=model_id,
    )
    evals = len(grid)
    fresh_calls = model.calls - calls_before

    def record(level, added, batch_surplus):
        raw = float(np.abs(batch_surplus).max()) if batch_surplus.size else 0.0
        norm = (
            float((np.abs(batch_surplus) / surplus_scales(surrogate)).max())
            if batch_surplus.size
            else 0.0
        )
        report.records.append(
            LevelRecord(
                level=level,
                points_added=added,
                points_total=len(surrogate),
                evals_total=evals,
                fresh_calls_total=fresh_calls,
                max_surplus=raw,
                max_surplus_normalized=norm,
                seconds=time.perf_counter() - t0,
            )
        )

    deepest = surrogate.max_level
    last_level_mask = surrogate.point_levels == deepest
    record(deepest, len(grid), surrogate.surpluses[last_level_mask])

    while True:
        if surrogate.max_level >= plan.max_level:
            report.termination = TERM_MAX_LEVEL
            break
        new_points = refine(surrogate, plan.alpha, plan.alpha_mode)
        if not new_points:
            report.termination = TERM_TOLERANCE
            break
        if plan.budget is not None and evals + len(new_points) > plan.budget:
            report.termination = TERM_BUDGET
            break
        calls_before = model.calls
        new_values = evaluate_grid_points(model, new_points, cache=cache, jobs=jobs)
        fresh_calls += model.calls - calls_before
        evals += len(new_points)
        surrogate = surrogate.extended(new_points, new_values)
        record(surrogate.max_level, len(new_points),
               surrogate.surpluses[-len(new_points):])

    return surrogate, report


@dataclass
class CalibrationResult:
    """Chain plus plot-ready summaries of one posterior sampling run."""

    chain: Chain
    diagnostics: ChainDiagnostics
    marginals: list[tuple[np.ndarray, np.ndarray]]
    joints: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]]
    model_calls_during_sampling: int
    files: list[str] = field(default_factory=list)


def _histogram_outputs(chain, prior_box, bins, out_dir, prefix):
    marginals = []
    joints = {}
    files = []
    for dim in range(chain.ndim):
        bounds = (prior_box.lower[dim], prior_box.upper[dim])
        edges, density = marginal_histogram(chain, dim, bins=bins, bounds=bounds)
        marginals.append((edges, density))
        if out_dir is not None:
            path = Path(out_dir) / f"{prefix}hist_theta_{dim + 1}.csv"
            save_histogram_csv(edges, density, path)
            files.append(str(path))
    for a in range(chain.ndim):
        for b in range(a + 1, chain.ndim):
            bounds = (
                (prior_box.lower[a], prior_box.upper[a]),
                (prior_box.lower[b], prior_box.upper[b]),
            )
            xe, ye, dens = joint_histogram(chain, (a, b), bins=bins, bounds=bounds)
            joints[(a, b)] = (xe, ye, dens)
            if out_dir is not None:
                path = Path(out_dir) / f"{prefix}hist2d_theta_{a + 1}_theta_{b + 1}.csv"
                save_joint_histogram_csv(xe, ye, dens, path)
                files.append(str(path))
    return marginals, joints, files


def run_calibration(
    surrogate: SurrogateModel,
    likelihood: LikelihoodSpec,
    dram: DramConfig,
    model: ForwardModel | None = None,
    out_dir=None,
    bins: int = 50,
    file_prefix: str = "",
) -> CalibrationResult:
    """Sample the surrogate posterior and emit chain + histogram artifacts.

    The defining property of the approach is asserted here: drawing samples
    runs zero forward-model executions.  Passing the instrumented ``model``
    makes the check explicit in the result; sampling itself only ever touches
    the surrogate.
    """
    prior = PriorSpec(surrogate.domain)
    posterior = PosteriorSpec(prior, likelihood, surrogate)
    calls_before = model.calls if model is not None else 0
    chain = sample(posterior, dram)
    calls_during = (model.calls - calls_before) if model is not None else 0
    diag = diagnostics(chain)
    out = None if out_dir is None else Path(out_dir)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    marginals, joints, files = _histogram_outputs(chain, prior.box, bins, out, file_prefix)
    if out is not None:
        chain_path = out / f"{file_prefix}chain.csv"
        chain.save_csv(chain_path)
        files.append(str(chain_path))
        diag_path = out / f"{file_prefix}diagnostics.txt"
        diag_path.write_text(
            diag.to_text()
            + f"\nmodel evaluations during sampling: {calls_during}\n"
        )
        files.append(str(diag_path))
    return CalibrationResult(
        chain=chain,
        diagnostics=diag,
        marginals=marginals,
        joints=joints,
        model_calls_during_sampling=calls_during,
        files=files,
    )


def run_direct_mcmc(
    model: ForwardModel,
    likelihood: LikelihoodSpec,
    dram: DramConfig,
    force: bool = False,
) -> Chain:
    """Conventional MCMC calling the true model at every in-box proposal.

    Refuses external-process backends unless ``force`` is set: a direct chain
    multiplies per-evaluation cost by the full sample count.
    """
    if model.spec.backend == "external" and not force:
        raise DirectRunRefusedError(
            "direct MCMC on an external model would launch one process per "
            "proposal; pass force=True (CLI: --force) to override"
        )
    prior = PriorSpec(model.spec.domain)
    posterior = PosteriorSpec(prior, likelihood, model)
    return sample(posterior, dram)
