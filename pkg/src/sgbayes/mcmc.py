"""Delayed-rejection adaptive-Metropolis (DRAM) sampling and chain diagnostics.

The sampler is a Gaussian random-walk Metropolis chain with two standard
accelerations: the proposal covariance is adapted from the running sample
covariance (scaled by 2.4^2/d and regularised), and a rejected first-stage
proposal triggers a second, narrower proposal accepted with the two-stage
delayed-rejection ratio.  Proposals outside the prior box have density zero
and are auto-rejected at their stage without evaluating the target.

Chains record every iterate (rejections repeat the previous state), the
log-posterior, and a stage tag: -1 initial state, 1 first-stage accept,
2 second-stage accept, 0 rejection.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InitializationError, SgbayesError
from .grid import Box

STAGE_INITIAL = -1
STAGE_REJECT = 0
STAGE_ACCEPT_1 = 1
STAGE_ACCEPT_2 = 2

_ESS_MAX_LAG = 5000


@dataclass
class DramConfig:
    """Tuning constants of the DRAM sampler; every field is overridable."""

    theta0: np.ndarray
    n_samples: int = 60_000
    burn_in: int = 10_000
    bounds: Box | None = None
    proposal_cov: np.ndarray | None = None  # default diag((0.1 * range)^2) from bounds
    adapt_start: int | None = 1000          # None disables adaptation
    adapt_interval: int = 100
    scale_sd: float | None = None           # default 2.4^2 / ndim
    cov_reg: float = 1e-10
    dr_stages: int = 2
    dr_scale: float = 5.0                   # second-stage covariance = C / dr_scale^2
    seed: int = 0

    def __post_init__(self):
        self.theta0 = np.asarray(self.theta0, dtype=float).reshape(-1)
        if self.n_samples < 2:
            raise ConfigurationError("n_samples must be at least 2")
        if not 0 <= self.burn_in < self.n_samples:
            raise ConfigurationError("burn-in must satisfy 0 <= burn_in < n_samples")
        if self.dr_stages not in (1, 2):
            raise ConfigurationError("dr_stages must be 1 or 2")
        if self.dr_scale <= 1.0:
            raise ConfigurationError("dr_scale must be > 1")
        if self.adapt_interval < 1:
            raise ConfigurationError("adapt_interval must be >= 1")
        if self.bounds is not None and self.bounds.ndim != self.theta0.size:
            raise ConfigurationError("bounds dimension does not match theta0")
        if self.proposal_cov is None:
            if self.bounds is None:
                raise ConfigurationError(
                    "proposal_cov is required when no bounds are given"
                )
            self.proposal_cov = np.diag((0.1 * self.bounds.ranges) ** 2)
        else:
            self.proposal_cov = np.atleast_2d(np.asarray(self.proposal_cov, dtype=float))
            if self.proposal_cov.shape != (self.theta0.size, self.theta0.size):
                raise ConfigurationError("proposal_cov must be (ndim, ndim)")

    @property
    def ndim(self) -> int:
        return self.theta0.size


@dataclass
class SamplerStats:
    """Proposal bookkeeping; target_calls counts actual target evaluations."""

    stage1_proposals: int = 0
    stage1_outside: int = 0
    stage2_proposals: int = 0
    stage2_outside: int = 0
    adaptations: int = 0
    target_calls: int = 0


@dataclass
class Chain:
    """MCMC sample record: one row per iteration, rejections repeat the state."""

    draws: np.ndarray      # (n_samples, ndim)
    log_posts: np.ndarray  # (n_samples,)
    stages: np.ndarray     # (n_samples,) int8 stage tags
    burn_in: int = 0
    stats: SamplerStats | None = None

    @property
    def n_samples(self) -> int:
        return self.draws.shape[0]

    @property
    def ndim(self) -> int:
        return self.draws.shape[1]

    def post_burn_in(self) -> np.ndarray:
        return self.draws[self.burn_in:]

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            names = [f"theta_{k + 1}" for k in range(self.ndim)]
            writer.writerow(["iter", *names, "log_post", "stage"])
            for i in range(self.n_samples):
                row = [i]
                row.extend(repr(float(v)) for v in self.draws[i])
                row.append(repr(float(self.log_posts[i])))
                row.append(int(self.stages[i]))
                writer.writerow(row)

    @classmethod
    def load_csv(cls, path, burn_in: int = 0) -> "Chain":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[0] != "iter" or header[-1] != "stage":
                raise ConfigurationError(f"{path}: not a chain CSV")
            ndim = len(header) - 3
            draws, lps, stages = [], [], []
            for row in reader:
                if not row:
                    continue
                draws.append([float(v) for v in row[1 : 1 + ndim]])
                lps.append(float(row[1 + ndim]))
                stages.append(int(row[2 + ndim]))
        return cls(
            draws=np.array(draws),
            log_posts=np.array(lps),
            stages=np.array(stages, dtype=np.int8),
            burn_in=burn_in,
        )


def _log_one_minus_exp(log_a: float) -> float:
    """log(1 - exp(log_a)) for log_a <= 0, -inf when log_a == 0."""
    if log_a == -np.inf:
        return 0.0
    if log_a >= 0.0:
        return -np.inf
    return float(np.log1p(-np.exp(log_a)))


def sample(target, config: DramConfig) -> Chain:
    """Run the DRAM chain against ``target`` (a log-posterior callable).

    The chain is a pure function of the configuration (including the seed)
    and the target; identical inputs give bit-identical output.
    """
    cfg = config
    d = cfg.ndim
    rng = np.random.default_rng(cfg.seed)
    scale_sd = cfg.scale_sd if cfg.scale_sd is not None else 2.4**2 / d
    stats = SamplerStats()

    lo = hi = None
    if cfg.bounds is not None:
        lo, hi = cfg.bounds.lower_array, cfg.bounds.upper_array

    def log_post(theta):
        if lo is not None and (np.any(theta < lo) or np.any(theta > hi)):
            return -np.inf
        stats.target_calls += 1
        value = float(target(theta))
        if np.isnan(value) or value == np.inf:
            raise SgbayesError(
                f"target returned non-finite value {value} at {theta.tolist()}"
            )
        return value

    x = cfg.theta0.copy()
    lp = log_post(x)
    if not np.isfinite(lp):
        raise InitializationError(
            f"log-posterior is not finite at the initial point {x.tolist()}"
        )

    draws = np.empty((cfg.n_samples, d))
    log_posts = np.empty(cfg.n_samples)
    stages = np.empty(cfg.n_samples, dtype=np.int8)
    draws[0], log_posts[0], stages[0] = x, lp, STAGE_INITIAL

    prop_cov = cfg.proposal_cov.copy()
    chol = np.linalg.cholesky(prop_cov)

    # Running mean / scatter over the whole history (Welford), used by the
    # adaptive-Metropolis covariance update.
    run_mean = x.copy()
    run_m2 = np.zeros((d, d))
    n_seen = 1

    def mahalanobis(v):
        w = np.linalg.solve(chol, v)
        return float(np.dot(w, w))

    for t in range(1, cfg.n_samples):
        accepted = False
        stage = STAGE_REJECT

        z = rng.standard_normal(d)
        y1 = x + chol @ z
        stats.stage1_proposals += 1
        outside1 = lo is not None and (np.any(y1 < lo) or np.any(y1 > hi))
        if outside1:
            stats.stage1_outside += 1
            lp1 = -np.inf
        else:
            lp1 = log_post(y1)
        log_a1 = min(0.0, lp1 - lp)
        if np.log(rng.random()) < log_a1:
            x, lp = y1, lp1
            accepted, stage = True, STAGE_ACCEPT_1

        if not accepted and cfg.dr_stages == 2:
            z2 = rng.standard_normal(d)
            y2 = x + (chol @ z2) / cfg.dr_scale
            stats.stage2_proposals += 1
            outside2 = lo is not None and (np.any(y2 < lo) or np.any(y2 > hi))
            if outside2:
                stats.stage2_outside += 1
                lp2 = -np.inf
            else:
                lp2 = log_post(y2)
            if np.isfinite(lp2):
                # Two-stage delayed-rejection ratio: the first-stage proposal
                # densities from y2 and from x toward y1 do not cancel.
                log_a1_rev = min(0.0, lp1 - lp2)
                log_num = (
                    lp2
                    - 0.5 * mahalanobis(y1 - y2)
                    + _log_one_minus_exp(log_a1_rev)
                )
                log_den = (
                    lp
                    - 0.5 * mahalanobis(y1 - x)
                    + _log_one_minus_exp(log_a1)
                )
                log_a2 = min(0.0, log_num - log_den)
                if np.log(rng.random()) < log_a2:
                    x, lp = y2, lp2
                    accepted, stage = True, STAGE_ACCEPT_2

        draws[t], log_posts[t], stages[t] = x, lp, stage

        n_seen += 1
        delta = x - run_mean
        run_mean += delta / n_seen
        run_m2 += np.outer(delta, x - run_mean)

        if (
            cfg.adapt_start is not None
            and t >= cfg.adapt_start
            and (t - cfg.adapt_start) % cfg.adapt_interval == 0
            and n_seen > d
        ):
            cov = run_m2 / (n_seen - 1)
            prop_cov = scale_sd * cov + cfg.cov_reg * np.eye(d)
            chol = np.linalg.cholesky(prop_cov)
            stats.adaptations += 1

    return Chain(draws=draws, log_posts=log_posts, stages=stages,
                 burn_in=cfg.burn_in, stats=stats)


# ---------------------------------------------------------------------------
# Diagnostics.
# ---------------------------------------------------------------------------

def _autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Empirical autocorrelation rho_0..rho_max_lag via FFT; rho_0 = 1."""
    n = x.size
    xc = x - x.mean()
    var = float(np.dot(xc, xc)) / n
    if var == 0.0:
        out = np.zeros(max_lag + 1)
        out[0] = 1.0
        return out
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1] / n
    return acov / acov[0]


def effective_sample_size(x: np.ndarray) -> float:
    """ESS from the initial-monotone-sequence estimator of the autocorrelation time.

    Sums adjacent-pair autocorrelations while positive, enforcing
    monotonicity; a zero-variance sequence has ESS 1 by convention.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2 or np.all(x == x[0]):
        return 1.0
    rho = _autocorrelation(x, min(n - 1, _ESS_MAX_LAG))
    total = 0.0
    prev = np.inf
    m = 0
    while 2 * m + 1 < rho.size:
        gamma = rho[2 * m] + rho[2 * m + 1]
        if gamma <= 0.0:
            break
        gamma = min(gamma, prev)
        total += gamma
        prev = gamma
        m += 1
    tau = max(1.0, 2.0 * total - 1.0)
    return n / tau


@dataclass
class ChainDiagnostics:
    n_samples: int
    burn_in: int
    acceptance_stage1: float
    acceptance_stage2: float
    acceptance_total: float
    mean: np.ndarray
    sd: np.ndarray
    autocorr: np.ndarray  # (ndim, n_lags + 1)
    ess: np.ndarray
    lags: int = 100

    def to_text(self) -> str:
        lines = [
            f"samples            {self.n_samples} (burn-in {self.burn_in})",
            f"acceptance stage 1 {self.acceptance_stage1:.4f}",
            f"acceptance stage 2 {self.acceptance_stage2:.4f}",
            f"acceptance total   {self.acceptance_total:.4f}",
        ]
        for k in range(self.mean.size):
            rho1 = self.autocorr[k, 1] if self.autocorr.shape[1] > 1 else float("nan")
            lines.append(
                f"theta_{k + 1}: mean {self.mean[k]: .6g}  sd {self.sd[k]:.6g}  "
                f"lag-1 acf {rho1: .4f}  ess {self.ess[k]:.1f}"
            )
        return "\n".join(lines)


def diagnostics(chain: Chain, burn_in: int | None = None, lags: int = 100) -> ChainDiagnostics:
    """Acceptance rates, post-burn-in moments, autocorrelations and ESS."""
    if chain.n_samples < 1:
        raise ConfigurationError("chain is empty")
    burn = chain.burn_in if burn_in is None else burn_in
    if not 0 <= burn < chain.n_samples:
        raise ConfigurationError("burn-in must be smaller than the chain length")
    proposals = chain.stages[1:]
    n_prop = proposals.size
    acc1 = float(np.sum(proposals == STAGE_ACCEPT_1)) / max(1, n_prop)
    acc2 = float(np.sum(proposals == STAGE_ACCEPT_2)) / max(1, n_prop)
    post = chain.draws[burn:]
    n_lags = max(1, min(lags, post.shape[0] - 2))
    autocorr = np.array(
        [_autocorrelation(post[:, k], n_lags) for k in range(chain.ndim)]
    )
    ess = np.array([effective_sample_size(post[:, k]) for k in range(chain.ndim)])
    return ChainDiagnostics(
        n_samples=chain.n_samples,
        burn_in=burn,
        acceptance_stage1=acc1,
        acceptance_stage2=acc2,
        acceptance_total=acc1 + acc2,
        mean=post.mean(axis=0),
        sd=post.std(axis=0, ddof=1),
        autocorr=autocorr,
        ess=ess,
        lags=n_lags,
    )


# ---------------------------------------------------------------------------
# Histograms (plot-ready marginal density estimates).
# ---------------------------------------------------------------------------

def _axis_range(samples: np.ndarray, bounds) -> tuple[float, float]:
    if bounds is not None:
        return float(bounds[0]), float(bounds[1])
    lo, hi = float(samples.min()), float(samples.max())
    if lo == hi:  # degenerate chain: give the single value a unit-width bin
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def marginal_histogram(chain: Chain, dim: int, bins: int = 50,
                       bounds: tuple[float, float] | None = None,
                       burn_in: int | None = None):
    """Normalised histogram of one marginal; integrates to 1 over its range.

    ``bounds`` defaults to the sample range; pass the prior interval to make
    densities comparable across runs.  Returns (edges, density).
    """
    if bins < 2:
        raise ConfigurationError("need at least 2 bins")
    burn = chain.burn_in if burn_in is None else burn_in
    samples = chain.draws[burn:, dim]
    rng_ = _axis_range(samples, bounds)
    density, edges = np.histogram(samples, bins=bins, range=rng_, density=True)
    return edges, density


def joint_histogram(chain: Chain, dims: tuple[int, int], bins: int = 50,
                    bounds: tuple[tuple[float, float], tuple[float, float]] | None = None,
                    burn_in: int | None = None):
    """Normalised 2-D histogram over a pair of dimensions.

    Returns (x_edges, y_edges, density) with density integrating to 1.
    """
    if bins < 2:
        raise ConfigurationError("need at least 2 bins")
    burn = chain.burn_in if burn_in is None else burn_in
    xs = chain.draws[burn:, dims[0]]
    ys = chain.draws[burn:, dims[1]]
    rng_x = _axis_range(xs, None if bounds is None else bounds[0])
    rng_y = _axis_range(ys, None if bounds is None else bounds[1])
    density, x_edges, y_edges = np.histogram2d(
        xs, ys, bins=bins, range=(rng_x, rng_y), density=True
    )
    return x_edges, y_edges, density


def save_histogram_csv(edges: np.ndarray, density: np.ndarray, path) -> None:
    """Write a 1-D histogram as CSV rows ``bin_left,bin_right,density``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "density"])
        for k in range(density.size):
            writer.writerow([repr(float(edges[k])), repr(float(edges[k + 1])),
                             repr(float(density[k]))])


def save_joint_histogram_csv(x_edges, y_edges, density, path) -> None:
    """Write a 2-D histogram as CSV rows ``x_left,x_right,y_left,y_right,density``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_left", "x_right", "y_left", "y_right", "density"])
        for i in range(density.shape[0]):
            for j in range(density.shape[1]):
                writer.writerow([
                    repr(float(x_edges[i])), repr(float(x_edges[i + 1])),
                    repr(float(y_edges[j])), repr(float(y_edges[j + 1])),
                    repr(float(density[i, j])),
                ])
