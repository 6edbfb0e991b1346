"""Forward models: analytic test functions, a synthetic wake-calibration model,
and a file-protocol wrapper for external solvers.

Every model is a deterministic map from a parameter box into R^n_outputs and
counts its evaluations, which is how the pipeline asserts that sampling a
surrogate posterior launches zero model runs.
"""

from __future__ import annotations

import math
import os
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, ModelExecutionError
from .grid import Box

# Near-wall damping constants: exponent n and constant A+ are fixed, only the
# damping strength p is treated as a calibration parameter.
A_PLUS = 25.0
DAMPING_N = 1


def van_driest(c_s, delta, p, y_plus):
    """Near-wall mixing-length scaling C_S * delta * (1 - exp(-y+/A+))^p.

    ``p = 0`` disables damping entirely (the factor is exactly one); large
    ``p`` forces the lengthscale to zero near the wall.  ``y_plus`` may be a
    scalar or an array.
    """
    y = np.asarray(y_plus, dtype=float)
    factor = (1.0 - np.exp(-(y**DAMPING_N) / A_PLUS**DAMPING_N)) ** p
    result = c_s * delta * factor
    return float(result) if np.isscalar(y_plus) else result


@dataclass(frozen=True)
class ModelSpec:
    """Identity and signature of a forward model."""

    name: str
    n_inputs: int
    n_outputs: int
    domain: Box
    backend: str  # one of {"analytic", "synthetic-les", "external"}

    def __post_init__(self):
        if self.n_inputs < 1 or self.n_outputs < 1:
            raise ConfigurationError("model must have at least one input and one output")
        if self.domain.ndim != self.n_inputs:
            raise ConfigurationError("model domain dimension does not match n_inputs")


class ForwardModel:
    """Base class: validates inputs, counts calls, delegates to ``_evaluate``."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        """Number of completed model evaluations (instrumentation hook)."""
        return self._calls

    def __call__(self, theta) -> np.ndarray:
        t = np.asarray(theta, dtype=float)
        if t.shape != (self.spec.n_inputs,):
            raise DomainError(
                f"expected parameter vector of shape ({self.spec.n_inputs},), got {t.shape}"
            )
        if not self.spec.domain.contains(t):
            raise DomainError(f"parameter point {t.tolist()} outside model domain")
        out = np.asarray(self._evaluate(t), dtype=float).reshape(-1)
        if out.shape != (self.spec.n_outputs,):
            raise ModelExecutionError(
                f"model returned {out.shape[0]} outputs, expected {self.spec.n_outputs}",
                theta=t,
            )
        with self._lock:
            self._calls += 1
        return out

    def _evaluate(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class CallableModel(ForwardModel):
    """Forward model backed by an arbitrary Python callable."""

    def __init__(self, spec: ModelSpec, fn):
        super().__init__(spec)
        self._fn = fn

    def _evaluate(self, theta):
        return self._fn(theta)


# ---------------------------------------------------------------------------
# Analytic test functions (Genz-style families plus a multilinear model).
# ---------------------------------------------------------------------------

def _default_shift(ndim):
    return np.linspace(0.31, 0.79, ndim)


def _default_weight(ndim):
    return np.full(ndim, 5.0 / ndim)


def _analytic_fn(name, a, u):
    if name == "gaussian-peak":
        return lambda x: np.array([math.exp(-float(np.sum(a**2 * (x - u) ** 2)))])
    if name == "oscillatory":
        return lambda x: np.array([math.cos(2.0 * math.pi * u[0] + float(np.dot(a, x)))])
    if name == "product-peak":
        return lambda x: np.array([float(np.prod(1.0 / (a**-2 + (x - u) ** 2)))])
    if name == "corner-peak":
        d = len(a)
        return lambda x: np.array([(1.0 + float(np.dot(a, x))) ** (-(d + 1))])
    if name == "continuous":
        return lambda x: np.array([math.exp(-float(np.dot(a, np.abs(x - u))))])
    raise ConfigurationError(f"unknown analytic model {name!r}")


ANALYTIC_MODEL_NAMES = (
    "gaussian-peak",
    "oscillatory",
    "product-peak",
    "corner-peak",
    "continuous",
)


def analytic_model(name: str, ndim: int, domain: Box | None = None,
                   a=None, u=None) -> CallableModel:
    """Scalar-output analytic benchmark model on ``domain`` (unit box default)."""
    if domain is None:
        domain = Box.unit(ndim)
    a = _default_weight(ndim) if a is None else np.asarray(a, dtype=float)
    u = _default_shift(ndim) if u is None else np.asarray(u, dtype=float)
    fn = _analytic_fn(name, a, u)
    spec = ModelSpec(name=name, n_inputs=ndim, n_outputs=1, domain=domain, backend="analytic")
    unit_fn = fn if domain == Box.unit(ndim) else (lambda x, f=fn, d=domain: f(d.to_unit(x)))
    return CallableModel(spec, unit_fn)


def multilinear_model(ndim: int, domain: Box | None = None, coeffs=None) -> CallableModel:
    """Model affine in each coordinate separately: prod_n (a_n * x_n + b_n).

    Reproduced exactly by the isotropic grid of level ``ndim``; its surpluses
    vanish on all deeper levels, which makes it the canonical refinement
    termination benchmark.
    """
    if domain is None:
        domain = Box.unit(ndim)
    if coeffs is None:
        coeffs = [(1.0 + 0.5 * n, 0.25 + 0.1 * n) for n in range(ndim)]
    ab = np.asarray(coeffs, dtype=float)
    if ab.shape != (ndim, 2):
        raise ConfigurationError(f"expected {ndim} coefficient pairs, got shape {ab.shape}")

    def fn(x):
        return np.array([float(np.prod(ab[:, 0] * x + ab[:, 1]))])

    spec = ModelSpec(
        name="multilinear", n_inputs=ndim, n_outputs=1, domain=domain, backend="analytic"
    )
    return CallableModel(spec, fn)


# ---------------------------------------------------------------------------
# Synthetic wake-calibration model.
# ---------------------------------------------------------------------------

# Calibration parameter box: Smagorinsky constant, damping strength, filter
# width (the searching regions used throughout the bundled demo experiment).
CALIBRATION_DOMAIN = Box(
    lower=(0.0, 0.0, math.pi / 600.0),
    upper=(0.2, 2.0, math.pi / 200.0),
)

TRUE_THETA = (0.15, 0.5, math.pi / 480.0)

STATION_QUANTITIES = ("U", "V", "uu", "vv", "uv")


@dataclass(frozen=True)
class SyntheticLESConfig:
    """Fixed geometry and constants of the synthetic wake model.

    Eleven stations straddle the wake centerline; each contributes mean
    streamwise/vertical velocity and three Reynolds-stress components, for 55
    outputs total.  ``y_plus`` assigns every station a wall-unit distance used
    by the near-wall damping factor.
    """

    true_theta: tuple[float, float, float] = TRUE_THETA
    n_stations: int = 11
    station_span: tuple[float, float] = (0.6, 0.8)
    wake_center: float = 0.7
    wake_halfwidth: float = 0.06
    # Wall distance grows quadratically away from the wake centerline (the
    # centerline passes nearest the cylinder), so the stations with the
    # strongest near-wall damping are also the ones carrying the most signal.
    y_plus: tuple[float, ...] = field(
        default_factory=lambda: tuple(
            3.0 + 57.0 * ((y - 0.7) / 0.1) ** 2 for y in np.linspace(0.6, 0.8, 11)
        )
    )
    a_plus: float = A_PLUS
    damping_n: int = DAMPING_N

    def __post_init__(self):
        if len(self.y_plus) != self.n_stations:
            raise ConfigurationError("y_plus grid length must equal n_stations")
        if self.a_plus != A_PLUS or self.damping_n != DAMPING_N:
            raise ConfigurationError("damping constants are fixed (A+ = 25, n = 1)")

    @property
    def n_outputs(self) -> int:
        return self.n_stations * len(STATION_QUANTITIES)


class SyntheticLESModel(ForwardModel):
    """Cheap stand-in for a filtered-turbulence solver with tunable closure.

    Parameters theta = (C_S, p, delta).  Per station k the model forms the
    damped lengthscale van_driest(C_S, delta, p, y+_k), normalised by the
    undamped true-parameter lengthscale into lam_k, and derives

      * an amplitude factor F_k = 1 / (0.25 + 0.75 * lam_k), so stronger
        effective dissipation weakens the wake deficit and every Reynolds
        stress without the gradient ever saturating, and
      * a wake widening w_k = (1 + 0.5 * (delta/delta* - 1)) *
        (1 + 0.4 * lam_k^2): the filter width broadens resolved profiles
        directly, on top of the lengthscale-driven spreading.

    Station profiles over the scaled offset t_k = s_k / w_k (s spanning
    roughly [-1.7, 1.7] across the stations) follow the classical near-wake
    families: a Gaussian deficit for U, antisymmetric V and shear stress, a
    double-peaked streamwise stress, and a single-peaked vertical stress.
    Wall-unit distances run from 3 at the centerline station to 60 at the
    edges, so the damping strength p reshapes the high-amplitude center of
    every profile instead of merely rescaling it; that is what separates p
    from C_S in the calibration.

    A resolution penalty proportional to dhat^4 (dhat = relative position of
    delta inside its searching range) adds filter-width-dependent
    oscillations that grow sharply for coarse filters: the output surface is
    smooth where delta is small and increasingly complicated near the top of
    the delta range.

    p enters exclusively through the lengthscale, hence C_S = 0 makes every
    output independent of p.
    """

    def __init__(self, config: SyntheticLESConfig | None = None):
        cfg = config or SyntheticLESConfig()
        spec = ModelSpec(
            name="synthetic-les",
            n_inputs=3,
            n_outputs=cfg.n_outputs,
            domain=CALIBRATION_DOMAIN,
            backend="synthetic-les",
        )
        super().__init__(spec)
        self.config = cfg
        self._stations = np.linspace(*cfg.station_span, cfg.n_stations)
        self._s = (self._stations - cfg.wake_center) / cfg.wake_halfwidth
        self._y_plus = np.asarray(cfg.y_plus, dtype=float)
        ts, ps, ds = cfg.true_theta
        self._l_ref = ts * ds  # undamped lengthscale at the true parameters

    def _evaluate(self, theta):
        c_s, p, delta = theta
        delta_star = self.config.true_theta[2]
        lam = van_driest(c_s, delta, p, self._y_plus) / self._l_ref
        amp = 1.0 / (0.25 + 0.75 * lam)
        widen = (1.0 + 0.5 * (delta / delta_star - 1.0)) * (1.0 + 0.4 * lam * lam)
        t = self._s / widen
        gauss = np.exp(-t * t)

        lo, hi = self.spec.domain.lower[2], self.spec.domain.upper[2]
        dhat = (delta - lo) / (hi - lo)
        penalty = 0.25 * dhat**4
        s = self._s

        u_mean = 1.0 - 0.60 * amp * gauss \
            + penalty * np.sin(6.0 * dhat + 2.0 * s + 0.7)
        v_mean = 0.26 * amp * t * gauss \
            + 0.8 * penalty * np.sin(7.0 * dhat + 1.6 * s + 2.1)
        uu = (0.64 * t * t + 0.16) * amp * gauss \
            + penalty * np.sin(8.0 * dhat + 2.4 * s + 4.0)
        vv = 0.45 * amp * gauss \
            + 1.2 * penalty * np.sin(9.0 * dhat + 1.9 * s + 1.3)
        uv = -0.29 * amp * t * gauss \
            + 0.8 * penalty * np.sin(7.5 * dhat + 2.2 * s + 5.2)

        return np.concatenate([u_mean, v_mean, uu, vv, uv])


def synthetic_les_model(config: SyntheticLESConfig | None = None) -> SyntheticLESModel:
    return SyntheticLESModel(config)


# ---------------------------------------------------------------------------
# External-process protocol.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExternalProtocol:
    """File protocol for attaching an external solver.

    Per evaluation a parameter file is written (first line the number of
    parameters, one decimal value per following line), the executable is
    invoked as ``exe param_file output_file``, and the output file must hold
    the number of outputs on its first line followed by one decimal value per
    line.  Exit code 0 is required; any deviation raises a model-execution
    error with diagnostics.
    """

    exe: str
    workdir: str
    timeout: float | None = None


class ExternalModel(ForwardModel):
    """Forward model delegating each evaluation to an external executable."""

    def __init__(self, spec: ModelSpec, protocol: ExternalProtocol):
        if spec.backend != "external":
            raise ConfigurationError("ExternalModel requires backend 'external'")
        super().__init__(spec)
        self.protocol = protocol
        os.makedirs(protocol.workdir, exist_ok=True)

    def _evaluate(self, theta):
        proto = self.protocol
        with tempfile.TemporaryDirectory(dir=proto.workdir, prefix="eval_") as rundir:
            param_path = os.path.join(rundir, "params.txt")
            output_path = os.path.join(rundir, "output.txt")
            with open(param_path, "w") as fh:
                fh.write(f"{self.spec.n_inputs}\n")
                for value in theta:
                    fh.write(f"{value!r}\n")
            try:
                proc = subprocess.run(
                    [proto.exe, param_path, output_path],
                    capture_output=True,
                    text=True,
                    timeout=proto.timeout,
                )
            except subprocess.TimeoutExpired as exc:
                raise ModelExecutionError(
                    f"external model timed out after {proto.timeout}s",
                    theta=theta,
                    diagnostics=str(exc),
                ) from exc
            except OSError as exc:
                raise ModelExecutionError(
                    f"failed to launch external model {proto.exe!r}",
                    theta=theta,
                    diagnostics=str(exc),
                ) from exc
            if proc.returncode != 0:
                raise ModelExecutionError(
                    f"external model exited with code {proc.returncode}",
                    theta=theta,
                    diagnostics=proc.stderr.strip()[-500:],
                )
            return self._parse_output(output_path, theta)

    def _parse_output(self, path, theta):
        try:
            with open(path) as fh:
                lines = [ln.strip() for ln in fh if ln.strip()]
        except OSError as exc:
            raise ModelExecutionError(
                "external model produced no readable output file",
                theta=theta,
                diagnostics=str(exc),
            ) from exc
        try:
            count = int(lines[0])
            values = [float(ln) for ln in lines[1:]]
        except (IndexError, ValueError) as exc:
            raise ModelExecutionError(
                "malformed external model output file",
                theta=theta,
                diagnostics=f"{path}: {exc}",
            ) from exc
        if count != self.spec.n_outputs or len(values) != count:
            raise ModelExecutionError(
                f"external model output length {len(values)} (declared {count}) "
                f"!= expected {self.spec.n_outputs}",
                theta=theta,
            )
        return np.array(values)
