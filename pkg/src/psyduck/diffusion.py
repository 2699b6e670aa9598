"""Variance schedules and the denoising-step contract.

Two backends implement the step: a closed-form Gaussian one whose optimal
denoiser is exact (the verification oracle for every protocol property),
and an external bridge that delegates the deterministic mean prediction to
a subprocess.  In both cases the secret key influences only the injected
noise, never the deterministic part of the update.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ParameterError
from .keys import (
    INIT_NOISE_TAG,
    STEP_NOISE_TAG,
    NoiseContext,
    SecretKey,
    gaussian_field,
)

PRECISION_DTYPES = {"f32": np.float32, "f64": np.float64}
_DTYPE_PRECISION = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}

SCHEDULE_PRESETS = {
    "linear-1000": (1000, 1e-4, 0.02),
    "linear-50": (50, 1e-4, 0.05),
}


@dataclass
class Sample:
    """An N-dimensional numeric field flowing through denoising steps."""

    values: np.ndarray
    space: str = "latent"

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.dtype not in _DTYPE_PRECISION:
            raise ParameterError(f"sample dtype must be float32/float64, got {self.values.dtype}")
        if self.space not in ("pixel", "latent"):
            raise ParameterError(f"space must be 'pixel' or 'latent', got {self.space!r}")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def precision(self) -> str:
        return _DTYPE_PRECISION[self.values.dtype]

    def copy(self) -> "Sample":
        return Sample(self.values.copy(), self.space)


def _finish(values64: np.ndarray, like: Sample, space: str | None = None) -> Sample:
    """Round a f64 working buffer to the storage dtype of `like` once."""
    out = values64.astype(like.values.dtype)
    if not np.isfinite(out).all():
        raise ParameterError("operation produced non-finite values")
    return Sample(out, like.space if space is None else space)


@dataclass(frozen=True)
class Schedule:
    """Variance schedule: beta_t, cumulative alpha_bar_t, and posterior sigma_t.

    Uses the convention alpha_bar_0 := 1, which makes sigma_1 exactly 0: the
    final denoising step is deterministic.
    """

    beta: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta)

    def check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ParameterError(f"timestep {t} outside schedule range 1..{self.T}")


def make_schedule(T: int, beta_start: float, beta_end: float) -> Schedule:
    """Linear beta schedule inclusive of both endpoints."""
    if T < 2:
        raise ParameterError("schedule needs T >= 2")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ParameterError("need 0 < beta_start <= beta_end < 1")
    beta = np.linspace(beta_start, beta_end, T)
    alpha_bar = np.cumprod(1.0 - beta)
    alpha_bar_prev = np.concatenate(([1.0], alpha_bar[:-1]))
    sigma = np.sqrt(beta * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar))
    if not (np.diff(alpha_bar) < 0).all():
        raise ParameterError("alpha_bar must be strictly decreasing")
    if not (np.diff(sigma) >= 0).all():
        raise ParameterError("sigma must be nondecreasing for this schedule")
    for arr in (beta, alpha_bar, sigma):
        arr.setflags(write=False)
    return Schedule(beta=beta, alpha_bar=alpha_bar, sigma=sigma)


def schedule_from_preset(name: str) -> Schedule:
    if name not in SCHEDULE_PRESETS:
        raise ParameterError(f"unknown schedule preset {name!r}; have {sorted(SCHEDULE_PRESETS)}")
    return make_schedule(*SCHEDULE_PRESETS[name])


@dataclass
class BackendSpec:
    """Which denoiser runs the deterministic part of a step.

    analytic_gaussian: per-element Gaussian prior N(prior_mean, prior_std^2)
    with the exact posterior-mean denoiser.  external_bridge: the mean comes
    from a subprocess (see `bridge_client`); noise stays on this side.
    step_mode='deterministic' skips the sigma_t noise injection entirely.
    """

    kind: str = "analytic_gaussian"
    prior_mean: float | np.ndarray = 0.0
    prior_std: float | np.ndarray = 1.0
    step_mode: str = "stochastic"
    bridge: Any = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("analytic_gaussian", "external_bridge"):
            raise ParameterError(f"unknown backend kind {self.kind!r}")
        if self.step_mode not in ("stochastic", "deterministic"):
            raise ParameterError(f"unknown step_mode {self.step_mode!r}")
        if self.kind == "analytic_gaussian" and not np.all(np.asarray(self.prior_std) > 0):
            raise ParameterError("analytic backend needs prior_std > 0 elementwise")


def forward_diffuse(x0: Sample, t: int, sched: Schedule, ctx: NoiseContext) -> Sample:
    """Closed-form forward marginal x_t = sqrt(abar_t) x_0 + sqrt(1-abar_t) eps."""
    sched.check_t(t)
    abar = sched.alpha_bar[t - 1]
    eps = gaussian_field(ctx, x0.shape, "f64")
    x64 = np.sqrt(abar) * x0.values.astype(np.float64) + np.sqrt(1.0 - abar) * eps
    return _finish(x64, x0)


def posterior_x0(xt64: np.ndarray, t: int, sched: Schedule, spec: BackendSpec) -> np.ndarray:
    """Exact E[x_0 | x_t] under the per-element Gaussian prior (f64 in/out)."""
    abar = sched.alpha_bar[t - 1]
    var0 = np.square(np.asarray(spec.prior_std, dtype=np.float64))
    mu0 = np.asarray(spec.prior_mean, dtype=np.float64)
    return (var0 * np.sqrt(abar) * xt64 + (1.0 - abar) * mu0) / (var0 * abar + (1.0 - abar))


def _predict_mean64(x_t: Sample, t: int, sched: Schedule, spec: BackendSpec) -> np.ndarray:
    """Deterministic mean of x_{t-1} given x_t, computed in f64."""
    sched.check_t(t)
    if spec.kind == "external_bridge":
        if spec.bridge is None:
            raise ParameterError("external_bridge backend has no attached bridge client")
        return spec.bridge.model_predict(x_t.values, t).astype(np.float64)
    x64 = x_t.values.astype(np.float64)
    x0_hat = posterior_x0(x64, t, sched, spec)
    abar = sched.alpha_bar[t - 1]
    abar_prev = 1.0 if t == 1 else sched.alpha_bar[t - 2]
    alpha = 1.0 - sched.beta[t - 1]
    c1 = np.sqrt(abar_prev) * sched.beta[t - 1] / (1.0 - abar)
    c2 = np.sqrt(alpha) * (1.0 - abar_prev) / (1.0 - abar)
    return c1 * x0_hat + c2 * x64


def model_predict(x_t: Sample, t: int, sched: Schedule, spec: BackendSpec) -> Sample:
    """Predicted mean of x_{t-1}: the key-independent part of a step."""
    return _finish(_predict_mean64(x_t, t, sched, spec), x_t)


def diffusion_step(x_t: Sample, t: int, key: SecretKey, sched: Schedule, spec: BackendSpec) -> Sample:
    """One denoising step: predicted mean plus sigma_t-scaled keyed noise.

    The key gates only the injected noise, so in deterministic step mode or
    when sigma_t = 0 every key yields the same output.
    """
    mean64 = _predict_mean64(x_t, t, sched, spec)
    sigma_t = float(sched.sigma[t - 1])
    if spec.step_mode == "stochastic" and sigma_t > 0.0:
        ctx = NoiseContext(key, t, STEP_NOISE_TAG)
        mean64 = mean64 + sigma_t * gaussian_field(ctx, x_t.shape, "f64")
    return _finish(mean64, x_t)


def preprocess(
    sync_key: SecretKey,
    shape: tuple[int, ...],
    sched: Schedule,
    precision: str = "f64",
    space: str = "latent",
) -> Sample:
    """The shared initial field x_T, addressed by the sync key."""
    ctx = NoiseContext(sync_key, sched.T, INIT_NOISE_TAG)
    return Sample(gaussian_field(ctx, shape, precision), space)
