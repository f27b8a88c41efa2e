"""
Diffusion and reverse diffusion math.

Step indices are 1-based throughout: ``t = 1..T`` for the full chain and
``k = 1..K`` for a subsequence, with ``alpha_bar[0] = 1`` stored explicitly.
All tables are float64 numpy arrays. Operations accept numpy arrays or torch
tensors for the sample arguments and return the same kind.
"""
import math
from dataclasses import dataclass

import numpy as np
import torch

from fastvg.common import ContractViolation, ParameterError, ShapeError

BETA_MAX = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variances and the cumulative signal retention of the forward chain"""

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    offset: float = 0.008

    def __post_init__(self):
        for name in ("beta", "alpha", "alpha_bar"):
            getattr(self, name).setflags(write=False)

    def beta_at(self, t):
        return float(self.beta[check_step(t, self.T) - 1])

    def alpha_at(self, t):
        return float(self.alpha[check_step(t, self.T) - 1])

    def alpha_bar_at(self, t):
        """ᾱ_t, defined for t = 0..T"""
        if not 0 <= int(t) <= self.T:
            raise ParameterError(f"Step {t} outside [0, {self.T}]")
        return float(self.alpha_bar[int(t)])

    def to_dict(self):
        return {"T": self.T, "offset": self.offset, "beta": self.beta.tolist()}

    @classmethod
    def from_beta(cls, beta, offset=0.008):
        """Build the derived tables from β, ᾱ_t = ᾱ_{t-1}·α_t"""
        beta = np.asarray(beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size < 1:
            raise ParameterError("beta must be a non-empty vector")
        if np.any(beta <= 0) or np.any(beta > BETA_MAX):
            raise ParameterError(f"beta must lie in (0, {BETA_MAX}]")
        alpha = 1.0 - beta
        alpha_bar = np.empty(beta.size + 1, dtype=np.float64)
        alpha_bar[0] = 1.0
        alpha_bar[1:] = np.cumprod(alpha)
        return cls(T=int(beta.size), beta=beta.copy(), alpha=alpha, alpha_bar=alpha_bar, offset=float(offset))

    @classmethod
    def from_dict(cls, data):
        return cls.from_beta(np.asarray(data["beta"], dtype=np.float64), offset=data.get("offset", 0.008))


@dataclass(frozen=True)
class SubSchedule:
    """
    Accelerated subsequence S_1 < ... < S_K with remapped α and σ.

    Arrays are indexed with ``k - 1``.
    """

    K: int
    S: np.ndarray
    alpha_sub: np.ndarray
    sigma_sub: np.ndarray
    alpha_bar_sub: np.ndarray

    def step(self, k):
        """Return (S_k, alpha_sub[k], sigma_sub[k], ᾱ_{S_k}) for a 1-based k"""
        if not 1 <= int(k) <= self.K:
            raise ParameterError(f"Subsequence step {k} outside [1, {self.K}]")
        i = int(k) - 1
        return int(self.S[i]), float(self.alpha_sub[i]), float(self.sigma_sub[i]), float(self.alpha_bar_sub[i])


def check_step(t, T):
    """Validate a 1-based step index"""
    if isinstance(t, (np.integer, int)) or (isinstance(t, float) and float(t).is_integer()):
        t = int(t)
    else:
        raise ParameterError(f"Step index must be an integer, got {t!r}")
    if not 1 <= t <= T:
        raise ParameterError(f"Step {t} outside [1, {T}]")
    return t


def _check_shapes(a, b, what="inputs"):
    if tuple(a.shape) != tuple(b.shape):
        raise ShapeError(f"Shape mismatch between {what}: {tuple(a.shape)} vs {tuple(b.shape)}")


def _table_coef(table, t, like):
    """
    Look up a coefficient for a scalar step or a per-example tensor of steps.

    Tensor steps give a coefficient broadcastable against ``like`` along the
    leading (batch) dimension.
    """
    if torch.is_tensor(t):
        values = torch.as_tensor(table, dtype=torch.float64)[t.long().cpu()]
        values = values.to(dtype=like.dtype, device=like.device)
        return values.reshape(-1, *([1] * (like.dim() - 1)))
    return float(table[t])


def _check_step_tensor(t, T):
    if int(t.min()) < 1 or int(t.max()) > T:
        raise ParameterError(f"Steps must lie in [1, {T}]")


def build_cosine_schedule(T=1000, offset=0.008):
    """
    Cosine schedule with ᾱ_t = f(t)/f(0), f(t) = cos²(((t/T + s)/(1 + s))·π/2).

    β_t is clipped at 0.999 and ᾱ is rebuilt from the clipped β so that
    ᾱ_t = ᾱ_{t-1}·α_t holds for every t.
    """
    if int(T) != T or T < 1:
        raise ParameterError(f"T must be a positive integer, got {T}")
    if not offset > 0:
        raise ParameterError(f"offset must be positive, got {offset}")
    T = int(T)
    steps = np.arange(T + 1, dtype=np.float64)
    f = np.cos(((steps / T + offset) / (1.0 + offset)) * math.pi / 2) ** 2
    target = f / f[0]
    beta = 1.0 - target[1:] / target[:-1]
    beta = np.clip(beta, np.finfo(np.float64).tiny, BETA_MAX)
    return NoiseSchedule.from_beta(beta, offset=offset)


def forward_diffuse(x0, t, eps, sched: NoiseSchedule):
    """Closed-form diffusion x_t = √ᾱ_t x_0 + √(1-ᾱ_t) ε"""
    _check_shapes(x0, eps, "x0 and eps")
    if torch.is_tensor(t):
        _check_step_tensor(t, sched.T)
    else:
        t = check_step(t, sched.T)
    a = _table_coef(np.sqrt(sched.alpha_bar), t, x0)
    b = _table_coef(np.sqrt(1.0 - sched.alpha_bar), t, x0)
    return a * x0 + b * eps


def one_step_diffuse(x_prev, t, z, sched: NoiseSchedule):
    """One transition of the forward chain: √α_t x_{t-1} + √β_t z"""
    _check_shapes(x_prev, z, "x_prev and z")
    t = check_step(t, sched.T)
    return math.sqrt(sched.alpha[t - 1]) * x_prev + math.sqrt(sched.beta[t - 1]) * z


def posterior_sigma(t, sched: NoiseSchedule):
    """σ_t with σ_t² = (1-ᾱ_{t-1})/(1-ᾱ_t)·β_t"""
    t = check_step(t, sched.T)
    var = (1.0 - sched.alpha_bar[t - 1]) / (1.0 - sched.alpha_bar[t]) * sched.beta[t - 1]
    return math.sqrt(max(var, 0.0))


def subsequence_indices(K, endpoints, spacing="linear"):
    """
    Linearly spaced step indices between S_1 and S_K.

    Rounding ties go to the lower index. K = 1 keeps only S_K.
    """
    s_1, s_k = (int(x) for x in endpoints)
    if spacing != "linear":
        raise ParameterError(f"Unsupported subsequence spacing: {spacing}")
    if K < 1:
        raise ParameterError(f"K must be at least 1, got {K}")
    if K == 1:
        return np.array([s_k], dtype=np.int64)
    if K > s_k - s_1 + 1:
        raise ParameterError(f"K={K} exceeds the number of available steps between {s_1} and {s_k}")
    raw = np.linspace(s_1, s_k, K)
    return np.ceil(raw - 0.5).astype(np.int64)


def build_subsequence(K, endpoints, sched: NoiseSchedule, spacing="linear"):
    """
    Subsequence with remapped α_{S_k} = ᾱ_{S_k}/ᾱ_{S_{k-1}} and
    σ²_{S_k} = (1-ᾱ_{S_{k-1}})/(1-ᾱ_{S_k})·(1-α_{S_k}), with ᾱ_{S_0} = 1.
    """
    s_1, s_k = (int(x) for x in endpoints)
    if not 1 <= s_1 <= s_k <= sched.T:
        raise ParameterError(f"Endpoints must satisfy 1 <= S_1 <= S_K <= {sched.T}, got ({s_1}, {s_k})")
    steps = subsequence_indices(int(K), (s_1, s_k), spacing)
    if np.any(np.diff(steps) <= 0):
        raise ParameterError(f"Subsequence is not strictly increasing: {steps}")
    alpha_bar_sub = sched.alpha_bar[steps]
    alpha_bar_prev = np.concatenate([[1.0], alpha_bar_sub[:-1]])
    alpha_sub = alpha_bar_sub / alpha_bar_prev
    sigma2 = (1.0 - alpha_bar_prev) / (1.0 - alpha_bar_sub) * (1.0 - alpha_sub)
    sigma_sub = np.sqrt(np.clip(sigma2, 0.0, None))
    for arr in (steps, alpha_sub, sigma_sub, alpha_bar_sub):
        arr.setflags(write=False)
    return SubSchedule(K=int(steps.size), S=steps, alpha_sub=alpha_sub, sigma_sub=sigma_sub, alpha_bar_sub=alpha_bar_sub)


def denoise_mean(x, eps_hat, k, sub: SubSchedule):
    """μ = (1/√α)(x - (1-α)/√(1-ᾱ)·ε̂) with the remapped α of step k"""
    _check_shapes(x, eps_hat, "x and eps_hat")
    _, alpha, _, alpha_bar = sub.step(k)
    return (x - (1.0 - alpha) / math.sqrt(1.0 - alpha_bar) * eps_hat) / math.sqrt(alpha)


def _is_zero(z):
    if torch.is_tensor(z):
        return not bool(torch.any(z != 0))
    return not np.any(np.asarray(z) != 0)


def reverse_step(x, k, eps_hat, z, sub: SubSchedule):
    """denoise_mean(x, ε̂, k) + σ_k z; the last step (k = 1) must be noiseless"""
    _check_shapes(x, z, "x and z")
    if int(k) == 1 and not _is_zero(z):
        raise ContractViolation("The final reverse step (k = 1) requires z = 0")
    _, _, sigma, _ = sub.step(k)
    return denoise_mean(x, eps_hat, k, sub) + sigma * z


def predict_start(x_t, t, eps_hat, sched: NoiseSchedule):
    """
    One-step x0-prediction at step t: (x_t - √(1-ᾱ_t) ε̂)/√ᾱ_t.

    This is `denoise_mean` on the single-step subsequence {t}; ``t`` may be
    a tensor of per-example steps.
    """
    _check_shapes(x_t, eps_hat, "x_t and eps_hat")
    if torch.is_tensor(t):
        _check_step_tensor(t, sched.T)
    else:
        t = check_step(t, sched.T)
    a = _table_coef(np.sqrt(sched.alpha_bar), t, x_t)
    b = _table_coef(np.sqrt(1.0 - sched.alpha_bar), t, x_t)
    return (x_t - b * eps_hat) / a


def posterior_mean(x_t, t, eps_hat, sched: NoiseSchedule):
    """Raw reverse-step mean at t: (1/√α_t)(x_t - β_t/√(1-ᾱ_t)·ε̂)"""
    _check_shapes(x_t, eps_hat, "x_t and eps_hat")
    if torch.is_tensor(t):
        _check_step_tensor(t, sched.T)
        idx = t
    else:
        idx = check_step(t, sched.T)
    # Tables shifted by one so that index t reads the 1-based entry
    alpha = np.concatenate([[1.0], sched.alpha])
    beta = np.concatenate([[0.0], sched.beta])
    coef = beta / np.sqrt(np.clip(1.0 - sched.alpha_bar, np.finfo(np.float64).tiny, None))
    a = _table_coef(1.0 / np.sqrt(alpha), idx, x_t)
    b = _table_coef(coef, idx, x_t)
    return a * (x_t - b * eps_hat)


def distillation_weight(t, sched: NoiseSchedule):
    """c(t) = α_t; tensor steps give a per-example weight vector"""
    if torch.is_tensor(t):
        _check_step_tensor(t, sched.T)
        return torch.as_tensor(sched.alpha, dtype=torch.float64)[t.long().cpu() - 1]
    return sched.alpha_at(t)
