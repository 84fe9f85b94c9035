"""Full-spiking components: LIF neurons, time-pooled batch normalization,
spiking residual blocks, and spike-driven self-attention.

Everything is forward-only with spike-count instrumentation; the
rectangular surrogate gradient is exposed as a value for unit testing and
head-side experiments, but no backpropagation through this module is
implemented. Spike-valued tensors contain only {0, 1} after every
operation; the Heaviside convention here is that the boundary fires
(Theta(0) = 1, matching the >= in the firing rule).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .energy import (EnergyLedger, count_conv_sops, dense_conv_macs,
                     dense_linear_macs)
from .errors import InvariantError, PreconditionError
from .nnops import conv2d, he_init, linear
from .stream import SpikeStream, subsample_temporal


@dataclass(frozen=True)
class LifParams:
    """Leaky integrate-and-fire settings.

    ``soft_reset`` switches the post-spike reset from hard (u <- 0) to
    subtract-threshold, which makes the neuron reproduce the discrete
    video encoder when decay = 1.
    """

    thresh: float = 0.5
    decay: float = 0.5
    lens: float = 0.5
    soft_reset: bool = False

    def __post_init__(self):
        if self.thresh <= 0:
            raise PreconditionError("thresh must be > 0")
        if not 0.0 < self.decay <= 1.0:
            raise PreconditionError("decay must lie in (0, 1]")
        if self.lens <= 0:
            raise PreconditionError("lens must be > 0")


@dataclass(frozen=True)
class MembraneState:
    """Per-neuron potentials plus the current step index. Single-writer:
    updates return a new state."""

    u: np.ndarray
    step_index: int = 0

    def __post_init__(self):
        arr = np.asarray(self.u, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise PreconditionError("membrane potentials must be finite")
        object.__setattr__(self, "u", arr)

    @classmethod
    def zeros(cls, shape) -> "MembraneState":
        return cls(u=np.zeros(shape))


@dataclass(frozen=True)
class SdsaParams:
    """Spike-driven self-attention settings: spike-normalization scaling
    factor, attention scale (defaults to 1/sqrt(dim)), head dimension."""

    dim: int
    alpha_sn: float = 1.0
    scale: float | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise PreconditionError("dim must be >= 1")
        if self.alpha_sn <= 0:
            raise PreconditionError("alpha_sn must be > 0")
        if self.scale is not None and self.scale <= 0:
            raise PreconditionError("scale must be > 0")

    @property
    def effective_scale(self) -> float:
        return self.scale if self.scale is not None else 1.0 / math.sqrt(self.dim)


def lif_step(state: MembraneState, inputs: np.ndarray,
             p: LifParams) -> tuple[np.ndarray, MembraneState]:
    """One LIF update: u <- decay*u + input, fire where u >= thresh.

    Fired neurons reset (hard to 0, or minus thresh in soft mode); the
    rest keep their potential.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape != state.u.shape:
        raise PreconditionError(
            f"input shape {inputs.shape} does not match membrane "
            f"{state.u.shape}")
    u = p.decay * state.u + inputs
    fired = u >= p.thresh
    new_u = u.copy()
    if p.soft_reset:
        new_u[fired] -= p.thresh
    else:
        new_u[fired] = 0.0
    spikes = fired.astype(np.uint8)
    return spikes, MembraneState(u=new_u, step_index=state.step_index + 1)


def surrogate_grad(u, p: LifParams):
    """Rectangular surrogate of dS/du: 1/(2*lens) inside
    |u - thresh| <= lens (boundary included), 0 outside."""
    u = np.asarray(u, dtype=np.float64)
    value = 1.0 / (2.0 * p.lens)
    out = np.where(np.abs(u - p.thresh) <= p.lens, value, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def tdbn(x: np.ndarray, gamma, beta, eps: float = 1e-5) -> np.ndarray:
    """Batch normalization with statistics pooled over merged time, batch,
    and spatial axes (channel axis is axis 2 of [T, B, C, ...]).

    Pooling over time is what distinguishes this from plain batch norm;
    per channel the output has mean ~= beta and variance ~= gamma^2.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 3:
        raise PreconditionError(
            f"tdbn input must be [t, b, c, ...], got shape {x.shape}")
    reduce_axes = (0, 1) + tuple(range(3, x.ndim))
    per_channel = x.size // x.shape[2]
    if per_channel < 2:
        raise PreconditionError(
            "tdbn needs at least 2 pooled elements per channel")
    mean = x.mean(axis=reduce_axes, keepdims=True)
    var = x.var(axis=reduce_axes, keepdims=True)
    gamma = np.reshape(np.asarray(gamma, dtype=np.float64),
                       (1, 1, -1) + (1,) * (x.ndim - 3))
    beta = np.reshape(np.asarray(beta, dtype=np.float64),
                      (1, 1, -1) + (1,) * (x.ndim - 3))
    return (x - mean) / np.sqrt(var + eps) * gamma + beta


def _require_binary(arr: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise PreconditionError(f"{what} must be binary (0/1)")
    return arr


def spike_fn(potential: np.ndarray, thresh: float) -> np.ndarray:
    """Instantaneous spike function: fire where potential >= thresh."""
    return (np.asarray(potential) >= thresh).astype(np.uint8)


def spiking_residual_block(s: np.ndarray, weights: dict[str, np.ndarray],
                           p: LifParams, prefix: str = "fsve.block",
                           ledger: EnergyLedger | None = None) -> np.ndarray:
    """Spiking residual unit: conv, TDBN, add the binary identity, spike.

    Input and output are binary [T, B, C, H, W] tensors. With zero conv
    weights and beta 0, any position carrying an input spike contributes
    potential 1 >= thresh (for thresh <= 1), so the block passes the
    identity through.
    """
    s = _require_binary(s, "residual block input")
    if s.ndim != 5:
        raise PreconditionError(
            f"residual block input must be [t, b, c, h, w], got {s.shape}")
    kernel = weights[f"{prefix}.conv.w"]
    t_len, batch = s.shape[:2]
    conv_out = np.empty(s.shape, dtype=np.float64)
    for t in range(t_len):
        for b in range(batch):
            conv_out[t, b] = conv2d(s[t, b].astype(np.float64), kernel,
                                    None, stride=1, padding=1)
    normed = tdbn(conv_out, weights[f"{prefix}.tdbn.gamma"],
                  weights[f"{prefix}.tdbn.beta"])
    out = spike_fn(normed + s, p.thresh)
    if ledger is not None:
        c_out = kernel.shape[0]
        actual = sum(count_conv_sops(s[t, b], c_out, exact=True)
                     for t in range(t_len) for b in range(batch))
        dense = dense_conv_macs(s.shape[2:], c_out) * t_len * batch
        ledger.record(f"{prefix}.conv", spike_count=int(s.sum()),
                      fan_out=9 * c_out, actual_sops=actual,
                      neuron_ops=out.size, max_sops=dense,
                      element_count=s.size)
    return out


def sn_threshold(x: np.ndarray, alpha_sn: float = 1.0
                 ) -> tuple[np.ndarray, float]:
    """Spike normalization: fire where x >= V_th with V_th = alpha_sn
    times the mean absolute value of the whole tensor.

    An all-zero input gives V_th = 0 and every position fires, per the
    Theta(0) = 1 boundary convention.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise PreconditionError("sn_threshold needs a non-empty array")
    if alpha_sn <= 0:
        raise PreconditionError("alpha_sn must be > 0")
    v_th = float(alpha_sn * np.abs(x).mean())
    return (x >= v_th).astype(np.uint8), v_th


def esdsa_forward(u: np.ndarray, params: SdsaParams,
                  weights: dict[str, np.ndarray],
                  ledger: EnergyLedger | None = None,
                  prefix: str = "fsve.sdsa",
                  return_internals: bool = False):
    """Spike-driven self-attention over [tokens, d_model].

    Q/K/V are spike-normalized linear projections (binary). The raw
    correlation Q_S K_S^T / sqrt(d) is never multiplied by the scale
    factor; instead the spike-normalization threshold is reparameterized
    to V_th / scale, which is algebraically identical and numerically
    stabler. The binary attention map gates V_S and a final linear layer
    produces the output. All SN stage spike counts go to the ledger.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2:
        raise PreconditionError(f"tokens must be [n, d], got shape {u.shape}")
    n_tokens, d_model = u.shape
    w = weights
    input_binary = bool(np.isin(u, (0, 1)).all())

    projections = {}
    for name in ("q", "k", "v"):
        raw = linear(u, w[f"{prefix}.{name}.w"], w[f"{prefix}.{name}.b"])
        spikes, v_th = sn_threshold(raw, params.alpha_sn)
        projections[name] = spikes
        if ledger is not None:
            d_out = raw.shape[1]
            dense = dense_linear_macs(n_tokens, d_model, d_out)
            actual = int(u.sum()) * d_out if input_binary else dense
            ledger.record(f"{prefix}.{name}_proj", spike_count=int(u.sum()),
                          fan_out=d_out, actual_sops=actual,
                          neuron_ops=raw.size, max_sops=dense,
                          element_count=u.size)
    q_s, k_s, v_s = projections["q"], projections["k"], projections["v"]

    d = params.dim
    corr = (q_s.astype(np.float64) @ k_s.T.astype(np.float64)) / math.sqrt(d)
    _, v_th_attn = sn_threshold(corr * params.effective_scale, params.alpha_sn)
    v_th_reparam = v_th_attn / params.effective_scale
    attn_spikes = (corr >= v_th_reparam).astype(np.uint8)

    gated = attn_spikes.astype(np.float64) @ v_s.astype(np.float64)
    out = linear(gated, w[f"{prefix}.out.w"], w[f"{prefix}.out.b"])

    if ledger is not None:
        # Binary x binary matmuls accumulate only where both operands spike.
        corr_sops = int((q_s.sum(axis=0).astype(np.int64)
                         * k_s.sum(axis=0).astype(np.int64)).sum())
        ledger.record(f"{prefix}.attn_corr",
                      spike_count=int(q_s.sum()) + int(k_s.sum()),
                      fan_out=n_tokens, actual_sops=corr_sops,
                      neuron_ops=corr.size,
                      max_sops=n_tokens * n_tokens * q_s.shape[1],
                      element_count=q_s.size + k_s.size)
        apply_sops = int((attn_spikes.sum(axis=0).astype(np.int64)
                          * v_s.sum(axis=1).astype(np.int64)).sum())
        ledger.record(f"{prefix}.attn_apply",
                      spike_count=int(attn_spikes.sum()),
                      fan_out=v_s.shape[1], actual_sops=apply_sops,
                      neuron_ops=0,
                      max_sops=n_tokens * n_tokens * v_s.shape[1],
                      element_count=attn_spikes.size)
        dense = dense_linear_macs(n_tokens, gated.shape[1], out.shape[1])
        ledger.record(f"{prefix}.out_proj", spike_count=0,
                      fan_out=out.shape[1], actual_sops=dense,
                      neuron_ops=0, max_sops=dense)

    if return_internals:
        return out, {"q_s": q_s, "k_s": k_s, "v_s": v_s,
                     "attn_spikes": attn_spikes, "v_th_attn": v_th_reparam}
    return out


# ---------------------------------------------------------------------------
# Desk-scale full-spiking encoder path (drives the snn-forward command)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FsveConfig:
    channels: int = 8
    timesteps: int = 2
    lif: LifParams = LifParams(thresh=0.5, decay=0.5)
    alpha_sn: float = 1.0

    def __post_init__(self):
        if self.channels < 1:
            raise PreconditionError("channels must be >= 1")
        if self.timesteps < 1:
            raise PreconditionError("timesteps must be >= 1")


def init_fsve_weights(cfg: FsveConfig, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    c = cfg.channels
    weights: dict[str, np.ndarray] = {}
    for name, c_in in (("stem1", 1), ("stem2", c)):
        weights[f"fsve.{name}.conv.w"] = he_init(rng, (c, c_in, 3, 3),
                                                 fan_in=c_in * 9)
        weights[f"fsve.{name}.tdbn.gamma"] = np.ones(c)
        weights[f"fsve.{name}.tdbn.beta"] = np.zeros(c)
    weights["fsve.block.conv.w"] = he_init(rng, (c, c, 3, 3), fan_in=c * 9)
    weights["fsve.block.tdbn.gamma"] = np.ones(c)
    weights["fsve.block.tdbn.beta"] = np.zeros(c)
    for name in ("q", "k", "v", "out"):
        weights[f"fsve.sdsa.{name}.w"] = he_init(rng, (c, c), fan_in=c)
        weights[f"fsve.sdsa.{name}.b"] = np.zeros(c)
    return weights


def _spiking_stem(s: np.ndarray, kernel: np.ndarray, gamma, beta,
                  p: LifParams, name: str,
                  ledger: EnergyLedger | None) -> np.ndarray:
    """Stride-2 spiking convolution stage: conv, TDBN, stateful LIF."""
    t_len, batch = s.shape[:2]
    first = conv2d(s[0, 0].astype(np.float64), kernel, None,
                   stride=2, padding=1)
    conv_out = np.empty((t_len, batch) + first.shape, dtype=np.float64)
    conv_out[0, 0] = first
    for t in range(t_len):
        for b in range(batch):
            if t == 0 and b == 0:
                continue
            conv_out[t, b] = conv2d(s[t, b].astype(np.float64), kernel,
                                    None, stride=2, padding=1)
    normed = tdbn(conv_out, gamma, beta)
    state = MembraneState.zeros(normed.shape[1:])
    spikes = np.empty(normed.shape, dtype=np.uint8)
    for t in range(t_len):
        spikes[t], state = lif_step(state, normed[t], p)
    if ledger is not None:
        c_out = kernel.shape[0]
        actual = sum(count_conv_sops(s[t, b], c_out, stride=2, exact=True)
                     for t in range(t_len) for b in range(batch))
        dense = dense_conv_macs(s.shape[2:], c_out, stride=2) * t_len * batch
        ledger.record(f"{name}.conv", spike_count=int(s.sum()),
                      fan_out=9 * c_out, actual_sops=actual,
                      neuron_ops=spikes.size, max_sops=dense,
                      element_count=s.size)
    return spikes


def fsve_forward(stream: SpikeStream, weights: dict[str, np.ndarray],
                 cfg: FsveConfig, ledger: EnergyLedger | None = None):
    """Run the desk-scale full-spiking path over a stream.

    The stream is subsampled to cfg.timesteps frames, passed through two
    stride-2 spiking stem stages, a spiking residual block, and per-step
    spike-driven attention over the spatial token grid. Returns the mean
    spike-rate embedding plus a dict of every binary stage for
    invariant scanning.
    """
    sub = subsample_temporal(stream, cfg.timesteps)
    x = sub.data[:, None, None, :, :].astype(np.uint8)    # [T, 1, 1, H, W]
    stages: dict[str, np.ndarray] = {"input": x}

    s1 = _spiking_stem(x, weights["fsve.stem1.conv.w"],
                       weights["fsve.stem1.tdbn.gamma"],
                       weights["fsve.stem1.tdbn.beta"], cfg.lif,
                       "fsve.stem1", ledger)
    stages["stem1"] = s1
    s2 = _spiking_stem(s1, weights["fsve.stem2.conv.w"],
                       weights["fsve.stem2.tdbn.gamma"],
                       weights["fsve.stem2.tdbn.beta"], cfg.lif,
                       "fsve.stem2", ledger)
    stages["stem2"] = s2
    s3 = spiking_residual_block(s2, weights, cfg.lif, "fsve.block", ledger)
    stages["resblock"] = s3

    params = SdsaParams(dim=cfg.channels, alpha_sn=cfg.alpha_sn)
    t_len, batch, c = s3.shape[:3]
    outputs = []
    for t in range(t_len):
        for b in range(batch):
            tokens = s3[t, b].reshape(c, -1).T          # [N, C]
            out, internals = esdsa_forward(tokens, params, weights,
                                           ledger=ledger,
                                           return_internals=True)
            outputs.append(out)
            for key, value in internals.items():
                if key == "v_th_attn":
                    continue
                stages[f"sdsa.t{t}.{key}"] = value

    for key, value in stages.items():
        if np.asarray(value).dtype == np.uint8 and \
                not np.isin(value, (0, 1)).all():
            raise InvariantError(f"stage {key} is not binary")

    embedding = np.mean([o.mean(axis=0) for o in outputs], axis=0)
    return embedding, stages
