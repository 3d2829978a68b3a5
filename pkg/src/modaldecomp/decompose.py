"""Exact per-modality decomposition of a recorded forward pass.

The engine runs in two passes. The record pass evaluates the network once on
the full multimodal input and caches what the linearization needs: the
output-to-input chord ratio of every activation and softmax layer, and the
input statistics of every LayerNorm/InstanceNorm. The second pass pushes a
stack of components (one per modality plus a trailing bias component)
through the frozen linear surrogate of each layer. At every layer the
components sum to the recorded activation; constants and linearization
residue accumulate in the bias component, or are redistributed across
components by the configured splitting rules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    LayerSpec,
    ModelError,
    ModelGraph,
    channel_shape,
    dense_apply,
    eval_layer,
    forward,
    matmul_pair,
)
from .tensor import as_tensor, conv2d

__all__ = [
    "SplitConfig",
    "DecomposedTensor",
    "RecordedState",
    "DecompositionResult",
    "DecompositionError",
    "EQUALITY_TOL",
    "record",
    "split_input",
    "lin_affine",
    "lin_concat",
    "lin_residual_add",
    "lin_activation",
    "lin_batchnorm",
    "lin_layernorm",
    "lin_instancenorm",
    "lin_softmax",
    "lin_matmul",
    "apply_frozen",
    "propagate",
    "decompose",
    "equality_residuals",
    "component_labels",
]

EQUALITY_TOL = 1e-9

_BN_RULES = ("identity", "uniform")
_LN_RULES = ("ratio", "identity", "uniform")
_ACT_RULES = ("none", "sum", "ratio")

_ACTIVATION_KINDS = ("ReLU", "GELU", "Softmax")


class DecompositionError(RuntimeError):
    """Numerical-contract failure: non-finite values or a broken equality."""


@dataclass(frozen=True)
class SplitConfig:
    """Splitting-rule selection per layer family.

    bn_rule decides who absorbs a BatchNorm's constant term: 'identity'
    sends it to the bias component, 'uniform' spreads it equally over all
    components. ln_rule 'ratio' keeps LayerNorm live (each component centered
    by its own mean, frozen variance); 'identity'/'uniform' treat LayerNorm
    like BatchNorm using statistics stored in the record pass. act_rule
    optionally re-routes activation-layer bias mass into the modality that
    triggered the neuron ('sum') or proportionally to component magnitudes
    ('ratio'); both are defined for exactly two modalities.
    """

    bn_rule: str = "identity"
    ln_rule: str = "ratio"
    act_rule: str = "none"
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.bn_rule not in _BN_RULES:
            raise ValueError(f"bn_rule must be one of {_BN_RULES}, got '{self.bn_rule}'")
        if self.ln_rule not in _LN_RULES:
            raise ValueError(f"ln_rule must be one of {_LN_RULES}, got '{self.ln_rule}'")
        if self.act_rule not in _ACT_RULES:
            raise ValueError(f"act_rule must be one of {_ACT_RULES}, got '{self.act_rule}'")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def ln_stats(self) -> str:
        """'live-mean' for the ratio rule, 'bn-like' for stored statistics."""
        return "live-mean" if self.ln_rule == "ratio" else "bn-like"

    def label(self) -> str:
        s = f"{self.bn_rule}-{self.ln_rule}"
        if self.act_rule != "none":
            s += f"-{self.act_rule}"
        return s

    @classmethod
    def parse(cls, label: str, epsilon: float = 1e-6) -> "SplitConfig":
        """Build from a 'bn-ln' or 'bn-ln-act' label, e.g. 'identity-ratio'."""
        toks = label.split("-")
        if len(toks) == 2:
            return cls(toks[0], toks[1], "none", epsilon)
        if len(toks) == 3:
            return cls(toks[0], toks[1], toks[2], epsilon)
        raise ValueError(f"variant label '{label}' is not 'bn-ln[-act]'")


def component_labels(num_modalities: int) -> list[str]:
    return [f"m{i}" for i in range(num_modalities)] + ["bias"]


class DecomposedTensor:
    """num_modalities modality components plus a bias component.

    Components are stacked on axis 0 with the bias last; they all share the
    underlying layer's activation shape, and their sum reproduces it.
    """

    __slots__ = ("parts",)

    def __init__(self, parts: np.ndarray):
        parts = as_tensor(parts)
        if parts.ndim < 2 or parts.shape[0] < 2:
            raise ValueError(f"decomposition needs >=2 stacked components, got {parts.shape}")
        self.parts = parts

    @classmethod
    def zeros(cls, num_modalities: int, shape) -> "DecomposedTensor":
        return cls(np.zeros((num_modalities + 1,) + tuple(shape)))

    @property
    def num_modalities(self) -> int:
        return self.parts.shape[0] - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.parts.shape[1:]

    def modality(self, m: int) -> np.ndarray:
        if not 0 <= m < self.num_modalities:
            raise IndexError(f"modality {m} out of range")
        return self.parts[m]

    @property
    def bias(self) -> np.ndarray:
        return self.parts[-1]

    def component(self, key) -> np.ndarray:
        return self.bias if key == "bias" else self.modality(int(key))

    def total(self) -> np.ndarray:
        return self.parts.sum(axis=0)

    def to_dict(self) -> dict[str, list]:
        labels = component_labels(self.num_modalities)
        return {lab: self.parts[i].tolist() for i, lab in enumerate(labels)}


@dataclass
class RecordedState:
    """Pass-1 cache: every layer's activation plus linearization data.

    For activation/softmax layers the cache holds the chord ratio and the
    per-neuron residual that keeps the frozen layer exact at the recorded
    point; for LayerNorm/InstanceNorm it holds the recorded input mean and
    variance over the normalization axes (kept with broadcastable dims).
    """

    activations: dict[str, np.ndarray]
    caches: dict[str, dict[str, np.ndarray]]
    epsilon: float


def _chord_ratio(pre: np.ndarray, out: np.ndarray, eps: float):
    """Per-neuron chord slope out/(pre+eps) with a degenerate-denominator guard.

    Where |pre| <= 10*eps the slope carries no usable direction (it can
    explode, or the denominator can vanish outright at pre == -eps), so the
    ratio is zeroed and the full output is carried by the residual instead.
    The residual out - ratio*pre is recorded everywhere so the frozen layer
    reproduces the recorded output exactly.
    """
    safe = np.abs(pre) > 10.0 * eps
    c = np.zeros_like(pre)
    np.divide(out, pre + eps, out=c, where=safe)
    r = out - c * pre
    return c, r


def record(model: ModelGraph, inputs: dict[int, np.ndarray], cfg: SplitConfig | None = None) -> RecordedState:
    """Run the record pass under the full multimodal input.

    Raises DecompositionError naming the first layer whose activation is not
    finite. BatchNorm needs no cache: its statistics are already fixed.
    """
    cfg = cfg or SplitConfig()
    acts = forward(model, inputs)
    for layer in model.layers:
        if not np.all(np.isfinite(acts[layer.id])):
            raise DecompositionError(f"non-finite activation in layer '{layer.id}'")
    caches: dict[str, dict[str, np.ndarray]] = {}
    for layer in model.layers:
        if layer.kind in _ACTIVATION_KINDS:
            pre = acts[layer.inputs[0]]
            c, r = _chord_ratio(pre, acts[layer.id], cfg.epsilon)
            caches[layer.id] = {"ratio": c, "residual": r}
        elif layer.kind == "LayerNorm":
            pre = acts[layer.inputs[0]]
            axes = tuple(layer.params["axes"])
            mean = pre.mean(axis=axes, keepdims=True)
            var = ((pre - mean) ** 2).mean(axis=axes, keepdims=True)
            caches[layer.id] = {"mean": mean, "var": var}
        elif layer.kind == "InstanceNorm":
            pre = acts[layer.inputs[0]]
            axes = tuple(range(1, pre.ndim))
            mean = pre.mean(axis=axes, keepdims=True)
            var = ((pre - mean) ** 2).mean(axis=axes, keepdims=True)
            caches[layer.id] = {"mean": mean, "var": var}
    return RecordedState(acts, caches, cfg.epsilon)


# --- frozen per-layer rules on component stacks ---------------------------


def split_input(x: np.ndarray, modality: int, num_modalities: int) -> DecomposedTensor:
    """Decompose an input layer: its own modality carries x, all else zero."""
    x = as_tensor(x)
    parts = np.zeros((num_modalities + 1,) + x.shape)
    parts[modality] = x
    return DecomposedTensor(parts)


def lin_affine(layer: LayerSpec, d: DecomposedTensor) -> DecomposedTensor:
    """Dense/Conv2d: weights act on every component, the layer constant on bias."""
    p = layer.params
    if layer.kind == "Dense":
        out = np.stack([dense_apply(p["weight"], part) for part in d.parts])
        out[-1] += channel_shape(p["bias"], out.ndim - 1)
    elif layer.kind == "Conv2d":
        zero = np.zeros_like(p["bias"])
        out = np.stack(
            [conv2d(part, p["weight"], zero, p["stride"], p["padding"]) for part in d.parts]
        )
        out[-1] += p["bias"][:, None, None]
    else:
        raise ValueError(f"lin_affine cannot handle kind '{layer.kind}'")
    return DecomposedTensor(out)


def lin_concat(ds: list[DecomposedTensor], axis: int) -> DecomposedTensor:
    parts = np.concatenate([d.parts for d in ds], axis=axis + 1)
    return DecomposedTensor(parts)


def lin_residual_add(a: DecomposedTensor, b: DecomposedTensor) -> DecomposedTensor:
    if a.parts.shape != b.parts.shape:
        raise ValueError(f"residual shape mismatch: {a.parts.shape} vs {b.parts.shape}")
    return DecomposedTensor(a.parts + b.parts)


def _scaled_with_residual(d: DecomposedTensor, c, r) -> np.ndarray:
    out = d.parts * c
    out[-1] += r
    return out


def lin_activation(
    layer: LayerSpec,
    d: DecomposedTensor,
    state: RecordedState,
    cfg: SplitConfig,
) -> DecomposedTensor:
    """Frozen activation: each component scaled by the recorded chord ratio.

    The recorded residual keeps the component sum equal to the recorded
    output. Under the 'sum' rule the bias mass (component and residual) is
    re-routed to whichever modality triggered the neuron; under 'ratio' it is
    split between the two modalities in proportion to their magnitudes. Both
    leave the bias entry exactly zero where they fire.
    """
    cache = state.caches[layer.id]
    c, r = cache["ratio"], cache["residual"]
    if cfg.act_rule == "none":
        return DecomposedTensor(_scaled_with_residual(d, c, r))
    if d.num_modalities != 2:
        raise ValueError(
            f"act_rule '{cfg.act_rule}' is defined for exactly two modalities, "
            f"got {d.num_modalities}"
        )
    h0, h1, hb = d.parts[0], d.parts[1], d.parts[2]
    if cfg.act_rule == "sum":
        to0 = ((h0 > 0) & (h1 < 0) & (hb > 0)) | ((h0 < 0) & (h1 > 0) & (hb < 0))
        to1 = ((h0 < 0) & (h1 > 0) & (hb > 0)) | ((h0 > 0) & (h1 < 0) & (hb < 0))
        fired = to0 | to1
        share0 = to0.astype(float)
        share1 = to1.astype(float)
    else:  # ratio
        same_sign = ((h0 > 0) & (h1 > 0) & (hb > 0)) | ((h0 < 0) & (h1 < 0) & (hb < 0))
        opp_sign = ((h0 > 0) & (h1 > 0) & (hb < 0)) | ((h0 < 0) & (h1 < 0) & (hb > 0))
        fired = same_sign | opp_sign
        alpha = np.abs(h1) / (np.abs(h0) + np.abs(h1) + cfg.epsilon)
        share0 = np.where(same_sign, 1.0 - alpha, np.where(opp_sign, alpha, 0.0))
        share1 = np.where(same_sign, alpha, np.where(opp_sign, 1.0 - alpha, 0.0))
    out0 = c * (h0 + share0 * hb) + share0 * r
    out1 = c * (h1 + share1 * hb) + share1 * r
    outb = np.where(fired, 0.0, c * hb + r)
    return DecomposedTensor(np.stack([out0, out1, outb]))


def _delta_add(parts: np.ndarray, const: np.ndarray, rule: str) -> None:
    # in place: route a layer constant per the delta scheme
    if rule == "identity":
        parts[-1] += const
    else:  # uniform over all components including bias
        parts += const / parts.shape[0]


def lin_batchnorm(layer: LayerSpec, d: DecomposedTensor, cfg: SplitConfig) -> DecomposedTensor:
    p = layer.params
    nd = d.parts.ndim - 1
    scale = channel_shape(p["gamma"] / np.sqrt(p["var"] + p["eps"]), nd)
    const = channel_shape(p["beta"], nd) - channel_shape(p["mean"], nd) * scale
    out = d.parts * scale
    _delta_add(out, const, cfg.bn_rule)
    return DecomposedTensor(out)


def lin_layernorm(
    layer: LayerSpec,
    d: DecomposedTensor,
    state: RecordedState,
    cfg: SplitConfig,
) -> DecomposedTensor:
    """LayerNorm with frozen variance.

    Ratio rule: every component is centered with its own mean over the
    normalization axes; the affine shift goes to the bias component. The
    bn-like variants reuse the recorded input mean like a BatchNorm constant
    and honor the identity/uniform delta scheme.
    """
    p = layer.params
    cache = state.caches[layer.id]
    scale = p["gamma"] / np.sqrt(cache["var"] + p["eps"])
    if cfg.ln_rule == "ratio":
        axes = tuple(ax + 1 for ax in p["axes"])
        centered = d.parts - d.parts.mean(axis=axes, keepdims=True)
        out = centered * scale
        out[-1] += p["beta"]
        return DecomposedTensor(out)
    out = d.parts * scale
    const = p["beta"] - cache["mean"] * scale
    _delta_add(out, const, cfg.ln_rule)
    return DecomposedTensor(out)


def lin_instancenorm(
    layer: LayerSpec,
    d: DecomposedTensor,
    state: RecordedState,
    cfg: SplitConfig,
) -> DecomposedTensor:
    """Same construction as lin_layernorm with per-channel spatial statistics."""
    p = layer.params
    cache = state.caches[layer.id]
    nd = d.parts.ndim - 1
    g = channel_shape(p["gamma"], nd)
    b = channel_shape(p["beta"], nd)
    scale = g / np.sqrt(cache["var"] + p["eps"])
    if cfg.ln_rule == "ratio":
        axes = tuple(range(2, d.parts.ndim))
        centered = d.parts - d.parts.mean(axis=axes, keepdims=True)
        out = centered * scale
        out[-1] += b
        return DecomposedTensor(out)
    out = d.parts * scale
    const = b - cache["mean"] * scale
    _delta_add(out, const, cfg.ln_rule)
    return DecomposedTensor(out)


def lin_softmax(layer: LayerSpec, d: DecomposedTensor, state: RecordedState) -> DecomposedTensor:
    """Softmax linearized exactly like an activation: recorded chord ratios."""
    cache = state.caches[layer.id]
    return DecomposedTensor(_scaled_with_residual(d, cache["ratio"], cache["residual"]))


def lin_matmul(
    a: DecomposedTensor,
    b: DecomposedTensor,
    transpose_b: bool = False,
) -> DecomposedTensor:
    """Bilinear product: same-modality terms stay modality, the rest is bias.

    Expanding (sum_m A_m)(sum_n B_n), component m keeps A_m @ B_m; every
    cross-modality term and every term touching a bias operand lands in the
    bias component, computed as the full product minus the kept terms.
    """
    if a.num_modalities != b.num_modalities:
        raise ValueError("matmul operands disagree on modality count")
    mods = [
        matmul_pair(a.parts[m], b.parts[m], transpose_b)
        for m in range(a.num_modalities)
    ]
    total = matmul_pair(a.total(), b.total(), transpose_b)
    bias = total - sum(mods)
    return DecomposedTensor(np.stack(mods + [bias]))


def apply_frozen(
    layer: LayerSpec,
    state: RecordedState,
    cfg: SplitConfig,
    xs: list[np.ndarray],
) -> np.ndarray:
    """Evaluate the frozen linearized layer on plain tensors.

    This is the layer the component stack actually flows through: activations
    become chord-scaled maps plus their recorded residual, normalizations use
    frozen statistics, and everything else is the original (already linear)
    layer. Summing rule outputs over components reproduces this map applied
    to the summed input.
    """
    kind = layer.kind
    if kind in _ACTIVATION_KINDS:
        cache = state.caches[layer.id]
        return cache["ratio"] * xs[0] + cache["residual"]
    if kind == "LayerNorm":
        p = layer.params
        cache = state.caches[layer.id]
        scale = p["gamma"] / np.sqrt(cache["var"] + p["eps"])
        if cfg.ln_rule == "ratio":
            mean = xs[0].mean(axis=tuple(p["axes"]), keepdims=True)
        else:
            mean = cache["mean"]
        return (xs[0] - mean) * scale + p["beta"]
    if kind == "InstanceNorm":
        p = layer.params
        cache = state.caches[layer.id]
        nd = xs[0].ndim
        scale = channel_shape(p["gamma"], nd) / np.sqrt(cache["var"] + p["eps"])
        if cfg.ln_rule == "ratio":
            mean = xs[0].mean(axis=tuple(range(1, nd)), keepdims=True)
        else:
            mean = cache["mean"]
        return (xs[0] - mean) * scale + channel_shape(p["beta"], nd)
    return eval_layer(layer, xs)


# --- whole-network propagation --------------------------------------------


def _check_config(model: ModelGraph, cfg: SplitConfig) -> None:
    if cfg.act_rule != "none" and model.modalities != 2:
        raise ValueError(
            f"act_rule '{cfg.act_rule}' is defined for exactly two modalities, "
            f"model has {model.modalities}"
        )


def propagate(
    model: ModelGraph,
    state: RecordedState,
    inputs: dict[int, np.ndarray],
    cfg: SplitConfig | None = None,
) -> dict[str, DecomposedTensor]:
    """Push component stacks through the linearized network.

    The state stays fixed: this is how perturbed inputs are evaluated against
    a linearization recorded from clean inputs.
    """
    cfg = cfg or SplitConfig()
    _check_config(model, cfg)
    if cfg.epsilon != state.epsilon:
        raise ValueError(
            f"state was recorded with epsilon {state.epsilon}, config has {cfg.epsilon}"
        )
    M = model.modalities
    comp: dict[str, DecomposedTensor] = {}
    for layer in model.layers:
        ups = [comp[i] for i in layer.inputs]
        kind = layer.kind
        if kind == "Input":
            x = as_tensor(inputs[layer.params["modality"]])
            want = tuple(layer.params["shape"])
            if x.shape != want:
                raise ModelError(f"input '{layer.id}' expects shape {want}, got {x.shape}")
            out = split_input(x, layer.params["modality"], M)
        elif kind in ("Dense", "Conv2d"):
            out = lin_affine(layer, ups[0])
        elif kind == "ConcatFusion":
            out = lin_concat(ups, layer.params["axis"])
        elif kind == "ResidualAdd":
            out = lin_residual_add(ups[0], ups[1])
        elif kind in ("ReLU", "GELU"):
            out = lin_activation(layer, ups[0], state, cfg)
        elif kind == "Softmax":
            out = lin_softmax(layer, ups[0], state)
        elif kind == "BatchNorm":
            out = lin_batchnorm(layer, ups[0], cfg)
        elif kind == "LayerNorm":
            out = lin_layernorm(layer, ups[0], state, cfg)
        elif kind == "InstanceNorm":
            out = lin_instancenorm(layer, ups[0], state, cfg)
        elif kind == "MatMul":
            out = lin_matmul(ups[0], ups[1], layer.params.get("transpose_b", False))
        else:  # pragma: no cover
            raise ModelError(f"unhandled kind '{kind}'")
        comp[layer.id] = out
    return comp


@dataclass
class DecompositionResult:
    components: dict[str, DecomposedTensor]
    output: DecomposedTensor
    state: RecordedState


def decompose(
    model: ModelGraph,
    inputs: dict[int, np.ndarray],
    cfg: SplitConfig | None = None,
) -> DecompositionResult:
    """Record then propagate: the full two-pass decomposition."""
    cfg = cfg or SplitConfig()
    _check_config(model, cfg)
    state = record(model, inputs, cfg)
    comp = propagate(model, state, inputs, cfg)
    return DecompositionResult(comp, comp[model.output], state)


def equality_residuals(
    model: ModelGraph,
    components: dict[str, DecomposedTensor],
    state: RecordedState,
) -> dict[str, float]:
    """Per-layer relative residual between component sums and recorded activations."""
    out = {}
    for layer in model.layers:
        total = components[layer.id].total()
        ref = state.activations[layer.id]
        num = float(np.max(np.abs(total - ref))) if total.size else 0.0
        out[layer.id] = num / (1.0 + float(np.max(np.abs(ref))))
    return out
