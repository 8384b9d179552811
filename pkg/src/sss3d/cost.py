"""Analytical parameter and FLOP counts for genome-configured subnetworks.

All layers are treated as 1x1 convolutions / fully-connected maps with bias.
A multiply-accumulate counts as 2 FLOPs. Parameter counts depend only on
filter ratios; FLOP counts additionally depend on strides, K values, and the
point-count flow induced by the subsampling ratios.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

from .space import Genome


class LayerRole(Enum):
    FC = "fc"
    LFA_MLP = "lfa_mlp"
    RANDOM_SAMPLE = "random_sample"
    BRIDGE_MLP = "bridge_mlp"
    DECODER_MLP = "decoder_mlp"
    UPSAMPLE = "upsample"
    HEAD = "head"


# Layers that move points around but carry no weights.
PASSTHROUGH_ROLES = frozenset({LayerRole.RANDOM_SAMPLE, LayerRole.UPSAMPLE})


class StructuralError(ValueError):
    """Inconsistent supernet description (dangling bindings, bad wiring)."""


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the supernet template.

    ``inputs`` selects where the layer's features come from: ``None`` means
    the previous layer (or the network input for layer 0), an empty tuple
    means an external input whose width is fixed at ``c_in`` (e.g. raw
    coordinate encodings), and a tuple of indices means the concatenation of
    those layers' outputs.
    """

    role: LayerRole
    c_in: int
    c_out: int
    filter_ratio_site: int | None = None
    stride_site: int | None = None
    k_site: int | None = None
    stage: int = 0
    inputs: tuple | None = None

    def __post_init__(self):
        if self.inputs is not None:
            object.__setattr__(self, "inputs", tuple(self.inputs))
        if self.c_in < 1 or self.c_out < 1:
            raise StructuralError(f"{self.role.value}: channel counts must be >= 1")
        if self.role is LayerRole.LFA_MLP and self.k_site is None:
            raise StructuralError("lfa_mlp layer requires a k_site")
        if self.k_site is not None and self.role is not LayerRole.LFA_MLP:
            raise StructuralError(f"{self.role.value}: k_site only applies to lfa_mlp layers")
        if self.role in PASSTHROUGH_ROLES and self.filter_ratio_site is not None:
            raise StructuralError(f"{self.role.value}: sampling layers carry no filters")

    def to_json_dict(self) -> dict:
        return {
            "role": self.role.value,
            "c_in": self.c_in,
            "c_out": self.c_out,
            "filter_ratio_site": self.filter_ratio_site,
            "stride_site": self.stride_site,
            "k_site": self.k_site,
            "stage": self.stage,
            "inputs": list(self.inputs) if self.inputs is not None else None,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "LayerSpec":
        try:
            role = LayerRole(obj["role"])
        except (KeyError, ValueError):
            raise StructuralError(f"unknown layer role: {obj.get('role')!r}") from None
        inputs = obj.get("inputs")
        return cls(
            role=role,
            c_in=obj["c_in"],
            c_out=obj["c_out"],
            filter_ratio_site=obj.get("filter_ratio_site"),
            stride_site=obj.get("stride_site"),
            k_site=obj.get("k_site"),
            stage=obj.get("stage", 0),
            inputs=tuple(inputs) if inputs is not None else None,
        )


@dataclass(frozen=True)
class SupernetDescription:
    input_points: int
    layers: tuple
    encoder_stage_count: int = 5

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.input_points < 1:
            raise StructuralError("input_points must be >= 1")
        if not self.layers:
            raise StructuralError("description has no layers")
        for i, layer in enumerate(self.layers):
            if layer.inputs:
                bad = [j for j in layer.inputs if not 0 <= j < i]
                if bad:
                    raise StructuralError(f"layer {i}: input indices {bad} out of range")
        samples = [l for l in self.layers if l.role is LayerRole.RANDOM_SAMPLE]
        for layer in samples:
            if not 0 <= layer.stage < self.encoder_stage_count:
                raise StructuralError(
                    f"random_sample stage {layer.stage} outside encoder range"
                )

    def site_counts(self) -> dict:
        """Distinct bound site indices per gene group."""
        ratio = {l.filter_ratio_site for l in self.layers if l.filter_ratio_site is not None}
        stride = {l.stride_site for l in self.layers if l.stride_site is not None}
        k = {l.k_site for l in self.layers if l.k_site is not None}
        sub = {l.stage for l in self.layers if l.role is LayerRole.RANDOM_SAMPLE}
        return {"filter_ratio": ratio, "stride": stride, "k": k, "subsampling": sub}

    def ensure_complete(self) -> None:
        """Require full site coverage: 13 ratio, 6 stride, 5 K, 5 subsampling."""
        counts = self.site_counts()
        expected = {
            "filter_ratio": set(range(13)),
            "stride": set(range(6)),
            "k": set(range(5)),
            "subsampling": set(range(5)),
        }
        for name, sites in expected.items():
            if counts[name] != sites:
                raise StructuralError(
                    f"{name} sites {sorted(counts[name])} != expected {sorted(sites)}"
                )

    def to_json(self) -> str:
        obj = {
            "input_points": self.input_points,
            "encoder_stage_count": self.encoder_stage_count,
            "layers": [l.to_json_dict() for l in self.layers],
        }
        return json.dumps(obj, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SupernetDescription":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise StructuralError(f"invalid supernet JSON: {exc}") from None
        if "input_points" not in obj or "layers" not in obj:
            raise StructuralError("supernet JSON needs 'input_points' and 'layers'")
        layers = tuple(LayerSpec.from_json_dict(l) for l in obj["layers"])
        return cls(
            input_points=obj["input_points"],
            layers=layers,
            encoder_stage_count=obj.get("encoder_stage_count", 5),
        )


@dataclass(frozen=True)
class CostReport:
    params: int
    flops: int

    def to_json_dict(self) -> dict:
        return {"params": self.params, "flops": self.flops}


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def resolve_channels(genome: Genome, desc: SupernetDescription) -> list[tuple[int, int]]:
    """Resolved (c_in, c_out) per layer after applying filter ratios.

    Pruned widths propagate: a layer's input width is the resolved output
    width of whatever feeds it, including concatenated skip connections.
    """
    resolved: list[tuple[int, int]] = []
    for i, layer in enumerate(desc.layers):
        if layer.inputs is None:
            c_in = layer.c_in if i == 0 else resolved[i - 1][1]
        elif len(layer.inputs) == 0:
            c_in = layer.c_in
        else:
            c_in = sum(resolved[j][1] for j in layer.inputs)
        if layer.role in PASSTHROUGH_ROLES:
            c_out = c_in
        elif layer.filter_ratio_site is not None:
            if not 0 <= layer.filter_ratio_site < len(genome.filter_ratios):
                raise StructuralError(
                    f"layer {i}: filter_ratio_site {layer.filter_ratio_site} has no gene"
                )
            ratio = genome.filter_ratios[layer.filter_ratio_site]
            c_out = max(1, _round_half_up(ratio * layer.c_out))
        else:
            c_out = layer.c_out
        resolved.append((c_in, c_out))
    return resolved


def layer_point_counts(genome: Genome, desc: SupernetDescription) -> list[int]:
    """Point count each layer operates on, following the sampling flow.

    Encoder levels shrink by floor(P / r) at each random-sample layer;
    upsampling steps back up one level.
    """
    levels = [desc.input_points]
    level = 0
    counts = []
    for i, layer in enumerate(desc.layers):
        counts.append(levels[level])
        if layer.role is LayerRole.RANDOM_SAMPLE:
            ratio = genome.subsampling[layer.stage]
            levels.append(levels[level] // ratio)
            level += 1
        elif layer.role is LayerRole.UPSAMPLE:
            if level == 0:
                raise StructuralError(f"layer {i}: upsample below the input level")
            level -= 1
            counts[-1] = levels[level]
    return counts


def _effective_positions(layer: LayerSpec, genome: Genome, points: int, index: int) -> int:
    if layer.stride_site is not None:
        if not 0 <= layer.stride_site < len(genome.strides):
            raise StructuralError(f"layer {index}: stride_site {layer.stride_site} has no gene")
        return math.ceil(points / genome.strides[layer.stride_site])
    if layer.role is LayerRole.LFA_MLP:
        if not 0 <= layer.k_site < len(genome.k_values):
            raise StructuralError(f"layer {index}: k_site {layer.k_site} has no gene")
        return points * genome.k_values[layer.k_site]
    return points


def count_params(genome: Genome, desc: SupernetDescription) -> int:
    """Total weights: (c_in + 1) * c_out per parameterized layer."""
    resolved = resolve_channels(genome, desc)
    total = 0
    for layer, (c_in, c_out) in zip(desc.layers, resolved):
        if layer.role in PASSTHROUGH_ROLES:
            continue
        total += (c_in + 1) * c_out
    return total


def count_flops(genome: Genome, desc: SupernetDescription) -> int:
    """Total FLOPs (MAC = 2) over the genome-resolved point flow."""
    resolved = resolve_channels(genome, desc)
    points = layer_point_counts(genome, desc)
    total = 0
    for i, (layer, (c_in, c_out)) in enumerate(zip(desc.layers, resolved)):
        if layer.role in PASSTHROUGH_ROLES:
            continue
        positions = _effective_positions(layer, genome, points[i], i)
        total += 2 * c_in * c_out * positions
    return total


def cost_report(genome: Genome, desc: SupernetDescription) -> CostReport:
    return CostReport(params=count_params(genome, desc), flops=count_flops(genome, desc))


def l1_filter_selection(filter_l1_norms, ratio: float) -> list[int]:
    """Indices of the filters kept by L1-norm importance pruning.

    Keeps the max(1, round(ratio * n)) largest norms; ties go to the lower
    index. The result is sorted ascending.
    """
    norms = list(filter_l1_norms)
    if not norms:
        raise ValueError("filter norm list is empty")
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    for i, value in enumerate(norms):
        if not math.isfinite(value) or value < 0:
            raise ValueError(f"norm[{i}] = {value} is not finite and non-negative")
    keep = max(1, _round_half_up(ratio * len(norms)))
    ranked = sorted(range(len(norms)), key=lambda i: (-norms[i], i))
    return sorted(ranked[:keep])
