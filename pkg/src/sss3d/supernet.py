"""Reference supernet description for an encoder-decoder point network.

The template mirrors a five-stage RandLA-Net-style segmentation network on
40960-point indoor scans with 13 output classes. Each encoder stage folds
the local-aggregation block into pointwise convolutions (stride-bound) and
K-neighbor MLPs (K-bound); the decoder upsamples with skip concatenation.
Channel widths are calibrated so the full genome lands near the published
5.0M-parameter / 17G-FLOP operating point of the original network.
"""

from __future__ import annotations

from .cost import LayerRole, LayerSpec, SupernetDescription

INPUT_POINTS = 40960
INPUT_FEATURES = 6
STEM_CHANNELS = 8
NUM_CLASSES = 13
COORD_ENCODING_CHANNELS = 10

# Per-stage aggregation width d; blocks emit 2*d features.
STAGE_DIMS = (16, 64, 128, 256, 512)
DECODER_DIMS = (512, 256, 128, 32, 32)
HEAD_DIMS = (64, 32)


def reference_description() -> SupernetDescription:
    layers: list[LayerSpec] = []

    def add(layer: LayerSpec) -> int:
        layers.append(layer)
        return len(layers) - 1

    stem = add(LayerSpec(LayerRole.FC, INPUT_FEATURES, STEM_CHANNELS))

    stage_in = stem
    stage_in_dim = STEM_CHANNELS
    block_outputs = []  # (layer index, width) of each stage's pre-sample output
    for stage, d in enumerate(STAGE_DIMS):
        half, out = d // 2, 2 * d
        pre = add(
            LayerSpec(
                LayerRole.FC, stage_in_dim, half,
                filter_ratio_site=stage, stride_site=stage, stage=stage,
                inputs=(stage_in,),
            )
        )
        coord1 = add(
            LayerSpec(
                LayerRole.LFA_MLP, COORD_ENCODING_CHANNELS, half,
                filter_ratio_site=stage, k_site=stage, stage=stage,
                inputs=(),
            )
        )
        mix1 = add(
            LayerSpec(
                LayerRole.LFA_MLP, d, d,
                filter_ratio_site=stage, k_site=stage, stage=stage,
                inputs=(pre, coord1),
            )
        )
        agg1 = add(
            LayerSpec(
                LayerRole.FC, d, half,
                filter_ratio_site=stage, stride_site=stage, stage=stage,
                inputs=(mix1,),
            )
        )
        coord2 = add(
            LayerSpec(
                LayerRole.LFA_MLP, half, half,
                filter_ratio_site=stage, k_site=stage, stage=stage,
                inputs=(coord1,),
            )
        )
        mix2 = add(
            LayerSpec(
                LayerRole.LFA_MLP, d, d,
                filter_ratio_site=stage, k_site=stage, stage=stage,
                inputs=(agg1, coord2),
            )
        )
        agg2 = add(
            LayerSpec(
                LayerRole.FC, d, d,
                filter_ratio_site=stage, stride_site=stage, stage=stage,
                inputs=(mix2,),
            )
        )
        expand = add(
            LayerSpec(
                LayerRole.FC, d, out,
                filter_ratio_site=stage, stride_site=stage, stage=stage,
                inputs=(agg2,),
            )
        )
        # Residual shortcut; same width as expand, summed not concatenated.
        add(
            LayerSpec(
                LayerRole.FC, stage_in_dim, out,
                filter_ratio_site=stage, stride_site=stage, stage=stage,
                inputs=(stage_in,),
            )
        )
        block_outputs.append((expand, out))
        sample = add(
            LayerSpec(LayerRole.RANDOM_SAMPLE, out, out, stage=stage, inputs=(expand,))
        )
        stage_in, stage_in_dim = sample, out

    bridge_dim = 2 * STAGE_DIMS[-1]
    bridge = add(
        LayerSpec(
            LayerRole.BRIDGE_MLP, bridge_dim, bridge_dim,
            filter_ratio_site=5, stride_site=5, stage=5,
            inputs=(stage_in,),
        )
    )

    # Skips, deepest first: sampled outputs of stages 3..0, then the
    # stage-0 block output at full resolution.
    sample_indices = [
        i for i, l in enumerate(layers) if l.role is LayerRole.RANDOM_SAMPLE
    ]
    skips = [
        (sample_indices[3], 2 * STAGE_DIMS[3]),
        (sample_indices[2], 2 * STAGE_DIMS[2]),
        (sample_indices[1], 2 * STAGE_DIMS[1]),
        (sample_indices[0], 2 * STAGE_DIMS[0]),
        block_outputs[0],
    ]

    prev, prev_dim = bridge, bridge_dim
    for j, dec_dim in enumerate(DECODER_DIMS):
        skip_idx, skip_dim = skips[j]
        up = add(LayerSpec(LayerRole.UPSAMPLE, prev_dim, prev_dim, stage=j, inputs=(prev,)))
        prev = add(
            LayerSpec(
                LayerRole.DECODER_MLP, prev_dim + skip_dim, dec_dim,
                filter_ratio_site=6 + j, stage=j,
                inputs=(up, skip_idx),
            )
        )
        prev_dim = dec_dim

    fc_in = prev_dim
    for h, width in enumerate(HEAD_DIMS):
        prev = add(
            LayerSpec(
                LayerRole.FC, fc_in, width,
                filter_ratio_site=11 + h,
                inputs=(prev,),
            )
        )
        fc_in = width
    add(LayerSpec(LayerRole.HEAD, fc_in, NUM_CLASSES, inputs=(prev,)))

    desc = SupernetDescription(input_points=INPUT_POINTS, layers=tuple(layers))
    desc.ensure_complete()
    return desc
