"""spikekit: spike-stream processing toolkit and micro-runtime.

Covers the full desk-scale pipeline: integrate-and-fire camera simulation,
the bit-packed ``.dat`` spike codec, texture-from-interval reconstruction,
hierarchical spike feature extraction, a miniature attention-pooling
backbone with temporal fusion, a full-spiking runtime with energy
accounting, and spike-text contrastive alignment with few-shot head
fine-tuning.
"""

__version__ = "0.1.0"

from .errors import (DataIOError, InvariantError, PreconditionError,
                     SpikeKitError)
from .stream import (ClipWindowSpec, SpikeStream, StreamMeta, pack_spikes,
                     read_dat, slice_clips, subsample_temporal, unpack_spikes,
                     write_dat)
from .camera import (EncoderConfig, IntensityVideo, PixelModel, encode_video,
                     simulate_pixel, to_grayscale, upsample_temporal)
from .reconstruct import TfiConfig, tfi_reconstruct, tfi_video
from .hsfe import (BlockSpec, BranchAllocation, BranchSpec, allocate_channels,
                   hsfe_forward, init_hsfe_weights, mtf_forward, slice_blocks,
                   spatial_attention)
from .starnet import (FeatureTensor, MiniMapResNetConfig, attention_pool,
                      init_starnet_weights, mini_mapresnet_forward,
                      star_net_forward, temporal_attention, temporal_pool)
from .snn import (FsveConfig, LifParams, MembraneState, SdsaParams,
                  esdsa_forward, fsve_forward, init_fsve_weights, lif_step,
                  sn_threshold, spiking_residual_block, surrogate_grad, tdbn)
from .energy import (EnergyLedger, LayerEnergy, count_conv_sops, count_sops,
                     energy_report, estimate_ann_energy, estimate_snn_energy)
from .align import (AlignmentHead, EmbeddingBatch, Temperature,
                    contrastive_loss, cosine_similarity, embed_text,
                    evaluate_topk, finetune_head, head_gradient,
                    text_features)
from .synth import SyntheticDatasetSpec, synth_dataset
from .pipeline import PipelineConfig, run_pipeline
from .weights import load_weights, save_weights

__all__ = [
    "__version__",
    "SpikeKitError", "PreconditionError", "DataIOError", "InvariantError",
    "SpikeStream", "StreamMeta", "ClipWindowSpec", "pack_spikes",
    "unpack_spikes", "write_dat", "read_dat", "slice_clips",
    "subsample_temporal",
    "PixelModel", "IntensityVideo", "EncoderConfig", "simulate_pixel",
    "encode_video", "to_grayscale", "upsample_temporal",
    "TfiConfig", "tfi_reconstruct", "tfi_video",
    "BlockSpec", "BranchSpec", "BranchAllocation", "slice_blocks",
    "allocate_channels", "mtf_forward", "spatial_attention", "hsfe_forward",
    "init_hsfe_weights",
    "MiniMapResNetConfig", "FeatureTensor", "mini_mapresnet_forward",
    "attention_pool", "temporal_attention", "temporal_pool",
    "star_net_forward", "init_starnet_weights",
    "LifParams", "MembraneState", "SdsaParams", "FsveConfig", "lif_step",
    "surrogate_grad", "tdbn", "spiking_residual_block", "sn_threshold",
    "esdsa_forward", "fsve_forward", "init_fsve_weights",
    "EnergyLedger", "LayerEnergy", "count_sops", "count_conv_sops",
    "estimate_snn_energy", "estimate_ann_energy", "energy_report",
    "EmbeddingBatch", "Temperature", "AlignmentHead", "embed_text",
    "text_features", "cosine_similarity", "contrastive_loss",
    "head_gradient", "finetune_head", "evaluate_topk",
    "SyntheticDatasetSpec", "synth_dataset",
    "PipelineConfig", "run_pipeline",
    "save_weights", "load_weights",
]
