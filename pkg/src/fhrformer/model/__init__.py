from .checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .config import PATCH_SIZES, ModelConfig
from .fhrformer import FHRFormer, Reconstruction, init_params, input_scaling, positional_encoding
from .layout import (
    PatchLayout,
    eligible_patches,
    mask_count,
    patchify,
    sample_mask,
    stack_masked,
    unpatchify,
)

__all__ = [
    "FHRFormer",
    "ModelConfig",
    "PATCH_SIZES",
    "PatchLayout",
    "Reconstruction",
    "decode_checkpoint",
    "eligible_patches",
    "encode_checkpoint",
    "init_params",
    "input_scaling",
    "load_checkpoint",
    "mask_count",
    "patchify",
    "positional_encoding",
    "sample_mask",
    "save_checkpoint",
    "stack_masked",
    "unpatchify",
]
