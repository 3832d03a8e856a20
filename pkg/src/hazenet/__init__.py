"""Density-aware single-image dehazing on a self-contained numpy autodiff core."""

from .attention import FA, SE, SHA, SHAConfig, SHAState, sha_param_count
from .blocks import AFF, CoT, MHAB, MHAC, Tail
from .hazegen import (
    HazeParams,
    HazyPair,
    Scene,
    augment,
    extract_patches,
    generate_scene,
    invert_degradation,
    load_dataset,
    make_dataset,
    synthesize_hazy,
    transmission_from_depth,
    write_dataset,
)
from .metrics import colorjet_render, diff_map, psnr, ssim
from .model import DehazeNet, DensityMap, ModelConfig, ModelOutput, refine_with_density
from .tensor import (
    GradTape,
    Parameter,
    Tensor,
    apply_activation,
    backward,
    channel_shuffle,
    conv1d,
    conv2d,
    directional_pool,
    instance_norm,
    no_grad,
    set_debug_checks,
    upsample_nearest,
)
from .training import Adam, TrainConfig, charbonnier, cyclic_lr, total_loss, train_loop

__version__ = "0.1.0"
