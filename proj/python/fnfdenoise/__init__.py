"""Flash/no-flash pair denoising toolkit (C++ core)."""

from fnfdenoise._core import (
    Model,
    __version__,
    add_noise,
    apply_scale_map,
    compose_pair,
    compute_loss,
    effective_kernel,
    filter_direct,
    filter_fast,
    generate_scene,
    make_sample,
    mean_displacement,
    noise_stddev_map,
    psnr,
    render_srgb,
    sample_homography,
    ssim,
    train_procedural,
    upsample_kernel,
    warp_image,
)

__all__ = [
    "Model",
    "__version__",
    "add_noise",
    "apply_scale_map",
    "compose_pair",
    "compute_loss",
    "effective_kernel",
    "filter_direct",
    "filter_fast",
    "generate_scene",
    "make_sample",
    "mean_displacement",
    "noise_stddev_map",
    "psnr",
    "render_srgb",
    "sample_homography",
    "ssim",
    "train_procedural",
    "upsample_kernel",
    "warp_image",
]
