"""Image-space rigid-body simulation, layered rendering and latent refinement."""

from ._core import (
    Error,
    IoError,
    MissingAsset,
    ShapeError,
    ValidationError,
    demo_scene,
    fit_mask,
    forward_noise,
    load_bundle,
    preview,
    refine,
    run_pipeline,
    simulate,
)

__all__ = [
    "Error",
    "IoError",
    "MissingAsset",
    "ShapeError",
    "ValidationError",
    "demo_scene",
    "fit_mask",
    "forward_noise",
    "load_bundle",
    "preview",
    "refine",
    "run_pipeline",
    "simulate",
]
