"""Toy-scale conditional GAN for speckle reduction."""

from .networks import Discriminator, DiscriminatorSpec, Generator, GeneratorSpec, receptive_field
from .train import (
    ImagePool,
    TrainConfig,
    TrainResult,
    generator_objective,
    infer,
    load_discriminator,
    load_generator,
    lr_at_epoch,
    pool_query,
    run_generator,
    save_checkpoint,
    train,
)

__all__ = [
    "Discriminator", "DiscriminatorSpec", "Generator", "GeneratorSpec", "ImagePool", "TrainConfig",
    "TrainResult", "generator_objective", "infer", "load_discriminator", "load_generator", "lr_at_epoch",
    "pool_query", "receptive_field", "run_generator", "save_checkpoint", "train",
]
