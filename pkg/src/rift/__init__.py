"""Region-wise image translation: per-region style injection through
region-wise normalization, trained adversarially with a region matching loss
so translating one region leaves the others untouched."""

from .errors import TrainingDiverged, ValidationError
from .masks import OneHotMask, RegionMask, downsample_mask, remap_regions, to_onehot
from .rin import RINBlock, RINResBlock, channel_stats, rin_forward
from .networks import (
    Discriminator,
    Generator,
    GeneratorConfig,
    region_average_pool,
)
from .losses import (
    LossWeights,
    feature_matching_loss,
    gan_loss_d,
    gan_loss_g,
    reconstruction_loss,
    region_matching_loss,
    total_generator_objective,
    translate_full,
    translate_region,
)
from .training import TrainConfig, fit, load_generator, preset_config, train_step
from .metrics import (
    EvaluationReport,
    GaussianSummary,
    accuracy,
    evaluate_model,
    frechet_distance,
    perceptual_distance,
)
from .dataio import DatasetManifest, SyntheticSpec, generate_synthetic, load_dataset

__version__ = "0.1.0"
