"""Camera-centered panoramic view interpolation.

Given two reference views spaced tau degrees apart and a digitized target
yaw, a conditional GAN predicts per-scale 2D affine transforms that warp
and fuse the reference feature pyramids into the intermediate view. Runs on
a self-contained numpy autodiff engine; procedural billboard scenes provide
ground truth for training and evaluation.
"""

from .checkpoint import (Checkpoint, CheckpointFormatError, ConfigConflictError,
                         load_checkpoint, save_checkpoint)
from .clae import (AngleCode, ConditionEncoder, CorrespondenceMap, cross_patch_corr,
                   digitize_angle, modulate)
from .losses import (FeatureExtractor, GeneratorLossParts, LossWeights, adv_losses,
                     feat_match_loss, laplacian_loss, pd_loss, psnr, ssim,
                     ssim_metric, total_generator_loss)
from .model import (Discriminator, FeaturePyramid, Generator, ModelConfig,
                    build_models, discriminate)
from .optim import Adam, AdamState, adam_step
from .scenegen import (Billboard, CameraPose, SceneSpec, build_scene,
                       default_locations, emit_dataset, render_view)
from .tensor import ShapeError, Tensor, no_grad
from .trainer import (EvalReport, TrainConfig, TrainingDivergedError, evaluate,
                      restore_models, sweep_tau, train)
from .warp import AffineParams, affine_grid, grid_sample_bilinear, warp_affine

__version__ = "0.1.0"
