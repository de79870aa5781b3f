"""FMSR: image super-resolution with a selective-scan state-space branch and Fourier blocks.

A state-space image super-resolution network (four-directional selective scan
plus FFT-domain frequency selection and a hybrid gate), with the data,
training, evaluation and benchmarking code around it.
"""

from .blocks import FMB, FMG, FSM, HGM, VSSM, ChannelAttention, ChannelLayerNorm, layer_norm_channel
from .checkpoint import Checkpoint, load_checkpoint, restore_model, save_checkpoint
from .data import PairedSample, bicubic_resize, load_image, make_pair, make_pairs, sample_patches, save_image
from .errors import CheckpointError, ConfigError, DomainError, FMSRError, NonFiniteError, ShapeError
from .evaluate import BicubicUpscaler, erf_map, evaluate_dir, evaluate_pairs, self_ensemble
from .flops import count_flops
from .gradcheck import grad_check, module_grad_check
from .metrics import psnr, rgb_to_y, ssim, y_psnr, y_ssim
from .model import FMSR, ModelConfig, build_model, count_params, parameter_registry, super_resolve
from .ssm import SS2D, StateConfig, cross_merge, cross_scan, selective_scan_1d, ss2d
from .training import Adam, TrainConfig, l1_loss, lr_schedule, train_loop

__version__ = "0.1.0"
