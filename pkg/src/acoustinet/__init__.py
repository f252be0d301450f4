"""Digital twins of passive acoustic neural networks.

Constrained recurrent architectures (non-negative weights in [0,1], no
biases, offset non-negative activations) with a learnable sinc bandpass
front end, trained by projected Adam on raw audio intensities, plus an
exporter from learned parameters to physical acoustic blueprints.
"""

from .blueprint import build_blueprint, export_blueprint
from .checkpoint import load_checkpoint, save_checkpoint
from .constraints import (ActivationSpec, InitSpec, init_abs_xavier, init_uniform_nonneg,
                          init_xavier_uniform, offset_abs, offset_relu, project_unit_interval)
from .data import (AudioRecord, DatasetSplit, binary_subset, preprocess,
                   speaker_disjoint_split, synth_dataset)
from .estimator import AcousticNetClassifier
from .gradcheck import finite_difference_check, model_gradient_check, preset_gradient_check
from .layers import (AcousticModel, HsLayer, ModelSpec, RnnCell, SincConfig, build_model,
                     hs_layer_forward, model_forward, rnn_forward)
from .optim import AdamState, adam_step, clip_grad_global_norm, constrained_step, lr_schedule
from .presets import get_preset, list_presets, load_config_file
from .sinc import SincFilterBank, mel_init, sinc_kernels
from .tensor import Tensor, conv1d_valid, matmul, softmax_cross_entropy
from .training import (RunResult, TrainConfig, evaluate, init_sweep, multi_seed,
                       sparsity_report, train)

__version__ = "0.1.0"

__all__ = [
    "AcousticModel", "AcousticNetClassifier", "ActivationSpec", "AdamState", "AudioRecord",
    "DatasetSplit", "HsLayer", "InitSpec", "ModelSpec", "RnnCell", "RunResult",
    "SincConfig", "SincFilterBank", "Tensor", "TrainConfig",
    "adam_step", "binary_subset", "build_blueprint", "build_model", "clip_grad_global_norm",
    "constrained_step", "conv1d_valid", "evaluate", "export_blueprint",
    "finite_difference_check", "get_preset", "hs_layer_forward", "init_abs_xavier",
    "init_sweep", "init_uniform_nonneg", "init_xavier_uniform", "list_presets",
    "load_checkpoint", "load_config_file", "lr_schedule", "matmul", "mel_init",
    "model_forward", "model_gradient_check", "multi_seed", "offset_abs", "offset_relu",
    "preprocess", "preset_gradient_check", "project_unit_interval", "rnn_forward",
    "save_checkpoint", "sinc_kernels", "softmax_cross_entropy", "sparsity_report",
    "speaker_disjoint_split", "synth_dataset", "train",
]
