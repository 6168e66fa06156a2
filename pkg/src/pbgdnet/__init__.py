"""pbgdnet: CPU training engine for variable-resolution image classifiers.

Gradients are accumulated per example (pseudo-batch gradient descent) so
the update batch size is decoupled from the tensor batch size, spatial
pyramid pooling gives fixed-length features for any input size, and a
learnable SRM-initialized residual layer exposes image noise residuals.
"""

from .tensor import Tensor, Tape, backward, zero_grads
from .layers import SppSpec, SizedInputError, conv2d, linear, maxpool2d, relu, spp, softmax_cross_entropy
from .residual import ResidualKernelBank, apply_residual, init_srm, set_frozen
from .model import TinyNet, model_forward
from .optim import PBGDConfig, GradAccumulator, PlateauState, compute_adaptive_nu, plateau_update
from .training import ConfusionCounts, Phase, PhaseSchedule, TrainState, alternate_train, train_epoch, validate

__version__ = "0.1.0"
