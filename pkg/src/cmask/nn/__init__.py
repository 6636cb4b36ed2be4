from .tensor import Tensor, parameter
from .unet import UNet, UNetConfig, parameter_count, unet_forward
from .optim import Adam, AdamState, adam_step
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from . import functional
