from .tensor import (
    Parameter,
    Tensor,
    add,
    backward,
    bce_with_logits,
    concat,
    l1_loss,
    leaky_relu,
    matmul,
    mean,
    mean_axes,
    mean_axis,
    mul,
    pad_end,
    pow_const,
    relu,
    reshape,
    sigmoid,
    sub,
    take,
    tanh,
    transpose,
    tsum,
)
from .ops import conv1d, conv1d_out_len, conv2d, conv_transpose1d, tconv1d_out_len
from .layers import (
    BatchNorm,
    Conv1d,
    Conv2d,
    ConvTranspose1d,
    LSTM,
    LayerSpec,
    LeakyReLU,
    Linear,
    Module,
    ModuleList,
    ReLU,
    Sequential,
    Sigmoid,
)
from .optim import Adam
from .checkpoint import load_arrays, save_arrays
