"""Layers on top of the autodiff tensor.

A Module tracks Parameters, child modules and constant buffers in
attribute insertion order, which fixes both the optimizer's parameter
ordering and the checkpoint name layout. All weight init draws from an
explicitly passed numpy Generator so model construction is a pure
function of the seed.
"""

import numpy as np

from . import ops
from . import tensor as T
from .tensor import Parameter, Tensor


class Module:
    def __init__(self):
        object.__setattr__(self, "_tracked", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, (Parameter, Module)):
            self._tracked[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, arr):
        self._buffers[name] = np.asarray(arr, dtype=np.float64)

    def buffer(self, name):
        return self._buffers[name]

    def parameters(self):
        out = []
        for v in self._tracked.values():
            if isinstance(v, Parameter):
                out.append(v)
            else:
                out.extend(v.parameters())
        return out

    def train(self):
        self.training = True
        for v in self._tracked.values():
            if isinstance(v, Module):
                v.train()
        return self

    def eval(self):
        self.training = False
        for v in self._tracked.values():
            if isinstance(v, Module):
                v.eval()
        return self

    def state_items(self, prefix=""):
        """(name, array) pairs for every parameter and buffer, in a
        stable order. Names are attribute paths, e.g. 'unet.down.3.weight'."""
        out = []
        for name, v in self._tracked.items():
            key = prefix + name
            if isinstance(v, Parameter):
                out.append((key, v.data))
            else:
                out.extend(v.state_items(key + "."))
        for name, arr in self._buffers.items():
            out.append((prefix + name, arr))
        return out

    def load_state(self, arrays):
        """Assign a {name: array} dict produced by state_items. Strict:
        every slot must be present with the right shape."""
        slots = self.state_items()
        missing = [k for k, _ in slots if k not in arrays]
        if missing:
            raise KeyError(f"checkpoint missing entries: {missing[:4]}")
        extra = set(arrays) - {k for k, _ in slots}
        if extra:
            raise KeyError(f"checkpoint has unknown entries: {sorted(extra)[:4]}")
        self._assign(arrays, "")

    def _assign(self, arrays, prefix):
        for name, v in self._tracked.items():
            key = prefix + name
            if isinstance(v, Parameter):
                arr = np.asarray(arrays[key], dtype=np.float64)
                if arr.shape != v.data.shape:
                    raise ValueError(f"shape mismatch for {key}: {arr.shape} vs {v.data.shape}")
                v.data = arr.copy()
                v.grad = None
                v.adam_m = None
                v.adam_v = None
                v.adam_step = 0
            else:
                v._assign(arrays, key + ".")
        for name in self._buffers:
            key = prefix + name
            arr = np.asarray(arrays[key], dtype=np.float64)
            if arr.shape != self._buffers[name].shape:
                raise ValueError(f"shape mismatch for {key}")
            self._buffers[name] = arr.copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, mods=()):
        super().__init__()
        self._items = []
        for m in mods:
            self.append(m)

    def append(self, m):
        self._tracked[str(len(self._items))] = m
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


class Sequential(Module):
    def __init__(self, layers):
        super().__init__()
        self.layers = ModuleList(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


def _he_init(rng, shape, fan_in):
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Conv1d(Module):
    def __init__(self, cin, cout, kernel, stride=1, pad=0, rng=None):
        super().__init__()
        self.stride, self.pad = stride, pad
        self.weight = Parameter(_he_init(rng, (cout, cin, kernel), cin * kernel))
        self.bias = Parameter(np.zeros(cout))

    def forward(self, x):
        return ops.conv1d(x, self.weight, self.bias, self.stride, self.pad)


class ConvTranspose1d(Module):
    def __init__(self, cin, cout, kernel, stride=1, pad=0, rng=None):
        super().__init__()
        self.stride, self.pad = stride, pad
        self.weight = Parameter(_he_init(rng, (cin, cout, kernel), cin * kernel))
        self.bias = Parameter(np.zeros(cout))

    def forward(self, x):
        return ops.conv_transpose1d(x, self.weight, self.bias, self.stride, self.pad)


class Conv2d(Module):
    def __init__(self, cin, cout, kernel, stride=(1, 1), pad=(0, 0), rng=None):
        super().__init__()
        kh, kw = kernel if isinstance(kernel, tuple) else (kernel, kernel)
        self.stride = stride if isinstance(stride, tuple) else (stride, stride)
        self.pad = pad if isinstance(pad, tuple) else (pad, pad)
        self.weight = Parameter(_he_init(rng, (cout, cin, kh, kw), cin * kh * kw))
        self.bias = Parameter(np.zeros(cout))

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.pad)


class Linear(Module):
    def __init__(self, fin, fout, rng=None):
        super().__init__()
        self.weight = Parameter(_he_init(rng, (fin, fout), fin))
        self.bias = Parameter(np.zeros(fout))

    def forward(self, x):
        return T.matmul(x, self.weight) + self.bias


class BatchNorm(Module):
    """Channel-axis batch normalization for (N, C, ...) inputs.

    Train mode normalizes by batch statistics over every axis except 1
    and updates running stats (population variance, momentum 0.1);
    eval mode normalizes by the running stats. Train mode needs N > 1.
    """

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels))
        self.register_buffer("running_var", np.ones(channels))

    def forward(self, x):
        if self.training:
            if x.data.shape[0] < 2:
                raise ValueError("batchnorm train mode needs batch size > 1")
            out, mu, var = ops.batchnorm_train(x, self.gamma, self.beta, self.eps)
            m = self.momentum
            self._buffers["running_mean"] = (
                (1 - m) * self._buffers["running_mean"] + m * mu
            )
            self._buffers["running_var"] = (
                (1 - m) * self._buffers["running_var"] + m * var
            )
            return out
        return ops.batchnorm_eval(
            x, self.gamma, self.beta,
            self._buffers["running_mean"], self._buffers["running_var"], self.eps,
        )


class ReLU(Module):
    def forward(self, x):
        return T.relu(x)


class LeakyReLU(Module):
    def __init__(self, negative_slope=0.2):
        super().__init__()
        self.negative_slope = negative_slope

    def forward(self, x):
        return T.leaky_relu(x, self.negative_slope)


class Sigmoid(Module):
    def forward(self, x):
        return T.sigmoid(x)


class LSTM(Module):
    """Single-layer LSTM, batch-first (N, T, D) -> (N, T, H).

    Gate order i, f, g, o; zero initial state; forget-gate bias starts
    at 1 so early training does not wash out the cell state.
    """

    def __init__(self, input_size, hidden_size, rng=None, forget_bias=1.0):
        super().__init__()
        self.hidden_size = hidden_size
        s = 1.0 / np.sqrt(hidden_size)
        self.w_ih = Parameter(rng.uniform(-s, s, (input_size, 4 * hidden_size)))
        self.w_hh = Parameter(rng.uniform(-s, s, (hidden_size, 4 * hidden_size)))
        bias = rng.uniform(-s, s, 4 * hidden_size)
        bias[hidden_size : 2 * hidden_size] = forget_bias
        self.bias = Parameter(bias)

    def forward(self, x):
        n, steps, _ = x.data.shape
        hs = self.hidden_size
        h = Tensor(np.zeros((n, hs)))
        c = Tensor(np.zeros((n, hs)))
        outs = []
        for t in range(steps):
            xt = x[(slice(None), t)]
            z = T.matmul(xt, self.w_ih) + T.matmul(h, self.w_hh) + self.bias
            i = T.sigmoid(z[(slice(None), slice(0, hs))])
            f = T.sigmoid(z[(slice(None), slice(hs, 2 * hs))])
            g = T.tanh(z[(slice(None), slice(2 * hs, 3 * hs))])
            o = T.sigmoid(z[(slice(None), slice(3 * hs, 4 * hs))])
            c = f * c + i * g
            h = o * T.tanh(c)
            outs.append(T.reshape(h, (n, 1, hs)))
        return T.concat(outs, axis=1)


_KINDS = {
    "conv1d", "conv2d", "tconv1d", "batchnorm", "leaky_relu", "relu",
    "linear", "lstm", "sigmoid",
}


class LayerSpec:
    """Declarative layer description: kind plus hyperparameters.

    in_size/out_size are channels for conv kinds, features for linear,
    input size for lstm (hidden gives the state width).
    """

    def __init__(self, kind, in_size=0, out_size=0, kernel=1, stride=1,
                 padding=0, negative_slope=0.2, hidden=0):
        if kind not in _KINDS:
            raise ValueError(f"unknown layer kind {kind!r}")
        strides = stride if isinstance(stride, tuple) else (stride,)
        if any(s < 1 for s in strides):
            raise ValueError("stride must be >= 1")
        kernels = kernel if isinstance(kernel, tuple) else (kernel,)
        if any(k < 1 for k in kernels):
            raise ValueError("kernel must be >= 1")
        if kind in ("conv1d", "conv2d", "tconv1d", "linear") and (in_size < 1 or out_size < 1):
            raise ValueError(f"{kind} needs positive in_size/out_size")
        if kind == "batchnorm" and in_size < 1:
            raise ValueError("batchnorm needs positive channel count")
        if kind == "lstm" and (in_size < 1 or hidden < 1):
            raise ValueError("lstm needs positive in_size and hidden")
        self.kind = kind
        self.in_size = in_size
        self.out_size = out_size
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.negative_slope = negative_slope
        self.hidden = hidden

    def build(self, rng=None):
        k = self.kind
        if k == "conv1d":
            return Conv1d(self.in_size, self.out_size, self.kernel, self.stride, self.padding, rng)
        if k == "tconv1d":
            return ConvTranspose1d(self.in_size, self.out_size, self.kernel, self.stride, self.padding, rng)
        if k == "conv2d":
            return Conv2d(self.in_size, self.out_size, self.kernel, self.stride, self.padding, rng)
        if k == "linear":
            return Linear(self.in_size, self.out_size, rng)
        if k == "lstm":
            return LSTM(self.in_size, self.hidden, rng)
        if k == "batchnorm":
            return BatchNorm(self.in_size)
        if k == "relu":
            return ReLU()
        if k == "leaky_relu":
            return LeakyReLU(self.negative_slope)
        return Sigmoid()
