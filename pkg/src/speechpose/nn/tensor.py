"""Reverse-mode autodiff over numpy arrays.

All arithmetic runs in float64. A Tensor is a node in a dynamically
recorded graph: every op returns a new Tensor holding closures that map
the upstream gradient to gradients for its parents. backward() walks the
graph in reverse topological order and accumulates into the .grad of
leaf tensors that require gradients (Parameters keep accumulating until
zero_grad, so repeated backward calls without a reset add up).

Single-threaded by design: one graph is built and consumed by one
thread. Distinct graphs/models are independent.
"""

import numpy as np

_EPS_LOG = 1e-12


def _as_array(x):
    return np.asarray(x, dtype=np.float64)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fns")

    def __init__(self, data, requires_grad=False, _parents=(), _grad_fns=()):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        # keep the graph only where a gradient can flow
        if self.requires_grad:
            self._parents = _parents
            self._grad_fns = _grad_fns
        else:
            self._parents = ()
            self._grad_fns = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def detach(self):
        """Same values, cut from the graph."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars are promoted
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)


class Parameter(Tensor):
    """Trainable leaf. Carries its checkpoint name and Adam state

    (first/second moment arrays plus a step counter), attached by the
    optimizer on first use.
    """

    __slots__ = ("name", "adam_m", "adam_v", "adam_step")

    def __init__(self, data, name=""):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.adam_m = None
        self.adam_v = None
        self.adam_step = 0


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    """Sum grad down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    out = a.data + b.data
    return Tensor(
        out,
        _parents=(a, b),
        _grad_fns=(
            lambda g: _unbroadcast(g, a.data.shape),
            lambda g: _unbroadcast(g, b.data.shape),
        ),
    )


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    out = a.data - b.data
    return Tensor(
        out,
        _parents=(a, b),
        _grad_fns=(
            lambda g: _unbroadcast(g, a.data.shape),
            lambda g: _unbroadcast(-g, b.data.shape),
        ),
    )


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    out = a.data * b.data
    return Tensor(
        out,
        _parents=(a, b),
        _grad_fns=(
            lambda g: _unbroadcast(g * b.data, a.data.shape),
            lambda g: _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    out = a.data @ b.data
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul supports 2D operands only")
    return Tensor(
        out,
        _parents=(a, b),
        _grad_fns=(
            lambda g: g @ b.data.T,
            lambda g: a.data.T @ g,
        ),
    )


def _plain_index(idx):
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis for p in parts)


def take(a, idx):
    """Basic slicing/indexing; gradient scatters back into place."""
    out = a.data[idx]
    plain = _plain_index(idx)

    def back(g):
        full = np.zeros_like(a.data)
        if plain:
            # slices never alias, so += is safe and much faster than add.at
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        return full

    return Tensor(out, _parents=(a,), _grad_fns=(back,))


def reshape(a, shape):
    old = a.data.shape
    return Tensor(a.data.reshape(shape), _parents=(a,), _grad_fns=(lambda g: g.reshape(old),))


def transpose(a, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return Tensor(
        a.data.transpose(axes), _parents=(a,), _grad_fns=(lambda g: g.transpose(inv),)
    )


def concat(tensors, axis):
    tensors = [_wrap(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def make_back(i):
        return lambda g: np.split(g, splits, axis=axis)[i]

    return Tensor(
        out,
        _parents=tuple(tensors),
        _grad_fns=tuple(make_back(i) for i in range(len(tensors))),
    )


def pad_end(a, axis, count):
    """Zero-pad `count` entries at the end of one axis."""
    if count == 0:
        return a
    widths = [(0, 0)] * a.data.ndim
    widths[axis] = (0, count)
    n = a.data.shape[axis]
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(0, n)
    sl = tuple(sl)
    return Tensor(np.pad(a.data, widths), _parents=(a,), _grad_fns=(lambda g: g[sl],))


def mean(a):
    n = a.data.size
    return Tensor(
        a.data.mean(), _parents=(a,), _grad_fns=(lambda g: np.full(a.data.shape, g / n),)
    )


def mean_axis(a, axis):
    n = a.data.shape[axis]
    return Tensor(
        a.data.mean(axis=axis),
        _parents=(a,),
        _grad_fns=(lambda g: np.repeat(np.expand_dims(g / n, axis), n, axis=axis),),
    )


def tsum(a):
    return Tensor(
        a.data.sum(), _parents=(a,), _grad_fns=(lambda g: np.full(a.data.shape, g),)
    )


def mean_axes(a, axes, keepdims=False):
    """Mean over several axes; used by batchnorm."""
    axes = tuple(ax % a.data.ndim for ax in axes)
    n = int(np.prod([a.data.shape[ax] for ax in axes]))
    out = a.data.mean(axis=axes, keepdims=keepdims)

    def back(g):
        gg = g if keepdims else np.expand_dims(g, axes)
        return np.broadcast_to(gg, a.data.shape) / n

    return Tensor(out, _parents=(a,), _grad_fns=(back,))


def pow_const(a, p):
    """a ** p for a constant exponent (p = -0.5 gives rsqrt)."""
    out = a.data ** p
    return Tensor(
        out, _parents=(a,), _grad_fns=(lambda g: g * p * a.data ** (p - 1.0),)
    )


def relu(a):
    mask = a.data > 0
    return Tensor(a.data * mask, _parents=(a,), _grad_fns=(lambda g: g * mask,))


def leaky_relu(a, negative_slope=0.2):
    scale = np.where(a.data > 0, 1.0, negative_slope)
    return Tensor(a.data * scale, _parents=(a,), _grad_fns=(lambda g: g * scale,))


def sigmoid(a):
    # stable in both tails
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ez = np.exp(a.data[~pos])
    out[~pos] = ez / (1.0 + ez)
    return Tensor(out, _parents=(a,), _grad_fns=(lambda g: g * out * (1.0 - out),))


def tanh(a):
    out = np.tanh(a.data)
    return Tensor(out, _parents=(a,), _grad_fns=(lambda g: g * (1.0 - out * out),))


def l1_loss(pred, target):
    """Mean absolute difference. Subgradient at exact ties is 0."""
    pred, target = _wrap(pred), _wrap(target)
    diff = pred.data - target.data
    n = diff.size
    sign = np.sign(diff)
    return Tensor(
        np.abs(diff).mean(),
        _parents=(pred, target),
        _grad_fns=(lambda g: g * sign / n, lambda g: -g * sign / n),
    )


def bce_with_logits(logits, target):
    """Mean binary cross-entropy from logits, log-sum-exp stable form."""
    logits = _wrap(logits)
    z, t = logits.data, np.asarray(target, dtype=np.float64)
    n = z.size
    loss = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    p = np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))
    return Tensor(
        loss.mean(), _parents=(logits,), _grad_fns=(lambda g: g * (p - t) / n,)
    )


def backward(loss):
    """Accumulate d(loss)/d(leaf) into the .grad of every reachable

    gradient-requiring leaf. `loss` must be scalar.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return

    # iterative topological sort (graphs can be deep, e.g. unrolled LSTMs)
    topo, visited = [], set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node._parents:
            # leaf: accumulate persistently
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad = node.grad + g
            continue
        for parent, fn in zip(node._parents, node._grad_fns):
            if not parent.requires_grad:
                continue
            pg = fn(g)
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            elif parent._parents:
                grads[id(parent)] = pg
            else:
                if parent.grad is None:
                    parent.grad = pg.copy()
                else:
                    parent.grad = parent.grad + pg
