"""A small reverse-mode autodiff core over float64 numpy arrays.

Every operation returns a :class:`Tensor` that remembers its parents and a
closure computing the parents' gradients. Gradients are only recorded while
``grad_enabled()`` is true; tensors produced under :func:`no_grad` cannot be
back-propagated through, which is how a train/inference mode mix-up is
caught.
"""

from __future__ import annotations

import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _kernels as _k


class DimensionError(ValueError):
    pass


class ModeError(RuntimeError):
    pass


_GRAD = [True]


def grad_enabled() -> bool:
    return _GRAD[-1]


@contextlib.contextmanager
def no_grad():
    _GRAD.append(False)
    try:
        yield
    finally:
        _GRAD.pop()


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None, op: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'}, requires_grad={self.requires_grad})"

    def __getitem__(self, idx):
        return getitem(self, idx)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if not self.requires_grad:
            raise ModeError(f"{self!r} was computed without gradient tracking (inference mode); "
                            "switch the model to training mode before calling backward()")
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(f"backward() without a seed gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.asarray(grad, dtype=np.float64)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # free the graph as we go; interior grads are no longer needed
                node._backward = None
                node._parents = ()
                node.grad = None


def _accumulate(t: Tensor, g):
    if not t.requires_grad:
        return
    if g.shape != t.data.shape:
        g = _unbroadcast(g, t.data.shape)
    t.grad = g.copy() if t.grad is None else t.grad + g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _make(data, parents, backward, op):
    needs = grad_enabled() and any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data, op=op)
    return Tensor(data, True, tuple(parents), backward, op)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------- basic ops

def add(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        _accumulate(a, g)
        _accumulate(b, g)
    return _make(a.data + b.data, (a, b), back, "add")


def reshape(a: Tensor, shape) -> Tensor:
    def back(g):
        _accumulate(a, g.reshape(a.shape))
    return _make(a.data.reshape(shape), (a,), back, "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)

    def back(g):
        _accumulate(a, g.transpose(inv))
    return _make(np.ascontiguousarray(a.data.transpose(axes)), (a,), back, "transpose")


def getitem(a: Tensor, idx) -> Tensor:
    def back(g):
        if not a.requires_grad:
            return
        full = np.zeros_like(a.data)
        full[idx] = g
        _accumulate(a, full)
    return _make(a.data[idx], (a,), back, "getitem")


def concat(tensors, axis: int) -> Tensor:
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        for t, part in zip(tensors, np.split(g, sizes, axis=axis)):
            _accumulate(t, part)
    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back, "concat")


def stack(tensors, axis: int = 0) -> Tensor:
    def back(g):
        for k, t in enumerate(tensors):
            _accumulate(t, np.take(g, k, axis=axis))
    return _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), back, "stack")


# ------------------------------------------------------------ kernel set

def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    """``x`` for ``x > 0`` else ``alpha * (exp(x) - 1)``."""
    out, ex = _k.elu_forward(np.ascontiguousarray(x.data), float(alpha))

    def back(g):
        # exp(min(x, 0)) is exactly 1 on the positive side
        d = ex if alpha == 1.0 else np.where(x.data > 0, 1.0, alpha * ex)
        _accumulate(x, g * d)
    return _make(out, (x,), back, "elu")


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` with ``x`` [batch, in], ``w`` [in, out]."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"dense: expected x [B, {w.shape[0]}], got {list(x.shape)}")
    out = x.data @ w.data
    if b is not None:
        out = out + b.data
    parents = (x, w) if b is None else (x, w, b)

    def back(g):
        if x.requires_grad:
            _accumulate(x, g @ w.data.T)
        if w.requires_grad:
            _accumulate(w, x.data.T @ g)
        if b is not None and b.requires_grad:
            _accumulate(b, g.sum(axis=0))
    return _make(out, parents, back, "dense")


def same_padding(kh: int, kw: int):
    return (((kh - 1) // 2, kh - 1 - (kh - 1) // 2), ((kw - 1) // 2, kw - 1 - (kw - 1) // 2))


def _correlate(xp, wm, kh, kw):
    """Valid correlation of padded NHWC ``xp`` with ``wm`` [out, kh*kw*in]; returns (out, cols)."""
    B, Hp, Wp, C = xp.shape
    Ho, Wo = Hp - kh + 1, Wp - kw + 1
    if kh == 1 and kw == 1:
        cols = xp.reshape(B * Ho * Wo, C)
    else:
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # B, Ho, Wo, C, kh, kw
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(B * Ho * Wo, kh * kw * C)
    return (cols @ wm.T).reshape(B, Ho, Wo, -1), cols


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, padding="same", groups: int = 1) -> Tensor:
    """Stride-1 2-D cross-correlation on channels-last input.

    ``x`` is [batch, height, width, channels] and ``w`` is
    [out, in/groups, kh, kw]. ``padding`` is ``"same"``, ``"valid"`` or
    ``((top, bottom), (left, right))``. Each group is one im2col matrix
    product; the input gradient is the full correlation with the flipped
    kernel, computed the same way.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d: expected 4-D input and weight, got {list(x.shape)} and {list(w.shape)}")
    B, H, W, C = x.shape
    O, Cg, kh, kw = w.shape
    if C % groups or O % groups or C // groups != Cg:
        raise DimensionError(f"conv2d: input has {C} channels, weight expects {Cg * groups} "
                             f"({Cg} per group x {groups} groups)")
    if padding == "same":
        pad = same_padding(kh, kw)
    elif padding == "valid":
        pad = ((0, 0), (0, 0))
    else:
        pad = padding
    (pt, pb), (pl, pr) = pad
    Ho, Wo = H + pt + pb - kh + 1, W + pl + pr - kw + 1
    if Ho < 1 or Wo < 1:
        raise DimensionError(f"conv2d: kernel {kh}x{kw} larger than padded input {H + pt + pb}x{W + pl + pr}")
    xp = np.pad(x.data, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else x.data
    Og = O // groups
    wms = [w.data[gi * Og:(gi + 1) * Og].transpose(0, 2, 3, 1).reshape(Og, -1) for gi in range(groups)]
    if groups == 1:
        out, cols = _correlate(xp, wms[0], kh, kw)
        cols_g = [cols]
    else:
        parts, cols_g = [], []
        for gi in range(groups):
            o, cols = _correlate(np.ascontiguousarray(xp[..., gi * Cg:(gi + 1) * Cg]), wms[gi], kh, kw)
            parts.append(o)
            cols_g.append(cols)
        out = np.concatenate(parts, axis=-1)
    if b is not None:
        out += b.data
    parents = (x, w) if b is None else (x, w, b)

    def back(g):
        gm_all = g.reshape(B * Ho * Wo, O)
        if w.requires_grad:
            dw = np.empty_like(w.data)
            for gi in range(groups):
                gm = gm_all[:, gi * Og:(gi + 1) * Og]
                dw[gi * Og:(gi + 1) * Og] = (gm.T @ cols_g[gi]).reshape(Og, kh, kw, Cg).transpose(0, 3, 1, 2)
            _accumulate(w, dw)
        if b is not None and b.requires_grad:
            _accumulate(b, gm_all.sum(axis=0))
        if not x.requires_grad:
            return
        if H * W * Og <= Ho * Wo * Cg:
            # full correlation of the padded gradient with the flipped kernel
            gp = np.pad(g, ((0, 0), (kh - 1 - pt, kh - 1 - pb), (kw - 1 - pl, kw - 1 - pr), (0, 0)))
            dxs = []
            for gi in range(groups):
                wf = w.data[gi * Og:(gi + 1) * Og, :, ::-1, ::-1].transpose(1, 2, 3, 0).reshape(Cg, -1)
                src = gp if groups == 1 else np.ascontiguousarray(gp[..., gi * Og:(gi + 1) * Og])
                dxs.append(_correlate(src, wf, kh, kw)[0])
            _accumulate(x, dxs[0] if groups == 1 else np.concatenate(dxs, axis=-1))
            return
        # col2im: scatter the column gradient back tap by tap (cheaper for valid spatial kernels)
        dxp = np.zeros(xp.shape)
        for gi in range(groups):
            dcols = (gm_all[:, gi * Og:(gi + 1) * Og] @ wms[gi]).reshape(B, Ho, Wo, kh, kw, Cg)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i:i + Ho, j:j + Wo, gi * Cg:(gi + 1) * Cg] += dcols[:, :, :, i, j]
        _accumulate(x, dxp[:, pt:pt + H, pl:pl + W])
    return _make(out, parents, back, "conv2d")


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
                training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalisation of channels-last input over (batch, height, width).

    In training mode batch statistics are used and the running buffers are
    updated in place; in inference mode the running buffers give a fixed
    affine map, and the result refuses back-propagation.
    """
    if x.ndim != 4 or x.shape[-1] != gamma.shape[0]:
        raise DimensionError(f"batchnorm2d: expected [B, H, W, {gamma.shape[0]}], got {list(x.shape)}")
    C = x.shape[-1]
    flat = x.data.reshape(-1, C)
    n = flat.shape[0]
    if not training:
        scale = gamma.data / np.sqrt(running_var + eps)
        out = flat * scale + (beta.data - running_mean * scale)

        def refuse(g):
            raise ModeError("backward through a batch-norm layer evaluated in inference mode; "
                            "call model.train() before a training step")
        return _make(out.reshape(x.shape), (x, gamma, beta), refuse, "batchnorm2d[inference]")
    out, xhat, mean, var, invstd = _k.bn_forward(np.ascontiguousarray(flat), gamma.data, beta.data, eps)
    running_mean *= 1 - momentum
    running_mean += momentum * mean
    running_var *= 1 - momentum
    running_var += momentum * var * (n / max(n - 1, 1))

    def back(g):
        dx, s1, s2 = _k.bn_backward(np.ascontiguousarray(g.reshape(-1, C)), xhat, gamma.data, invstd)
        if gamma.requires_grad:
            _accumulate(gamma, s2)
        if beta.requires_grad:
            _accumulate(beta, s1)
        if x.requires_grad:
            _accumulate(x, dx.reshape(x.shape))
    return _make(out.reshape(x.shape), (x, gamma, beta), back, "batchnorm2d")


def _check_pool(x, kh, kw, name):
    if x.ndim != 4:
        raise DimensionError(f"{name}: expected 4-D input, got {list(x.shape)}")
    if x.shape[1] < kh or x.shape[2] < kw:
        raise DimensionError(f"{name}: window {kh}x{kw} larger than input {x.shape[1]}x{x.shape[2]}")


def _pool_view(a, kh, kw):
    B, H, W, C = a.shape
    Ho, Wo = H // kh, W // kw
    return a[:, :Ho * kh, :Wo * kw].reshape(B, Ho, kh, Wo, kw, C), Ho, Wo


def max_pool2d(x: Tensor, kernel) -> Tensor:
    """Non-overlapping max pooling of channels-last input (stride = kernel, floor).

    Ties route the gradient to the first position in the window.
    """
    kh, kw = kernel
    _check_pool(x, kh, kw, "max_pool2d")
    v, Ho, Wo = _pool_view(x.data, kh, kw)
    best = v[:, :, 0, :, 0].copy()
    arg = np.zeros(best.shape, dtype=np.int8)
    for k in range(1, kh * kw):
        cand = v[:, :, k // kw, :, k % kw]
        better = cand > best
        np.maximum(best, cand, out=best)
        arg[better] = k

    def back(g):
        dx = np.zeros_like(x.data)
        dv = dx[:, :Ho * kh, :Wo * kw].reshape(x.shape[0], Ho, kh, Wo, kw, x.shape[3])
        for k in range(kh * kw):
            dv[:, :, k // kw, :, k % kw] = g * (arg == k)
        _accumulate(x, dx)
    return _make(best, (x,), back, "max_pool2d")


def avg_pool2d(x: Tensor, kernel) -> Tensor:
    """Non-overlapping average pooling of channels-last input (stride = kernel, floor)."""
    kh, kw = kernel
    _check_pool(x, kh, kw, "avg_pool2d")
    v, Ho, Wo = _pool_view(x.data, kh, kw)

    def back(g):
        dx = np.zeros_like(x.data)
        dv = dx[:, :Ho * kh, :Wo * kw].reshape(x.shape[0], Ho, kh, Wo, kw, x.shape[3])
        dv[...] = (g / (kh * kw))[:, :, None, :, None, :]
        _accumulate(x, dx)
    return _make(v.mean(axis=(2, 4)), (x,), back, "avg_pool2d")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, w_ih: Tensor, w_hh: Tensor, b: Tensor) -> Tensor:
    """One LSTM step; gate order input, forget, cell, output.

    Returns a ``[2, batch, hidden]`` tensor holding the new hidden and cell
    states (index it to get each).
    """
    H = h.shape[1]
    if w_ih.shape != (x.shape[1], 4 * H) or w_hh.shape != (H, 4 * H) or c.shape != h.shape:
        raise DimensionError(f"lstm_cell: x {list(x.shape)}, h {list(h.shape)}, c {list(c.shape)} do not fit "
                             f"w_ih {list(w_ih.shape)} / w_hh {list(w_hh.shape)}")
    z = x.data @ w_ih.data + h.data @ w_hh.data + b.data
    i, f = _sigmoid(z[:, :H]), _sigmoid(z[:, H:2 * H])
    gg, o = np.tanh(z[:, 2 * H:3 * H]), _sigmoid(z[:, 3 * H:])
    c_new = f * c.data + i * gg
    tc = np.tanh(c_new)
    h_new = o * tc

    def back(grad):
        dh, dc = grad[0], grad[1]
        dc = dc + dh * o * (1.0 - tc ** 2)
        dz = np.concatenate([dc * gg * i * (1 - i), dc * c.data * f * (1 - f),
                             dc * i * (1 - gg ** 2), dh * tc * o * (1 - o)], axis=1)
        if x.requires_grad:
            _accumulate(x, dz @ w_ih.data.T)
        if h.requires_grad:
            _accumulate(h, dz @ w_hh.data.T)
        if c.requires_grad:
            _accumulate(c, dc * f)
        if w_ih.requires_grad:
            _accumulate(w_ih, x.data.T @ dz)
        if w_hh.requires_grad:
            _accumulate(w_hh, h.data.T @ dz)
        if b.requires_grad:
            _accumulate(b, dz.sum(axis=0))
    return _make(np.stack([h_new, c_new]), (x, h, c, w_ih, w_hh, b), back, "lstm_cell")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(``logits``)."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"softmax_cross_entropy: logits {list(logits.shape)} vs labels {list(labels.shape)}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = labels.shape[0]
    loss = -logp[np.arange(n), labels].mean()

    def back(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        _accumulate(logits, p * (g / n))
    return _make(loss, (logits,), back, "softmax_cross_entropy")


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity outside training or when ``p == 0``."""
    if not training or p <= 0:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)

    def back(g):
        _accumulate(x, g * keep)
    return _make(x.data * keep, (x,), back, "dropout")
