"""Reverse-mode automatic differentiation over numpy arrays.

A ``Var`` wraps an ndarray of any rank together with an optional gradient.
Operations build a DAG of parent links and backward closures; calling
``backward()`` on a scalar result walks the graph in reverse topological
order and accumulates gradients into every reachable ``Var`` that has
``requires_grad`` set.  Gradients are lazy: ``grad`` stays None until the
first contribution arrives.

Composite expressions are differentiated through every term, including
denominators built from the primitives here, so quotient-style
normalizations get exact gradients with no hand-derived special cases.

``gradcheck`` compares analytic gradients against central finite
differences at float64 and is the correctness gate for all of the above.
"""

import math

import numpy as np

from . import kernels as K
from .errors import DomainError
from .kernels import conv_geometry


def _unbroadcast(g, shape):
    """Sum-reduce a broadcast gradient back to the original operand shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs > 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Var:
    """A differentiable ndarray node."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        """A view of the same data cut out of the graph."""
        return Var(self.data, requires_grad=False, name=self.name)

    def _accum(self, g):
        if self.grad is None:
            # first contribution: copy (g may be a view into another grad)
            if isinstance(g, np.ndarray) and g.shape == self.data.shape \
                    and g.dtype == self.data.dtype:
                self.grad = g.copy()
                return
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Reverse accumulate from a scalar root.

        The sweep releases the graph afterwards: closures and parent links
        are severed so plain refcounting frees all activations once the
        caller drops the root.  Grads stay readable; a root can only be
        backwarded once.
        """
        if self.data.size != 1:
            raise DomainError(f"backward root must be scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise DomainError("backward root does not require grad")
        order = []
        seen = set()
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
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward()
        for node in order:
            node._backward = None
            node._parents = ()

    # arithmetic ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, neg(as_var(other)))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_var(other, like=self), self)

    def __neg__(self):
        return neg(self)

    def sum(self, axis=None, keepdims=False):
        return vsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return vmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Var(shape={self.shape}, dtype={self.dtype}, grad={self.requires_grad}{tag})"


def as_var(x, like=None):
    if isinstance(x, Var):
        return x
    if isinstance(x, (int, float)) and like is not None:
        # keep python scalars weak so float32 graphs stay float32
        return Var(np.asarray(x, dtype=like.data.dtype))
    return Var(np.asarray(x))


def _make(data, parents, bw):
    req = any(p.requires_grad for p in parents)
    out = Var(data, requires_grad=req)
    if req:
        out._parents = tuple(parents)
        out._backward = bw(out)
    return out


def add(a, b):
    a = as_var(a)
    b = as_var(b, like=a)

    def bw(out):
        def _backward():
            if a.requires_grad:
                a._accum(_unbroadcast(out.grad, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(out.grad, b.data.shape))
        return _backward

    return _make(a.data + b.data, (a, b), bw)


def mul(a, b):
    a = as_var(a)
    b = as_var(b, like=a)

    def bw(out):
        def _backward():
            if a.requires_grad:
                a._accum(_unbroadcast(out.grad * b.data, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(out.grad * a.data, b.data.shape))
        return _backward

    return _make(a.data * b.data, (a, b), bw)


def div(a, b):
    a = as_var(a)
    b = as_var(b, like=a)

    def bw(out):
        def _backward():
            if a.requires_grad:
                a._accum(_unbroadcast(out.grad / b.data, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(-out.grad * a.data / (b.data * b.data),
                                      b.data.shape))
        return _backward

    return _make(a.data / b.data, (a, b), bw)


def neg(a):
    a = as_var(a)

    def bw(out):
        def _backward():
            a._accum(-out.grad)
        return _backward

    return _make(-a.data, (a,), bw)


def sqrt(a):
    a = as_var(a)
    root = np.sqrt(a.data)

    def bw(out):
        def _backward():
            a._accum(out.grad * 0.5 / root)
        return _backward

    return _make(root, (a,), bw)


def square(a):
    a = as_var(a)

    def bw(out):
        def _backward():
            a._accum(out.grad * 2.0 * a.data)
        return _backward

    return _make(a.data * a.data, (a,), bw)


def absolute(a):
    a = as_var(a)

    def bw(out):
        def _backward():
            a._accum(out.grad * np.sign(a.data))
        return _backward

    return _make(np.abs(a.data), (a,), bw)


def exp(a):
    a = as_var(a)
    e = np.exp(a.data)

    def bw(out):
        def _backward():
            a._accum(out.grad * e)
        return _backward

    return _make(e, (a,), bw)


def log(a):
    a = as_var(a)

    def bw(out):
        def _backward():
            a._accum(out.grad / a.data)
        return _backward

    return _make(np.log(a.data), (a,), bw)


def relu(a):
    a = as_var(a)

    def bw(out):
        def _backward():
            a._accum(out.grad * (a.data > 0))
        return _backward

    return _make(np.maximum(a.data, 0), (a,), bw)


def leaky_relu(a, slope=0.2):
    a = as_var(a)

    def bw(out):
        def _backward():
            scale = np.where(a.data > 0, 1.0, slope)
            a._accum(out.grad * scale.astype(out.grad.dtype))
        return _backward

    return _make(K.leaky_relu(a.data, slope), (a,), bw)


def clip01(a):
    """Clamp to [0, 1]; gradient is zero outside the open interval."""
    a = as_var(a)

    def bw(out):
        def _backward():
            inside = (a.data > 0.0) & (a.data < 1.0)
            a._accum(out.grad * inside)
        return _backward

    return _make(np.clip(a.data, 0.0, 1.0), (a,), bw)


def vsum(a, axis=None, keepdims=False):
    a = as_var(a)

    def bw(out):
        def _backward():
            g = out.grad
            if axis is not None and not keepdims:
                ax = (axis,) if isinstance(axis, int) else tuple(axis)
                shape = list(a.data.shape)
                for i in sorted(d % a.data.ndim for d in ax):
                    shape[i] = 1
                g = g.reshape(shape)
            a._accum(np.broadcast_to(g, a.data.shape))
        return _backward

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def vmean(a, axis=None, keepdims=False):
    a = as_var(a)
    if axis is None:
        n = a.data.size
    else:
        ax = (axis,) if isinstance(axis, int) else tuple(axis)
        n = 1
        for d in ax:
            n *= a.data.shape[d]
    return vsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def softmax(a, axis=-1):
    a = as_var(a)
    y = K.softmax(a.data, axis=axis)

    def bw(out):
        def _backward():
            g = out.grad
            dot = np.sum(g * y, axis=axis, keepdims=True)
            a._accum((g - dot) * y)
        return _backward

    return _make(y, (a,), bw)


def conv2d(x, w, stride=1, padding="same", bias=None):
    """Differentiable 2-D convolution; bias is a separate broadcast add."""
    x = as_var(x)
    w = as_var(w)
    y = K.conv2d(x.data, w.data, stride=stride, padding=padding)

    def bw(out):
        def _backward():
            dx, dw = K.conv2d_backward(
                x.data, w.data, out.grad, stride=stride, padding=padding,
                need_dx=x.requires_grad, need_dw=w.requires_grad)
            if dx is not None:
                x._accum(dx)
            if dw is not None:
                w._accum(dw)
        return _backward

    out = _make(y, (x, w), bw)
    if bias is not None:
        out = add(out, bias)
    return out


def resize_bilinear(x, out_h, out_w):
    x = as_var(x)
    in_h, in_w = x.data.shape[:2]

    def bw(out):
        def _backward():
            x._accum(K.resize_bilinear_backward(in_h, in_w, out.grad))
        return _backward

    return _make(K.resize_bilinear(x.data, out_h, out_w), (x,), bw)


def avg_pool_to(x, out_h, out_w):
    x = as_var(x)
    in_h, in_w = x.data.shape[:2]

    def bw(out):
        def _backward():
            x._accum(K.avg_pool_to_backward(in_h, in_w, out.grad))
        return _backward

    return _make(K.avg_pool_to(x.data, out_h, out_w), (x,), bw)


def concat(vars_, axis=-1):
    vars_ = [as_var(v) for v in vars_]
    if not vars_:
        raise DomainError("concat of an empty list")
    sizes = [v.data.shape[axis] for v in vars_]
    bounds = np.cumsum([0] + sizes)

    def bw(out):
        def _backward():
            for v, lo, hi in zip(vars_, bounds[:-1], bounds[1:]):
                if v.requires_grad:
                    idx = [slice(None)] * out.grad.ndim
                    idx[axis] = slice(int(lo), int(hi))
                    v._accum(out.grad[tuple(idx)])
        return _backward

    return _make(np.concatenate([v.data for v in vars_], axis=axis), tuple(vars_), bw)


def gather_pixels(x, iy, ix):
    """Pick pixels of an (h, w, c) map at integer coords; output (*idx, c).

    The backward pass scatter-adds, so repeated coordinates accumulate.
    """
    x = as_var(x)
    iy = np.asarray(iy, dtype=np.intp)
    ix = np.asarray(ix, dtype=np.intp)
    if x.data.ndim != 3:
        raise DomainError(f"gather_pixels input must be rank-3, got {x.data.shape}")
    y = x.data[iy, ix, :]

    def bw(out):
        def _backward():
            # np.zeros, not zeros_like: the source may be a broadcast view
            # and the scatter kernel needs a C-contiguous accumulator
            dx = np.zeros(x.data.shape, dtype=x.data.dtype)
            from . import backend
            backend.scatter_add_pixels(dx, iy, ix, out.grad)
            x._accum(dx)
        return _backward

    return _make(y, (x,), bw)


def broadcast_to(x, shape):
    x = as_var(x)

    def bw(out):
        def _backward():
            x._accum(_unbroadcast(out.grad, x.data.shape))
        return _backward

    return _make(np.ascontiguousarray(np.broadcast_to(x.data, shape)), (x,), bw)


def reshape(x, *shape):
    x = as_var(x)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    old = x.data.shape

    def bw(out):
        def _backward():
            x._accum(out.grad.reshape(old))
        return _backward

    return _make(x.data.reshape(shape), (x,), bw)


class GradcheckResult:
    """Per-leaf worst relative errors from a finite-difference comparison."""

    def __init__(self, ok, per_leaf):
        self.ok = ok
        self.per_leaf = per_leaf

    @property
    def max_error(self):
        return max(self.per_leaf.values()) if self.per_leaf else 0.0

    def __repr__(self):
        status = "ok" if self.ok else "FAIL"
        return f"GradcheckResult({status}, max_error={self.max_error:.3e})"


def gradcheck(fn, leaves, eps=1e-4, tol=1e-4):
    """Compare analytic gradients of ``fn(*leaves)`` to central differences.

    Leaves must be float64 ``Var``s with requires_grad set; the function
    must return a scalar ``Var`` and be deterministic.  Errors are relative,
    |a - n| / (1 + max(|a|, |n|)).  Raises DomainError on any non-finite
    value so a broken op cannot slip through as a large-but-finite error.
    """
    for v in leaves:
        if v.data.dtype != np.float64:
            raise DomainError(f"gradcheck needs float64 leaves, got {v.data.dtype}")
        if not v.requires_grad:
            raise DomainError("gradcheck leaf does not require grad")
        v.grad = None
    out = fn(*leaves)
    if out.data.size != 1:
        raise DomainError(f"gradcheck function must return a scalar, got {out.shape}")
    if not np.isfinite(out.data):
        raise DomainError("non-finite function value")
    out.backward()

    report = {}
    ok = True
    for i, v in enumerate(leaves):
        ana = v.grad if v.grad is not None else np.zeros_like(v.data)
        if not np.all(np.isfinite(ana)):
            raise DomainError("non-finite analytic gradient")
        num = np.zeros_like(v.data)
        flat = v.data.reshape(-1)
        nflat = num.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            fp = float(fn(*leaves).data)
            flat[j] = orig - eps
            fm = float(fn(*leaves).data)
            flat[j] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise DomainError("non-finite value during finite differencing")
            nflat[j] = (fp - fm) / (2.0 * eps)
        err = np.abs(ana - num) / (1.0 + np.maximum(np.abs(ana), np.abs(num)))
        worst = float(err.max()) if err.size else 0.0
        report[v.name or f"leaf{i}"] = worst
        ok = ok and worst <= tol
    return GradcheckResult(ok, report)
