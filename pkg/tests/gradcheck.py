"""Finite-difference checks for autodiff ops."""
import numpy as np

from cmask.nn.tensor import Tensor

from conftest import rel_error


def check_op(fn, arrays, rng, h=1e-6, max_entries=None, projection=None):
    """Compare backprop gradients of ``sum(fn(*tensors) * R)`` with central differences.

    Returns the worst relative error over all inputs.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    out = fn(*[Tensor(a) for a in arrays]).data
    r = rng.normal(size=out.shape) if projection is None else projection

    def scalar(vals):
        return float(np.sum(fn(*[Tensor(v) for v in vals]).data * r))

    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    y = fn(*tensors)
    (y * r).sum().backward()
    worst = 0.0
    for k, t in enumerate(tensors):
        flat = arrays[k].reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, max_entries, replace=False)
        num = np.zeros(len(idx))
        for j, i in enumerate(idx):
            old = flat[i]
            step = h * max(1.0, abs(old))
            flat[i] = old + step
            fp = scalar(arrays)
            flat[i] = old - step
            fm = scalar(arrays)
            flat[i] = old
            num[j] = (fp - fm) / (2 * step)
        ana = (t.grad if t.grad is not None else np.zeros_like(arrays[k])).reshape(-1)[idx]
        worst = max(worst, rel_error(ana, num))
    return worst
