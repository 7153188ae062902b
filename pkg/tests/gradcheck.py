"""Central finite-difference oracle for layer and loss gradients.

Everything runs in float64 with step 1e-3; the reported error is
|analytic - numeric| / max(1, |analytic|, |numeric|), i.e. relative for
large gradients and absolute near zero.
"""

import numpy as np

STEP = 1e-3


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / denom).max())


def numeric_gradient(f, x: np.ndarray, step: float = STEP) -> np.ndarray:
    """Central differences of scalar-valued f with respect to array x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        f_plus = f(x)
        x[idx] = orig - step
        f_minus = f(x)
        x[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * step)
        it.iternext()
    return grad


def check_layer(layer, x, seed=0, mask=None):
    """Compare layer.backward against finite differences of sum(c * forward).

    Checks the gradient with respect to the input and every parameter.
    ``mask`` optionally excludes input elements (e.g. near a relu kink)
    from the input-gradient comparison. Returns the worst relative error.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=np.float64)
    out = layer.forward(x.copy(), training=True)
    c = rng.normal(size=out.shape)

    def run(x_in):
        return float((layer.forward(x_in.copy(), training=True) * c).sum())

    layer.forward(x.copy(), training=True)
    dx = layer.backward(c.copy())
    num_dx = numeric_gradient(run, x.copy())
    if mask is not None:
        dx = dx[mask]
        num_dx = num_dx[mask]
    worst = rel_error(dx, num_dx)

    for name in sorted(layer.params):
        param = layer.params[name]

        def run_param(p, _name=name):
            layer.params[_name] = p
            val = float((layer.forward(x.copy(), training=True) * c).sum())
            layer.params[_name] = param
            return val

        layer.forward(x.copy(), training=True)
        layer.backward(c.copy())
        analytic = layer.grads[name].copy()
        numeric = numeric_gradient(run_param, param.copy())
        layer.params[name] = param
        worst = max(worst, rel_error(analytic, numeric))
    return worst
