"""Relaxations and gradient estimators used by the joint extractors.

Everything operates on 1-D numpy arrays. Random draws always come from a
caller-owned ``numpy.random.Generator``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .fused_lasso import tv_prox, tv_prox_vjp


def scale_backward(tape, upstream):
    """Gradients of a loss w.r.t. unary and pair scores through a SCALE solve.

    Args:
        tape: GradTape from ``scale_forward_tape``.
        upstream: dLoss/dmu, length L.

    Returns:
        ``(grad_s, grad_r)``; ``grad_r`` is zero on document-boundary edges and
        everywhere when the PAIR factor is disabled.
    """
    u = np.asarray(upstream, dtype=float)
    n = len(tape.scores)
    if u.shape != (n,):
        raise DimensionError(f"upstream has shape {u.shape}, expected ({n},)")
    inner = tape.inner
    grad_v = np.zeros(n)
    if inner.any():
        grad_v[inner] = u[inner]
        if tape.budget_active:
            grad_v[inner] -= u[inner].mean()

    grad_shifted, grad_w = tv_prox_vjp(tape.tv, grad_v)
    grad_s = grad_shifted
    grad_r = 0.5 * (grad_shifted[:-1] + grad_shifted[1:]) + 0.5 * grad_w
    if not tape.spec.use_pair:
        grad_r = np.zeros_like(grad_r)
    elif tape.scores.doc_boundaries:
        grad_r[list(tape.scores.doc_boundaries)] = 0.0
    return grad_s, grad_r


def sparsemax(z):
    """Euclidean projection of ``z`` onto the probability simplex."""
    z = np.asarray(z, dtype=float)
    if z.size < 1:
        raise DimensionError("sparsemax needs at least one coordinate")
    z_sorted = np.sort(z)[::-1]
    cssv = np.cumsum(z_sorted) - 1.0
    ks = np.arange(1, z.size + 1)
    support = z_sorted - cssv / ks > 0
    k = ks[support][-1]
    tau = cssv[k - 1] / k
    return np.maximum(z - tau, 0.0)


def sparsemax_vjp(p, upstream):
    g = np.asarray(upstream, dtype=float)
    supp = p > 0
    out = np.zeros_like(g)
    out[supp] = g[supp] - g[supp].mean()
    return out


def fusedmax(z, lambda_tv):
    """Sparsemax of the total-variation prox of ``z``."""
    if lambda_tv <= 0:
        raise ParameterError("lambda_tv must be positive")
    return sparsemax(tv_prox(z, lambda_tv).values)


def fusedmax_with_vjp(z, lambda_tv, return_groups=False):
    """Forward fusedmax plus a closure computing dLoss/dz from dLoss/dp."""
    if lambda_tv <= 0:
        raise ParameterError("lambda_tv must be positive")
    sol = tv_prox(z, lambda_tv)
    p = sparsemax(sol.values)

    def vjp(upstream):
        return tv_prox_vjp(sol, sparsemax_vjp(p, upstream))[0]

    if return_groups:
        return p, vjp, sol.groups
    return p, vjp


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def logistic_noise(rng, size=None):
    u = rng.uniform(np.finfo(float).tiny, 1.0, size=size)
    return np.log(u) - np.log1p(-u)


def gumbel_sigmoid_sample(logit, temperature, rng):
    """Binary-concrete sample ``sigmoid((logit + g) / temperature)``.

    ``logit`` may be an array; one independent logistic draw per entry. Returns
    ``(sample, noise)`` so callers can reuse the noise for the backward pass
    via :func:`gumbel_sigmoid_grad`.
    """
    if not temperature > 0:
        raise ParameterError("temperature must be positive")
    logit = np.asarray(logit, dtype=float)
    g = logistic_noise(rng, size=logit.shape)
    return _sigmoid((logit + g) / temperature), g


def gumbel_sigmoid_grad(sample, temperature, upstream):
    return upstream * sample * (1.0 - sample) / temperature


@dataclass(frozen=True)
class HardKumaParams:
    """Stretched-and-rectified Kumaraswamy distribution."""

    a: float
    b: float
    support_lo: float = -0.1
    support_hi: float = 1.1

    def __post_init__(self):
        if not (np.all(np.asarray(self.a) > 0) and np.all(np.asarray(self.b) > 0)):
            raise ParameterError("HardKuma shapes must be positive")
        if not self.support_lo < 0 < 1 < self.support_hi:
            raise ParameterError("HardKuma support must strictly contain [0, 1]")


def kuma_cdf(x, a, b):
    x = np.clip(x, 0.0, 1.0)
    return 1.0 - (1.0 - x ** a) ** b


def kuma_icdf(u, a, b):
    return (1.0 - (1.0 - u) ** (1.0 / b)) ** (1.0 / a)


def hardkuma_sample(p, rng, size=None, u=None):
    """Inverse-CDF Kumaraswamy sample, stretched to the support and clipped.

    Returns ``(z, cache)``; ``cache`` feeds :func:`hardkuma_sample_grad`.
    """
    a, b = np.asarray(p.a, dtype=float), np.asarray(p.b, dtype=float)
    if u is None:
        shape = size if size is not None else np.broadcast(a, b).shape
        u = rng.uniform(0.0, 1.0, size=shape)
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    k = kuma_icdf(u, a, b)
    t = p.support_lo + (p.support_hi - p.support_lo) * k
    z = np.clip(t, 0.0, 1.0)
    return z, (u, k, t, a, b, p.support_hi - p.support_lo)


def hardkuma_sample_grad(cache, upstream):
    """dLoss/da and dLoss/db through the reparameterized HardKuma sample."""
    u, k, t, a, b, width = cache
    inside = (t > 0) & (t < 1)
    # k = w^(1/a) with w = 1 - (1-u)^(1/b)
    one_minus = 1.0 - u
    w = 1.0 - one_minus ** (1.0 / b)
    with np.errstate(divide="ignore", invalid="ignore"):
        dk_da = -k * np.log(w) / a ** 2
        dw_db = one_minus ** (1.0 / b) * np.log(one_minus) / b ** 2
        dk_dw = k / (a * w)
    dk_db = dk_dw * dw_db
    g = np.where(inside, upstream * width, 0.0)
    return (np.where(inside, g * dk_da, 0.0), np.where(inside, g * dk_db, 0.0))


def hardkuma_expected_l0(p):
    """``P(z != 0)`` in closed form."""
    a, b = np.asarray(p.a, dtype=float), np.asarray(p.b, dtype=float)
    t0 = -p.support_lo / (p.support_hi - p.support_lo)
    return 1.0 - kuma_cdf(t0, a, b)


def hardkuma_expected_l0_grad(p):
    """Partial derivatives of :func:`hardkuma_expected_l0` w.r.t. ``a`` and ``b``."""
    a, b = np.asarray(p.a, dtype=float), np.asarray(p.b, dtype=float)
    t0 = -p.support_lo / (p.support_hi - p.support_lo)
    ta = t0 ** a
    base = 1.0 - ta
    d_a = b * base ** (b - 1.0) * (-ta * np.log(t0))
    d_b = base ** b * np.log(base)
    return d_a, d_b


def hardkuma_median(p):
    """Deterministic HardKuma value used at evaluation time (u = 0.5)."""
    return hardkuma_sample(p, None, u=np.full(np.broadcast(p.a, p.b).shape, 0.5))[0]


def reinforce_gradient(logits, sampled_mask, reward, baseline, l0_weight=0.0):
    """Score-function estimate of d E[reward] / d logits for independent Bernoullis.

    ``(reward - baseline - l0_weight * sum(mask)) * (mask - sigmoid(logits))``.
    This is an ascent direction; negate it to add to a loss gradient.
    """
    logits = np.asarray(logits, dtype=float)
    mask = getattr(sampled_mask, "values", sampled_mask)
    mask = np.asarray(mask, dtype=float)
    if mask.shape != logits.shape:
        raise DimensionError("mask and logits differ in shape")
    advantage = reward - baseline - l0_weight * mask.sum()
    return advantage * (mask - _sigmoid(logits))


class MovingAverageBaseline:
    """Exponential moving average of rewards."""

    def __init__(self, momentum=0.95, value=0.0):
        self.momentum = momentum
        self.value = value

    def update(self, reward):
        self.value = self.momentum * self.value + (1.0 - self.momentum) * reward
        return self.value


def finite_difference_check(f, point, analytic_grad, h=1e-5):
    """Max relative error of ``analytic_grad`` against central differences.

    The denominator is ``max(1, |numeric|)`` per coordinate, so a gradient
    scaled by two reports an error of about 1 on coordinates of size >= 1.
    """
    x = np.array(point, dtype=float)
    g = np.asarray(analytic_grad, dtype=float).reshape(x.shape)
    if not h > 0:
        raise ParameterError("step h must be positive")
    worst = 0.0
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        numeric = (up - down) / (2.0 * h)
        ref = g.reshape(-1)[i]
        worst = max(worst, abs(numeric - ref) / max(1.0, abs(numeric)))
    return worst
