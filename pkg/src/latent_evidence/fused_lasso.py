"""Weighted 1-D total-variation proximal operator (fused lasso signal approximator).

Solves ``argmin_b 0.5 * ||b - y||^2 + sum_i w_i |b_{i+1} - b_i|`` exactly with the
O(n) forward-message / backward-clamp dynamic program. Each forward step keeps
the derivative of the message function as a piecewise-linear increasing function
stored as a deque of knots; the backward pass clamps the next value into the
interval where the message derivative stays inside ``[-w_i, w_i]``.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError


@dataclass(frozen=True)
class TVSolution:
    """Output of :func:`tv_prox` plus the block structure needed for its VJP.

    ``fused[i]`` is True when coordinates ``i`` and ``i + 1`` ended in the same
    block. ``groups`` lists ``(start, stop)`` half-open block ranges.
    """

    values: np.ndarray
    fused: np.ndarray
    groups: tuple

    def block_signs(self):
        """Per-block sign of the jump to the left and right neighbour blocks."""
        left, right = [], []
        v = self.values
        for start, stop in self.groups:
            left.append(0.0 if start == 0 else float(np.sign(v[start] - v[start - 1])))
            right.append(0.0 if stop == len(v) else float(np.sign(v[start] - v[stop])))
        return left, right


def _solve(y, w):
    n = len(y)
    lo = np.empty(max(n - 1, 0))
    hi = np.empty(max(n - 1, 0))
    # knot = [x, d_slope, d_intercept]; deltas apply when crossing left -> right
    knots = deque()
    a_left = c_left = a_right = c_right = 0.0
    for i in range(n):
        a_left += 1.0
        c_left -= y[i]
        a_right += 1.0
        c_right -= y[i]
        if i == n - 1:
            break
        lam = w[i]

        a, c = a_left, c_left
        while knots and a * knots[0][0] + c < -lam:
            x, da, dc = knots.popleft()
            a += da
            c += dc
        x_lo = (-lam - c) / a
        knots.appendleft((x_lo, a, c + lam))
        a_left, c_left = 0.0, -lam

        a, c = a_right, c_right
        # the knot pushed at x_lo bounds the scan; round-off must not pass it
        while len(knots) > 1 and a * knots[-1][0] + c > lam:
            x, da, dc = knots.pop()
            a -= da
            c -= dc
        x_hi = max((lam - c) / a, x_lo)
        knots.append((x_hi, -a, lam - c))
        a_right, c_right = 0.0, lam

        lo[i] = x_lo
        hi[i] = x_hi

    a, c = a_left, c_left
    while knots and a * knots[0][0] + c < 0.0:
        x, da, dc = knots.popleft()
        a += da
        c += dc
    last = -c / a

    b = np.empty(n)
    fused = np.zeros(max(n - 1, 0), dtype=bool)
    b[n - 1] = last
    for i in range(n - 2, -1, -1):
        nxt = b[i + 1]
        if nxt < lo[i]:
            b[i] = lo[i]
        elif nxt > hi[i]:
            b[i] = hi[i]
        else:
            b[i] = nxt
            fused[i] = True
    return b, fused


def tv_prox(y, weights):
    """Exact weighted TV prox of ``y``.

    Args:
        y: 1-D array of length n >= 1.
        weights: scalar or array of n - 1 nonnegative edge weights.

    Returns:
        TVSolution with the denoised values and fused block layout.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if y.ndim != 1 or n == 0:
        raise DimensionError("tv_prox needs a nonempty 1-D input")
    w = np.asarray(weights, dtype=float)
    if w.ndim == 0:
        w = np.full(n - 1, float(w))
    elif w.shape != (n - 1,):
        raise DimensionError(f"expected {n - 1} edge weights, got shape {w.shape}")
    if np.any(w < 0):
        raise ParameterError("TV weights must be nonnegative")
    values, fused = _solve(y, w)
    groups = []
    start = 0
    for i in range(n - 1):
        if not fused[i]:
            groups.append((start, i + 1))
            start = i + 1
    groups.append((start, n))
    # a block's value is its exact closed form; this removes DP round-off
    sol = TVSolution(values, fused, tuple(groups))
    left, right = sol.block_signs()
    for (s, e), sl, sr in zip(sol.groups, left, right):
        total = y[s:e].sum()
        if s > 0:
            total -= w[s - 1] * sl
        if e < n:
            total -= w[e - 1] * sr
        values[s:e] = total / (e - s)
    return sol


def tv_prox_vjp(sol, upstream):
    """Vector-Jacobian product of :func:`tv_prox` w.r.t. ``y`` and ``weights``.

    Inside a block the output is the block mean of ``y`` shifted by the
    neighbouring edge weights times the jump signs, so the Jacobian is piecewise
    constant.
    """
    g = np.asarray(upstream, dtype=float)
    n = len(sol.values)
    grad_y = np.empty(n)
    grad_w = np.zeros(max(n - 1, 0))
    left, right = sol.block_signs()
    for (s, e), sl, sr in zip(sol.groups, left, right):
        block = g[s:e].sum() / (e - s)
        grad_y[s:e] = block
        if s > 0:
            grad_w[s - 1] -= sl * block
        if e < n:
            grad_w[e - 1] -= sr * block
    return grad_y, grad_w
