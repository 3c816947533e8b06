"""Evidence factor graph: BUDGET and PAIR factors, exact MAP and the
l2-regularized LP-MAP relaxation (SCALE).

With nonnegative pair scores the regularized relaxation

    max  s.mu + sum_i r_i min(mu_i, mu_{i+1}) - 0.5 ||mu||^2
    s.t. mu in [0, 1]^L,  sum(mu) <= K

is, after writing ``min(a, b) = (a + b - |a - b|) / 2``, a weighted fused-lasso
projection of the shifted scores ``s_i + (r_{i-1} + r_i) / 2`` with edge
weights ``r / 2``, followed by the box/budget projection. Both steps are exact.
"""

from dataclasses import dataclass, field
import numpy as np

from .errors import ConvergenceError, DimensionError, NumericalError, ParameterError, SizeError
from .fused_lasso import TVSolution, tv_prox

MAX_BRUTEFORCE_LENGTH = 24
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class ImportanceScores:
    """Unary scores ``s`` and nonnegative edge scores ``r`` for one instance.

    ``doc_boundaries`` holds edge indices ``i`` (between sentence ``i`` and
    ``i + 1``) that separate two documents; their pair score is forced to 0.
    """

    unary: np.ndarray
    pair: np.ndarray = None
    doc_boundaries: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        unary = np.asarray(self.unary, dtype=float).reshape(-1)
        if unary.size < 1:
            raise DimensionError("ImportanceScores needs at least one sentence")
        if self.pair is None:
            pair = np.zeros(unary.size - 1)
        else:
            pair = np.array(self.pair, dtype=float).reshape(-1)
            if pair.size == 1 and unary.size > 2:
                pair = np.full(unary.size - 1, pair[0])
        if pair.size != unary.size - 1:
            raise DimensionError(f"expected {unary.size - 1} pair scores, got {pair.size}")
        if not (np.all(np.isfinite(unary)) and np.all(np.isfinite(pair))):
            raise NumericalError("importance scores must be finite")
        if np.any(pair < 0):
            raise ParameterError("pair scores must be nonnegative")
        bounds = frozenset(int(b) for b in self.doc_boundaries)
        if any(b < 0 or b >= unary.size - 1 for b in bounds):
            raise DimensionError("document boundary outside the edge range")
        if bounds:
            pair[list(bounds)] = 0.0
        object.__setattr__(self, "unary", unary)
        object.__setattr__(self, "pair", pair)
        object.__setattr__(self, "doc_boundaries", bounds)

    def __len__(self):
        return self.unary.size


@dataclass(frozen=True)
class SelectionMask:
    values: np.ndarray
    mode: str = "exact"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.mode not in ("exact", "relaxed"):
            raise ParameterError(f"unknown mask mode {self.mode!r}")
        if self.mode == "exact" and not np.all((values == 0) | (values == 1)):
            raise ParameterError("exact masks must be binary")
        if self.mode == "relaxed" and (np.any(values < 0) or np.any(values > 1)):
            raise ParameterError("relaxed masks must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    @property
    def support(self):
        return np.flatnonzero(self.values > 0)


@dataclass(frozen=True)
class FactorGraphSpec:
    """Which factors are active. ``budget_k=None`` disables BUDGET."""

    length: int
    budget_k: int = None
    use_pair: bool = True

    def __post_init__(self):
        if self.length < 1:
            raise ParameterError("length must be >= 1")
        if self.budget_k is not None and not 0 <= self.budget_k <= self.length:
            raise ParameterError(f"budget {self.budget_k} outside [0, {self.length}]")

    @property
    def k(self):
        return self.length if self.budget_k is None else self.budget_k


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances for the SCALE solve.

    ``step`` is the proximal-gradient step used for the KKT fixed-point
    residual; ``None`` means ``1 / (1 + 2 max r)``.
    """

    step: float = None
    tol: float = 1e-5
    bisection_tol: float = 1e-10


def _pairs(scores, spec):
    return scores.pair if spec.use_pair else np.zeros_like(scores.pair)


def _check_spec(scores, spec):
    if spec.length != len(scores):
        raise DimensionError(f"spec length {spec.length} != scores length {len(scores)}")


def score_assignment(mask, scores):
    """MRF score of a binary assignment: unary terms plus pair bonuses."""
    mu = mask.values if isinstance(mask, SelectionMask) else np.asarray(mask, dtype=float)
    if mu.size != len(scores):
        raise DimensionError(f"mask length {mu.size} != scores length {len(scores)}")
    return float(scores.unary @ mu + scores.pair @ (mu[:-1] * mu[1:]))


def _lex_key(mask):
    # tie-break: compare the sorted selected-index lists lexicographically
    return tuple(np.flatnonzero(mask))


def map_bruteforce(scores, spec):
    """Exact MAP by enumerating every feasible binary mask."""
    _check_spec(scores, spec)
    n = len(scores)
    if n > MAX_BRUTEFORCE_LENGTH:
        raise SizeError(f"enumeration limited to L <= {MAX_BRUTEFORCE_LENGTH}, got {n}")
    r = _pairs(scores, spec)
    best_score, best = -np.inf, []
    chunk = 1 << min(n, 16)
    bits = np.arange(n)
    for start in range(0, 1 << n, chunk):
        codes = np.arange(start, min(start + chunk, 1 << n))
        masks = ((codes[:, None] >> (n - 1 - bits)) & 1).astype(float)
        masks = masks[masks.sum(axis=1) <= spec.k]
        if masks.size == 0:
            continue
        vals = masks @ scores.unary + (masks[:, :-1] * masks[:, 1:]) @ r
        top = vals.max()
        if top > best_score + _TIE_TOL:
            best_score, best = top, []
        if top >= best_score - _TIE_TOL:
            best.extend(masks[vals >= best_score - _TIE_TOL])
    winner = min(best, key=_lex_key)
    exact = ImportanceScores(scores.unary, r, scores.doc_boundaries)
    return SelectionMask(winner), score_assignment(winner, exact)


def map_exact_dp(scores, spec):
    """Exact MAP by dynamic programming over (position, count used, previous bit).

    ``best[i, c, p]`` is the optimal score of positions ``i..L-1`` given ``c``
    sentences already selected and previous bit ``p``. Reconstruction walks
    forward; at each position it prefers stopping (all later bits 0) if that
    is optimal, else selecting, which realizes the lexicographic tie-break.
    """
    _check_spec(scores, spec)
    n, k = len(scores), spec.k
    s = scores.unary
    r = np.concatenate([[0.0], _pairs(scores, spec)])  # r[i] couples i-1 and i
    best = np.zeros((n + 1, k + 1, 2))
    for i in range(n - 1, -1, -1):
        skip = best[i + 1, :, 0]
        take = np.full(k + 1, -np.inf)
        take[:k] = s[i] + best[i + 1, 1:, 1]
        best[i, :, 0] = np.maximum(skip, take)
        take_after_one = take.copy()
        take_after_one[:k] += r[i]
        best[i, :, 1] = np.maximum(skip, take_after_one)

    mask = np.zeros(n)
    used, prev = 0, 0
    for i in range(n):
        target = best[i, used, prev]
        if target <= _TIE_TOL and target >= -_TIE_TOL:
            break  # empty continuation is optimal and lexicographically first
        gain = s[i] + (r[i] if prev else 0.0)
        if used < k and gain + best[i + 1, used + 1, 1] >= target - _TIE_TOL:
            mask[i] = 1.0
            used, prev = used + 1, 1
        else:
            prev = 0
    exact = ImportanceScores(s, r[1:], scores.doc_boundaries)
    return SelectionMask(mask), score_assignment(mask, exact)


def budget_projection(v, k, tol=1e-10):
    """Euclidean projection onto ``{mu in [0,1]^L : sum(mu) <= k}``.

    Bisection on the shift ``tau`` followed by an exact closed-form polish of
    ``tau`` from the resulting active set.
    """
    v = np.asarray(v, dtype=float)
    if k < 0:
        raise ParameterError("budget must be nonnegative")
    mu, _ = _budget_projection_tau(v, k, tol)
    return mu


def _budget_projection_tau(v, k, tol=1e-10):
    clipped = np.clip(v, 0.0, 1.0)
    if clipped.sum() <= k:
        return clipped, 0.0
    if k == 0:
        return np.zeros_like(v), float(max(v.max(), 0.0))
    lo, hi = 0.0, float(v.max())
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if np.clip(v - mid, 0.0, 1.0).sum() > k:
            lo = mid
        else:
            hi = mid
    tau = hi
    shifted = v - tau
    inner = (shifted > 0) & (shifted < 1)
    if inner.any():
        n_upper = np.count_nonzero(shifted >= 1)
        polished = (v[inner].sum() + n_upper - k) / inner.sum()
        check = v - polished
        same_set = np.array_equal((check > 0) & (check < 1), inner) and n_upper == np.count_nonzero(check >= 1)
        if same_set:
            tau = polished
    return np.clip(v - tau, 0.0, 1.0), float(tau)


def scale_objective(mu, scores, spec=None):
    """Regularized relaxed score ``F(mu)`` maximized by :func:`scale_forward`."""
    mu = np.asarray(mu, dtype=float)
    r = scores.pair if spec is None else _pairs(scores, spec)
    return float(scores.unary @ mu + r @ np.minimum(mu[:-1], mu[1:]) - 0.5 * mu @ mu)


@dataclass(frozen=True)
class GradTape:
    """Structural record of a SCALE solve, consumed by ``scale_backward``.

    Holds the fused-lasso block layout, the budget shift and the active set of
    the final box/budget projection, which fully determine the (piecewise
    linear) Jacobian of the solution map.
    """

    scores: ImportanceScores
    spec: FactorGraphSpec
    solver: SolverConfig
    tv: TVSolution
    tau: float
    budget_active: bool
    inner: np.ndarray
    residual: float

    def signature(self):
        """Hashable summary of the active set; equal signatures share a Jacobian."""
        return (self.tv.groups, tuple(self.tv.block_signs()[0]), tuple(self.tv.block_signs()[1]),
                self.budget_active, tuple(self.inner.tolist()))


def _shifted_unary(s, r):
    shifted = s.copy()
    shifted[:-1] += 0.5 * r
    shifted[1:] += 0.5 * r
    return shifted


def _prox(v, r_half, k, tol):
    tv = tv_prox(v, r_half)
    mu, tau = _budget_projection_tau(tv.values, k, tol)
    return tv, mu, tau


def kkt_residual(mu, scores, spec, solver=None):
    """Proximal-gradient fixed-point residual ``||mu - prox(mu - eta grad)|| / eta``.

    Zero exactly at the maximizer of the SCALE objective.
    """
    solver = solver or SolverConfig()
    r = _pairs(scores, spec)
    eta = solver.step if solver.step is not None else 1.0 / (1.0 + 2.0 * (r.max() if r.size else 0.0))
    target = _shifted_unary(scores.unary, r)
    _, nxt, _ = _prox(mu + eta * (target - mu), eta * 0.5 * r, spec.k, solver.bisection_tol)
    return float(np.linalg.norm(mu - nxt) / eta)


def scale_forward_tape(scores, spec, solver=None):
    """Solve SCALE and return ``(mask, tape)``; see :func:`scale_forward`."""
    _check_spec(scores, spec)
    solver = solver or SolverConfig()
    r = _pairs(scores, spec)
    tv, mu, tau = _prox(_shifted_unary(scores.unary, r), 0.5 * r, spec.k, solver.bisection_tol)
    residual = kkt_residual(mu, scores, spec, solver)
    if not residual <= solver.tol:
        raise ConvergenceError(residual, solver.tol)
    shifted = tv.values - tau
    tape = GradTape(
        scores=scores,
        spec=spec,
        solver=solver,
        tv=tv,
        tau=tau,
        budget_active=tau > 0,
        inner=(shifted > 0) & (shifted < 1),
        residual=residual,
    )
    return SelectionMask(mu, mode="relaxed"), tape


def scale_forward(scores, spec, solver=None):
    """Sparse relaxed MAP of the BUDGET + PAIR factor graph.

    Raises:
        ConvergenceError: if the KKT residual of the solution exceeds
            ``solver.tol``.
    """
    return scale_forward_tape(scores, spec, solver)[0]
