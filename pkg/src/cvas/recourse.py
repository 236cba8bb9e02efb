"""Recourse generation on top of a linear surrogate.

Three searches are provided: an exact 1-norm projection onto the
surrogate's favorable halfspace, an exact branch-and-bound search over
discrete per-feature action grids, and the gradient-based Wachter
baseline that works directly against the black-box model. The
generate_recourse pipeline ties sampling, moment estimation, the
surrogate solve, and the chosen search together.
"""

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .blackbox import predict
from .errors import NoActionableRecourse, NoValidRecourse, ZeroSlope
from .moments import estimate_moments
from .sampler import synthesize
from .surrogate import solve_cvas

ACTION_KINDS = ("free", "immutable", "non_decreasing")

_WACHTER_STEP = 0.01


@dataclass(frozen=True)
class ActionSpec:
    """Per-feature actionability kinds and allowed delta grids.

    Each grid is a finite sorted deduplicated array containing 0.
    kind "immutable" forces the grid {0}; "non_decreasing" forbids
    negative deltas.
    """

    kinds: tuple
    grids: tuple

    def __post_init__(self):
        if len(self.kinds) != len(self.grids):
            raise ValueError("kinds and grids must have equal length")
        grids = []
        for kind, grid in zip(self.kinds, self.grids):
            if kind not in ACTION_KINDS:
                raise ValueError(f"unknown actionability kind {kind!r}")
            grid = np.unique(np.asarray(grid, dtype=float))
            if 0.0 not in grid:
                raise ValueError("every action grid must contain 0")
            if kind == "immutable" and grid.size != 1:
                raise ValueError("immutable features allow only the zero delta")
            if kind == "non_decreasing" and grid[0] < 0.0:
                raise ValueError("non_decreasing features forbid negative deltas")
            grids.append(grid)
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "grids", tuple(grids))


@dataclass(frozen=True)
class RecourseResult:
    """A recourse point with its L1 cost and validity flags.

    blackbox_valid is None when no black-box was consulted (bare
    projection or actionable searches); surrogate_valid is None for the
    Wachter baseline, which never sees a surrogate.
    """

    x_r: np.ndarray
    cost: float
    surrogate_valid: bool
    blackbox_valid: bool = None

    def __post_init__(self):
        object.__setattr__(self, "x_r", np.asarray(self.x_r, dtype=float).reshape(-1))


def default_action_grids(x0, training_features, kinds=None):
    """Grids of deltas to the 10..90 percentiles of each training marginal.

    Every grid keeps 0; immutable features collapse to {0} and
    non_decreasing features drop negative deltas.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    training_features = np.asarray(training_features, dtype=float)
    d = x0.shape[0]
    if kinds is None:
        kinds = ["free"] * d
    quantiles = np.percentile(training_features, np.arange(10, 100, 10), axis=0)
    grids = []
    for j, kind in enumerate(kinds):
        if kind == "immutable":
            grids.append(np.array([0.0]))
            continue
        deltas = quantiles[:, j] - x0[j]
        if kind == "non_decreasing":
            deltas = deltas[deltas >= 0.0]
        grids.append(np.unique(np.append(deltas, 0.0)))
    return ActionSpec(kinds=tuple(kinds), grids=tuple(grids))


def l1_projection(x0, surrogate):
    """Exact L1-minimal point satisfying w^T x >= b.

    A feasible x0 maps to itself. Otherwise the whole correction goes
    into the single coordinate with the largest |w_j| (lowest index on
    ties), the closed-form minimizer of the L1 projection onto a
    halfspace.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    w, b = surrogate.w, surrogate.b
    if not np.any(w):
        raise ZeroSlope("surrogate slope is zero")
    deficit = b - float(w @ x0)
    if deficit <= 0.0:
        return RecourseResult(x_r=x0.copy(), cost=0.0, surrogate_valid=True)
    j = int(np.argmax(np.abs(w)))
    x_r = x0.copy()
    x_r[j] += deficit / w[j]
    cost = float(np.abs(x_r - x0).sum())
    valid = float(w @ x_r) - b >= -1e-9
    return RecourseResult(x_r=x_r, cost=cost, surrogate_valid=valid)


def _branch_features(w, actions):
    """Candidate moves per feature, ordered for branch-and-bound.

    Keeps only deltas with positive gain w_j * delta (a move that does
    not push toward the constraint can always be replaced by 0 at no
    extra cost). Features are sorted by decreasing best gain/cost ratio.
    """
    features = []
    for j, grid in enumerate(actions.grids):
        gains = w[j] * grid
        keep = gains > 0.0
        if not np.any(keep):
            continue
        deltas = grid[keep]
        gains = gains[keep]
        costs = np.abs(deltas)
        ratio = float((gains / costs).max())
        features.append({
            "index": j,
            "deltas": deltas,
            "gains": gains,
            "costs": costs,
            "ratio": ratio,
            "max_gain": float(gains.max()),
        })
    features.sort(key=lambda f: -f["ratio"])
    return features


def _relaxation_bound(features, start, deficit):
    """Cost lower bound: fill the deficit fractionally at best ratios."""
    bound = 0.0
    remaining = deficit
    for f in features[start:]:
        if remaining <= 0.0:
            break
        if f["max_gain"] >= remaining:
            return bound + remaining / f["ratio"]
        bound += f["max_gain"] / f["ratio"]
        remaining -= f["max_gain"]
    if remaining > 0.0:
        return math.inf
    return bound


def actionable_recourse(x0, surrogate, actions):
    """Exact minimum-L1 recourse over discrete per-feature action grids.

    Best-first branch-and-bound: nodes ordered by cost-so-far plus an
    LP-relaxation bound (fractional completion at the best remaining
    gain/cost ratios), which is admissible, so the first goal popped at
    the top of the heap is optimal.

    Raises
    ------
    NoActionableRecourse
        If no grid combination reaches the constraint.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    w, b = surrogate.w, surrogate.b
    if not np.any(w):
        raise ZeroSlope("surrogate slope is zero")
    if len(actions.grids) != x0.shape[0]:
        raise ValueError("ActionSpec length does not match x0")

    deficit = b - float(w @ x0)
    if deficit <= 0.0:
        return RecourseResult(x_r=x0.copy(), cost=0.0, surrogate_valid=True)

    features = _branch_features(w, actions)
    root_bound = _relaxation_bound(features, 0, deficit)
    if math.isinf(root_bound):
        raise NoActionableRecourse(
            f"action grids cannot cover the deficit {deficit:.6g}"
        )

    # Heap entries: (bound, tiebreak counter, feature position, remaining
    # deficit, cost so far, chosen (index, delta) pairs).
    counter = 0
    heap = [(root_bound, counter, 0, deficit, 0.0, ())]
    best_cost = math.inf
    best_choice = None
    while heap:
        bound, _, pos, remaining, cost, chosen = heapq.heappop(heap)
        if bound >= best_cost:
            break
        if remaining <= 0.0:
            best_cost, best_choice = cost, chosen
            break
        if pos == len(features):
            continue
        feature = features[pos]
        # Skipping this feature costs nothing.
        skip_bound = cost + _relaxation_bound(features, pos + 1, remaining)
        if skip_bound < best_cost:
            counter += 1
            heapq.heappush(heap, (skip_bound, counter, pos + 1, remaining, cost,
                                  chosen))
        for delta, gain, move_cost in zip(feature["deltas"], feature["gains"],
                                          feature["costs"]):
            new_cost = cost + move_cost
            new_remaining = remaining - gain
            child_bound = new_cost + _relaxation_bound(
                features, pos + 1, max(new_remaining, 0.0))
            if child_bound < best_cost:
                counter += 1
                heapq.heappush(heap, (child_bound, counter, pos + 1, new_remaining,
                                      new_cost,
                                      chosen + ((feature["index"], float(delta)),)))

    if best_choice is None:
        raise NoActionableRecourse(
            f"no grid combination covers the deficit {deficit:.6g}"
        )
    x_r = x0.copy()
    for index, delta in best_choice:
        x_r[index] += delta
    cost = float(np.abs(x_r - x0).sum())
    valid = float(w @ x_r) - b >= -1e-9
    return RecourseResult(x_r=x_r, cost=cost, surrogate_valid=valid)


def wachter_recourse(model, x0, lambda0=0.1, steps=1000, retries=10):
    """Gradient-based recourse against the raw black-box.

    Minimizes (g(x) - threshold)^2 + lambda * ||x - x0||_1 by fixed-step
    gradient descent (step 0.01, L1 subgradient 0 at kinks). If the
    final point is still unfavorable, lambda is halved and the descent
    restarts from x0, up to `retries` times.

    Raises
    ------
    NoValidRecourse
        When every attempt fails; the best attempt is attached to the
        exception's `result`.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    proba0, label0, _ = predict(model, x0)
    if label0 == 1:
        return RecourseResult(x_r=x0.copy(), cost=0.0, surrogate_valid=None,
                              blackbox_valid=True)

    best = None
    best_proba = -math.inf
    lam = lambda0
    for _ in range(retries + 1):
        x = x0.copy()
        for _ in range(steps):
            proba, _, grad = predict(model, x)
            direction = 2.0 * (proba - model.threshold) * grad
            direction = direction + lam * np.sign(x - x0)
            x = x - _WACHTER_STEP * direction
        proba, label, _ = predict(model, x)
        result = RecourseResult(x_r=x, cost=float(np.abs(x - x0).sum()),
                                surrogate_valid=None, blackbox_valid=label == 1)
        if label == 1:
            return result
        if proba > best_proba:
            best, best_proba = result, proba
        lam /= 2.0
    raise NoValidRecourse(
        f"no valid recourse after {retries + 1} attempts (best probability "
        f"{best_proba:.4f})", result=best)


def fit_surrogate(model, x0, dataset, sampler_config, divergence):
    """Sampler -> moments -> solve pipeline; returns the surrogate."""
    sample = synthesize(x0, dataset, model, sampler_config)
    moments_pos = estimate_moments(sample.positives)
    moments_neg = estimate_moments(sample.negatives)
    return solve_cvas(moments_pos, moments_neg, divergence)


def generate_recourse(model, x0, dataset, sampler_config, divergence, mode,
                      actions=None):
    """Full pipeline from an input to a recourse against the surrogate.

    mode "projection" runs l1_projection, mode "actionable" runs
    actionable_recourse (with default percentile grids built from the
    dataset when no ActionSpec is supplied). blackbox_valid is filled by
    querying the model at the recourse point.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    surrogate = fit_surrogate(model, x0, dataset, sampler_config, divergence)
    if mode == "projection":
        result = l1_projection(x0, surrogate)
    elif mode == "actionable":
        if actions is None:
            actions = default_action_grids(x0, dataset)
        result = actionable_recourse(x0, surrogate, actions)
    else:
        raise ValueError(f"unknown recourse mode {mode!r}")
    blackbox_valid = bool(model.label(result.x_r[None, :])[0] == 1)
    return RecourseResult(x_r=result.x_r, cost=result.cost,
                          surrogate_valid=result.surrogate_valid,
                          blackbox_valid=blackbox_valid)
