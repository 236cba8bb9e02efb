"""Local boundary sampler.

Given an input x0, walk to the model's decision boundary (bisection
along segments toward nearby opposite-class prototypes), then draw a
uniform ball of synthetic points around the boundary point and
pseudo-label them with the model. The two labeled point clouds are what
the surrogate's moment estimates are built from.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSample, NoOppositeClassPrototypes

_BISECT_CAP = 60
_SCAN_POINTS = 100


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs for boundary search and ball sampling.

    r_p = None means "5% of the maximum pairwise distance in the
    dataset", resolved per call; the max is exact for n <= 2000 and
    computed on a seeded 2000-row subsample above that.
    """

    k: int = 10
    r_p: float = None
    n_p: int = 1000
    line_search_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.r_p is not None and self.r_p <= 0.0:
            raise ValueError("r_p must be positive")
        if self.n_p < 2:
            raise ValueError("n_p must be >= 2")
        if self.line_search_tol <= 0.0:
            raise ValueError("line_search_tol must be positive")


@dataclass(frozen=True)
class BoundarySample:
    """Boundary point plus the pseudo-labeled ball around it."""

    x_b: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    radius: float


def max_pairwise_distance(features, seed=0, guard=2000):
    """Largest L2 distance between rows, subsampled above `guard` rows."""
    features = np.asarray(features, dtype=float)
    n = features.shape[0]
    if n > guard:
        idx = np.random.default_rng(seed).choice(n, size=guard, replace=False)
        features = features[idx]
    sq = np.einsum("ij,ij->i", features, features)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (features @ features.T)
    return float(np.sqrt(max(d2.max(), 0.0)))


def resolve_radius(config, features):
    """The configured ball radius, or the 5%-of-max-distance default."""
    if config.r_p is not None:
        return config.r_p
    return 0.05 * max_pairwise_distance(features, seed=config.seed)


def _bisect_to_boundary(model, x0, proto, tol):
    """Boundary point on [x0, proto], or None if no crossing is found.

    Works on f(t) = g(x0 + t*(proto - x0)) - threshold. If the endpoint
    signs match (the model is not monotone along the segment), scans 100
    equispaced points for a sign change before giving up.
    """
    direction = proto - x0
    seg_len = float(np.linalg.norm(direction))

    def f(t):
        return float(model.predict_proba(x0 + t * direction)[0]) - model.threshold

    lo, hi = 0.0, 1.0
    f_lo, f_hi = f(lo), f(hi)
    if abs(f_lo) <= tol:
        return x0.copy()
    if abs(f_hi) <= tol:
        return x0 + direction

    if (f_lo >= 0.0) == (f_hi >= 0.0):
        grid = np.linspace(0.0, 1.0, _SCAN_POINTS)
        values = model.predict_proba(x0[None, :] + grid[:, None] * direction[None, :])
        signs = values - model.threshold >= 0.0
        flips = np.nonzero(signs[1:] != signs[:-1])[0]
        if len(flips) == 0:
            return None
        lo, hi = float(grid[flips[0]]), float(grid[flips[0] + 1])
        f_lo = f(lo)

    for _ in range(_BISECT_CAP):
        mid = (lo + hi) / 2.0
        f_mid = f(mid)
        if abs(f_mid) <= tol or (hi - lo) * seg_len <= tol:
            return x0 + mid * direction
        if (f_mid >= 0.0) == (f_lo >= 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return x0 + ((lo + hi) / 2.0) * direction


def find_boundary_point(x0, dataset, model, config=SamplerConfig()):
    """Closest decision-boundary point reachable from x0.

    Selects the k L1-nearest dataset rows whose model label differs
    from x0's, bisects along each segment, and returns the boundary
    point nearest to x0 in L2.

    Raises
    ------
    NoOppositeClassPrototypes
        If no opposite-class row exists, or no segment crosses the
        boundary within the scan fallback.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    dataset = np.asarray(dataset, dtype=float)
    label0 = int(model.label(x0[None, :])[0])
    labels = model.label(dataset)
    opposite = dataset[labels != label0]
    if opposite.shape[0] == 0:
        raise NoOppositeClassPrototypes("dataset has no row with the opposite label")

    k = min(config.k, opposite.shape[0])
    order = np.argsort(np.abs(opposite - x0).sum(axis=1), kind="stable")
    prototypes = opposite[order[:k]]

    candidates = []
    for proto in prototypes:
        point = _bisect_to_boundary(model, x0, proto, config.line_search_tol)
        if point is not None:
            candidates.append(point)
    if not candidates:
        raise NoOppositeClassPrototypes(
            f"none of {k} prototype segments crossed the boundary"
        )
    candidates = np.asarray(candidates)
    best = np.argmin(np.linalg.norm(candidates - x0, axis=1))
    return candidates[best]


def sample_ball(center, radius, n, seed):
    """n points uniform on the L2 ball: normalized Gaussian direction
    scaled by U^(1/d) * radius."""
    center = np.asarray(center, dtype=float)
    d = center.shape[0]
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((n, d))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    radii = radius * rng.uniform(0.0, 1.0, size=n) ** (1.0 / d)
    return center + directions / norms * radii[:, None]


def synthesize(x0, dataset, model, config=SamplerConfig()):
    """Boundary point plus a pseudo-labeled uniform ball around it.

    Raises
    ------
    DegenerateSample
        If either pseudo-label class ends up with fewer than 2 points.
    """
    x_b = find_boundary_point(x0, dataset, model, config)
    radius = resolve_radius(config, dataset)
    points = sample_ball(x_b, radius, config.n_p, config.seed)
    labels = model.label(points)
    positives = points[labels == 1]
    negatives = points[labels == -1]
    if positives.shape[0] < 2 or negatives.shape[0] < 2:
        raise DegenerateSample(
            f"ball split {positives.shape[0]}/{negatives.shape[0]} positives/negatives; "
            "need >= 2 each for covariance estimates"
        )
    return BoundarySample(x_b=x_b, positives=positives, negatives=negatives,
                          radius=radius)
