"""Covariance-robust linear surrogates of a local decision boundary.

The surrogate is the hyperplane sign(w^T x - b) that maximizes the
worse of two Mahalanobis margins: coverage (distance from the positive
class mean to the negatively-predicted halfspace) and validity
(distance from the negative mean to the positively-predicted
halfspace). Robustness to model shift enters through a divergence ball
of radius rho_y around each class covariance; the worst-case standard
deviation over that ball has a closed form tau_y(w) for each supported
divergence, and the robust surrogate minimizes

    F(w) = tau_pos(w) + tau_neg(w)    over    {w : w^T (mu_pos - mu_neg) = 1},

after which kappa = 1/F(w*) is the optimal margin and the intercept
equalizes the two classes: |w^T mu_y - b| = kappa * tau_y(w*).

Conventions: the favorable side is w^T x - b >= 0, slopes are
normalized by w^T (mu_pos - mu_neg) = 1.
"""

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._io import atomic_write_text
from .errors import (
    DomainError,
    IdenticalMeans,
    NegativeRadius,
    SingularCovariance,
    SolverDidNotConverge,
    ZeroSlope,
)
from .moments import halfspace_distance, ridge

_GRAD_TOL = 1e-9
_MAX_ITER = 20000
_ARMIJO_SIGMA = 1e-4
_FR_RHO_CAP = 700.0


class DivergenceKind(str, Enum):
    NOMINAL = "nominal"
    QUADRATIC = "quadratic"
    BURES = "bures"
    FISHER_RAO = "fisher-rao"
    LOGDET = "logdet"


class AsymptoticFamily(str, Enum):
    """Infinite-radius limits group the divergences into two families."""

    QUADRATIC_OR_BURES = "quadratic-or-bures"
    FISHER_RAO_OR_LOGDET = "fisher-rao-or-logdet"


@dataclass(frozen=True)
class Divergence:
    """Divergence kind plus per-class radii (rho_pos, rho_neg)."""

    kind: DivergenceKind
    rho_pos: float = 0.0
    rho_neg: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", DivergenceKind(self.kind))
        if self.rho_pos < 0.0 or self.rho_neg < 0.0:
            raise NegativeRadius(
                f"radii must be nonnegative, got ({self.rho_pos}, {self.rho_neg})"
            )
        if self.kind is DivergenceKind.NOMINAL and (self.rho_pos or self.rho_neg):
            raise ValueError("nominal divergence requires both radii equal to 0")


@dataclass(frozen=True)
class Surrogate:
    """Linear surrogate w, b with its margin kappa and solve metadata.

    objective is sum of tau_y at the optimum (None for hand-built
    surrogates); kappa is 1/objective, with 0.0 denoting the
    infinite-radius asymptotic limit.
    """

    w: np.ndarray
    b: float
    kappa: float
    divergence: Divergence
    objective: float = None

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if not np.any(w):
            raise ZeroSlope("surrogate slope is the zero vector")
        if self.kappa < 0.0:
            raise ValueError("kappa must be nonnegative")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    def decision_values(self, features):
        features = np.atleast_2d(np.asarray(features, dtype=float))
        return features @ self.w - self.b

    def label(self, features):
        """Hard labels in {-1, +1}; the boundary itself counts as +1."""
        return np.where(self.decision_values(features) >= 0.0, 1, -1)


def lambert_w_minus1(x):
    """Branch -1 of the Lambert W function on [-1/e, 0).

    Solves r * exp(r) = x for the solution r <= -1. Initialized with the
    branch-point series near -1/e and the log-log asymptotic near 0,
    then polished with Halley steps to relative residual <= 1e-12.

    Raises
    ------
    DomainError
        If x is outside [-1/e, 0).
    """
    branch = -math.exp(-1.0)
    if not branch <= x < 0.0:
        raise DomainError(f"lambert_w_minus1 domain is [-1/e, 0), got {x}")
    if x == branch:
        return -1.0

    if x > -0.25:
        log_neg_x = math.log(-x)
        log_log = math.log(-log_neg_x)
        w = log_neg_x - log_log + log_log / log_neg_x
    else:
        p = -math.sqrt(max(0.0, 2.0 * (1.0 + math.e * x)))
        if p == 0.0:
            return -1.0
        w = -1.0 + p - p * p / 3.0 + 11.0 * p**3 / 72.0

    for _ in range(200):
        ew = math.exp(w)
        residual = w * ew - x
        if abs(residual) <= 0.25e-12 * abs(x):
            break
        wp1 = w + 1.0
        denominator = ew * wp1 - (w + 2.0) * residual / (2.0 * wp1)
        if denominator == 0.0:
            break
        step = residual / denominator
        w -= step
        if abs(step) <= 1e-17 * abs(w):
            break
    return min(w, -1.0)


def _logdet_weight(rho):
    # sqrt(-W_-1(-exp(-rho-1))); equals 1 at rho = 0.
    return math.sqrt(-lambert_w_minus1(-math.exp(-rho - 1.0)))


def _class_weight(kind, rho):
    if kind is DivergenceKind.FISHER_RAO:
        if rho > _FR_RHO_CAP:
            raise DomainError(
                f"fisher-rao radius {rho} exceeds the overflow cap {_FR_RHO_CAP}; "
                "use asymptotic_surrogate for larger radii"
            )
        return math.exp(rho / 2.0)
    if kind is DivergenceKind.LOGDET:
        return _logdet_weight(rho)
    return 1.0


def tau(kind, rho, covariance, w):
    """Worst-case standard deviation along w over a divergence ball.

    Closed forms, with S = covariance and q = sqrt(w^T S w):
    nominal or rho = 0 -> q; quadratic -> sqrt(w^T (S + sqrt(rho) I) w);
    bures -> rho*||w||_2 + q; fisher-rao -> exp(rho/2) * q;
    logdet -> sqrt(-W_-1(-exp(-rho-1))) * q.

    The covariance is used as given; ridge upstream if it may be
    singular.
    """
    kind = DivergenceKind(kind)
    if rho < 0.0:
        raise NegativeRadius(f"rho must be nonnegative, got {rho}")
    w = np.asarray(w, dtype=float).reshape(-1)
    if not np.any(w):
        raise ZeroSlope("tau requires a nonzero slope")
    covariance = np.asarray(covariance, dtype=float)
    if kind is DivergenceKind.QUADRATIC:
        quad = float(w @ covariance @ w) + math.sqrt(rho) * float(w @ w)
        return math.sqrt(quad)
    core = math.sqrt(float(w @ covariance @ w))
    if kind is DivergenceKind.BURES:
        return rho * float(np.linalg.norm(w)) + core
    return _class_weight(kind, rho) * core


def _reduced_basis(direction):
    # Orthonormal basis of the hyperplane {z : direction^T z = 0}.
    d = direction.shape[0]
    q, _ = np.linalg.qr(direction.reshape(d, 1), mode="complete")
    return q[:, 1:]


def solve_cvas(moments_pos, moments_neg, divergence):
    """Solve the robust surrogate problem for one divergence setting.

    Eliminates the normalization w^T a = 1 (a = mu_pos - mu_neg) through
    w = w0 + N z with w0 = a/||a||^2 and N an orthonormal null-space
    basis, then runs gradient descent with Armijo backtracking on the
    reduced convex objective. Near the floating-point floor of the
    objective the line search switches to certifying descent in the
    gradient norm, which stays accurately computable after function
    value differences vanish in double precision.

    Returns
    -------
    Surrogate
        With kappa = 1/(tau_pos + tau_neg) and b placed so both classes
        sit at Mahalanobis margin kappa.

    Raises
    ------
    IdenticalMeans
        If the class means coincide.
    SolverDidNotConverge
        If the reduced gradient norm never falls to 1e-9 * (1 + |F|)
        within 20000 iterations plus a damped Newton polish.
    """
    kind = divergence.kind
    mu_pos, mu_neg = moments_pos.mean, moments_neg.mean
    a = mu_pos - mu_neg
    if not np.any(a):
        raise IdenticalMeans("class means are identical; no normalized slope exists")

    cov_pos = ridge(moments_pos.covariance)
    cov_neg = ridge(moments_neg.covariance)
    d = a.shape[0]
    if kind is DivergenceKind.QUADRATIC:
        m_pos = cov_pos + math.sqrt(divergence.rho_pos) * np.eye(d)
        m_neg = cov_neg + math.sqrt(divergence.rho_neg) * np.eye(d)
    else:
        m_pos, m_neg = cov_pos, cov_neg
    c_pos = _class_weight(kind, divergence.rho_pos)
    c_neg = _class_weight(kind, divergence.rho_neg)
    beta = 0.0
    if kind is DivergenceKind.BURES:
        beta = divergence.rho_pos + divergence.rho_neg

    def value(w):
        total = c_pos * math.sqrt(float(w @ m_pos @ w))
        total += c_neg * math.sqrt(float(w @ m_neg @ w))
        if beta:
            total += beta * float(np.linalg.norm(w))
        return total

    def gradient(w):
        grad = c_pos * (m_pos @ w) / math.sqrt(float(w @ m_pos @ w))
        grad += c_neg * (m_neg @ w) / math.sqrt(float(w @ m_neg @ w))
        if beta:
            grad += beta * w / float(np.linalg.norm(w))
        return grad

    def hessian(w):
        h = np.zeros((d, d))
        for c, m in ((c_pos, m_pos), (c_neg, m_neg)):
            mw = m @ w
            s = math.sqrt(float(w @ mw))
            h += c * (m / s - np.outer(mw, mw) / s**3)
        if beta:
            norm = float(np.linalg.norm(w))
            h += beta * (np.eye(d) / norm - np.outer(w, w) / norm**3)
        return h

    w0 = a / float(a @ a)
    basis = _reduced_basis(a)
    z = np.zeros(d - 1)
    w = w0
    f = value(w)
    g = basis.T @ gradient(w)
    z_prev = g_prev = None
    step = 1.0
    converged = d == 1  # no free directions: w0 is the unique feasible slope

    for _ in range(_MAX_ITER):
        if converged:
            break
        grad_norm = float(np.linalg.norm(g))
        if grad_norm <= _GRAD_TOL * (1.0 + abs(f)):
            converged = True
            break

        # Barzilai-Borwein trial step: matches the local curvature, so the
        # first Armijo trial is Newton-like instead of an overshooting
        # doubled carryover that ping-pongs around the minimizer.
        trial = step * 2.0
        if z_prev is not None:
            dz, dg = z - z_prev, g - g_prev
            denom = float(dg @ dg)
            if denom > 0.0:
                bb = float(dz @ dg) / denom
                if math.isfinite(bb) and bb > 0.0:
                    trial = bb

        t = trial
        accepted = False
        for _ in range(60):
            z_try = z - t * g
            w_try = w0 + basis @ z_try
            f_try = value(w_try)
            if f_try <= f - _ARMIJO_SIGMA * t * grad_norm * grad_norm:
                accepted = True
                break
            t *= 0.5
        if accepted:
            z_prev, g_prev = z, g
            z, w, f = z_try, w_try, f_try
            g = basis.T @ gradient(w)
            step = t
            continue

        # Armijo cannot certify decrease once f differences hit machine
        # precision; fall back to strict descent in the gradient norm,
        # which the analytic gradient keeps computable below that floor.
        t = trial
        improved = False
        for _ in range(60):
            z_try = z - t * g
            w_try = w0 + basis @ z_try
            g_try = basis.T @ gradient(w_try)
            if float(np.linalg.norm(g_try)) < grad_norm * (1.0 - 1e-12):
                z_prev, g_prev = z, g
                z, w, g = z_try, w_try, g_try
                f = value(w)
                improved = True
                break
            t *= 0.5
        if not improved:
            break

    if not converged:
        # Damped Newton polish: first-order steps can stall a decade or
        # two above tolerance once Armijo decreases fall below machine
        # precision; the analytic reduced Hessian restores quadratic
        # local convergence for the last digits.
        lam = 0.0
        for _ in range(50):
            grad_norm = float(np.linalg.norm(g))
            if grad_norm <= _GRAD_TOL * (1.0 + abs(f)):
                converged = True
                break
            reduced = basis.T @ hessian(w) @ basis
            try:
                delta = np.linalg.solve(reduced + lam * np.eye(d - 1), -g)
            except np.linalg.LinAlgError:
                lam = max(10.0 * lam, 1e-12)
                continue
            w_try = w0 + basis @ (z + delta)
            g_try = basis.T @ gradient(w_try)
            if float(np.linalg.norm(g_try)) < grad_norm:
                z, w, g = z + delta, w_try, g_try
                f = value(w)
                lam /= 10.0
            else:
                lam = max(10.0 * lam, 1e-12)

    if not converged:
        grad_norm = float(np.linalg.norm(g))
        if grad_norm > _GRAD_TOL * (1.0 + abs(f)):
            raise SolverDidNotConverge(
                f"reduced gradient norm {grad_norm:.3e} above tolerance "
                f"after {_MAX_ITER} iterations"
            )

    tau_pos = tau(kind, divergence.rho_pos, cov_pos, w)
    tau_neg = tau(kind, divergence.rho_neg, cov_neg, w)
    objective = tau_pos + tau_neg
    kappa = 1.0 / objective
    b = float(w @ mu_pos) - kappa * tau_pos
    return Surrogate(w=w, b=b, kappa=kappa, divergence=divergence,
                     objective=objective)


def coverage_validity(surrogate, moments_pos, moments_neg):
    """Mahalanobis margins of the two class means.

    Coverage is the distance from the positive mean to the
    negatively-predicted halfspace {x : w^T x - b <= 0}; validity the
    distance from the negative mean to {x : w^T x - b >= 0}. Either is
    0 when the surrogate misclassifies that class mean.
    """
    w, b = surrogate.w, surrogate.b
    coverage = halfspace_distance(moments_pos.mean, moments_pos.covariance, -w, -b)
    validity = halfspace_distance(moments_neg.mean, moments_neg.covariance, w, b)
    return coverage, validity


def worst_case_misclassification(surrogate, mean, covariance, gaussian=False):
    """Probability certificate for a class with the given moments.

    nu is the Mahalanobis distance from the mean to the complementary
    halfspace. gaussian=False gives the distribution-free moment bound
    1/(1 + nu^2); gaussian=True gives 1 - Phi(nu) for Gaussian classes.
    """
    w, b = surrogate.w, surrogate.b
    if not np.any(w):
        raise ZeroSlope("surrogate slope is zero")
    cov = ridge(covariance)
    nu = abs(float(w @ np.asarray(mean, dtype=float)) - b) / math.sqrt(
        float(w @ cov @ w))
    if gaussian:
        return 0.5 * math.erfc(nu / math.sqrt(2.0))
    return 1.0 / (1.0 + nu * nu)


def asymptotic_surrogate(moments_pos, moments_neg, family, inflated_class):
    """Limit of the robust surrogate as one radius grows without bound.

    With a = mu_pos - mu_neg and y the inflated class:
    quadratic-or-bures -> w = a/||a||^2; fisher-rao-or-logdet ->
    w = Sigma_y^{-1} a / (a^T Sigma_y^{-1} a). Both put the hyperplane
    through the other class mean: b = w^T mu_y - y.

    The returned Surrogate records kappa = 0.0 and objective = +inf,
    the limiting values, with the inflated radius stored as +inf.
    """
    family = AsymptoticFamily(family)
    if inflated_class not in (1, -1):
        raise ValueError("inflated_class must be +1 or -1")
    mu_pos, mu_neg = moments_pos.mean, moments_neg.mean
    a = mu_pos - mu_neg
    if not np.any(a):
        raise IdenticalMeans("class means are identical")

    if family is AsymptoticFamily.QUADRATIC_OR_BURES:
        w = a / float(a @ a)
        kind = DivergenceKind.BURES
    else:
        cov = ridge((moments_pos if inflated_class == 1 else moments_neg).covariance)
        try:
            solved = np.linalg.solve(cov, a)
        except np.linalg.LinAlgError as exc:
            raise SingularCovariance(
                "inflated-class covariance is singular after ridge") from exc
        w = solved / float(a @ solved)
        kind = DivergenceKind.FISHER_RAO

    mu_inflated = mu_pos if inflated_class == 1 else mu_neg
    b = float(w @ mu_inflated) - inflated_class
    rho_pos = math.inf if inflated_class == 1 else 0.0
    rho_neg = math.inf if inflated_class == -1 else 0.0
    divergence = Divergence(kind=kind, rho_pos=rho_pos, rho_neg=rho_neg)
    return Surrogate(w=w, b=b, kappa=0.0, divergence=divergence,
                     objective=math.inf)


def fr_worst_case_covariance(covariance, rho, w):
    """Covariance attaining the Fisher-Rao worst case along w.

    Returns S^(1/2) (I + (e^rho - 1) vv^T/||v||^2) S^(1/2) with
    v = S^(1/2) w: the matrix at Fisher-Rao distance rho from S that
    maximizes w^T S' w, scaling it by exactly e^rho.
    """
    if rho < 0.0:
        raise NegativeRadius(f"rho must be nonnegative, got {rho}")
    if rho > _FR_RHO_CAP:
        raise DomainError(f"rho {rho} exceeds the overflow cap {_FR_RHO_CAP}")
    w = np.asarray(w, dtype=float).reshape(-1)
    if not np.any(w):
        raise ZeroSlope("w must be nonzero")
    cov = ridge(covariance)
    cov = (cov + cov.T) / 2.0
    eigenvalues, vectors = np.linalg.eigh(cov)
    if eigenvalues[0] <= 0.0:
        raise SingularCovariance("covariance not positive definite after ridge")
    sqrt_cov = (vectors * np.sqrt(eigenvalues)) @ vectors.T
    v = sqrt_cov @ w
    scale = (math.exp(rho) - 1.0) / float(v @ v)
    inner = np.eye(cov.shape[0]) + scale * np.outer(v, v)
    result = sqrt_cov @ inner @ sqrt_cov
    return (result + result.T) / 2.0


def optimal_mean(w, b, mean_hat, covariance, nu):
    """Mean inside a Mahalanobis ball minimizing (b - w^T mu)^2.

    Over {mu : (mu - mean_hat)^T Sigma^{-1} (mu - mean_hat) <= nu^2},
    the minimizer moves along Sigma w. When the ball reaches the
    hyperplane the objective is 0 and w^T mu* = b; otherwise mu* sits
    on the ball boundary facing the hyperplane and the objective is
    (|b - w^T mean_hat| - nu*sqrt(w^T Sigma w))^2.

    Returns
    -------
    (mu_star, objective)
    """
    w = np.asarray(w, dtype=float).reshape(-1)
    if not np.any(w):
        raise ZeroSlope("w must be nonzero")
    if nu < 0.0:
        raise NegativeRadius(f"nu must be nonnegative, got {nu}")
    mean_hat = np.asarray(mean_hat, dtype=float).reshape(-1)
    cov = ridge(covariance)
    shortfall = float(b) - float(w @ mean_hat)
    quad = float(w @ cov @ w)
    scale = math.sqrt(quad)
    if abs(shortfall) <= nu * scale:
        mu_star = mean_hat + (shortfall / quad) * (cov @ w)
        return mu_star, 0.0
    mu_star = mean_hat + math.copysign(nu / scale, shortfall) * (cov @ w)
    objective = (abs(shortfall) - nu * scale) ** 2
    return mu_star, objective


def surrogate_to_dict(surrogate):
    """JSON-ready record {w, b, kappa, divergence, rho_pos, rho_neg}."""
    return {
        "w": [float(v) for v in surrogate.w],
        "b": surrogate.b,
        "kappa": surrogate.kappa,
        "divergence": surrogate.divergence.kind.value,
        "rho_pos": surrogate.divergence.rho_pos,
        "rho_neg": surrogate.divergence.rho_neg,
    }


def surrogate_from_dict(record):
    divergence = Divergence(kind=record["divergence"],
                            rho_pos=record["rho_pos"], rho_neg=record["rho_neg"])
    return Surrogate(w=np.asarray(record["w"], dtype=float), b=record["b"],
                     kappa=record["kappa"], divergence=divergence)


def save_surrogate(surrogate, path):
    """Atomic JSON write of surrogate_to_dict (infinities serialized in
    Python's extended JSON form)."""
    text = json.dumps(surrogate_to_dict(surrogate), indent=2)
    atomic_write_text(path, text + "\n")


def load_surrogate(path):
    with open(path) as fh:
        return surrogate_from_dict(json.load(fh))
