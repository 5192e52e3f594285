"""l1-regularized recovery of sparse channel responses."""

import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator

from cstdoa.exceptions import DegenerateOperatorError, DimensionError, NumericError
from cstdoa.models import ChannelEstimate, SolverConfig
from cstdoa.services.sparsity import spectral_norm, unit_columns

logger = logging.getLogger(__name__)

# Regularization lambda = 1/mu as a fraction of ||A^T y||_inf
LAMBDA_FRACTION = 0.01
FALLBACK_MU = 1.0
EQUALITY_MU_SCALE = 1e6
# Power iteration approaches the norm from below
NORM_SAFETY = 1.01


def soft_threshold(v: np.ndarray, threshold: float) -> np.ndarray:
    """Proximal map of threshold * ||.||_1."""
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def objective(A: LinearOperator, h: np.ndarray, y: np.ndarray, mu: float) -> float:
    """F(h) = ||h||_1 + (mu/2) ||A h - y||_2^2."""
    r = A.matvec(h) - y
    return float(np.sum(np.abs(h)) + 0.5 * mu * (r @ r))


def smooth_gradient(A: LinearOperator, h: np.ndarray, y: np.ndarray, mu: float) -> np.ndarray:
    """Gradient of (mu/2) ||A h - y||_2^2."""
    return mu * A.rmatvec(A.matvec(h) - y)


def default_mu(A: LinearOperator, y: np.ndarray) -> float:
    """
    mu = 1 / (0.01 ||A^T y||_inf).

    1/mu is then 1% of the smallest regularization weight that zeroes the
    solution. Raises NumericError for y = 0; callers fall back to FALLBACK_MU.
    """
    lam_max = float(np.max(np.abs(A.rmatvec(np.asarray(y, dtype=np.float64)))))
    if not math.isfinite(lam_max):
        raise NumericError("A^T y is not finite")
    if lam_max == 0.0:
        raise NumericError("A^T y is zero; no data-driven mu")
    return 1.0 / (LAMBDA_FRACTION * lam_max)


def resolve_mu(A: LinearOperator, y: np.ndarray, cfg: SolverConfig) -> float:
    """The mu a solve will use under cfg."""
    if cfg.mu is not None:
        mu = cfg.mu
    else:
        try:
            mu = default_mu(A, y)
        except NumericError:
            logger.debug("Zero measurements, using fallback mu")
            mu = FALLBACK_MU
    if cfg.mode == "equality":
        mu *= EQUALITY_MU_SCALE
    return mu


def _prox_step(
    A: LinearOperator,
    y: np.ndarray,
    z: np.ndarray,
    Az: np.ndarray,
    mu: float,
    L: float,
    backtracking: bool,
) -> Tuple[np.ndarray, np.ndarray, float]:
    rz = Az - y
    grad = A.rmatvec(rz)
    while True:
        x = soft_threshold(z - grad / L, 1.0 / (mu * L))
        Ax = A.matvec(x)
        if not backtracking:
            return x, Ax, L
        d = x - z
        rx = Ax - y
        if 0.5 * (rx @ rx) <= 0.5 * (rz @ rz) + grad @ d + 0.5 * L * (d @ d) + 1e-15:
            return x, Ax, L
        L *= 2.0


def solve_l1(
    A: LinearOperator,
    y: np.ndarray,
    cfg: SolverConfig,
    h0: Optional[np.ndarray] = None,
    norm: Optional[float] = None,
) -> ChannelEstimate:
    """
    Minimize ||h||_1 + (mu/2) ||A h - y||_2^2 by accelerated proximal gradient.

    Each iteration takes a gradient step of 1/L on the smooth term and
    soft-thresholds at 1/(mu L). Momentum restarts whenever the objective
    would increase, so accepted objectives never increase.

    Args:
        A: Forward operator (M x N)
        y: Measurements (length M)
        cfg: Solver settings
        h0: Warm start (length N), zeros when omitted
        norm: Precomputed spectral norm of A

    Returns:
        ChannelEstimate for the final iterate

    Raises:
        DimensionError: y or h0 has the wrong length
        NumericError: non-finite inputs or divergence
        DegenerateOperatorError: A has zero norm
    """
    m, n = A.shape
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (m,):
        raise DimensionError(f"expected {m} measurements, got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise NumericError("measurements contain non-finite values")

    if h0 is None:
        x = np.zeros(n)
    else:
        x = np.array(h0, dtype=np.float64)
        if x.shape != (n,):
            raise DimensionError(f"warm start must have length {n}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise NumericError("warm start contains non-finite values")

    sigma = norm if norm is not None else spectral_norm(
        A, iterations=cfg.norm_iterations, tolerance=cfg.norm_tolerance
    )
    if not math.isfinite(sigma):
        raise NumericError("operator norm is not finite")
    if sigma == 0.0:
        raise DegenerateOperatorError("forward operator has zero norm")

    mu = resolve_mu(A, y, cfg)
    L = (NORM_SAFETY * sigma) ** 2

    Ax = A.matvec(x)
    r = Ax - y
    F = float(np.sum(np.abs(x)) + 0.5 * mu * (r @ r))
    trace = [F]

    z, Az, t = x, Ax, 1.0
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        x_new, Ax_new, L = _prox_step(A, y, z, Az, mu, L, cfg.backtracking)
        r = Ax_new - y
        F_new = float(np.sum(np.abs(x_new)) + 0.5 * mu * (r @ r))

        if F_new > F:
            # Restart momentum from the last accepted iterate
            t = 1.0
            x_new, Ax_new, L = _prox_step(A, y, x, Ax, mu, L, cfg.backtracking)
            r = Ax_new - y
            F_new = float(np.sum(np.abs(x_new)) + 0.5 * mu * (r @ r))
            if F_new > F:
                logger.debug(f"No descent at iteration {iterations}, stopping")
                break

        if not math.isfinite(F_new):
            raise NumericError(f"objective diverged at iteration {iterations}")

        t_new = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        beta = (t - 1.0) / t_new
        z = x_new + beta * (x_new - x)
        Az = Ax_new + beta * (Ax_new - Ax)
        x, Ax, t = x_new, Ax_new, t_new

        change = abs(F - F_new)
        previous, F = F, F_new
        trace.append(F)
        if change <= cfg.rel_tolerance * max(abs(previous), np.finfo(float).tiny):
            break

    r = Ax - y
    peak = int(np.argmax(np.abs(x)))
    logger.debug(
        f"solve_l1 finished after {iterations} iterations, F={F:.6g}, "
        f"residual={np.linalg.norm(r):.3g}"
    )
    return ChannelEstimate(
        h=x,
        iterations=iterations,
        objective=F,
        residual=float(np.linalg.norm(r)),
        peak_index=peak,
        peak_magnitude=float(abs(x[peak])),
        mu=mu,
        objective_trace=trace,
    )


def recover(
    A: LinearOperator,
    y: np.ndarray,
    cfg: SolverConfig,
    h0: Optional[np.ndarray] = None,
    norm: Optional[float] = None,
) -> ChannelEstimate:
    """
    Channel recovery as the block pipeline runs it.

    With cfg.normalize_columns, solve_l1 runs on A with every column scaled to
    unit norm, i.e. the l1 term weighs h[j] by ||A e_j||, and the solution is
    mapped back to A's columns. For a noiseless single path with a whole-sample
    delay the solution is then supported on the true lag alone, whichever rows
    are kept.
    Otherwise this is solve_l1, and norm is passed through to it.
    """
    if not cfg.normalize_columns:
        return solve_l1(A, y, cfg, h0=h0, norm=norm)

    scaled = unit_columns(A)
    g0 = None
    if h0 is not None:
        h0 = np.asarray(h0, dtype=np.float64)
        if h0.shape != scaled.scale.shape:
            raise DimensionError(
                f"warm start must have length {A.shape[1]}, got {h0.shape}"
            )
        g0 = h0 * scaled.scale

    est = solve_l1(scaled, y, cfg, h0=g0)
    h = est.h / scaled.scale
    peak = int(np.argmax(np.abs(h)))
    return est.model_copy(
        update={"h": h, "peak_index": peak, "peak_magnitude": float(abs(h[peak]))}
    )
