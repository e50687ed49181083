"""2-D projections of an embedding set: exact t-SNE and a PCA baseline."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from fairaudit.embedding_store import EmbeddingSet
from fairaudit.errors import InputError

log = logging.getLogger(__name__)


class ProjectionError(InputError):
    pass


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    early_exaggeration_iters: int = 250
    initial_momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch: int = 250
    init_std: float = 1e-4
    log_every: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.perplexity <= 1:
            raise InputError("perplexity must exceed 1")
        if self.iterations < 1 or self.learning_rate <= 0:
            raise InputError("iterations and learning_rate must be positive")
        if self.early_exaggeration < 1 or self.early_exaggeration_iters < 0:
            raise InputError("invalid early exaggeration settings")

    def check_feasible(self, n: int) -> None:
        if not self.perplexity < (n - 1) / 3:
            raise InputError(f"perplexity {self.perplexity} too large for {n} points (needs < {(n - 1) / 3:.3g})")


@dataclass(frozen=True, eq=False)
class Projection2D:
    ids: tuple[str, ...]
    coordinates: np.ndarray
    method: str
    final_objective: float
    history: tuple[tuple[int, float], ...] = ()
    metadata: dict = field(default_factory=dict)


def squared_distances(x: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", x, x)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def _row_entropy_bits(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def conditional_affinities(sq_distances: np.ndarray, perplexity: float, tol: float = 1e-6,
                           max_steps: int = 200, strict: bool = False) -> np.ndarray:
    """Row-stochastic Gaussian affinities p_{j|i} of matching perplexity.

    Each row's precision is bisected until the row entropy equals
    log2(perplexity) within ``tol`` bits or ``max_steps`` is reached.  Rows
    that miss the tolerance are logged (raised with ``strict``); rows with
    all-equal distances are uniform whatever the precision.
    """
    d = np.asarray(sq_distances, dtype=np.float64)
    n = d.shape[0]
    if d.shape != (n, n):
        raise InputError("distance matrix must be square")
    if n < 4:
        raise InputError("need at least 4 points")
    if not 1 < perplexity <= n - 1:
        raise InputError(f"perplexity {perplexity} infeasible for {n} points")
    target = np.log2(perplexity)
    p = np.zeros((n, n))
    missed = []
    for i in range(n):
        di = np.delete(d[i], i)
        di = di - di.min()
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_steps):
            row = np.exp(-di * beta)
            row /= row.sum()
            h = _row_entropy_bits(row)
            if abs(h - target) <= tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
        else:
            if abs(h - target) > tol and np.ptp(di) > 0:
                missed.append(i)
        p[i, np.arange(n) != i] = row
    if missed:
        msg = f"perplexity search did not converge for rows {missed[:20]}"
        if strict:
            raise ProjectionError(msg)
        log.warning(msg)
    return p


def snapped_distances(x: np.ndarray, digits: int = 9) -> np.ndarray:
    """Squared distances rounded on a grid relative to a power-of-two scale.

    Rounding noise from the Gram-matrix formula differs between isometric
    copies of the same cloud, and t-SNE amplifies it; snapping makes the
    affinities a function of the geometry alone.
    """
    d = squared_distances(x)
    d = 0.5 * (d + d.T)
    top = float(d.max())
    if top == 0.0:
        return d
    scale = 2.0 ** math.ceil(math.log2(top))
    return np.round(d / scale, digits) * scale


def joint_affinities(x: np.ndarray, perplexity: float) -> np.ndarray:
    p = conditional_affinities(snapped_distances(x), perplexity)
    p = np.maximum((p + p.T) / (2.0 * len(x)), 1e-12)
    np.fill_diagonal(p, 0.0)
    return p


def _student_t(y: np.ndarray) -> np.ndarray:
    num = 1.0 / (1.0 + squared_distances(y))
    np.fill_diagonal(num, 0.0)
    return num


def kl_divergence(y: np.ndarray, p: np.ndarray) -> float:
    """KL(P || Q) with the Student-t kernel; the diagonal is excluded."""
    num = _student_t(y)
    q = np.maximum(num / num.sum(), 1e-300)
    off = ~np.eye(len(y), dtype=bool)
    return float((p[off] * np.log(p[off] / q[off])).sum())


def kl_gradient(y: np.ndarray, p: np.ndarray) -> np.ndarray:
    """dKL/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2)."""
    num = _student_t(y)
    q = num / num.sum()
    w = (p - q) * num
    np.fill_diagonal(w, 0.0)
    return 4.0 * (w.sum(axis=1)[:, None] * y - w @ y)


def tsne(e: EmbeddingSet, cfg: TsneConfig | None = None) -> Projection2D:
    """Exact t-SNE with momentum, per-parameter gains and early exaggeration."""
    cfg = cfg or TsneConfig()
    n = e.count
    if n < 8:
        raise InputError(f"t-SNE needs at least 8 points, got {n}")
    cfg.check_feasible(n)
    p = joint_affinities(e.vectors, cfg.perplexity)
    rng = np.random.default_rng(cfg.seed)
    y = rng.normal(0.0, cfg.init_std, size=(n, 2))
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    history = []
    for it in range(cfg.iterations):
        exaggerate = it < cfg.early_exaggeration_iters
        pe = p * cfg.early_exaggeration if exaggerate else p
        grad = kl_gradient(y, pe)
        momentum = cfg.initial_momentum if it < cfg.momentum_switch else cfg.final_momentum
        same_sign = (grad > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - cfg.learning_rate * gains * grad
        y = y + update
        y = y - y.mean(axis=0)
        if not np.isfinite(y).all():
            raise ProjectionError(f"t-SNE diverged (non-finite coordinates) at iteration {it}")
        if (it + 1) % cfg.log_every == 0 or it + 1 == cfg.iterations:
            kl = kl_divergence(y, p)
            history.append((it + 1, kl))
            log.debug("t-SNE iteration %d: KL=%.6f", it + 1, kl)
    meta = asdict(cfg)
    meta["kernel"] = "student-t"
    return Projection2D(e.ids, y, "tsne", history[-1][1], tuple(history), meta)


def pca2(e: EmbeddingSet) -> Projection2D:
    """Projection on the top-2 principal directions.

    Each component's largest-magnitude loading is made positive.  The
    retained-variance fraction is the final objective; ``metadata`` flags a
    zero-variance second component.
    """
    if e.count < 3 or e.dim < 2:
        raise InputError("PCA needs at least 3 points and 2 dimensions")
    x = e.vectors - e.vectors.mean(axis=0)
    _, s, vt = np.linalg.svd(x, full_matrices=False)
    comps = vt[:2].copy()
    for k in range(2):
        if comps[k, np.argmax(np.abs(comps[k]))] < 0:
            comps[k] = -comps[k]
    var = s ** 2
    total = var.sum()
    retained = float(var[:2].sum() / total) if total > 0 else 1.0
    second = var[1] if len(var) > 1 else 0.0
    degenerate = bool(total == 0 or second <= total * 1e-24)
    meta = {"explained_variance": [float(v) for v in var[:2]], "degenerate_second_component": degenerate}
    return Projection2D(e.ids, x @ comps.T, "pca", retained, (), meta)
