"""Exact checks of the GAN/MAP mathematics on finite sample spaces.

With ``D = 1 - p_G/p_x`` the inner objective

    J(D) = sum_w p_x(w) D(w) + sum_w p_G(w) log(1 - D(w)) + lambda * fidelity

attains ``KL(p_G, p_x) + lambda * fidelity``. Natural logs throughout.
"""
from dataclasses import dataclass

import numpy as np

PROB_TOL = 1e-12
GRID_LO = -10.0
GRID_HI = 1.0 - 1e-6


@dataclass(frozen=True)
class DiscreteDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probabilities must form a nonempty 1-D array")
        if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"not a distribution: min {p.min()}, sum {p.sum()!r}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def support(self):
        return np.arange(self.probs.size)

    def __len__(self):
        return self.probs.size

    @classmethod
    def random(cls, k, rng, zeros=0):
        """Dirichlet(1) draw with ``zeros`` coordinates forced to zero."""
        p = rng.dirichlet(np.ones(k))
        if zeros:
            p[rng.choice(k, size=zeros, replace=False)] = 0.0
        p = p / p.sum()
        # the division can leave the sum one ulp away from 1
        p[np.argmax(p)] += 1.0 - p.sum()
        return cls(p)


def _probs(d):
    return d.probs if isinstance(d, DiscreteDistribution) else DiscreteDistribution(d).probs


def _check_pair(p, q):
    if p.shape != q.shape:
        raise ValueError(f"distributions live on different supports ({p.size} vs {q.size} points)")


def entropy(p):
    p = _probs(p)
    nz = p > 0
    return float(-np.sum(p[nz] * np.log(p[nz])))


def cross_entropy(p, q):
    p, q = _probs(p), _probs(q)
    _check_pair(p, q)
    nz = p > 0
    if np.any(q[nz] == 0):
        raise ValueError("q must be positive wherever p is (absolute continuity)")
    return float(-np.sum(p[nz] * np.log(q[nz])))


def kl(p, q):
    p, q = _probs(p), _probs(q)
    _check_pair(p, q)
    nz = p > 0
    if np.any(q[nz] == 0):
        raise ValueError("q must be positive wherever p is (absolute continuity)")
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def d_opt(p_x, p_G):
    """Pointwise maximizer ``1 - p_G/p_x``.

    Where both densities vanish the objective does not depend on D and 0 is
    returned. Where only p_G vanishes the maximizer is D = 1 (the supremum).
    """
    px, pg = _probs(p_x), _probs(p_G)
    _check_pair(px, pg)
    if np.any((px == 0) & (pg > 0)):
        raise ValueError("d_opt undefined where p_x = 0 < p_G")
    out = np.zeros_like(px)
    pos = px > 0
    out[pos] = 1.0 - pg[pos] / px[pos]
    return out


def objective_value(p_x, p_G, D, fidelity=0.0, lam=0.0):
    px, pg = _probs(p_x), _probs(p_G)
    _check_pair(px, pg)
    D = np.asarray(D, dtype=np.float64)
    if D.shape != px.shape:
        raise ValueError("discriminator must assign one value per support point")
    if np.any(D[pg > 0] >= 1):
        raise ValueError("D must stay below 1 wherever p_G > 0")
    nz = pg > 0
    return float(np.sum(px * D) + np.sum(pg[nz] * np.log1p(-D[nz])) + lam * fidelity)


def pointwise_objective(px, pg, t):
    t = np.asarray(t, dtype=np.float64)
    return px * t + (pg * np.log1p(-t) if pg > 0 else 0.0 * t)


def grid_argmax(px, pg, lo=GRID_LO, hi=GRID_HI, tol=1e-7, points=2001):
    """Brute-force maximizer of ``px*t + pg*log(1-t)`` on [lo, hi].

    A uniform grid is refined around the best point until the spacing is
    below ``tol``.
    """
    a, b = lo, hi
    while True:
        t = np.linspace(a, b, points)
        f = pointwise_objective(px, pg, t)
        i = int(np.argmax(f))
        h = (b - a) / (points - 1)
        if h < tol:
            return float(t[i])
        a, b = max(lo, t[i] - 2 * h), min(hi, t[i] + 2 * h)


def gaussian_lambda(sigma):
    """Fidelity weight of the MAP problem under i.i.d. Gaussian noise of SD sigma."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return 1.0 / (2.0 * sigma * sigma)


def map_estimate(z, candidates, prior, lam):
    """Exhaustive argmax over candidates of ``log p(y) - lam * ||y - z||^2``.

    Ties go to the lowest index; zero-prior candidates are never chosen.
    Returns (index, candidate).
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    cands = np.asarray(candidates, dtype=np.float64)
    if cands.shape[0] == 0:
        raise ValueError("empty candidate set")
    p = _probs(prior)
    if p.size != cands.shape[0]:
        raise ValueError("one prior probability per candidate is required")
    z = np.asarray(z, dtype=np.float64)
    flat = cands.reshape(cands.shape[0], -1)
    dist = np.sum((flat - z.reshape(1, -1)) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        score = np.log(p) - lam * dist
    i = int(np.argmax(score))  # first maximum
    return i, cands[i]


@dataclass
class TheoremReport:
    passed: bool
    grid_excess: float  # best grid objective minus the closed-form objective (<= tol when it passes)
    identity_error: float  # |J(D_opt) - KL - lambda*fidelity|
    objective: float
    kl: float
    lines: list

    def __str__(self):
        return "\n".join(self.lines)


def verify_theorem1(p_x, p_G, fidelity=0.0, lam=0.0, tol=1e-8, grid_tol=1e-7):
    """(a) D_opt beats a refined grid search pointwise; (b) J(D_opt) = KL + lambda*fidelity."""
    px, pg = _probs(p_x), _probs(p_G)
    D = d_opt(px, pg)
    # only grid values above the closed form count against it; where p_G = 0
    # the grid cannot reach D_opt = 1 and the excess is negative
    excess = 0.0
    for k in range(px.size):
        if px[k] == 0:
            continue
        t = grid_argmax(px[k], pg[k])
        at_grid = float(pointwise_objective(px[k], pg[k], t))
        at_opt = float(pointwise_objective(px[k], pg[k], D[k]))
        excess = max(excess, at_grid - at_opt)
    val = objective_value(px, pg, D, fidelity, lam)
    div = kl(pg, px)
    ident = abs(val - (div + lam * fidelity))
    passed = excess <= grid_tol and ident <= tol
    lines = [
        f"support {px.size}  lambda {lam!r}  fidelity {fidelity!r}",
        f"grid_excess {excess:.3e} (limit {grid_tol:.0e})",
        f"identity_error {ident:.3e} (limit {tol:.0e})",
        f"objective {val!r}  kl {div!r}",
        "PASS" if passed else "FAIL",
    ]
    return TheoremReport(passed, excess, ident, val, div, lines)


def perturbation_profile(p_x, p_G, deltas, fidelity=0.0, lam=0.0):
    """Drop of the objective when every coordinate of D_opt is shifted by each delta."""
    px, pg = _probs(p_x), _probs(p_G)
    D = d_opt(px, pg)
    base = objective_value(px, pg, D, fidelity, lam)
    return np.array([base - objective_value(px, pg, np.minimum(D + d, GRID_HI), fidelity, lam) for d in deltas])


def random_pairs(count, rng, kmin=2, kmax=16):
    """Random (p_x, p_G) pairs with p_x > 0 everywhere; sometimes p_G has zeros."""
    out = []
    for i in range(count):
        k = int(rng.integers(kmin, kmax + 1))
        px = DiscreteDistribution.random(k, rng)
        pg = DiscreteDistribution.random(k, rng, zeros=int(rng.integers(0, k // 2 + 1)) if i % 3 == 0 else 0)
        out.append((px, pg))
    return out


__all__ = [
    "DiscreteDistribution",
    "entropy",
    "cross_entropy",
    "kl",
    "d_opt",
    "objective_value",
    "grid_argmax",
    "gaussian_lambda",
    "map_estimate",
    "verify_theorem1",
    "TheoremReport",
    "perturbation_profile",
    "random_pairs",
]
