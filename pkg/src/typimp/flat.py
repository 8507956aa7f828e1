"""Flat implication model: one implication bit shared by all languages.

Each language's effective feature values are its observed (or imputed)
values XOR per-cell error bits. Error bits are Bernoulli with a
language-specific rate, itself Beta-distributed around a global rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, special

from . import _kernels as kern
from .dataset import UNKNOWN, FeatureMatrix, PairCase
from .errors import ConfigError, NumericError

A_BRACKET = (1e-4, 1e6)


def solve_noise_prior(mean: float, mass_limit: float, mass: float) -> tuple[float, float]:
    """Beta(a, b) with mean ``mean`` and ``mass`` of probability below ``mass_limit``.

    ``b`` is tied to ``a`` through the mean, leaving a one-dimensional root
    find over ``a`` in ``A_BRACKET``. The CDF is not monotone in ``a``, so the
    bracket is scanned on a log grid and the root with the largest ``a`` (the
    most concentrated prior) is refined.

    Raises
    ------
    NumericError
        If no ``a`` in the bracket attains the requested mass.
    """
    if not (0.0 < mean < 1.0 and 0.0 < mass_limit < 1.0 and 0.0 < mass < 1.0):
        raise ValueError("mean, mass_limit and mass must lie in (0, 1)")
    ratio = (1.0 - mean) / mean

    def f(log_a):
        a = math.exp(log_a)
        return special.betainc(a, a * ratio, mass_limit) - mass

    grid = np.linspace(math.log(A_BRACKET[0]), math.log(A_BRACKET[1]), 400)
    vals = np.array([f(g) for g in grid])
    if np.all(vals == 0.0):
        a = 1.0
        return a, a * ratio
    hits = np.flatnonzero(vals == 0.0)
    roots = [float(np.exp(grid[i])) for i in hits]
    for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
        roots.append(math.exp(optimize.brentq(f, grid[i], grid[i + 1], xtol=1e-14, rtol=1e-14)))
    if not roots:
        lo = float(vals.min() + mass)
        hi = float(vals.max() + mass)
        raise NumericError(
            f"no Beta prior with mean {mean} puts mass {mass} below {mass_limit}: "
            f"attainable range over a in {A_BRACKET} is [{lo:.4f}, {hi:.4f}]"
        )
    a = max(roots)
    return a, a * ratio


def closest_noise_prior(mean: float, mass_limit: float, mass: float) -> tuple[float, float]:
    """Like :func:`solve_noise_prior`, but falls back to the attainable mass closest to ``mass``."""
    try:
        return solve_noise_prior(mean, mass_limit, mass)
    except NumericError:
        pass
    ratio = (1.0 - mean) / mean

    def gap(log_a):
        a = math.exp(log_a)
        return abs(special.betainc(a, a * ratio, mass_limit) - mass)

    grid = np.linspace(math.log(A_BRACKET[0]), math.log(A_BRACKET[1]), 400)
    i = int(np.argmin([gap(g) for g in grid]))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(gap, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    a = math.exp(res.x)
    return a, a * ratio


NOISE_MEAN = 0.05
NOISE_MASS_LIMIT = 0.10
NOISE_MASS = 0.50
DEFAULT_EPS_A, DEFAULT_EPS_B = closest_noise_prior(NOISE_MEAN, NOISE_MASS_LIMIT, NOISE_MASS)


@dataclass(frozen=True)
class FlatHyper:
    m_prior: float = 0.5
    pi_alpha: float = 1.0
    pi_beta: float = 1.0
    eps_a: float = DEFAULT_EPS_A
    eps_b: float = DEFAULT_EPS_B
    kappa: float = 10.0
    rejection_attempts: int = 20
    iterations: int = 1000
    burn_in: int = 200
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.m_prior < 1.0:
            raise ConfigError("m_prior must lie in (0, 1)")
        for name in ("pi_alpha", "pi_beta", "eps_a", "eps_b", "kappa"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.rejection_attempts < 1 or self.iterations < 1 or self.burn_in < 0:
            raise ConfigError("rejection_attempts and iterations must be >= 1, burn_in >= 0")
        if self.iterations <= self.burn_in:
            raise ConfigError(f"iterations ({self.iterations}) must exceed burn_in ({self.burn_in})")

    @property
    def eps_mean(self) -> float:
        return self.eps_a / (self.eps_a + self.eps_b)


@dataclass
class FlatState:
    """Latent state of one flat-model chain.

    ``x`` holds observed values with unknown cells imputed and ``e`` the
    error bits, both shaped like ``case.values``; effective values are
    ``x ^ e``.
    """

    m: int
    pi: np.ndarray
    eps: float
    eps_n: np.ndarray
    e: np.ndarray
    x: np.ndarray

    def copy(self) -> "FlatState":
        return FlatState(self.m, self.pi.copy(), self.eps, self.eps_n.copy(), self.e.copy(), self.x.copy())

    @property
    def effective(self) -> np.ndarray:
        return self.x ^ self.e


def initial_flat_state(case: PairCase, hyper: FlatHyper, rng: np.random.Generator) -> FlatState:
    obs = case.values
    x = np.where(obs == UNKNOWN, rng.integers(0, 2, size=obs.shape), obs).astype(np.int8)
    eps = hyper.eps_mean
    return FlatState(
        m=0,
        pi=np.full(obs.shape[1], 0.5),
        eps=eps,
        eps_n=np.full(case.n_rows, eps),
        e=np.zeros(obs.shape, dtype=np.int8),
        x=x,
    )


def pair_log_likelihood(v1, v2, e1, e2, m, pi1, pi2) -> float:
    """Log-probability of one language's (already imputed) pair of values.

    Effective values are ``v1 ^ e1`` and ``v2 ^ e2``; with ``m == 1`` a true
    first value forces the second.
    """
    g = (v1 ^ e1) | ((v2 ^ e2) << 1)
    w = kern.row_weight(g, 2, int(m), np.array([pi1, pi2], dtype=float))
    return math.log(w) if w > 0 else -math.inf


def implication_probability(state: FlatState, case: PairCase, hyper: FlatHyper, frozen: bool = False) -> float:
    """P(m = 1 | feature priors, noise, data) with row latents summed out.

    With ``frozen`` the per-language rates ``state.eps_n`` are conditioned
    on; otherwise they are integrated out given ``state.eps``.
    """
    K = case.values.shape[1]
    bb = kern.pattern_table(state.eps, hyper.kappa, K)
    buf = np.empty(1 << K)
    return float(kern.flat_m_probability(
        case.values, K, state.pi, state.eps_n, bb, hyper.kappa, state.eps, hyper.m_prior, frozen, buf
    ))


def sample_language_noise(state: FlatState, hyper: FlatHyper, rng: np.random.Generator) -> np.ndarray:
    """Draw every per-language noise rate from its Beta full conditional (in place)."""
    kern.sample_eps_n(state.e, state.eps_n, state.eps, hyper.kappa, rng)
    return state.eps_n


def sample_feature_priors(state: FlatState, hyper: FlatHyper, rng: np.random.Generator) -> np.ndarray:
    """Draw the feature priors from their Beta full conditionals (in place)."""
    cond = np.full(state.x.shape[0], state.m, dtype=np.int8)
    kern.sample_pi(state.x, state.e, cond, state.pi, hyper.pi_alpha, hyper.pi_beta, rng)
    return state.pi


def gibbs_sweep_flat(
    state: FlatState, case: PairCase, hyper: FlatHyper, rng: np.random.Generator, frozen: bool = False
) -> FlatState:
    """Return the state after one full sweep.

    ``frozen`` holds the feature priors and all noise rates fixed and
    conditions on ``eps_n``. Otherwise ``eps_n`` is integrated out and left
    untouched; :func:`sample_language_noise` draws it on demand.
    """
    s = state.copy()
    cond = np.full(case.n_rows, s.m, dtype=np.int8)
    eps, m = kern.flat_sweep(
        case.values, s.x, s.e, s.eps_n, s.pi, cond, s.eps, s.m,
        hyper.m_prior, hyper.pi_alpha, hyper.pi_beta, hyper.eps_a, hyper.eps_b, hyper.kappa,
        hyper.rejection_attempts, frozen, rng, kern.make_workspace(case.values),
    )
    s.eps, s.m = float(eps), int(m)
    return s


@dataclass
class ChainSummary:
    """Posterior means from one chain over one candidate implication.

    ``imputed_marginals`` is NaN wherever the cell was observed.
    """

    model: str
    features: tuple[int, ...]
    languages: np.ndarray
    score: float
    pi_means: np.ndarray
    eps_mean: float
    error_marginals: np.ndarray
    imputed_marginals: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def implicants(self) -> tuple[int, ...]:
        return self.features[:-1]

    @property
    def implicand(self) -> int:
        return self.features[-1]

    def imputed_cells(self):
        """Yield ``(language, feature, P(true))`` for every imputed cell."""
        rows, cols = np.nonzero(~np.isnan(self.imputed_marginals))
        for r, c in zip(rows, cols):
            yield int(self.languages[r]), self.features[c], float(self.imputed_marginals[r, c])

    def to_json(self, matrix: FeatureMatrix | None = None) -> dict:
        lang = (lambda i: matrix.languages[i].id) if matrix is not None else str
        feat = (lambda j: matrix.features[j].id) if matrix is not None else str
        out = {
            "model": self.model,
            "implicants": [feat(f) for f in self.implicants],
            "implicand": feat(self.implicand),
            "score": self.score,
        }
        for j, p in enumerate(self.pi_means, start=1):
            out[f"pi{j}_mean"] = float(p)
        out["eps_mean"] = self.eps_mean
        out["error_marginals"] = {
            lang(int(l)): [float(v) for v in row] for l, row in zip(self.languages, self.error_marginals)
        }
        imputed: dict[str, dict[str, float]] = {}
        for l, f, p in self.imputed_cells():
            imputed.setdefault(lang(l), {})[feat(f)] = p
        out["imputed_marginals"] = imputed
        for key, value in self.extras.items():
            if isinstance(value, np.ndarray):
                # per-row arrays are keyed by language like the marginals above
                value = {lang(int(l)): float(v) for l, v in zip(self.languages, value)}
            elif isinstance(value, dict):
                value = {str(k): v for k, v in value.items()}
            out[key] = value
        return out


def _imputed(case: PairCase, x_mean: np.ndarray) -> np.ndarray:
    return np.where(case.values == UNKNOWN, x_mean, np.nan)


def run_flat(
    case: PairCase,
    hyper: FlatHyper = FlatHyper(),
    *,
    init: FlatState | None = None,
    frozen: bool = False,
    rng: np.random.Generator | None = None,
) -> ChainSummary:
    """Run the flat sampler and average the retained sweeps.

    The score is the fraction of retained sweeps with the implication bit set.
    """
    if case.n_rows == 0:
        raise ValueError("case has no rows")
    rng = np.random.default_rng(hyper.seed) if rng is None else rng
    state = initial_flat_state(case, hyper, rng) if init is None else init.copy()
    cond = np.full(case.n_rows, state.m, dtype=np.int8)
    score, pi_mean, eps_mean, e_mean, x_mean, _, _ = kern.flat_chain(
        case.values, state.x, state.e, state.eps_n, state.pi, cond, state.eps, state.m,
        hyper.m_prior, hyper.pi_alpha, hyper.pi_beta, hyper.eps_a, hyper.eps_b, hyper.kappa,
        hyper.rejection_attempts, hyper.iterations, hyper.burn_in, frozen, rng,
    )
    return ChainSummary(
        model="flat",
        features=case.features,
        languages=case.languages.copy(),
        score=float(score),
        pi_means=pi_mean,
        eps_mean=float(eps_mean),
        error_marginals=e_mean,
        imputed_marginals=_imputed(case, x_mean),
    )


def with_seed(hyper, seed: int):
    return replace(hyper, seed=int(seed))
