"""Hierarchical implication model on a language tree.

Every internal node carries a real-valued implication strength, Gaussian
around its parent's value with a shared variance (the root is centred on 0).
Each language has its own strength ``u_n`` drawn the same way from its
parent node, and an obedience bit ``z_n ~ Bernoulli(sigmoid(u_n))`` that
plays the role of the flat model's implication bit for that language alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _kernels as kern
from .dataset import UNKNOWN, PairCase
from .errors import ConfigError, ValidationError
from .flat import ChainSummary, FlatHyper
from .trees import LanguageTree


@dataclass(frozen=True)
class HierHyper(FlatHyper):
    """Flat-model settings plus an inverse-gamma prior on the tree variance.

    ``m_prior`` is inherited but unused: the root strength replaces it.
    """

    sigma2_shape: float = 2.0
    sigma2_scale: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if not (self.sigma2_shape > 0 and self.sigma2_scale > 0):
            raise ConfigError("sigma2_shape and sigma2_scale must be positive")


def sigmoid(x):
    """Logistic function, stable for large ``|x|``."""
    return special.expit(x)


class HierLayout:
    """The part of a tree that a case touches, in array form.

    Internal nodes without any case language below them are dropped (the
    root is always kept). Integrating their Gaussian strengths out leaves
    the rest of the posterior unchanged.

    Attributes
    ----------
    node_ids : ndarray
        Tree node id of each kept internal node; index 0 is the root.
    int_parent : ndarray
        Compact parent index per kept node, -1 for the root.
    leaf_parent : ndarray
        Compact index of the internal node above each case row.
    order : ndarray
        Kept nodes, children before parents.
    """

    def __init__(self, tree: LanguageTree, languages: np.ndarray):
        missing = [int(l) for l in languages if l not in tree.languages]
        if missing:
            ids = tree.language_ids or ()
            names = [ids[l] if l < len(ids) else str(l) for l in missing]
            raise ValidationError(f"{len(missing)} case language(s) missing from the tree: {', '.join(names)}")
        keep = {0}
        leaf_parent_ids = []
        for lang in languages:
            p = tree.nodes[tree.leaf_of(int(lang))].parent
            leaf_parent_ids.append(p)
            while p is not None and p not in keep:
                keep.add(p)
                p = tree.nodes[p].parent
        ids = [node.id for node in tree.preorder() if node.id in keep]
        index = {tid: i for i, tid in enumerate(ids)}
        I = len(ids)
        self.tree = tree
        self.node_ids = np.array(ids, dtype=np.int64)
        self.int_parent = np.array(
            [-1 if tree.nodes[t].parent is None else index[tree.nodes[t].parent] for t in ids], dtype=np.int64
        )
        self.leaf_parent = np.array([index[p] for p in leaf_parent_ids], dtype=np.int64)
        self.child_ptr, self.child_idx = _csr(self.int_parent[1:], np.arange(1, I), I)
        self.leaf_ptr, self.leaf_idx = _csr(self.leaf_parent, np.arange(len(languages)), I)
        self.order = np.arange(I - 1, -1, -1, dtype=np.int64)
        self.index = index

    @property
    def n_internal(self) -> int:
        return len(self.node_ids)

    def arrays(self):
        return (self.int_parent, self.child_ptr, self.child_idx, self.leaf_ptr, self.leaf_idx,
                self.leaf_parent, self.order)


def _csr(parents: np.ndarray, members: np.ndarray, n: int):
    order = np.argsort(parents, kind="stable")
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, parents + 1, 1)
    return np.cumsum(ptr), members[order].astype(np.int64)


@dataclass
class HierState:
    """Latent state of one tree-model chain (noise fields as in the flat state)."""

    node_m: np.ndarray
    u: np.ndarray
    z: np.ndarray
    sigma2: float
    pi: np.ndarray
    eps: float
    eps_n: np.ndarray
    e: np.ndarray
    x: np.ndarray

    def copy(self) -> "HierState":
        return HierState(self.node_m.copy(), self.u.copy(), self.z.copy(), self.sigma2, self.pi.copy(),
                         self.eps, self.eps_n.copy(), self.e.copy(), self.x.copy())

    @property
    def effective(self) -> np.ndarray:
        return self.x ^ self.e


def initial_hier_state(case: PairCase, layout: HierLayout, hyper: HierHyper, rng: np.random.Generator) -> HierState:
    obs = case.values
    x = np.where(obs == UNKNOWN, rng.integers(0, 2, size=obs.shape), obs).astype(np.int8)
    eps = hyper.eps_mean
    return HierState(
        node_m=np.zeros(layout.n_internal),
        u=np.zeros(case.n_rows),
        z=np.zeros(case.n_rows, dtype=np.int8),
        sigma2=hyper.sigma2_scale / max(hyper.sigma2_shape - 1.0, 1.0),
        pi=np.full(obs.shape[1], 0.5),
        eps=eps,
        eps_n=np.full(case.n_rows, eps),
        e=np.zeros(obs.shape, dtype=np.int8),
        x=x,
    )


def sample_internal(node: int, state: HierState, layout: HierLayout, rng: np.random.Generator) -> float:
    """Exact Gaussian Gibbs draw for internal tree node ``node`` (a tree node id)."""
    return float(kern.sample_internal(
        layout.index[node], state.node_m, state.u, state.sigma2, layout.int_parent,
        layout.child_ptr, layout.child_idx, layout.leaf_ptr, layout.leaf_idx, rng,
    ))


def internal_conditional(node: int, state: HierState, layout: HierLayout) -> tuple[float, float]:
    """Mean and variance of the full conditional of internal node ``node``."""
    mean, var = kern.internal_conditional(
        layout.index[node], state.node_m, state.u, state.sigma2, layout.int_parent,
        layout.child_ptr, layout.child_idx, layout.leaf_ptr, layout.leaf_idx,
    )
    return float(mean), float(var)


def sample_leaf(n: int, state: HierState, layout: HierLayout, hyper: HierHyper, rng: np.random.Generator) -> bool:
    """Rejection update of row ``n``'s strength; returns False if every attempt failed."""
    return bool(kern.sample_leaf(n, state.u, state.z, state.node_m, layout.leaf_parent, state.sigma2,
                                 hyper.rejection_attempts, rng))


def obedience_conditional(g_row, pi, u: float) -> float:
    """P(z = 1) for one language given its effective values ``g_row``."""
    K = len(g_row)
    g = int(sum(int(v) << j for j, v in enumerate(g_row)))
    pi = np.asarray(pi, dtype=float)
    w1 = sigmoid(u) * kern.row_weight(g, K, 1, pi)
    w0 = sigmoid(-u) * kern.row_weight(g, K, 0, pi)
    return float(w1 / (w1 + w0))


def sample_obedience_bit(n: int, state: HierState, rng: np.random.Generator) -> int:
    """Gibbs draw of ``z_n`` holding row ``n``'s error bits and imputations fixed."""
    p = obedience_conditional(state.effective[n], state.pi, state.u[n])
    state.z[n] = int(rng.random() < p)
    return int(state.z[n])


def sample_sigma2(state: HierState, layout: HierLayout, hyper: HierHyper, rng: np.random.Generator) -> float:
    """Conjugate inverse-gamma draw for the tree variance (stored and returned)."""
    state.sigma2 = float(kern.sample_sigma2(state.node_m, state.u, layout.int_parent, layout.leaf_parent,
                                            hyper.sigma2_shape, hyper.sigma2_scale, rng))
    return state.sigma2


def _sweep_args(case, state, layout, hyper):
    return (case.values, state.x, state.e, state.eps_n, state.pi, state.z, state.u, state.node_m,
            state.eps, state.sigma2, *layout.arrays(),
            hyper.pi_alpha, hyper.pi_beta, hyper.eps_a, hyper.eps_b, hyper.kappa, hyper.rejection_attempts,
            hyper.sigma2_shape, hyper.sigma2_scale)


def gibbs_sweep_hier(
    state: HierState,
    case: PairCase,
    layout: HierLayout,
    hyper: HierHyper,
    rng: np.random.Generator,
    frozen: bool = False,
) -> HierState:
    """Return the state after one full sweep.

    ``frozen`` holds feature priors, noise rates and the tree variance fixed
    and conditions on ``eps_n``; otherwise ``eps_n`` is integrated out.
    """
    s = state.copy()
    eps, sigma2 = kern.hier_sweep(*_sweep_args(case, s, layout, hyper), frozen, rng,
                                  kern.make_workspace(case.values))
    s.eps, s.sigma2 = float(eps), float(sigma2)
    return s


def run_hier(
    case: PairCase,
    tree: LanguageTree,
    hyper: HierHyper = HierHyper(),
    *,
    init: HierState | None = None,
    frozen: bool = False,
    rng: np.random.Generator | None = None,
) -> ChainSummary:
    """Run the tree sampler; the score is the posterior mean of sigmoid(root strength).

    Raises
    ------
    ValidationError
        If some case language is not a leaf of ``tree``.
    """
    layout = HierLayout(tree, case.languages)
    rng = np.random.default_rng(hyper.seed) if rng is None else rng
    state = initial_hier_state(case, layout, hyper, rng) if init is None else init.copy()
    (score, pi_mean, eps_mean, sigma2_mean, node_mean, z_mean, e_mean, x_mean, _, _) = kern.hier_chain(
        *_sweep_args(case, state, layout, hyper), hyper.iterations, hyper.burn_in, frozen, rng,
    )
    return ChainSummary(
        model="hier",
        features=case.features,
        languages=case.languages.copy(),
        score=float(score),
        pi_means=pi_mean,
        eps_mean=float(eps_mean),
        error_marginals=e_mean,
        imputed_marginals=np.where(case.values == UNKNOWN, x_mean, np.nan),
        extras={
            "root_score": float(score),
            "sigma2_mean": float(sigma2_mean),
            "node_means": {int(t): float(v) for t, v in zip(layout.node_ids, node_mean)},
            "z_marginals": z_mean,
        },
    )
