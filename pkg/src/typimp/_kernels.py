"""Compiled inner loops shared by the flat and tree samplers.

Rows hold ``K`` columns: implicant(s) first, implicand last. Per row:

* ``obs``  observed value (1/0, -1 unknown)
* ``x``    observed value with unknown cells imputed
* ``e``    error bit; the effective value is ``g = x ^ e``
* ``cond`` whether the implication is active for the row (global ``m`` for
  the flat model, per-language obedience bit for the tree model)

Effective-value vectors ``g`` are handled as bitmasks, bit ``j`` = column ``j``.

Noise weights come in two flavours. With per-language rates held fixed
(``frozen``), error bits are independent Bernoulli(eps_n). Otherwise eps_n
is integrated out against its Beta(kappa*eps, kappa*(1-eps)) prior, and a
row's error bits follow the exchangeable beta-binomial law ``bb[n, s]``:
the probability of one particular pattern with ``s`` errors among ``n``
cells.
"""

import math

import numpy as np
from numba import njit

TINY = 1e-300
ALMOST_ONE = 1.0 - 1e-16


@njit(cache=True)
def clip_prob(p):
    if p < TINY:
        return TINY
    if p > ALMOST_ONE:
        return ALMOST_ONE
    return p


@njit(cache=True)
def sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    ez = math.exp(x)
    return ez / (1.0 + ez)


@njit(cache=True)
def draw_beta(rng, a, b):
    x = rng.gamma(a, 1.0)
    y = rng.gamma(b, 1.0)
    if x + y <= 0.0:
        # both shapes so small that the gammas underflowed
        return clip_prob(1.0 if rng.random() < a / (a + b) else 0.0)
    return clip_prob(x / (x + y))


@njit(cache=True)
def pattern_table(eps, kappa, K):
    """bb[n, s]: probability of a given error pattern with s errors in n cells."""
    a = kappa * eps
    b = kappa * (1.0 - eps)
    bb = np.zeros((K + 1, K + 1))
    for n in range(K + 1):
        for s in range(n + 1):
            p = 1.0
            for i in range(s):
                p *= (a + i) / (kappa + i)
            for i in range(n - s):
                p *= (b + i) / (kappa + s + i)
            bb[n, s] = p
    return bb


@njit(cache=True)
def row_weight(g, K, cond, pi):
    """Likelihood of effective values ``g`` (bitmask) under the case equation."""
    w = 1.0
    ante = True
    for j in range(K - 1):
        if (g >> j) & 1:
            w *= pi[j]
        else:
            w *= 1.0 - pi[j]
            ante = False
    last = (g >> (K - 1)) & 1
    if cond == 1 and ante:
        return w if last == 1 else 0.0
    return w * (pi[K - 1] if last == 1 else 1.0 - pi[K - 1])


@njit(cache=True)
def combo_weights(obs_row, K, cond, pi, eps_row, bb, frozen, out):
    """Weight of every effective vector with error bits and imputations summed out.

    Returns the row's marginal likelihood given ``cond``.
    """
    total = 0.0
    for g in range(1 << K):
        w = row_weight(g, K, cond, pi)
        if w > 0.0:
            if frozen:
                for j in range(K):
                    o = obs_row[j]
                    if o >= 0:
                        w *= (1.0 - eps_row) if ((g >> j) & 1) == o else eps_row
            else:
                n = 0
                s = 0
                for j in range(K):
                    o = obs_row[j]
                    if o >= 0:
                        n += 1
                        if ((g >> j) & 1) != o:
                            s += 1
                w *= bb[n, s]
        out[g] = w
        total += w
    return total


@njit(cache=True)
def pick_combo(weights, total, rng):
    target = rng.random() * total
    acc = 0.0
    for c in range(weights.shape[0]):
        acc += weights[c]
        if weights[c] > 0.0 and target < acc:
            return c
    for c in range(weights.shape[0] - 1, -1, -1):
        if weights[c] > 0.0:
            return c
    return 0


@njit(cache=True)
def assign_row(n, g, obs, x, e, K, eps_row, kappa, eps, frozen, rng):
    """Set row ``n`` to effective vector ``g``; unknown cells get fresh error bits."""
    n_seen = 0
    s_seen = 0
    for j in range(K):
        o = obs[n, j]
        if o >= 0:
            x[n, j] = o
            e[n, j] = ((g >> j) & 1) ^ o
            n_seen += 1
            s_seen += e[n, j]
    for j in range(K):
        if obs[n, j] < 0:
            if frozen:
                p = eps_row
            else:
                p = (kappa * eps + s_seen) / (kappa + n_seen)
            eb = 1 if rng.random() < p else 0
            n_seen += 1
            s_seen += eb
            e[n, j] = eb
            x[n, j] = ((g >> j) & 1) ^ eb


@njit(cache=True)
def draw_row(n, obs, x, e, K, cond, pi, eps_row, bb, kappa, eps, frozen, rng, buf):
    """Jointly redraw the error bits and imputed cells of row ``n`` given ``cond``."""
    total = combo_weights(obs[n], K, cond, pi, eps_row, bb, frozen, buf)
    g = pick_combo(buf, total, rng)
    assign_row(n, g, obs, x, e, K, eps_row, kappa, eps, frozen, rng)


# Without frozen per-language rates, a row's weights depend only on its
# pattern of observed values, one of 3**K.


@njit(cache=True)
def pattern_codes(obs):
    N, K = obs.shape
    codes = np.empty(N, dtype=np.int64)
    for n in range(N):
        c = 0
        base = 1
        for j in range(K):
            c += (obs[n, j] + 1) * base
            base *= 3
        codes[n] = c
    return codes


@njit(cache=True)
def pattern_rows(K):
    P = 3 ** K
    out = np.empty((P, K), dtype=np.int8)
    for p in range(P):
        c = p
        for j in range(K):
            out[p, j] = c % 3 - 1
            c //= 3
    return out


@njit(cache=True)
def pattern_weights(prows, K, cond, pi, bb, W, tot):
    for p in range(prows.shape[0]):
        tot[p] = combo_weights(prows[p], K, cond, pi, 0.0, bb, False, W[p])


@njit(cache=True)
def sample_eps_n(e, eps_n, eps, kappa, rng):
    """Conjugate per-language noise rates given the error bits."""
    N, K = e.shape
    for n in range(N):
        s = 0
        for j in range(K):
            s += e[n, j]
        eps_n[n] = draw_beta(rng, kappa * eps + s, kappa * (1.0 - eps) + K - s)


@njit(cache=True)
def sample_pi(x, e, cond, pi, alpha, beta, rng):
    """Conjugate Beta draws; the implicand's prior only covers rows it generates."""
    N, K = x.shape
    for j in range(K - 1):
        ones = 0
        for n in range(N):
            ones += x[n, j] ^ e[n, j]
        pi[j] = draw_beta(rng, alpha + ones, beta + N - ones)
    ones = 0
    count = 0
    for n in range(N):
        ante = True
        for j in range(K - 1):
            if (x[n, j] ^ e[n, j]) == 0:
                ante = False
        if cond[n] == 1 and ante:
            continue
        count += 1
        ones += x[n, K - 1] ^ e[n, K - 1]
    pi[K - 1] = draw_beta(rng, alpha + ones, beta + count - ones)


@njit(cache=True)
def _noise_loglik(eps, kappa, hist):
    K = hist.shape[0] - 1
    a = kappa * eps
    b = kappa * (1.0 - eps)
    base = math.lgamma(kappa) - math.lgamma(kappa + K) - math.lgamma(a) - math.lgamma(b)
    total = 0.0
    for s in range(K + 1):
        if hist[s] > 0:
            total += hist[s] * (base + math.lgamma(a + s) + math.lgamma(b + K - s))
    return total


@njit(cache=True)
def sample_eps(eps, e, kappa, eps_a, eps_b, attempts, rng):
    """Independence Metropolis steps for the global noise rate, proposals from its prior.

    Per-language rates are integrated out, so the target only depends on how
    many rows carry 0, 1, ..., K error bits.
    """
    N, K = e.shape
    hist = np.zeros(K + 1, dtype=np.int64)
    for n in range(N):
        s = 0
        for j in range(K):
            s += e[n, j]
        hist[s] += 1
    cur = _noise_loglik(eps, kappa, hist)
    for _ in range(attempts):
        prop = draw_beta(rng, eps_a, eps_b)
        new = _noise_loglik(prop, kappa, hist)
        if math.log(rng.random()) < new - cur:
            eps = prop
            cur = new
    return eps


@njit(cache=True)
def log_ratio(w1, w0):
    if w1 <= 0.0:
        return -np.inf
    if w0 <= 0.0:
        return np.inf
    return math.log(w1) - math.log(w0)


# --------------------------------------------------------------------------
# flat model


@njit(cache=True)
def flat_m_probability(obs, K, pi, eps_n, bb, kappa, eps, m_prior, frozen, buf):
    """P(m = 1 | pi, noise) with every row latent summed out."""
    lr = math.log(m_prior) - math.log1p(-m_prior)
    for n in range(obs.shape[0]):
        w1 = combo_weights(obs[n], K, 1, pi, eps_n[n], bb, frozen, buf)
        w0 = combo_weights(obs[n], K, 0, pi, eps_n[n], bb, frozen, buf)
        lr += log_ratio(w1, w0)
        if lr == -np.inf:
            return 0.0
    if lr == np.inf:
        return 1.0
    return sigmoid(lr)


@njit(cache=True)
def make_workspace(obs):
    """Scratch arrays for the sweeps: (codes, prows, W, tot, lrp, buf)."""
    K = obs.shape[1]
    P = 3 ** K
    return (pattern_codes(obs), pattern_rows(K), np.zeros((2, P, 1 << K)), np.zeros((2, P)), np.zeros(P),
            np.empty(1 << K))


@njit(cache=True)
def fill_patterns(K, pi, bb, ws):
    """Weights for both branches of every pattern and their log ratio."""
    codes, prows, W, tot, lrp, buf = ws
    pattern_weights(prows, K, 0, pi, bb, W[0], tot[0])
    pattern_weights(prows, K, 1, pi, bb, W[1], tot[1])
    for p in range(lrp.shape[0]):
        lrp[p] = log_ratio(tot[1, p], tot[0, p])


@njit(cache=True)
def flat_sweep(obs, x, e, eps_n, pi, cond, eps, m, m_prior, alpha, beta, eps_a, eps_b, kappa, attempts,
               frozen, rng, ws):
    """One sweep; returns the new (eps, m). Arrays are updated in place.

    Unless frozen: feature priors, then the global noise rate. Always: the
    implication bit with row latents summed out, then every row's error bits
    and imputations given the new bit.
    """
    N, K = obs.shape
    codes, prows, W, tot, lrp, buf = ws
    if not frozen:
        sample_pi(x, e, cond, pi, alpha, beta, rng)
        eps = sample_eps(eps, e, kappa, eps_a, eps_b, attempts, rng)
    bb = pattern_table(eps, kappa, K)
    if frozen:
        p1 = flat_m_probability(obs, K, pi, eps_n, bb, kappa, eps, m_prior, frozen, buf)
        m = 1 if rng.random() < p1 else 0
        for n in range(N):
            cond[n] = m
            draw_row(n, obs, x, e, K, m, pi, eps_n[n], bb, kappa, eps, frozen, rng, buf)
        return eps, m
    fill_patterns(K, pi, bb, ws)
    lr = math.log(m_prior) - math.log1p(-m_prior)
    for n in range(N):
        lr += lrp[codes[n]]
        if lr == -np.inf:
            break
    m = 1 if rng.random() < sigmoid(lr) else 0
    for n in range(N):
        c = codes[n]
        cond[n] = m
        g = pick_combo(W[m, c], tot[m, c], rng)
        assign_row(n, g, obs, x, e, K, 0.0, kappa, eps, False, rng)
    return eps, m


@njit(cache=True)
def flat_chain(obs, x, e, eps_n, pi, cond, eps, m, m_prior, alpha, beta, eps_a, eps_b, kappa, attempts,
               iterations, burn_in, frozen, rng):
    N, K = obs.shape
    ws = make_workspace(obs)
    m_sum = 0.0
    eps_sum = 0.0
    pi_sum = np.zeros(K)
    e_sum = np.zeros((N, K))
    x_sum = np.zeros((N, K))
    for it in range(iterations):
        eps, m = flat_sweep(obs, x, e, eps_n, pi, cond, eps, m, m_prior, alpha, beta, eps_a, eps_b, kappa,
                            attempts, frozen, rng, ws)
        if it >= burn_in:
            m_sum += m
            eps_sum += eps
            for j in range(K):
                pi_sum[j] += pi[j]
            for n in range(N):
                for j in range(K):
                    e_sum[n, j] += e[n, j]
                    x_sum[n, j] += x[n, j]
    kept = iterations - burn_in
    return m_sum / kept, pi_sum / kept, eps_sum / kept, e_sum / kept, x_sum / kept, eps, m


# --------------------------------------------------------------------------
# tree model
#
# Internal nodes are indexed 0..I-1 with 0 the root; ``int_parent[0] == -1``.
# ``leaf_parent[n]`` is the internal node above row ``n``. Children are
# stored CSR-style: internal children in (child_ptr, child_idx), rows in
# (leaf_ptr, leaf_idx). ``order`` lists internal nodes children-first.


@njit(cache=True)
def internal_conditional(v, node_m, u, sigma2, int_parent, child_ptr, child_idx, leaf_ptr, leaf_idx):
    """Mean and variance of the Gaussian full conditional of internal node ``v``."""
    p = int_parent[v]
    total = node_m[p] if p >= 0 else 0.0
    count = 1
    for k in range(child_ptr[v], child_ptr[v + 1]):
        total += node_m[child_idx[k]]
        count += 1
    for k in range(leaf_ptr[v], leaf_ptr[v + 1]):
        total += u[leaf_idx[k]]
        count += 1
    return total / count, sigma2 / count


@njit(cache=True)
def sample_internal(v, node_m, u, sigma2, int_parent, child_ptr, child_idx, leaf_ptr, leaf_idx, rng):
    mean, var = internal_conditional(v, node_m, u, sigma2, int_parent, child_ptr, child_idx, leaf_ptr, leaf_idx)
    node_m[v] = mean + math.sqrt(var) * rng.standard_normal()
    return node_m[v]


@njit(cache=True)
def sample_leaf(n, u, z, node_m, leaf_parent, sigma2, attempts, rng):
    """Rejection step for a leaf strength: Gaussian proposal, sigmoid acceptance.

    The previous value is kept if every attempt is rejected.
    """
    mean = node_m[leaf_parent[n]]
    sd = math.sqrt(sigma2)
    for _ in range(attempts):
        prop = mean + sd * rng.standard_normal()
        s = sigmoid(prop)
        accept = s if z[n] == 1 else 1.0 - s
        if rng.random() < accept:
            u[n] = prop
            return True
    return False


@njit(cache=True)
def obedience_probability(n, obs, K, pi, eps_row, bb, kappa, eps, frozen, u, buf):
    w1 = combo_weights(obs[n], K, 1, pi, eps_row, bb, frozen, buf)
    w0 = combo_weights(obs[n], K, 0, pi, eps_row, bb, frozen, buf)
    lr = log_ratio(w1, w0)
    if lr == -np.inf:
        return 0.0
    if lr == np.inf:
        return 1.0
    # log s(u) - log(1 - s(u)) == u
    return sigmoid(u[n] + lr)


@njit(cache=True)
def sample_sigma2(node_m, u, int_parent, leaf_parent, shape, scale, rng):
    ssr = 0.0
    for v in range(node_m.shape[0]):
        p = int_parent[v]
        r = node_m[v] - (node_m[p] if p >= 0 else 0.0)
        ssr += r * r
    for n in range(u.shape[0]):
        r = u[n] - node_m[leaf_parent[n]]
        ssr += r * r
    edges = node_m.shape[0] + u.shape[0]
    g = rng.gamma(shape + 0.5 * edges, 1.0 / (scale + 0.5 * ssr))
    return 1.0 / max(g, TINY)


@njit(cache=True)
def hier_sweep(obs, x, e, eps_n, pi, z, u, node_m, eps, sigma2,
               int_parent, child_ptr, child_idx, leaf_ptr, leaf_idx, leaf_parent, order,
               alpha, beta, eps_a, eps_b, kappa, attempts, shape, scale, frozen, rng, ws):
    """One sweep; returns the new (eps, sigma2).

    Unless frozen: global noise rate, feature priors. Always: each
    obedience bit (row latents summed out) followed by its row's error bits
    and imputations, leaf strengths, internal nodes children-first. Unless
    frozen: tree variance.
    """
    N, K = obs.shape
    codes, prows, W, tot, lrp, buf = ws
    if not frozen:
        eps = sample_eps(eps, e, kappa, eps_a, eps_b, attempts, rng)
        sample_pi(x, e, z, pi, alpha, beta, rng)
    bb = pattern_table(eps, kappa, K)
    if frozen:
        for n in range(N):
            p1 = obedience_probability(n, obs, K, pi, eps_n[n], bb, kappa, eps, frozen, u, buf)
            z[n] = 1 if rng.random() < p1 else 0
            draw_row(n, obs, x, e, K, z[n], pi, eps_n[n], bb, kappa, eps, frozen, rng, buf)
    else:
        fill_patterns(K, pi, bb, ws)
        for n in range(N):
            c = codes[n]
            lr = lrp[c]
            if lr == -np.inf:
                zn = 0
            elif lr == np.inf:
                zn = 1
            else:
                zn = 1 if rng.random() < sigmoid(u[n] + lr) else 0
            z[n] = zn
            g = pick_combo(W[zn, c], tot[zn, c], rng)
            assign_row(n, g, obs, x, e, K, 0.0, kappa, eps, False, rng)
    for n in range(N):
        sample_leaf(n, u, z, node_m, leaf_parent, sigma2, attempts, rng)
    for k in range(order.shape[0]):
        sample_internal(order[k], node_m, u, sigma2, int_parent, child_ptr, child_idx, leaf_ptr, leaf_idx, rng)
    if not frozen:
        sigma2 = sample_sigma2(node_m, u, int_parent, leaf_parent, shape, scale, rng)
    return eps, sigma2


@njit(cache=True)
def hier_chain(obs, x, e, eps_n, pi, z, u, node_m, eps, sigma2,
               int_parent, child_ptr, child_idx, leaf_ptr, leaf_idx, leaf_parent, order,
               alpha, beta, eps_a, eps_b, kappa, attempts, shape, scale,
               iterations, burn_in, frozen, rng):
    N, K = obs.shape
    I = node_m.shape[0]
    ws = make_workspace(obs)
    score_sum = 0.0
    eps_sum = 0.0
    sigma2_sum = 0.0
    pi_sum = np.zeros(K)
    node_sum = np.zeros(I)
    z_sum = np.zeros(N)
    e_sum = np.zeros((N, K))
    x_sum = np.zeros((N, K))
    for it in range(iterations):
        eps, sigma2 = hier_sweep(obs, x, e, eps_n, pi, z, u, node_m, eps, sigma2,
                                 int_parent, child_ptr, child_idx, leaf_ptr, leaf_idx, leaf_parent, order,
                                 alpha, beta, eps_a, eps_b, kappa, attempts, shape, scale, frozen, rng, ws)
        if it >= burn_in:
            score_sum += sigmoid(node_m[0])
            eps_sum += eps
            sigma2_sum += sigma2
            for j in range(K):
                pi_sum[j] += pi[j]
            for v in range(I):
                node_sum[v] += node_m[v]
            for n in range(N):
                z_sum[n] += z[n]
                for j in range(K):
                    e_sum[n, j] += e[n, j]
                    x_sum[n, j] += x[n, j]
    kept = iterations - burn_in
    return (score_sum / kept, pi_sum / kept, eps_sum / kept, sigma2_sum / kept, node_sum / kept,
            z_sum / kept, e_sum / kept, x_sum / kept, eps, sigma2)
