"""Independent reference computations for the sampler tests.

Nothing here imports the package's inference code; each oracle is written
from the model definition with plain numpy.
"""

import itertools
import math

import numpy as np


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def flat_row_likelihood(obs_row, m, pi, eps):
    """P(observed row | m, pi, eps) summing over true values and error bits.

    Columns are implicants first, implicand last; -1 marks an unknown cell.
    With m = 1 and every implicant true, the implicand is true for sure.
    """
    K = len(obs_row)
    total = 0.0
    for truth in itertools.product((0, 1), repeat=K):
        if m == 1 and all(truth[:-1]) and truth[-1] == 0:
            continue
        p = 1.0
        for k, t in enumerate(truth):
            forced = m == 1 and k == K - 1 and all(truth[:-1])
            if not forced:
                p *= pi[k] if t else 1.0 - pi[k]
            o = obs_row[k]
            if o >= 0:
                p *= 1.0 - eps if o == t else eps
        total += p
    return total


def flat_posterior_m(obs, pi, eps_n, m_prior=0.5):
    """Exact P(m = 1 | data) with priors and per-row noise rates fixed."""
    l1 = m_prior
    l0 = 1.0 - m_prior
    for row, eps in zip(obs, eps_n):
        l1 *= flat_row_likelihood(row, 1, pi, eps)
        l0 *= flat_row_likelihood(row, 0, pi, eps)
    return l1 / (l1 + l0)


def gaussian_tree_posterior(parents, leaf_parent, u, sigma2):
    """Posterior mean and covariance of internal strengths given leaf values.

    ``parents[v]`` is the parent index of internal node v (-1 for the root,
    which is centred on 0); ``leaf_parent[n]`` the node above leaf n.
    """
    I = len(parents)
    Q = np.zeros((I, I))
    b = np.zeros(I)
    Q[0, 0] += 1.0
    for v in range(1, I):
        p = parents[v]
        Q[v, v] += 1.0
        Q[p, p] += 1.0
        Q[v, p] -= 1.0
        Q[p, v] -= 1.0
    for n, p in enumerate(leaf_parent):
        Q[p, p] += 1.0
        b[p] += u[n]
    Q /= sigma2
    b /= sigma2
    cov = np.linalg.inv(Q)
    return cov @ b, cov


def leaf_density_grid(z, m_par, sigma2, lo=-12.0, hi=12.0, n=200001):
    """Grid and normalised density of u given parent value and obedience bit."""
    grid = np.linspace(lo, hi, n)
    s = 1.0 / (1.0 + np.exp(-grid))
    dens = np.exp(-0.5 * (grid - m_par) ** 2 / sigma2) * (s if z == 1 else 1.0 - s)
    dens /= np.trapezoid(dens, grid)
    return grid, dens


def leaf_cdf(z, m_par, sigma2):
    grid, dens = leaf_density_grid(z, m_par, sigma2)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    return grid, cdf / cdf[-1]


def beta_cdf_trapezoid(a, b, x, n=400001):
    """Regularised incomplete beta by trapezoid rules.

    Where a shape parameter is below 1 the density is singular at that end;
    there t = y**a (at 0) or s = (1 - y)**b (at 1) smooths the integrand.
    """
    if a < 1:
        t = np.linspace(0.0, x**a, n)
        lower = np.trapezoid((1.0 - t ** (1.0 / a)) ** (b - 1.0), t) / a
    else:
        y = np.linspace(0.0, x, n)
        lower = np.trapezoid(y ** (a - 1.0) * (1.0 - y) ** (b - 1.0), y)
    if b < 1:
        s = np.linspace(0.0, (1.0 - x) ** b, n)
        upper = np.trapezoid((1.0 - s ** (1.0 / b)) ** (a - 1.0), s) / b
    else:
        y = np.linspace(x, 1.0, n)
        upper = np.trapezoid(y ** (a - 1.0) * (1.0 - y) ** (b - 1.0), y)
    return lower / (lower + upper)


def hier_star_oracle(obs, pi, eps_n, sigma2, grid=None):
    """Languages hanging directly under the root, every continuous parameter fixed.

    Returns (P(z_n = 1) per language, posterior mean of the root strength)
    by quadrature over the root and each leaf strength.
    """
    if grid is None:
        grid = np.linspace(-15.0, 15.0, 3001)
    s = 1.0 / (1.0 + np.exp(-grid))
    sd = math.sqrt(sigma2)

    def normal(x, mu):
        return np.exp(-0.5 * ((x - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))

    like = [(flat_row_likelihood(r, 1, pi, e), flat_row_likelihood(r, 0, pi, e)) for r, e in zip(obs, eps_n)]
    du = grid[1] - grid[0]
    kern = normal(grid[None, :], grid[:, None]) * du  # [root, leaf]
    # per root value: integral over u of N(u; m) s(u) and N(u; m)(1 - s(u))
    ps1 = kern @ s
    ps0 = kern @ (1.0 - s)
    post = normal(grid, 0.0)
    for l1, l0 in like:
        post = post * (ps1 * l1 + ps0 * l0)
    post /= post.sum()
    pz = []
    for l1, l0 in like:
        num = ps1 * l1
        pz.append(float((post * num / (num + ps0 * l0)).sum()))
    return np.array(pz), float((post * grid).sum())
