"""Frozen toy target distributions with exact predictors.

Two families stand in for a pretrained generator and its data:

* :class:`DiscreteWorld` - a class-conditional nearest-neighbour energy
  model over a small token grid, small enough to enumerate every grid.
* :class:`GmmWorld` - class-conditional 2-D Gaussian mixtures with a
  closed-form noise predictor (diffusion) and marginal velocity (flow).

The unconditional model used for guidance is the uniform mixture over
classes. Every query takes a batch; ``classes=None`` means unconditional.
"""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

MAX_CONFIGS = 2 ** 20
ROW_BUDGET = 2 ** 22
KAPPA_MAX = 1000
DELTA = 1e-4


def grid_shape(G):
    r = int(round(np.sqrt(G)))
    return (r, r) if r * r == G else (1, G)


def grid_edges(G):
    rows, cols = grid_shape(G)
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return edges


class DiscreteWorld:
    """Enumerable token grid; configuration index k has base-V digits with position 0 most significant."""

    kind = "discrete"

    def __init__(self, grid_size, vocab_size, class_count, seed, energy_scale=1.0):
        G, V, C = int(grid_size), int(vocab_size), int(class_count)
        if G < 1 or V < 2 or C < 1:
            raise ValueError("need grid_size >= 1, vocab_size >= 2, class_count >= 1")
        if V ** G > MAX_CONFIGS:
            raise ValueError(f"V**G = {V ** G} exceeds enumeration bound {MAX_CONFIGS}")
        self.G, self.V, self.C, self.seed = G, V, C, int(seed)
        self.energy_scale = float(energy_scale)
        self.K = V ** G
        powers = V ** np.arange(G - 1, -1, -1)
        self.powers = powers
        self.digits = (np.arange(self.K)[:, None] // powers[None, :]) % V

        rng = np.random.default_rng(seed)
        self.edges = grid_edges(G)
        self.unary = self.energy_scale * rng.uniform(-1, 1, size=(C, G, V))
        self.pairwise = self.energy_scale * rng.uniform(-1, 1, size=(C, len(self.edges), V, V))

        score = np.zeros((C, self.K))
        for c in range(C):
            score[c] = self.unary[c, np.arange(G)[None, :], self.digits].sum(axis=1)
            for e, (i, j) in enumerate(self.edges):
                score[c] += self.pairwise[c, e, self.digits[:, i], self.digits[:, j]]
        self.log_norm = logsumexp(score, axis=1)
        self.logp = score - self.log_norm[:, None]
        self.probs = np.exp(self.logp)
        self.uncond_probs = self.probs.mean(axis=0)
        self.uncond_logp = np.log(self.uncond_probs)
        self._onehot = np.zeros((self.K, G * V))
        self._onehot[np.arange(self.K)[:, None], np.arange(G)[None, :] * V + self.digits] = 1.0

    def table(self, cls=None):
        return self.uncond_probs if cls is None else self.probs[cls]

    def index_of(self, tokens):
        tokens = np.asarray(tokens)
        return tokens @ self.powers

    def _observed(self, tokens):
        """One-hot of the observed tokens, (N, G*V), and the per-row observed count."""
        tokens = np.atleast_2d(np.asarray(tokens))
        n = tokens.shape[0]
        obs = np.zeros((n, self.G * self.V))
        rows, cols = np.nonzero(tokens >= 0)
        obs[rows, cols * self.V + tokens[rows, cols]] = 1.0
        return obs, (tokens >= 0).sum(axis=1)

    def _base(self, classes, n):
        if classes is None:
            return np.broadcast_to(self.uncond_probs, (n, self.K))
        return self.probs[np.broadcast_to(np.asarray(classes), (n,))]

    def _weights(self, tokens, classes):
        obs, n_obs = self._observed(tokens)
        consistent = (obs @ self._onehot.T) == n_obs[:, None]
        return consistent * self._base(classes, len(n_obs))

    def _by_rows(self, fn, tokens, classes):
        # the consistency mask is (rows, K); bound its size for large grids
        tokens = np.atleast_2d(np.asarray(tokens))
        n = tokens.shape[0]
        step = max(1, ROW_BUDGET // self.K)
        if n <= step:
            return fn(tokens, classes)
        cls = None if classes is None else np.broadcast_to(np.asarray(classes), (n,))
        parts = [fn(tokens[i:i + step], None if cls is None else cls[i:i + step]) for i in range(0, n, step)]
        return np.concatenate(parts)

    def token_marginals(self, tokens, classes=None):
        """Exact p(x_i = v | observed, class) for every position; shape (N, G, V).

        Rows of observed positions are point masses on the observed token.
        """
        return self._by_rows(self._token_marginals, tokens, classes)

    def _token_marginals(self, tokens, classes):
        w = self._weights(tokens, classes)
        m = (w @ self._onehot).reshape(-1, self.G, self.V)
        return m / m.sum(axis=2, keepdims=True)

    def committed_logprob(self, tokens, classes=None):
        """log p(x_i | every other committed token, class) for each committed position i; (N, G).

        Entries at masked positions are 0.
        """
        return self._by_rows(self._committed_logprob, tokens, classes)

    def _committed_logprob(self, tokens, classes):
        obs, n_obs = self._observed(tokens)
        hits = obs @ self._onehot.T
        base = self._base(classes, len(n_obs))
        num = np.sum(base * (hits == n_obs[:, None]), axis=1)
        out = np.zeros(tokens.shape)
        for i in range(self.G):
            has = tokens[:, i] >= 0
            if not has.any():
                continue
            col = self._onehot[:, i * self.V + np.maximum(tokens[has, i], 0)].T
            den = np.sum(base[has] * ((hits[has] - col) == (n_obs[has] - 1)[:, None]), axis=1)
            out[has, i] = np.log(num[has]) - np.log(den)
        return out

    def token_conditional(self, observed, cls, position):
        observed = np.asarray(observed)
        if observed[position] >= 0:
            raise ValueError("position is already observed")
        if np.all(observed >= 0):
            raise ValueError("grid is fully observed")
        return self.token_marginals(observed[None, :], None if cls is None else [cls])[0, position]

    def log_density(self, tokens, classes=None):
        idx = self.index_of(np.atleast_2d(tokens))
        if classes is None:
            return self.uncond_logp[idx]
        return self.logp[np.broadcast_to(np.asarray(classes), idx.shape), idx]

    def sample(self, n, classes, rng):
        classes = np.broadcast_to(np.asarray(classes), (n,))
        cdf = np.cumsum(self.probs, axis=1)
        u = rng.random(n)
        idx = np.empty(n, dtype=np.int64)
        for c in np.unique(classes):
            sel = classes == c
            idx[sel] = np.searchsorted(cdf[c], u[sel], side="left")
        return self.digits[np.minimum(idx, self.K - 1)].copy()

    def config(self):
        return {"grid_size": self.G, "vocab_size": self.V, "class_count": self.C,
                "seed": self.seed, "energy_scale": self.energy_scale}


def build_discrete_world(G, V, C, seed, energy_scale=1.0):
    return DiscreteWorld(G, V, C, seed, energy_scale)


def alpha_bar(kappa, kappa_max=KAPPA_MAX, delta=DELTA):
    """Cosine schedule rescaled so alpha_bar(0) = 1 - delta and alpha_bar(kappa_max) = delta."""
    u = np.asarray(kappa, dtype=np.float64) / kappa_max
    return delta + (1.0 - 2.0 * delta) * np.cos(0.5 * np.pi * u) ** 2


def _inv2(S):
    det = S[..., 0, 0] * S[..., 1, 1] - S[..., 0, 1] * S[..., 1, 0]
    inv = np.empty_like(S)
    inv[..., 0, 0] = S[..., 1, 1]
    inv[..., 1, 1] = S[..., 0, 0]
    inv[..., 0, 1] = -S[..., 0, 1]
    inv[..., 1, 0] = -S[..., 1, 0]
    return inv / det[..., None, None], det


class GmmWorld:
    """Class-conditional 2-D Gaussian mixtures.

    Components are stored flat: ``comp_class[j]``, ``comp_weight[j]``
    (weight within its class), ``means[j]``, ``covs[j]``.
    """

    kind = "gmm"

    def __init__(self, comp_class, comp_weight, means, covs, class_count=None,
                 kappa_max=KAPPA_MAX, delta=DELTA, seed=None):
        self.comp_class = np.asarray(comp_class, dtype=np.int64)
        self.comp_weight = np.asarray(comp_weight, dtype=np.float64)
        self.means = np.asarray(means, dtype=np.float64).reshape(-1, 2)
        self.covs = np.asarray(covs, dtype=np.float64).reshape(-1, 2, 2)
        self.C = int(class_count if class_count is not None else self.comp_class.max() + 1)
        self.kappa_max = int(kappa_max)
        self.delta = float(delta)
        self.seed = seed
        det = np.linalg.det(self.covs)
        tr = np.trace(self.covs, axis1=1, axis2=2)
        if np.any(det <= 0) or np.any(tr <= 0) or not np.allclose(self.covs, self.covs.transpose(0, 2, 1)):
            raise ValueError("component covariances must be symmetric positive definite")
        for c in range(self.C):
            s = self.comp_weight[self.comp_class == c].sum()
            if not np.isclose(s, 1.0, atol=1e-12):
                raise ValueError(f"class {c} weights sum to {s}")
        self._log_w_cond = np.log(self.comp_weight)
        self._log_w_uncond = self._log_w_cond - np.log(self.C)

    @property
    def J(self):
        return len(self.comp_class)

    def alpha_bar(self, kappa):
        return alpha_bar(kappa, self.kappa_max, self.delta)

    def _log_weights(self, classes, n):
        if classes is None:
            return np.broadcast_to(self._log_w_uncond, (n, self.J))
        classes = np.broadcast_to(np.asarray(classes), (n,))
        lw = np.where(self.comp_class[None, :] == classes[:, None], self._log_w_cond[None, :], -np.inf)
        return lw

    def _posterior(self, x, m, S, classes):
        # responsibilities and per-component precision for x ~ sum_j w_j N(m_j, S_j)
        Sinv, det = _inv2(S)
        d = x[:, None, :] - m
        maha = np.einsum("nji,njik,njk->nj", d, Sinv, d)
        logn = -0.5 * maha - 0.5 * np.log(det) - np.log(2 * np.pi)
        lw = self._log_weights(classes, x.shape[0]) + logn
        r = np.exp(lw - logsumexp(lw, axis=1, keepdims=True))
        return r, Sinv, d, lw

    def _noised(self, kappa, n):
        ab = np.broadcast_to(self.alpha_bar(kappa), (n,))
        m = np.sqrt(ab)[:, None, None] * self.means[None]
        S = ab[:, None, None, None] * self.covs[None] + (1.0 - ab)[:, None, None, None] * np.eye(2)
        return ab, m, S

    def score(self, x, kappa, classes=None):
        """grad_x log p_kappa(x) of the noised mixture."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        _, m, S = self._noised(kappa, x.shape[0])
        r, Sinv, d, _ = self._posterior(x, m, S, classes)
        return -np.einsum("nj,njik,njk->ni", r, Sinv, d)

    def eps_score(self, x, kappa, classes=None):
        """Exact noise prediction eps* = -sqrt(1 - alpha_bar) * grad log p_kappa."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        kappa = np.asarray(kappa, dtype=np.float64)
        if np.any(kappa < 0) or np.any(kappa > self.kappa_max):
            raise ValueError("kappa outside [0, kappa_max]")
        ab = np.broadcast_to(self.alpha_bar(kappa), (x.shape[0],))
        return -np.sqrt(1.0 - ab)[:, None] * self.score(x, kappa, classes)

    def noised_log_density(self, x, kappa, classes=None):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        _, m, S = self._noised(kappa, x.shape[0])
        _, _, _, lw = self._posterior(x, m, S, classes)
        return logsumexp(lw, axis=1)

    def velocity(self, x, kappa, classes=None):
        """Exact E[x1 - x0 | x_kappa = x] for x_kappa = kappa x1 + (1 - kappa) x0."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        kappa = np.broadcast_to(np.asarray(kappa, dtype=np.float64), (x.shape[0],))
        if np.any(kappa <= 0) or np.any(kappa > 1):
            raise ValueError("velocity needs kappa in (0, 1]")
        a = (1.0 - kappa)[:, None, None, None]
        k = kappa[:, None, None, None]
        m = (1.0 - kappa)[:, None, None] * self.means[None]
        S = a ** 2 * self.covs[None] + k ** 2 * np.eye(2)
        cross = k * np.eye(2) - a * self.covs[None]
        r, Sinv, d, _ = self._posterior(x, m, S, classes)
        gain = np.einsum("njab,njbc->njac", cross, Sinv)
        v = -self.means[None] + np.einsum("njab,njb->nja", gain, d)
        return np.einsum("nj,nja->na", r, v)

    def log_density(self, x, classes=None):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n = x.shape[0]
        m = np.broadcast_to(self.means, (n, self.J, 2))
        S = np.broadcast_to(self.covs, (n, self.J, 2, 2))
        _, _, _, lw = self._posterior(x, m, S, classes)
        return logsumexp(lw, axis=1)

    def sample(self, n, classes, rng):
        classes = np.broadcast_to(np.asarray(classes), (n,))
        lw = self._log_weights(classes, n)
        p = np.exp(lw)
        cdf = np.cumsum(p, axis=1)
        u = rng.random(n)
        j = np.minimum((u[:, None] > cdf).sum(axis=1), self.J - 1)
        L = np.linalg.cholesky(self.covs)
        z = rng.standard_normal((n, 2))
        return self.means[j] + np.einsum("nab,nb->na", L[j], z)

    def class_moments(self, cls=None):
        """Exact mean and covariance of the class mixture (or the unconditional one)."""
        if cls is None:
            w = self.comp_weight / self.C
            sel = np.ones(self.J, dtype=bool)
        else:
            sel = self.comp_class == cls
            w = self.comp_weight
        w = w[sel]
        mu = w @ self.means[sel]
        d = self.means[sel] - mu
        cov = np.einsum("j,jab->ab", w, self.covs[sel]) + np.einsum("j,ja,jb->ab", w, d, d)
        return mu, cov

    def components(self, cls):
        sel = np.flatnonzero(self.comp_class == cls)
        return sel

    def config(self):
        return {"seed": self.seed, "class_count": self.C,
                "components": int(np.bincount(self.comp_class).max())}


def build_gmm_world(class_count=4, components=3, seed=0, std_range=(0.25, 0.7), box=4.0):
    """Seeded class-conditional mixtures; means uniform in [-box, box]^2."""
    rng = np.random.default_rng(seed)
    cc, cw, mu, cov = [], [], [], []
    for c in range(class_count):
        w = rng.dirichlet(np.full(components, 3.0))
        for j in range(components):
            s = rng.uniform(*std_range, size=2)
            th = rng.uniform(0, np.pi)
            R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
            cc.append(c)
            cw.append(w[j])
            mu.append(rng.uniform(-box, box, size=2))
            cov.append(R @ np.diag(s ** 2) @ R.T)
    cw = np.array(cw)
    cc = np.array(cc)
    for c in range(class_count):
        cw[cc == c] /= cw[cc == c].sum()
    cov = np.array(cov)
    cov = 0.5 * (cov + cov.transpose(0, 2, 1))
    return GmmWorld(cc, cw, np.array(mu), cov, class_count=class_count, seed=seed)


def single_gaussian_world(mean=(0.0, 0.0), cov=((1.0, 0.0), (0.0, 1.0))):
    return GmmWorld([0], [1.0], [mean], [cov], class_count=1)


def log_density(world, sample, classes=None):
    return world.log_density(sample, classes)


def enumerate_final_distribution(world, paradigm, actions, cls, T=None):
    """Exact distribution over all V**G final grids for a fixed action sequence.

    ``actions`` is a list of per-step dicts of scalars. Supports ``ar`` and
    ``maskgit`` with zero masking temperature (deterministic ranking).
    """
    from . import samplers

    if paradigm not in ("ar", "maskgit"):
        raise ValueError(f"enumeration supports ar/maskgit, not {paradigm!r}")
    T = len(actions) if T is None else T
    frontier = {tuple([-1] * world.G): 1.0}
    for t in range(T):
        act = actions[t]
        if paradigm == "maskgit" and act.get("zeta", 0.0) != 0.0:
            raise ValueError("stochastic remasking (zeta > 0) cannot be enumerated")
        nxt = {}
        for grid, p in frontier.items():
            for child, q in samplers.transition_support(world, paradigm, np.array(grid), cls, act, t, T):
                nxt[child] = nxt.get(child, 0.0) + p * q
        frontier = nxt
    out = np.zeros(world.K)
    for grid, p in frontier.items():
        if min(grid) < 0:
            raise ValueError("action sequence does not complete the grid")
        out[world.index_of(np.array(grid))] += p
    return out
