"""Small binary instances shared by the MIP tests and the acceptance suite."""

import numpy as np

from racadmm.generators import GraphSpec, MarkowitzSpec, QapSpec, gen_markowitz, gen_maxbisection, gen_maxcut, gen_qap


def triangle():
    return gen_maxcut(GraphSpec(3, ((0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0))))


def weighted_path(n=6):
    return gen_maxcut(GraphSpec(n, tuple((i, i + 1, float(i + 1)) for i in range(n - 1))))


def random_graph_edges(n, density, seed):
    rng = np.random.default_rng(seed)
    return tuple((i, j, float(rng.integers(1, 5))) for i in range(n) for j in range(i + 1, n)
                 if rng.random() < density)


def random_maxcut(n=12, seed=3):
    return gen_maxcut(GraphSpec(n, random_graph_edges(n, 0.5, seed)))


def bisection(n=8, seed=1):
    return gen_maxbisection(GraphSpec(n, random_graph_edges(n, 0.6, seed)))


def binary_markowitz(n=10, r=5, seed=0):
    rng = np.random.default_rng(seed)
    R = rng.normal(0.01, 0.05, size=(60, n))
    return gen_markowitz(MarkowitzSpec(R=R, cardinality=r, kappa=1e-3))


def qap_data(r=3, seed=0):
    rng = np.random.default_rng(seed)
    F = rng.integers(0, 10, size=(r, r)).astype(float)
    D = rng.integers(1, 10, size=(r, r)).astype(float)
    np.fill_diagonal(F, 0.0)
    np.fill_diagonal(D, 0.0)
    return F, D


def binary_qap(r=3, seed=0):
    F, D = qap_data(r, seed)
    return gen_qap(QapSpec(F, D, relaxed=False))


CORPUS = {
    "maxcut_triangle": triangle,
    "maxcut_path6": weighted_path,
    "maxcut_random12": random_maxcut,
    "maxbisection8": bisection,
    "markowitz_binary10_r5": binary_markowitz,
    "qap_r3": binary_qap,
}
