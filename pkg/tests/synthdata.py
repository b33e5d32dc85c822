"""Synthetic dataset constructions shared by the unit and acceptance tests."""

import numpy as np

from cgmvae.data import Dataset, split


def factor_dataset(n=200, dim=10, n_labels=3, k=3, margin=0.3, noise=0.1, seed=42):
    """Labels are margin-separated thresholded linear functions of x.

    Features are a noisy linear embedding of k latent factors, so the input
    is both linearly separable (logistic regression reaches ~1.0) and
    reconstructable from a low-dimensional code.
    """
    gen = np.random.default_rng(seed)
    mix = gen.normal(size=(k, dim))
    cvec = gen.normal(size=(k, n_labels))
    cvec /= np.linalg.norm(cvec, axis=0)
    us = []
    while len(us) < n:
        u = gen.normal(size=(k,))
        if np.all(np.abs(u @ cvec) > margin):
            us.append(u)
    u = np.vstack(us)
    x = u @ mix + noise * gen.normal(size=(n, dim))
    y = (u @ cvec > 0).astype(np.int8)
    return x, y


def clustered_dataset(n=400, dim=24, n_labels=4, seed=42):
    """Mostly-exclusive cluster labels with per-cluster low-rank variation."""
    gen = np.random.default_rng(seed)
    protos = gen.normal(size=(n_labels, dim)) * 1.6
    basis = gen.normal(size=(n_labels, 5, dim)) * 0.45
    xs, ys = [], []
    for _ in range(n):
        k = int(gen.choice(n_labels))
        y = np.zeros(n_labels, dtype=np.int8)
        y[k] = 1
        if gen.random() < 0.15:
            y[int(gen.choice(n_labels))] = 1
        active = np.flatnonzero(y)
        x = protos[active].mean(axis=0) + gen.normal(size=5) @ basis[active[0]] \
            + 0.5 * gen.normal(size=dim)
        xs.append(x)
        ys.append(y)
    return np.vstack(xs), np.vstack(ys)


def cooccurrence_dataset(n=240, dim=12, seed=0):
    """Classes 0 and 1 always co-occur; class 2 follows an independent factor."""
    gen = np.random.default_rng(seed)
    mix = gen.normal(size=(2, dim))
    xs, ys = [], []
    while len(xs) < n:
        u = gen.normal(size=2)
        if min(abs(u)) < 0.25:
            continue
        both, third = u[0] > 0, u[1] > 0
        ys.append([int(both), int(both), int(third)])
        xs.append(u @ mix + 0.1 * gen.normal(size=dim))
    return np.vstack(xs), np.asarray(ys, dtype=np.int8)


def as_split_dataset(x, y, seed=0, fractions=(0.8, 0.1, 0.1)):
    ds = Dataset(features=x, labels=y, split=np.zeros(len(x), dtype=np.int8))
    return split(ds, fractions, seed=seed)
