"""The four training loss terms and their weighted combination.

Conventions, fixed here and relied on by the tests:

* Every term is a per-sample mean. Rows whose label vector is all zero are
  skipped by the KL and contrastive terms (their mixture/positive sets are
  undefined) but still contribute to reconstruction and cross-entropy.
* The contrastive term L2-normalizes both embeddings; the cross-entropy term
  and the prediction rule use raw inner products.
* Stability: the mixture density and contrastive denominator both go through
  log-sum-exp; cross-entropy uses the log-sigmoid identity, so every term is
  finite for finite parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Batch
from .errors import EmptyMixtureError, ShapeError
from .model import (
    Gaussians,
    ModelConfig,
    ModelParams,
    decode,
    encode_features,
    encode_labels,
    reconstruct,
    sample_posterior,
)

_LOG_2PI = float(np.log(2.0 * np.pi))
_MASK_OFF = -1e30  # finite stand-in for -inf; exp() underflows to exactly 0


@dataclass
class LossBreakdown:
    """Scalar values of each term plus the tape nodes that produced them.

    The ``kl`` and ``recon`` terms are per-latent-dimension and per-feature
    means respectively (raw per-sample sums divided by d and D), which keeps
    all four terms at comparable scale; ``kl`` also carries any warm-up
    weight applied by the trainer. ``total == (kl + recon) +
    alpha*contrastive - beta*ce`` holds exactly in floating point because the
    combination is computed in that association order.
    """

    kl: float
    recon: float
    contrastive: float
    ce: float
    total: float
    nodes: dict[str, Tensor]


def _as_row(t: Tensor) -> Tensor:
    return ad.reshape(t, (1, t.data.size)) if t.data.ndim == 1 else t


def diag_gaussian_log_density(z: Tensor, mean: Tensor, logvar: Tensor) -> Tensor:
    """Row-wise log N(z | mean, diag(exp(logvar))) for aligned (B, d) tensors."""
    diff = ad.sub(z, mean)
    quad = ad.mul(ad.mul(diff, diff), ad.exp(ad.negate(logvar)))
    inner = ad.sum(ad.add(logvar, quad), axis=1)
    d = z.data.shape[1]
    return ad.add_const(ad.scale(inner, -0.5), -0.5 * d * _LOG_2PI)


def pairwise_gaussian_log_density(z: Tensor, mean: Tensor, logvar: Tensor) -> Tensor:
    """log N(z_b | mean_i, diag(exp(logvar_i))) for every (sample, component) pair.

    The quadratic form is expanded into three matrix products so the whole
    (B, L) table differentiates through two matmuls.
    """
    if z.data.shape[1] != mean.data.shape[1]:
        raise ShapeError(f"latent dims differ: {z.data.shape} vs {mean.data.shape}")
    einv = ad.exp(ad.negate(logvar))                                   # (L, d)
    p1 = ad.matmul(ad.mul(z, z), ad.transpose(einv))                   # sum_j z^2 / sigma^2
    p2 = ad.matmul(z, ad.transpose(ad.mul(mean, einv)))                # sum_j z mu / sigma^2
    row = ad.sum(ad.add(logvar, ad.mul(ad.mul(mean, mean), einv)), axis=1)  # (L,)
    quad = ad.add_bias(ad.sub(p1, ad.scale(p2, 2.0)), row)             # (B, L)
    d = z.data.shape[1]
    return ad.add_const(ad.scale(quad, -0.5), -0.5 * d * _LOG_2PI)


def mixture_log_prior_rows(z: Tensor, y: np.ndarray, label_gaussians: Gaussians) -> Tensor:
    """Per-sample log density of the label-activated mixture, shape (B,).

    Each sample's positive labels select mixture components with equal weight
    1/|positives|. Rows with no positives get a meaningless finite value;
    callers must weight them out.
    """
    log_n = pairwise_gaussian_log_density(z, label_gaussians.mean, label_gaussians.logvar)
    mask = np.where(y > 0, 0.0, _MASK_OFF)
    lse = ad.logsumexp(ad.add(log_n, ad.constant(mask)), axis=1)
    counts = np.maximum(y.sum(axis=1), 1.0)
    return ad.sub(lse, ad.constant(np.log(counts)))


def mixture_log_prior(z0: Tensor, y: np.ndarray, label_gaussians: Gaussians) -> Tensor:
    """Scalar log p(z0 | y) for one sample; raises on an empty label set.

    Unlike the batched path, the quadratic form here is evaluated directly as
    (z - mu)^2 / sigma^2, so the density at a component mean is exact.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.sum() < 1:
        raise EmptyMixtureError("label set has no positive entries")
    mean, logvar = label_gaussians.mean, label_gaussians.logvar
    n_components, d = mean.data.shape
    z = ad.repeat_rows(_as_row(z0), n_components)                      # (L, d)
    diff = ad.sub(z, mean)
    quad = ad.mul(ad.mul(diff, diff), ad.exp(ad.negate(logvar)))
    log_n = ad.add_const(ad.scale(ad.sum(ad.add(logvar, quad), axis=1), -0.5),
                         -0.5 * d * _LOG_2PI)                          # (L,)
    mask = np.where(y > 0, 0.0, _MASK_OFF)
    lse = ad.logsumexp(ad.add(log_n, ad.constant(mask)))
    return ad.add_const(lse, -float(np.log(y.sum())))


def kl_loss(posterior: Gaussians, z0: Tensor, y: np.ndarray,
            label_gaussians: Gaussians) -> Tensor:
    """Single-sample KL estimate log q(z0|x) - log p(z0|y) for one row."""
    z = _as_row(z0)
    q = diag_gaussian_log_density(z, _as_row(posterior.mean), _as_row(posterior.logvar))
    p = mixture_log_prior(z0, y, label_gaussians)
    return ad.sub(ad.sum(q), p)


def recon_loss(x: Tensor, xhat: Tensor) -> Tensor:
    """Half the batch-mean squared reconstruction error (unit-variance Gaussian NLL)."""
    if x.data.shape != xhat.data.shape:
        raise ShapeError(f"recon shapes differ: {x.data.shape} vs {xhat.data.shape}")
    b = x.data.shape[0]
    diff = ad.sub(x, xhat)
    return ad.scale(ad.sum(ad.mul(diff, diff)), 0.5 / b)


def contrastive_loss(w: Tensor, label_emb: Tensor, y: np.ndarray, tau: float) -> Tensor:
    """Softmax contrast of each feature embedding against all label classes.

    Both sides are L2-normalized; per sample the loss averages
    ``-log softmax(v_x . v_p / tau)`` over positive classes ``p``, with the
    denominator running over all L classes. Rows without positives are
    excluded; the batch value is the mean over included rows.
    """
    y = np.asarray(y, dtype=np.float64)
    counts = y.sum(axis=1)
    valid = counts > 0
    n_valid = int(valid.sum())
    if n_valid == 0:
        return ad.constant(0.0)
    vx = ad.l2_normalize(w)
    vl = ad.l2_normalize(label_emb)
    sims = ad.scale(ad.matmul(vx, ad.transpose(vl)), 1.0 / tau)        # (B, L)
    lse = ad.logsumexp(sims, axis=1)                                   # (B,)
    pos_w = np.where(valid[:, None], y / np.maximum(counts, 1.0)[:, None], 0.0)
    pos_mean = ad.sum(ad.mul(sims, ad.constant(pos_w)), axis=1)        # (B,)
    per_sample = ad.sub(lse, pos_mean)
    sample_w = np.where(valid, 1.0 / n_valid, 0.0)
    return ad.sum(ad.mul(per_sample, ad.constant(sample_w)))


def ce_loglik(w: Tensor, label_emb: Tensor, y: np.ndarray) -> Tensor:
    """Batch-mean Bernoulli log-likelihood on raw inner products (a value <= 0)."""
    y = np.asarray(y, dtype=np.float64)
    logits = ad.matmul(w, ad.transpose(label_emb))
    pos = ad.mul(ad.log_sigmoid(logits), ad.constant(y))
    neg = ad.mul(ad.log_sigmoid(ad.negate(logits)), ad.constant(1.0 - y))
    b = y.shape[0]
    return ad.scale(ad.sum(ad.add(pos, neg)), 1.0 / b)


def batch_kl_loss(posterior: Gaussians, z0: Tensor, y: np.ndarray,
                  label_gaussians: Gaussians | None, prior: str) -> Tensor:
    """Batch-mean single-sample KL estimate under either prior."""
    lq = diag_gaussian_log_density(z0, posterior.mean, posterior.logvar)
    if prior == "standard":
        zeros = ad.constant(np.zeros_like(z0.data))
        lp = diag_gaussian_log_density(z0, zeros, zeros)
        weights = np.full(y.shape[0], 1.0 / y.shape[0])
    else:
        lp = mixture_log_prior_rows(z0, y, label_gaussians)
        valid = y.sum(axis=1) > 0
        n_valid = int(valid.sum())
        if n_valid == 0:
            return ad.constant(0.0)
        weights = np.where(valid, 1.0 / n_valid, 0.0)
    return ad.sum(ad.mul(ad.sub(lq, lp), ad.constant(weights)))


def total_objective(batch: Batch, params: ModelParams, config: ModelConfig,
                    sample_rng: np.random.Generator,
                    dropout_rng: np.random.Generator | None = None,
                    training: bool = True,
                    kl_scale: float = 1.0) -> LossBreakdown:
    """Full forward pass: KL + recon + alpha*contrastive - beta*ce.

    The KL and reconstruction estimates are divided by their dimension counts
    (latent d and feature D); at raw per-sample sums the reconstruction term
    dwarfs the label terms by orders of magnitude and training settles into
    the collapsed posterior. ``kl_scale`` is the trainer's warm-up weight.
    """
    x = ad.constant(batch.features)
    y = np.asarray(batch.labels, dtype=np.float64)

    label_gaussians = encode_labels(params, config) if config.prior == "mixture" else None
    posterior = encode_features(params, config, x, dropout_rng, training)
    z0 = sample_posterior(posterior, sample_rng)
    w = decode(params, config, z0, dropout_rng, training)
    xhat = reconstruct(params, w)

    kl_t = ad.scale(batch_kl_loss(posterior, z0, y, label_gaussians, config.prior),
                    kl_scale / config.latent_dim)
    recon_t = ad.scale(recon_loss(x, xhat), 1.0 / config.input_dim)
    cl_t = contrastive_loss(w, params["label_emb"], y, config.tau)
    ce_t = ce_loglik(w, params["label_emb"], y)

    total_t = ad.sub(
        ad.add(ad.add(kl_t, recon_t), ad.scale(cl_t, config.alpha)),
        ad.scale(ce_t, config.beta),
    )
    return LossBreakdown(
        kl=kl_t.item(),
        recon=recon_t.item(),
        contrastive=cl_t.item(),
        ce=ce_t.item(),
        total=total_t.item(),
        nodes={"kl": kl_t, "recon": recon_t, "contrastive": cl_t, "ce": ce_t, "total": total_t},
    )
