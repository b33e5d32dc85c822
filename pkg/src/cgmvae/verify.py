"""Independent oracles: finite differences, closed forms, and brute-force metrics.

Nothing here reuses the computational path it checks. Finite differences use
their own central-difference loop; the contrastive gradient is evaluated from
its closed-form expression; the Monte-Carlo KL comparison uses the textbook
diagonal-Gaussian formula; the metric oracles are plain double loops.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import losses
from .autodiff import Tape, Tensor
from .data import Batch
from .errors import DegenerateEmbeddingError, OracleInvalidError
from .model import Gaussians, ModelConfig, ModelParams

DEFAULT_H = 1e-5


def rel_err(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """|a - b| / max(|a|, |b|, 1e-8), elementwise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def finite_diff_grad(f: Callable[[np.ndarray], float], theta: np.ndarray,
                     h: float = DEFAULT_H) -> np.ndarray:
    """Central differences (f(t+h e_i) - f(t-h e_i)) / 2h per coordinate.

    ``f`` must be deterministic; it is evaluated twice up front and a mismatch
    raises, since a drifting objective makes the differences meaningless.
    """
    theta = np.asarray(theta, dtype=np.float64)
    first, second = f(theta), f(theta)
    if first != second:
        raise OracleInvalidError(
            f"objective is not deterministic under repeated evaluation ({first} vs {second})"
        )
    grad = np.empty_like(theta)
    probe = theta.copy()
    for i in range(theta.size):
        orig = probe[i]
        probe[i] = orig + h
        up = f(probe)
        probe[i] = orig - h
        down = f(probe)
        probe[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# closed-form contrastive gradient


def analytic_cl_gradient(w: np.ndarray, label_emb: np.ndarray, y: np.ndarray,
                         tau: float) -> np.ndarray:
    """Closed-form d(contrastive)/d(w) for one sample.

    With v = w/||w|| and normalized label rows V_t, the gradient w.r.t. v is
    (1/tau) [ sum_{t in P} V_t (softmax_t - 1/|P|) + sum_{t not in P} V_t softmax_t ]
    and the normalization maps it back through (I - v v^T) / ||w||.
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    label_emb = np.asarray(label_emb, dtype=np.float64)
    y = np.asarray(y).reshape(-1)
    pos = np.flatnonzero(y == 1)
    if pos.size == 0:
        raise OracleInvalidError("analytic contrastive gradient needs >= 1 positive label")
    wn = np.linalg.norm(w)
    ln = np.linalg.norm(label_emb, axis=1)
    if wn <= 1e-12 or np.any(ln <= 1e-12):
        raise DegenerateEmbeddingError("zero-norm embedding in analytic gradient")
    v = w / wn
    vl = label_emb / ln[:, None]
    s = vl @ v / tau
    s_shift = np.exp(s - s.max())
    soft = s_shift / s_shift.sum()
    coeff = soft.copy()
    coeff[pos] -= 1.0 / pos.size
    g_v = (vl * coeff[:, None]).sum(axis=0) / tau
    return (g_v - (g_v @ v) * v) / wn


def cl_gradient_cross_check(n_instances: int = 100, n_labels: int = 5,
                            embed_dim: int = 7, tau: float = 0.5,
                            seed: int = 0) -> float:
    """Max relative error between the closed form and the tape gradient."""
    gen = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        w = gen.normal(size=embed_dim)
        emb = gen.normal(size=(n_labels, embed_dim))
        y = np.zeros(n_labels)
        y[gen.choice(n_labels, size=gen.integers(1, n_labels + 1), replace=False)] = 1
        analytic = analytic_cl_gradient(w, emb, y, tau)

        w_t = Tensor(w.reshape(1, -1), requires_grad=True)
        with Tape() as tape:
            loss = losses.contrastive_loss(w_t, Tensor(emb), y.reshape(1, -1), tau)
        tape.backward(loss)
        worst = max(worst, float(rel_err(analytic, w_t.grad.reshape(-1)).max()))
    return worst


# ---------------------------------------------------------------------------
# two-class identity


class TripletCheck(NamedTuple):
    lhs: float
    rhs: float
    diff: float
    first_order: float
    first_order_gap: float


def triplet_identity_check(v_x: np.ndarray, v_pos: np.ndarray,
                           v_neg: np.ndarray) -> TripletCheck:
    """Two-class contrastive loss against log(1 + exp(2 v.(v- - v+))) at tau = 1/2.

    The identity is exact and is asserted to 1e-12. The squared-distance
    first-order form ||v-v+||^2 + ||v-v-||^2 + 1 is only an approximation and
    is reported, not asserted.
    """
    for name, v in (("v_x", v_x), ("v_pos", v_pos), ("v_neg", v_neg)):
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise OracleInvalidError(f"{name} must be unit-norm")
    emb = Tensor(np.vstack([v_pos, v_neg]))
    y = np.array([[1.0, 0.0]])
    lhs = losses.contrastive_loss(Tensor(np.asarray(v_x).reshape(1, -1)), emb, y, 0.5).item()
    rhs = float(np.log1p(np.exp(2.0 * np.dot(v_x, v_neg) - 2.0 * np.dot(v_x, v_pos))))
    diff = abs(lhs - rhs)
    first_order = float(np.sum((v_x - v_pos) ** 2) + np.sum((v_x - v_neg) ** 2) + 1.0)
    if diff >= 1e-12:
        raise AssertionError(f"two-class identity violated: lhs={lhs!r} rhs={rhs!r}")
    return TripletCheck(lhs, rhs, diff, first_order, abs(lhs - first_order))


# ---------------------------------------------------------------------------
# Monte-Carlo KL vs the closed form


def closed_form_diag_kl(mu_q, logvar_q, mu_p, logvar_p) -> float:
    """KL(q || p) between diagonal Gaussians, 0.5 * sum over dims."""
    mu_q, logvar_q = np.asarray(mu_q, dtype=float), np.asarray(logvar_q, dtype=float)
    mu_p, logvar_p = np.asarray(mu_p, dtype=float), np.asarray(logvar_p, dtype=float)
    var_q, var_p = np.exp(logvar_q), np.exp(logvar_p)
    return float(0.5 * np.sum(var_q / var_p + (mu_p - mu_q) ** 2 / var_p - 1.0
                              + logvar_p - logvar_q))


def mc_kl_convergence(mu_q, logvar_q, mu_p, logvar_p, n_samples: int = 100_000,
                      seed: int = 0) -> tuple[float, float]:
    """(empirical mean of the single-sample estimator, analytic KL).

    The empirical side runs the implementation's estimator: reparameterized
    draws from q scored by log q - log p with a single-component prior.
    """
    gen = np.random.default_rng(seed)
    mu_q = np.asarray(mu_q, dtype=float).reshape(1, -1)
    logvar_q = np.asarray(logvar_q, dtype=float).reshape(1, -1)
    mu_p = np.asarray(mu_p, dtype=float).reshape(1, -1)
    logvar_p = np.asarray(logvar_p, dtype=float).reshape(1, -1)
    d = mu_q.shape[1]
    eps = gen.standard_normal((n_samples, d))
    z = Tensor(mu_q + np.exp(0.5 * logvar_q) * eps)
    lq = losses.diag_gaussian_log_density(
        z, Tensor(np.repeat(mu_q, n_samples, axis=0)),
        Tensor(np.repeat(logvar_q, n_samples, axis=0)))
    prior = Gaussians(Tensor(mu_p), Tensor(logvar_p))
    lp = losses.mixture_log_prior_rows(z, np.ones((n_samples, 1)), prior)
    empirical = float(np.mean(lq.data - lp.data))
    return empirical, closed_form_diag_kl(mu_q, logvar_q, mu_p, logvar_p)


# ---------------------------------------------------------------------------
# brute-force metric reimplementations. Counting and the 0/0 rules are pure
# python loops; only the final mean over per-sample/per-class values uses the
# same np.mean reduction as the implementation, so agreement can be asserted
# bitwise (pairwise vs sequential float summation would otherwise differ in
# the last ulp).


def bf_hamming_accuracy(y, yhat) -> float:
    n, L = len(y), len(y[0])
    per_sample = []
    for i in range(n):
        hits = 0
        for j in range(L):
            if y[i][j] == yhat[i][j]:
                hits += 1
        per_sample.append(hits / L)
    return float(np.mean(per_sample))


def bf_example_f1(y, yhat) -> float:
    n, L = len(y), len(y[0])
    per_sample = []
    for i in range(n):
        inter = sum(1 for j in range(L) if y[i][j] == 1 and yhat[i][j] == 1)
        denom = sum(y[i]) + sum(yhat[i])
        per_sample.append(1.0 if denom == 0 else 2.0 * inter / denom)
    return float(np.mean(per_sample))


def _bf_counts(y, yhat, j):
    tp = sum(1 for i in range(len(y)) if y[i][j] == 1 and yhat[i][j] == 1)
    fp = sum(1 for i in range(len(y)) if y[i][j] == 0 and yhat[i][j] == 1)
    fn = sum(1 for i in range(len(y)) if y[i][j] == 1 and yhat[i][j] == 0)
    return tp, fp, fn


def bf_micro_f1(y, yhat) -> float:
    L = len(y[0])
    tp = fp = fn = 0
    for j in range(L):
        a, b, c = _bf_counts(y, yhat, j)
        tp, fp, fn = tp + a, fp + b, fn + c
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else float(2.0 * tp / denom)


def bf_macro_f1(y, yhat) -> float:
    L = len(y[0])
    per_class = []
    for j in range(L):
        tp, fp, fn = _bf_counts(y, yhat, j)
        denom = 2 * tp + fp + fn
        per_class.append(0.0 if denom == 0 else 2.0 * tp / denom)
    return float(np.mean(per_class))


def bf_precision_at_1(probs, y) -> float:
    n = len(probs)
    per_sample = []
    for i in range(n):
        best_j = 0
        for j in range(1, len(probs[i])):
            if probs[i][j] > probs[i][best_j]:
                best_j = j
        per_sample.append(1.0 if y[i][best_j] == 1 else 0.0)
    return float(np.mean(per_sample))


# ---------------------------------------------------------------------------
# the full gradient-check suite


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    per_param: dict
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    checks: list[CheckResult] = field(default_factory=list)
    histogram: dict = field(default_factory=dict)
    passed: bool = True

    def add(self, result: CheckResult):
        self.checks.append(result)
        self.passed = self.passed and result.passed

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "max_rel_err": c.max_rel_err,
                 "per_param": c.per_param, "passed": c.passed}
                for c in self.checks
            ],
            "histogram": self.histogram,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            tag = "ok  " if c.passed else "FAIL"
            lines.append(f"[{tag}] {c.name:<24} max rel err {c.max_rel_err:.3e}")
        lines.append(f"overall: {'pass' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _toy_problem(seed: int):
    """B=4 batch, D=3 features, L=3 labels, d=4 latent, E=8 embeddings."""
    config = ModelConfig(
        input_dim=3, n_labels=3, embed_dim=8, latent_dim=4,
        feature_hidden=(6, 6, 6), label_hidden=(6, 6), decoder_hidden=(6, 6),
        dropout=0.0, tau=0.5, alpha=1.0, beta=0.5,
    )
    params = ModelParams.init(config, seed)
    gen = np.random.default_rng(seed + 1)
    x = gen.normal(size=(4, 3))
    y = np.zeros((4, 3))
    for i in range(4):
        y[i, gen.choice(3, size=gen.integers(1, 3), replace=False)] = 1.0
    batch = Batch(features=x, labels=y, row_indices=np.arange(4))
    return config, params, batch


def _histogram(errors: np.ndarray) -> dict:
    bins = {}
    for decade in range(-16, 1):
        lo, hi = 10.0 ** decade, 10.0 ** (decade + 1)
        n = int(np.sum((errors >= lo) & (errors < hi)))
        if n:
            bins[f"1e{decade}..1e{decade + 1}"] = n
    bins["<=1e-16"] = int(np.sum(errors < 1e-16))
    return bins


def run_gradcheck(tolerance: float = 1e-4, seed: int = 2, h: float = DEFAULT_H,
                  sampling_seed: int = 123) -> GradCheckReport:
    """Check every loss term and the total against central finite differences.

    Dropout is off and the latent draw is frozen per evaluation, so the
    objective is deterministic in the parameters. Also cross-checks the
    closed-form contrastive gradient.
    """
    config, params, batch = _toy_problem(seed)
    report = GradCheckReport(tolerance=tolerance)
    theta0 = params.pack()
    slices = {}
    pos = 0
    for name, t in params.items():
        slices[name] = slice(pos, pos + t.data.size)
        pos += t.data.size
    all_errors = []

    for term in ("kl", "recon", "contrastive", "ce", "total"):
        def f(theta, _term=term):
            params.unpack(theta)
            bd = losses.total_objective(batch, params, config,
                                        np.random.default_rng(sampling_seed),
                                        training=False)
            return getattr(bd, _term)

        numeric = finite_diff_grad(f, theta0, h=h)
        params.unpack(theta0)
        params.zero_grad()
        with Tape() as tape:
            bd = losses.total_objective(batch, params, config,
                                        np.random.default_rng(sampling_seed),
                                        training=False)
        tape.backward(bd.nodes[term])
        tape_grad = params.pack_grads()
        errs = rel_err(tape_grad, numeric)
        all_errors.append(errs)
        per_param = {n: float(errs[s].max()) for n, s in slices.items()}
        worst = float(errs.max())
        report.add(CheckResult(name=term, max_rel_err=worst,
                               per_param=per_param, passed=worst < tolerance))

    cl_worst = cl_gradient_cross_check(n_instances=25, seed=seed)
    report.add(CheckResult(name="contrastive_closed_form", max_rel_err=cl_worst,
                           per_param={"w_x_f": cl_worst}, passed=cl_worst < 1e-6))

    report.histogram = _histogram(np.concatenate(all_errors))
    params.unpack(theta0)
    return report
