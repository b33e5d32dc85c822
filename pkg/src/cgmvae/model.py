"""The label-mixture VAE with contrastive embeddings.

One learnable embedding per label class feeds a label encoder that maps it to
a diagonal Gaussian over the latent space. Features pass through their own
encoder to a posterior Gaussian; a decoder turns latent samples into a
feature embedding whose inner products with the label embeddings drive both
the contrastive term and the sigmoid prediction rule.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from . import rng
from .autodiff import Tensor
from .errors import CheckpointError, ConfigError, DegenerateEmbeddingError, NumericDomainError
from .fileio import atomic_write_bytes

LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0

CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    input_dim: int
    n_labels: int
    embed_dim: int = 2048
    latent_dim: int = 64
    feature_hidden: tuple = (256, 512, 256)
    label_hidden: tuple = (512, 256)
    decoder_hidden: tuple = (512, 512)
    dropout: float = 0.5
    tau: float = 0.5
    alpha: float = 1.0
    beta: float = 0.5
    prior: str = "mixture"   # "mixture" or "standard" (ablation baseline)

    def __post_init__(self):
        self.feature_hidden = tuple(int(h) for h in self.feature_hidden)
        self.label_hidden = tuple(int(h) for h in self.label_hidden)
        self.decoder_hidden = tuple(int(h) for h in self.decoder_hidden)
        for name in ("input_dim", "n_labels", "embed_dim", "latent_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.prior not in ("mixture", "standard"):
            raise ConfigError(f"prior must be 'mixture' or 'standard', got {self.prior!r}")


class Gaussians(NamedTuple):
    """Rows of diagonal Gaussians: (R, d) means and (R, d) log variances."""

    mean: Tensor
    logvar: Tensor


def _layer_dims(config: ModelConfig):
    two_d = 2 * config.latent_dim
    return {
        "lenc": [config.embed_dim, *config.label_hidden, two_d],
        "fenc": [config.input_dim, *config.feature_hidden, two_d],
        "dec": [config.latent_dim, *config.decoder_hidden, config.embed_dim],
        "recon": [config.embed_dim, config.input_dim],
    }


class ModelParams:
    """All learnable arrays keyed by name, in a fixed order."""

    def __init__(self, tensors: dict[str, Tensor]):
        self._tensors = tensors

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "ModelParams":
        return cls({n: Tensor(a.copy(), requires_grad=True) for n, a in arrays.items()})

    @classmethod
    def init(cls, config: ModelConfig, seed: int) -> "ModelParams":
        """He-init the MLP weights, zero biases, Gaussian label embeddings."""
        gen = rng.stream(seed, "init")
        tensors: dict[str, Tensor] = {}
        emb_std = config.embed_dim ** -0.25  # variance 1/sqrt(E)
        tensors["label_emb"] = Tensor(
            gen.normal(0.0, emb_std, size=(config.n_labels, config.embed_dim)),
            requires_grad=True,
        )
        for stack, dims in _layer_dims(config).items():
            for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
                w = gen.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
                tensors[f"{stack}{i}_w"] = Tensor(w, requires_grad=True)
                tensors[f"{stack}{i}_b"] = Tensor(np.zeros(fan_out), requires_grad=True)
        return cls(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def zero_grad(self):
        for t in self._tensors.values():
            t.zero_grad()

    @property
    def n_params(self) -> int:
        return sum(t.data.size for t in self._tensors.values())

    def pack(self) -> np.ndarray:
        """All parameter values as one flat vector, in name order."""
        return np.concatenate([t.data.ravel() for t in self._tensors.values()])

    def unpack(self, vec: np.ndarray):
        """Write a flat vector back into the parameter arrays, in place."""
        pos = 0
        for t in self._tensors.values():
            n = t.data.size
            t.data[...] = vec[pos:pos + n].reshape(t.data.shape)
            pos += n
        if pos != vec.size:
            raise ConfigError(f"vector length {vec.size} != parameter count {pos}")

    def pack_grads(self) -> np.ndarray:
        return np.concatenate([t.grad.ravel() for t in self._tensors.values()])

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._tensors.items()}

    def restore(self, snap: dict[str, np.ndarray]):
        for n, t in self._tensors.items():
            t.data[...] = snap[n]

    def all_finite(self) -> bool:
        return all(np.isfinite(t.data).all() for t in self._tensors.values())


def _mlp(params: ModelParams, stack: str, n_layers: int, x: Tensor,
         dropout_rate: float = 0.0, gen: np.random.Generator | None = None,
         training: bool = False) -> Tensor:
    """Hidden layers are linear+ReLU (+dropout when enabled); final layer is linear."""
    h = x
    for i in range(n_layers):
        h = ad.add_bias(ad.matmul(h, params[f"{stack}{i}_w"]), params[f"{stack}{i}_b"])
        if not np.isfinite(h.data).all():
            raise NumericDomainError(f"{stack} layer {i} produced non-finite values")
        if i < n_layers - 1:
            h = ad.relu(h)
            if dropout_rate > 0.0:
                h = ad.dropout(h, dropout_rate, gen, training)
    return h


def encode_labels(params: ModelParams, config: ModelConfig) -> Gaussians:
    """Map every label embedding to its latent Gaussian (means + clamped logvars)."""
    n_layers = len(config.label_hidden) + 1
    out = _mlp(params, "lenc", n_layers, params["label_emb"])
    d = config.latent_dim
    mean = ad.slice_cols(out, 0, d)
    logvar = ad.clamp(ad.slice_cols(out, d, 2 * d), LOGVAR_MIN, LOGVAR_MAX)
    return Gaussians(mean, logvar)


def encode_features(params: ModelParams, config: ModelConfig, x: Tensor,
                    gen: np.random.Generator | None = None,
                    training: bool = False) -> Gaussians:
    """Per-sample posterior Gaussian from normalized features."""
    n_layers = len(config.feature_hidden) + 1
    out = _mlp(params, "fenc", n_layers, x, config.dropout, gen, training)
    d = config.latent_dim
    mean = ad.slice_cols(out, 0, d)
    logvar = ad.clamp(ad.slice_cols(out, d, 2 * d), LOGVAR_MIN, LOGVAR_MAX)
    return Gaussians(mean, logvar)


def sample_posterior(g: Gaussians, gen: np.random.Generator) -> Tensor:
    """Reparameterized draw z = mu + exp(logvar/2) * eps; grads reach mu and logvar."""
    eps = ad.constant(gen.standard_normal(g.mean.shape))
    return ad.add(g.mean, ad.mul(ad.exp(ad.scale(g.logvar, 0.5)), eps))


def decode(params: ModelParams, config: ModelConfig, z: Tensor,
           gen: np.random.Generator | None = None, training: bool = False) -> Tensor:
    """Latent rows to feature embeddings, (B, d) -> (B, E)."""
    n_layers = len(config.decoder_hidden) + 1
    return _mlp(params, "dec", n_layers, z, config.dropout, gen, training)


def reconstruct(params: ModelParams, w: Tensor) -> Tensor:
    """Linear head from feature embedding to the feature-space mean, (B, E) -> (B, D)."""
    return ad.add_bias(ad.matmul(w, params["recon0_w"]), params["recon0_b"])


def feature_embedding(params: ModelParams, config: ModelConfig, x_norm: np.ndarray) -> np.ndarray:
    """Deterministic test-time embedding: decode the posterior mean, dropout off."""
    x = ad.constant(np.asarray(x_norm, dtype=np.float64))
    posterior = encode_features(params, config, x, training=False)
    w = decode(params, config, posterior.mean, training=False)
    return w.data


def predict(params: ModelParams, config: ModelConfig, x_norm: np.ndarray,
            chunk: int = 2048) -> np.ndarray:
    """Class probabilities sigmoid(w_x . w_i) on raw (unnormalized) embeddings."""
    x_norm = np.asarray(x_norm, dtype=np.float64)
    out = np.empty((x_norm.shape[0], config.n_labels))
    emb = params["label_emb"].data
    for start in range(0, x_norm.shape[0], chunk):
        rows = slice(start, min(start + chunk, x_norm.shape[0]))
        w = feature_embedding(params, config, x_norm[rows])
        out[rows] = ad.sigmoid_values(w @ emb.T)
    return out


def export_label_similarity(params: ModelParams) -> np.ndarray:
    """L x L inner products of L2-normalized label embeddings, diagonal zeroed."""
    w = params["label_emb"].data
    norms = np.linalg.norm(w, axis=1, keepdims=True)
    if np.any(norms <= ad.NORM_EPS):
        bad = int(np.argmin(norms))
        raise DegenerateEmbeddingError(f"label embedding {bad} has near-zero norm")
    v = w / norms
    m = v @ v.T
    m = np.clip((m + m.T) / 2.0, -1.0, 1.0)  # force exact symmetry, bound |M| <= 1
    np.fill_diagonal(m, 0.0)
    return m


# ---------------------------------------------------------------------------
# checkpoints: one JSON header line, then all arrays as little-endian float32


def save_checkpoint(path: str, params: ModelParams, config: ModelConfig,
                    seed: int, epoch: int, label_names: list[str] | None = None,
                    extra_arrays: dict[str, np.ndarray] | None = None):
    """Write header + parameter blobs; ``extra_arrays`` (e.g. feature norm
    stats) ride along after the learnable parameters and round-trip via the
    same shape table."""
    entries = [(n, t.data) for n, t in params.items()]
    extra_names = []
    for n, arr in (extra_arrays or {}).items():
        entries.append((n, np.asarray(arr, dtype=np.float64)))
        extra_names.append(n)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": asdict(config),
        "params": [{"name": n, "shape": list(a.shape)} for n, a in entries],
        "extra": extra_names,
        "seed": int(seed),
        "epoch": int(epoch),
        "label_names": label_names,
    }
    blobs = [a.astype("<f4").tobytes() for _, a in entries]
    payload = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + b"".join(blobs)
    atomic_write_bytes(path, payload)


def load_checkpoint(path: str) -> tuple[ModelParams, ModelConfig, dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: bad header ({e})") from None
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')}")
    config = ModelConfig(**header["model_config"])
    body = raw[nl + 1:]
    extra_names = set(header.get("extra", []))
    tensors: dict[str, Tensor] = {}
    extras: dict[str, np.ndarray] = {}
    pos = 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 4
        if pos + nbytes > len(body):
            raise CheckpointError(f"{path}: truncated at parameter {entry['name']}")
        arr = np.frombuffer(body[pos:pos + nbytes], dtype="<f4").reshape(shape).astype(np.float64)
        if entry["name"] in extra_names:
            extras[entry["name"]] = arr
        else:
            tensors[entry["name"]] = Tensor(arr, requires_grad=True)
        pos += nbytes
    if pos != len(body):
        raise CheckpointError(f"{path}: {len(body) - pos} trailing bytes")
    meta = {"seed": header["seed"], "epoch": header["epoch"],
            "label_names": header.get("label_names"), "extra": extras}
    return ModelParams(tensors), config, meta


def check_compatible(config: ModelConfig, n_features: int, n_labels: int):
    if config.input_dim != n_features or config.n_labels != n_labels:
        raise CheckpointError(
            f"checkpoint expects D={config.input_dim}, L={config.n_labels}; "
            f"dataset has D={n_features}, L={n_labels}"
        )
