"""Mode-adaptive mixture-of-experts regressor.

Two single-hidden-layer perceptrons: a gating network maps a subset of the
input to K softmax blending coefficients, and the prediction network -- whose
weights are the coefficient-weighted sum of K expert weight sets -- maps the
full input to the target vector. Both use ELU hidden activations. The whole
composition, including gating and blending, is differentiable.
"""

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .features import GATING_SLICE, input_size, output_size


@dataclass
class MannConfig:
    n: int                      # joint count of the underlying model
    experts: int = 4
    gating_hidden: int = 32
    prediction_hidden: int = 512
    gating_slice: tuple = GATING_SLICE
    seed: int = 0

    def __post_init__(self):
        if self.experts < 1:
            raise ValueError("need at least one expert")
        self.gating_slice = tuple(self.gating_slice)

    @property
    def input_size(self):
        return input_size(self.n)

    @property
    def output_size(self):
        return output_size(self.n)

    @property
    def gating_input_size(self):
        return self.gating_slice[1] - self.gating_slice[0]


def desk_config(n=6, seed=0):
    """Small test-scale dimensions: 16/64 hidden units, 4 experts."""
    return MannConfig(n=n, experts=4, gating_hidden=16, prediction_hidden=64, seed=seed)


@dataclass
class MannParams:
    """Gating weights plus K expert weight sets, stored as (in, out) arrays."""

    gw1: np.ndarray             # (gating_in, gating_hidden)
    gb1: np.ndarray             # (1, gating_hidden)
    gw2: np.ndarray             # (gating_hidden, K)
    gb2: np.ndarray             # (1, K)
    ew1: np.ndarray             # (K, input, hidden)
    eb1: np.ndarray             # (K, hidden)
    ew2: np.ndarray             # (K, hidden, output)
    eb2: np.ndarray             # (K, output)

    def copy(self):
        return MannParams(**{k: v.copy() for k, v in self.__dict__.items()})

    def arrays(self):
        return dict(self.__dict__)


def init_params(config, seed=None):
    """Seed-controlled uniform initialization in +-sqrt(6/(fan_in+fan_out))."""
    rng = np.random.default_rng(config.seed if seed is None else seed)

    def glorot(fi, fo, *lead):
        limit = np.sqrt(6.0 / (fi + fo))
        return rng.uniform(-limit, limit, (*lead, fi, fo))

    K = config.experts
    gi, gh = config.gating_input_size, config.gating_hidden
    ni, nh, no = config.input_size, config.prediction_hidden, config.output_size
    return MannParams(
        gw1=glorot(gi, gh), gb1=np.zeros((1, gh)),
        gw2=glorot(gh, K), gb2=np.zeros((1, K)),
        ew1=glorot(ni, nh, K), eb1=np.zeros((K, nh)),
        ew2=glorot(nh, no, K), eb2=np.zeros((K, no)))


def _elu_np(x):
    return np.where(x < 0.0, np.expm1(np.minimum(x, 0.0)), x)


def _softmax_np(x):
    if np.size(x) == 0:
        raise ad.ShapeError("softmax of an empty vector")
    z = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def gating_forward(params, x_hat):
    """Blending coefficients for one gating input: a convex K-vector."""
    x_hat = np.asarray(x_hat, dtype=float).ravel()
    if x_hat.shape[0] != params.gw1.shape[0]:
        raise ad.ShapeError(
            f"gating input length {x_hat.shape[0]} != expected {params.gw1.shape[0]}")
    h = _elu_np(x_hat @ params.gw1 + params.gb1[0])
    return _softmax_np(h @ params.gw2 + params.gb2[0])


def blend_experts(theta, stacks):
    """Coefficient-weighted sums of expert tensors.

    Each element of ``stacks`` is a (K, ...) array; the matching blend is the
    sum over experts weighted by theta. Returns one blend per stack.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    out = []
    for stack in stacks:
        if stack.shape[0] != theta.shape[0]:
            raise ad.ShapeError(
                f"expert stack has {stack.shape[0]} experts, theta has {theta.shape[0]}")
        out.append(np.einsum("k,k...->...", theta, stack))
    return out


def predict(params, config, x):
    """Inference-path prediction for a single input vector."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != config.input_size:
        raise ad.ShapeError(
            f"input length {x.shape[0]} != expected {config.input_size}")
    a, b = config.gating_slice
    theta = gating_forward(params, x[a:b])
    w1, b1, w2, b2 = blend_experts(theta, (params.ew1, params.eb1,
                                           params.ew2, params.eb2))
    return _elu_np(x @ w1 + b1) @ w2 + b2


def params_to_tensors(params):
    """Wrap parameter arrays as named graph leaves (experts split per set)."""
    t = {"gw1": ad.Tensor(params.gw1, name="gw1"),
         "gb1": ad.Tensor(params.gb1, name="gb1"),
         "gw2": ad.Tensor(params.gw2, name="gw2"),
         "gb2": ad.Tensor(params.gb2, name="gb2"),
         "eb1": ad.Tensor(params.eb1, name="eb1"),
         "eb2": ad.Tensor(params.eb2, name="eb2")}
    for j in range(params.ew1.shape[0]):
        t[f"ew1_{j}"] = ad.Tensor(params.ew1[j], name=f"ew1_{j}")
        t[f"ew2_{j}"] = ad.Tensor(params.ew2[j], name=f"ew2_{j}")
    return t


def tensors_to_params(tensors, config):
    K = config.experts
    return MannParams(
        gw1=tensors["gw1"].value.copy(), gb1=tensors["gb1"].value.copy(),
        gw2=tensors["gw2"].value.copy(), gb2=tensors["gb2"].value.copy(),
        ew1=np.stack([tensors[f"ew1_{j}"].value for j in range(K)]),
        eb1=tensors["eb1"].value.copy(),
        ew2=np.stack([tensors[f"ew2_{j}"].value for j in range(K)]),
        eb2=tensors["eb2"].value.copy())


def forward_batch(tensors, config, X):
    """Differentiable batched forward pass.

    X is a (B, input) array treated as data. Per-sample expert blending is
    factored through the coefficient matrix: with Theta (B, K), layer output
    is sum_j Theta[:, j] * (X @ W_j) plus Theta @ stacked-biases, which stays
    within plain 2-D matrix algebra.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != config.input_size:
        raise ad.ShapeError(
            f"batch shape {X.shape} != (B, {config.input_size})")
    a, b = config.gating_slice
    Xc = ad.Tensor(X, constant=True, name="X")
    Xg = ad.Tensor(X[:, a:b], constant=True, name="X_gating")

    hidden = ad.elu(Xg @ tensors["gw1"] + tensors["gb1"])
    theta = ad.softmax(hidden @ tensors["gw2"] + tensors["gb2"])   # (B, K)

    def blended_layer(inp, w_key, b_tensor):
        total = theta @ b_tensor
        for j in range(config.experts):
            coeff = ad.slice_cols(theta, j, j + 1)                 # (B, 1)
            total = total + coeff * (inp @ tensors[f"{w_key}_{j}"])
        return total

    h = ad.elu(blended_layer(Xc, "ew1", tensors["eb1"]))
    return blended_layer(h, "ew2", tensors["eb2"]), theta


def config_hash(config):
    payload = json.dumps(asdict(config), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_checkpoint(path, params, config, normalization=None, tree_text=None,
                    extra=None, optimizer_arrays=None):
    """Write a self-contained .npz checkpoint (bit-exact round trip)."""
    header = {"config": asdict(config), "config_hash": config_hash(config),
              "extra": extra or {}}
    arrays = dict(params.arrays())
    if normalization is not None:
        arrays.update(x_mean=normalization.x_mean, x_std=normalization.x_std,
                      y_mean=normalization.y_mean, y_std=normalization.y_std)
    if optimizer_arrays:
        arrays.update({f"opt__{k}": v for k, v in optimizer_arrays.items()})
    np.savez(path, __header__=json.dumps(header, sort_keys=True),
             __tree__=tree_text or "", **arrays)


def load_checkpoint(path):
    """Read a checkpoint; returns (params, config, header, arrays)."""
    with np.load(path, allow_pickle=False) as data:
        arrays = {k: data[k] for k in data.files}
    header = json.loads(str(arrays.pop("__header__")))
    tree_text = str(arrays.pop("__tree__"))
    cfg = header["config"]
    cfg["gating_slice"] = tuple(cfg["gating_slice"])
    config = MannConfig(**cfg)
    params = MannParams(**{k: arrays[k] for k in
                           ("gw1", "gb1", "gw2", "gb2", "ew1", "eb1", "ew2", "eb2")})
    header["tree_text"] = tree_text
    return params, config, header, arrays
