"""Composite loss, AdamW, and the deterministic training loop.

The loss is the batch-mean data term plus the weighted support-foot
constraint term:

    L = mean_b ||yhat_b - y_b||^2  +  w * mean_b ||r_b||^2
    r = [vhat; what] + M sdot_hat

with M the per-sample constant inv(J_base) J_joints of the annotated support
foot, so gradients flow only through the predicted velocities and joint
rates. Features and targets are standardized per dimension for conditioning
(absolute base position shares the vector with radian-scale channels); the
constraint residual is evaluated in physical units by de-standardizing the
prediction inside the graph, and reported losses follow the same split:
data_loss in standardized space, contact_loss in physical units.

Training is bit-reproducible: one seeded generator drives initialization and
epoch shuffles, and checkpoints carry optimizer moments plus the generator
state so a resumed run continues the exact same sequence.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import mann
from .features import OutputLayout

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-6


class NonFiniteGradientError(RuntimeError):
    pass


@dataclass
class Normalization:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    @classmethod
    def fit(cls, X, Y):
        return cls(X.mean(axis=0), np.maximum(X.std(axis=0), SIGMA_FLOOR),
                   Y.mean(axis=0), np.maximum(Y.std(axis=0), SIGMA_FLOOR))

    @classmethod
    def identity(cls, nx, ny):
        return cls(np.zeros(nx), np.ones(nx), np.zeros(ny), np.ones(ny))

    def normalize_x(self, X):
        return (X - self.x_mean) / self.x_std

    def normalize_y(self, Y):
        return (Y - self.y_mean) / self.y_std

    def denormalize_y(self, Yn):
        return Yn * self.y_std + self.y_mean


def data_loss(y_hat, y_true):
    """Batch mean of squared prediction-error norms."""
    y_hat = np.atleast_2d(np.asarray(y_hat, dtype=float))
    y_true = np.atleast_2d(np.asarray(y_true, dtype=float))
    if y_hat.shape != y_true.shape:
        raise ValueError(f"prediction/target shapes disagree: "
                         f"{y_hat.shape} vs {y_true.shape}")
    d = y_hat - y_true
    return float(np.mean(np.sum(d * d, axis=1)))


def pi_loss(y_hat, J_LF, J_RF, alpha):
    """Squared support-foot velocity implied by one prediction.

    Decodes the current-step base velocity and joint rates from the target
    layout and returns ||[v;w] + (a inv(JB_LF) Js_LF + (1-a) inv(JB_RF)
    Js_RF) sdot||^2 with the Jacobians held constant.
    """
    if alpha not in (0, 1):
        raise ValueError(f"support flag must be 0 or 1, got {alpha!r}")
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    n = (y_hat.shape[0] - 48) // 2
    if y_hat.shape[0] != 2 * n + 48:
        raise ValueError(f"output length {y_hat.shape[0]} does not fit 2n+48")
    lay = OutputLayout(n)
    M = (alpha * np.linalg.solve(J_LF[:, :6], J_LF[:, 6:])
         + (1 - alpha) * np.linalg.solve(J_RF[:, :6], J_RF[:, 6:]))
    r = np.concatenate([y_hat[lay.lin0], y_hat[lay.ang0]]) + M @ y_hat[lay.joint_rates]
    return float(r @ r)


def contact_loss_batch(Y_hat, support_matrices):
    """Batch mean of squared constraint residuals (physical units)."""
    Y_hat = np.atleast_2d(np.asarray(Y_hat, dtype=float))
    n = support_matrices.shape[2]
    lay = OutputLayout(n)
    vw = np.concatenate([Y_hat[:, lay.lin0], Y_hat[:, lay.ang0]], axis=1)
    r = vw + np.einsum("brc,bc->br", support_matrices, Y_hat[:, lay.joint_rates])
    return float(np.mean(np.sum(r * r, axis=1)))


def total_loss(y_hat, y_true, support_matrices, w):
    """Composite loss (total, data term, constraint term) for a batch."""
    if w < 0:
        raise ValueError("contact weight must be nonnegative")
    ld = data_loss(y_hat, y_true)
    lb = contact_loss_batch(y_hat, support_matrices)
    return ld + w * lb, ld, lb


@dataclass
class AdamWState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adamw_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8,
               weight_decay=0.0):
    """One decoupled-weight-decay Adam update, in place.

    p <- p - lr * mhat / (sqrt(vhat) + eps) - lr * weight_decay * p
    with bias-corrected first and second moments.
    """
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name in sorted(params):
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(
                f"non-finite gradient for {name!r} at step {state.t}")
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p = params[name]
        p -= lr * ((m / c1) / (np.sqrt(v / c2) + eps) + weight_decay * p)
    return params, state


@dataclass
class TrainConfig:
    contact_weight: float = 0.0     # w in L = L_D + w * L_B
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-4
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    test_fraction: float = 0.1
    experts: int = 4
    gating_hidden: int = 16
    prediction_hidden: int = 64

    def __post_init__(self):
        if self.contact_weight < 0:
            raise ValueError("contact weight must be nonnegative")
        if self.epochs < 1:
            raise ValueError("need at least one epoch")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")

    def mann_config(self, n):
        return mann.MannConfig(n=n, experts=self.experts,
                               gating_hidden=self.gating_hidden,
                               prediction_hidden=self.prediction_hidden,
                               seed=self.seed)


def split_indices(dataset, test_fraction):
    """Train/test split on contiguous trajectory segments, test at the end."""
    total = len(dataset)
    want = test_fraction * total
    cut = total
    if len(dataset.segments) > 1:
        acc = 0
        for start, stop in reversed(dataset.segments):
            if acc >= want:
                break
            acc += stop - start
            cut = start
    else:
        cut = int(round(total * (1.0 - test_fraction)))
    train_idx = np.arange(0, cut)
    test_idx = np.arange(cut, total)
    if len(train_idx) == 0 or len(test_idx) == 0:
        raise ValueError("split produced an empty train or test set")
    return train_idx, test_idx


@dataclass
class TrainResult:
    params: mann.MannParams          # best test-loss epoch
    last_params: mann.MannParams
    normalization: Normalization
    mann_config: mann.MannConfig
    history: list                    # (epoch, split, data, contact, total)
    best_epoch: int
    best_test_total: float
    aborted: bool = False


def _graph_losses(tensors, cfg, norm_rows, Xn, Yn, M, w, n):
    """Build the loss graph for one batch; returns (loss, data, contact)."""
    B = Xn.shape[0]
    lay = OutputLayout(n)
    Yhat_n, _ = mann.forward_batch(tensors, cfg, Xn)
    ld = ad.sum_sq(Yhat_n - ad.Tensor(Yn, constant=True)) * (1.0 / B)
    y_std_row, y_mean_row = norm_rows
    Yhat = Yhat_n * y_std_row + y_mean_row
    vw = ad.concat_cols([ad.slice_cols(Yhat, lay.lin0.start, lay.lin0.stop),
                         ad.slice_cols(Yhat, lay.ang0.start, lay.ang0.stop)])
    resid = vw + ad.rows_matvec(M, ad.slice_cols(
        Yhat, lay.joint_rates.start, lay.joint_rates.stop))
    lb = ad.sum_sq(resid) * (1.0 / B)
    loss = ld + w * lb if w > 0 else ld
    return loss, ld, lb


def train(dataset, config, resume_state=None):
    """Train on a feature dataset; deterministic for a given seed.

    Tracks per-epoch train and held-out losses, keeps the parameters of the
    epoch with the lowest overall test loss, and aborts (returning the last
    finished epoch) if the loss or a gradient stops being finite.
    """
    n = dataset.n
    cfg = config.mann_config(n)
    train_idx, test_idx = split_indices(dataset, config.test_fraction)
    norm = Normalization.fit(dataset.X[train_idx], dataset.Y[train_idx])
    Xn = norm.normalize_x(dataset.X)
    Yn = norm.normalize_y(dataset.Y)
    M = dataset.support_matrices

    if resume_state is None:
        params = mann.init_params(cfg)
        opt = AdamWState()
        rng = np.random.default_rng(config.seed)
        start_epoch = 0
        best_epoch, best_test = -1, np.inf
        history = []
    else:
        params = resume_state["params"].copy()
        opt = resume_state["opt"]
        rng = np.random.default_rng()
        rng.bit_generator.state = resume_state["rng_state"]
        start_epoch = resume_state["epoch"]
        best_epoch = resume_state.get("best_epoch", -1)
        best_test = resume_state.get("best_test", np.inf)
        history = list(resume_state.get("history", []))

    tensors = mann.params_to_tensors(params)
    arrays = {k: t.value for k, t in tensors.items()}
    norm_rows = (ad.Tensor(norm.y_std[None, :], constant=True),
                 ad.Tensor(norm.y_mean[None, :], constant=True))
    best_params = mann.tensors_to_params(tensors, cfg)
    last_good = mann.tensors_to_params(tensors, cfg)
    aborted = False

    def eval_split(idx):
        ld_s = lb_s = 0.0
        for at in range(0, len(idx), 4096):
            sel = idx[at:at + 4096]
            _, ld, lb = _graph_losses(tensors, cfg, norm_rows, Xn[sel], Yn[sel],
                                      M[sel], 0.0, n)
            ld_s += float(ld.value) * len(sel)
            lb_s += float(lb.value) * len(sel)
        return ld_s / len(idx), lb_s / len(idx)

    w = config.contact_weight
    for epoch in range(start_epoch, config.epochs):
        perm = rng.permutation(train_idx)
        ld_sum = lb_sum = 0.0
        try:
            for at in range(0, len(perm), config.batch_size):
                sel = perm[at:at + config.batch_size]
                loss, ld, lb = _graph_losses(
                    tensors, cfg, norm_rows, Xn[sel], Yn[sel], M[sel], w, n)
                if not np.isfinite(loss.value):
                    raise NonFiniteGradientError(
                        f"non-finite loss at epoch {epoch}, sample {at}")
                ad.backward(loss)
                grads = {k: t.grad for k, t in tensors.items()}
                adamw_step(arrays, grads, opt, config.learning_rate,
                           config.beta1, config.beta2, config.eps,
                           config.weight_decay)
                ld_sum += float(ld.value) * len(sel)
                lb_sum += float(lb.value) * len(sel)
        except NonFiniteGradientError as err:
            log.error("training aborted: %s", err)
            aborted = True
            break
        train_ld = ld_sum / len(perm)
        train_lb = lb_sum / len(perm)
        test_ld, test_lb = eval_split(test_idx)
        test_total = test_ld + w * test_lb
        history.append((epoch, "train", train_ld, train_lb, train_ld + w * train_lb))
        history.append((epoch, "test", test_ld, test_lb, test_total))
        last_good = mann.tensors_to_params(tensors, cfg)
        if test_total < best_test:
            best_test, best_epoch = test_total, epoch
            best_params = last_good.copy()
        log.info("epoch %d: train %.6f/%.6f test %.6f/%.6f",
                 epoch, train_ld, train_lb, test_ld, test_lb)

    return TrainResult(
        params=best_params, last_params=last_good, normalization=norm,
        mann_config=cfg, history=history, best_epoch=best_epoch,
        best_test_total=float(best_test), aborted=aborted), opt, rng


HISTORY_SCHEMA = "gaitgen-losses v1"


def write_history(path, history):
    with open(path, "w") as fh:
        fh.write(f"# schema: {HISTORY_SCHEMA}\n")
        fh.write("epoch,split,data_loss,contact_loss,total\n")
        for epoch, split, ld, lb, total in history:
            fh.write(f"{epoch},{split},{ld!r},{lb!r},{total!r}\n")


def read_history(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("epoch"):
                continue
            e, split, ld, lb, total = line.strip().split(",")
            rows.append((int(e), split, float(ld), float(lb), float(total)))
    return rows


def run_training(out_dir, dataset, config, tree_text="", resume=False):
    """Train and persist a run directory.

    Writes checkpoint_best.npz (weights of the best test epoch), a resumable
    checkpoint_last.npz (weights + optimizer moments + shuffle-generator
    state), history.csv, and the resolved config.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    last_path = out / "checkpoint_last.npz"
    resume_state = None
    if resume:
        if not last_path.exists():
            raise FileNotFoundError(f"cannot resume: {last_path} missing")
        params, cfg, header, arrays = mann.load_checkpoint(last_path)
        opt = AdamWState(
            m={k[len("opt__m__"):]: arrays[k] for k in arrays if k.startswith("opt__m__")},
            v={k[len("opt__v__"):]: arrays[k] for k in arrays if k.startswith("opt__v__")},
            t=int(header["extra"]["opt_t"]))
        resume_state = {
            "params": params, "opt": opt,
            "rng_state": header["extra"]["rng_state"],
            "epoch": header["extra"]["epoch"],
            "best_epoch": header["extra"]["best_epoch"],
            "best_test": header["extra"]["best_test"],
            "history": [tuple(r) for r in header["extra"]["history"]],
        }
    result, opt, rng = train(dataset, config, resume_state)

    base_extra = {"train_config": asdict(config), "best_epoch": result.best_epoch,
                  "best_test": result.best_test_total, "aborted": result.aborted}
    mann.save_checkpoint(
        out / "checkpoint_best.npz", result.params, result.mann_config,
        normalization=result.normalization, tree_text=tree_text,
        extra=base_extra)
    opt_arrays = {f"m__{k}": v for k, v in opt.m.items()}
    opt_arrays.update({f"v__{k}": v for k, v in opt.v.items()})
    rng_state = json.loads(json.dumps(rng.bit_generator.state))
    mann.save_checkpoint(
        out / "checkpoint_last.npz", result.last_params, result.mann_config,
        normalization=result.normalization, tree_text=tree_text,
        extra={**base_extra, "opt_t": opt.t, "rng_state": rng_state,
               "epoch": len({e for e, *_ in result.history}),
               "history": [list(r) for r in result.history]},
        optimizer_arrays=opt_arrays)
    write_history(out / "history.csv", result.history)
    with open(out / "config.json", "w") as fh:
        json.dump({"train_config": asdict(config), "aborted": result.aborted,
                   "best_epoch": result.best_epoch,
                   "best_test": result.best_test_total}, fh, indent=2, sort_keys=True)
    return result
