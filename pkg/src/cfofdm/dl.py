"""Learned channel estimator: a small dense residual network per AP.

Input is the AP's received pilot vector (tau_p complex values, split into
2*tau_p reals), output is one complex channel estimate per UE (2K reals).
Three dense layers (M1, M2, 2K neurons; ReLU on the hidden ones) sit on top
of a fixed matched-filter skip connection: the despread pilots
(s_k^H y_p)/tau_p are added to the network output in complex units, so a
zero-weight network already returns the classical despreading estimate and
the dense path only learns the correction.

Each sample is normalized by the RMS of its own pilot vector before entering
the dense path, and the correction is scaled back by the same factor. One
network is shared by all APs while link gains span orders of magnitude, so
without this the net would have to learn every AP's scale separately and
training quality would depend on the geometry draw. Two dataset-level
scalars (input std, residual std after the skip, both in normalized units)
complete the standardization and are stored with the parameters.

Training minimizes the mean squared complex error against true block
channels, measured in the same per-sample normalized units, with a standard
adaptive-moment optimizer (bias-corrected first and second moment estimates)
and a stepped learning-rate schedule. Everything is plain numpy with
hand-written gradients, which keeps the tiny network fast and the gradient
check honest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import gen_block_channels
from .config import ConfigError, ScenarioConfig, scenario_hash
from .estimators import NumericalError
from .ofdm import gen_tx_grid, stack_pilots, synthesize_time
from .phase_noise import gen_pn_block

__all__ = [
    "DlHyperparams",
    "DlParams",
    "dl_forward",
    "dl_loss_and_grads",
    "dl_train",
    "gen_training_set",
    "init_params",
    "save_params",
    "load_params",
]

_FORMAT_VERSION = 1

_WEIGHT_FIELDS = ("w1", "b1", "w2", "b2", "w3", "b3")


@dataclass
class DlHyperparams:
    """Training constants (defaults per the evaluated setup)."""

    m1: int = 100
    m2: int = 100
    batch: int = 128
    n_train: int = 3000
    lr0: float = 0.01
    lr_drop: float = 0.2
    drop_every: int = 50
    epochs: int = 200
    plateau_patience: int = 10
    plateau_rel_tol: float = 1e-3

    def __post_init__(self):
        if min(self.m1, self.m2, self.batch, self.n_train, self.drop_every, self.epochs) <= 0:
            raise ConfigError("all DL hyperparameters must be positive")


@dataclass
class DlParams:
    """Network weights plus the fixed matched-filter skip and scalings.

    mf: (K, tau_p) complex despreading matrix conj(s_k)/tau_p (not trained);
    in_scale/out_scale: dataset standardization scalars; config_hash ties the
    blob to the scenario it was trained for.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    mf: np.ndarray
    in_scale: float = 1.0
    out_scale: float = 1.0
    config_hash: str = ""

    def weights(self) -> dict:
        return {name: getattr(self, name) for name in _WEIGHT_FIELDS}


def init_params(
    rng: np.random.Generator,
    seqs: np.ndarray,
    hyper: DlHyperparams,
    in_scale: float = 1.0,
    out_scale: float = 1.0,
    config_hash: str = "",
) -> DlParams:
    """Symmetric-uniform fan-in initialization; seqs (K, tau_p) fixes the
    matched-filter skip."""
    n_ues, tau_p = seqs.shape
    dims = (2 * tau_p, hyper.m1, hyper.m2, 2 * n_ues)

    def u(n_in, n_out):
        lim = 1.0 / np.sqrt(n_in)
        return rng.uniform(-lim, lim, size=(n_in, n_out))

    return DlParams(
        w1=u(dims[0], dims[1]),
        b1=np.zeros(dims[1]),
        w2=u(dims[1], dims[2]),
        b2=np.zeros(dims[2]),
        w3=u(dims[2], dims[3]),
        b3=np.zeros(dims[3]),
        mf=np.conj(seqs) / tau_p,
        in_scale=in_scale,
        out_scale=out_scale,
        config_hash=config_hash,
    )


def _c2r(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag], axis=-1)


def _row_rms(y2: np.ndarray) -> np.ndarray:
    """Per-sample pilot-vector RMS, floored to stay invertible."""
    s = np.sqrt(np.mean(np.abs(y2) ** 2, axis=-1, keepdims=True))
    return np.maximum(s, np.finfo(float).tiny)


def _forward_parts(params: DlParams, y_p: np.ndarray):
    """Shared forward pass; returns intermediates for backprop."""
    y2 = np.atleast_2d(y_p)
    s = _row_rms(y2)
    x = _c2r(y2 / s) / params.in_scale
    z1 = x @ params.w1 + params.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ params.w2 + params.b2
    h2 = np.maximum(z2, 0.0)
    o = h2 @ params.w3 + params.b3
    k = params.mf.shape[0]
    h_hat = y2 @ params.mf.T + s * params.out_scale * (o[:, :k] + 1j * o[:, k:])
    return h_hat, (x, z1, h1, z2, h2, s)


def dl_forward(y_p: np.ndarray, params: DlParams) -> np.ndarray:
    """Map pilot observations (..., tau_p) to channel estimates (..., K)."""
    y_p = np.asarray(y_p)
    if y_p.shape[-1] != params.mf.shape[1]:
        raise ValueError(f"pilot vector length {y_p.shape[-1]} != tau_p {params.mf.shape[1]}")
    h_hat, _ = _forward_parts(params, y_p.reshape(-1, y_p.shape[-1]))
    return h_hat.reshape(y_p.shape[:-1] + (params.mf.shape[0],))


def dl_loss_and_grads(params: DlParams, y_batch: np.ndarray, h_batch: np.ndarray):
    """MSE loss (1/(B*K)) sum |(h_hat - h)/s|^2 in per-sample normalized
    units (s = pilot-vector RMS) and its gradients w.r.t. every trained
    weight, as a dict keyed like DlParams fields."""
    h_hat, (x, z1, h1, z2, h2, s) = _forward_parts(params, y_batch)
    err = (h_hat - h_batch) / s
    b, k = err.shape
    loss = float(np.sum(np.abs(err) ** 2)) / (b * k)
    d_o = (2.0 * params.out_scale / (b * k)) * _c2r(err)
    grads = {
        "w3": h2.T @ d_o,
        "b3": d_o.sum(axis=0),
    }
    d_h2 = d_o @ params.w3.T
    d_z2 = d_h2 * (z2 > 0)
    grads["w2"] = h1.T @ d_z2
    grads["b2"] = d_z2.sum(axis=0)
    d_h1 = d_z2 @ params.w2.T
    d_z1 = d_h1 * (z1 > 0)
    grads["w1"] = x.T @ d_z1
    grads["b1"] = d_z1.sum(axis=0)
    return loss, grads


def dl_train(dataset, hyper: DlHyperparams, rng: np.random.Generator, scenario: ScenarioConfig):
    """Train on (pilot observations, true channels); returns (DlParams,
    per-epoch mean losses).

    Mini-batch optimizer steps: ceil(n/batch) per epoch; learning rate
    lr0 * lr_drop^(epoch // drop_every); stops early when the epoch loss
    improves by less than plateau_rel_tol over plateau_patience epochs.
    Divergence (non-finite loss) raises NumericalError.
    """
    y_all, h_all = dataset
    y_all = np.asarray(y_all)
    h_all = np.asarray(h_all)
    n = y_all.shape[0]
    plan = scenario.pilot_plan()
    seqs = plan.book[plan.ue_pilot_indices(scenario.n_ues)]
    s_all = _row_rms(y_all)
    in_scale = float(np.std(_c2r(y_all / s_all))) or 1.0
    resid = h_all - y_all @ (np.conj(seqs) / seqs.shape[1]).T
    out_scale = float(np.std(_c2r(resid / s_all))) or 1.0
    params = init_params(rng, seqs, hyper, in_scale, out_scale, scenario_hash(scenario))
    moment1 = {name: np.zeros_like(w) for name, w in params.weights().items()}
    moment2 = {name: np.zeros_like(w) for name, w in params.weights().items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    losses = []
    for epoch in range(hyper.epochs):
        lr = hyper.lr0 * hyper.lr_drop ** (epoch // hyper.drop_every)
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, hyper.batch):
            idx = order[start : start + hyper.batch]
            loss, grads = dl_loss_and_grads(params, y_all[idx], h_all[idx])
            if not np.isfinite(loss):
                raise NumericalError(f"training diverged at epoch {epoch}, step {step} (loss={loss})")
            step += 1
            for name, g in grads.items():
                moment1[name] = beta1 * moment1[name] + (1 - beta1) * g
                moment2[name] = beta2 * moment2[name] + (1 - beta2) * g * g
                m_hat = moment1[name] / (1 - beta1**step)
                v_hat = moment2[name] / (1 - beta2**step)
                setattr(params, name, getattr(params, name) - lr * m_hat / (np.sqrt(v_hat) + eps))
            epoch_loss += loss
            n_batches += 1
        losses.append(epoch_loss / n_batches)
        if len(losses) > hyper.plateau_patience:
            past = losses[-1 - hyper.plateau_patience]
            if past > 0 and (past - losses[-1]) / past < hyper.plateau_rel_tol:
                break
    return params, losses


def gen_training_set(rng: np.random.Generator, scenario: ScenarioConfig, beta: np.ndarray, n: int):
    """Simulate n training samples (y_p (n, tau_p), h (n, K)) at a fixed
    geometry.

    Each underlying trial draws fresh channels, oscillator paths, payloads
    and noise, and contributes one sample per AP (samples within a trial
    share the UE oscillator paths); trials are drawn until n samples exist.
    Labels are the true block-0 channels, not effective channels.
    """
    n_aps = beta.shape[1]
    n_trials = -(-n // n_aps)
    ys, hs = [], []
    for _ in range(n_trials):
        h_blocks = gen_block_channels(rng, beta, scenario.coherence.n_blocks(scenario.grid))
        pn = gen_pn_block(rng, scenario)
        tx = gen_tx_grid(rng, scenario)
        rx = synthesize_time(rng, tx, h_blocks, pn, scenario)
        y_p = stack_pilots(rx.y, scenario)  # (L, tau_p)
        ys.append(y_p)
        hs.append(h_blocks[:, :, 0].T)  # (L, K)
    y_all = np.concatenate(ys, axis=0)[:n]
    h_all = np.concatenate(hs, axis=0)[:n]
    return y_all, h_all


def save_params(params: DlParams, path) -> None:
    """Versioned binary blob: weights + skip + scalings + config hash."""
    np.savez(
        path,
        format_version=np.array([_FORMAT_VERSION]),
        config_hash=np.array([params.config_hash]),
        mf=params.mf,
        scales=np.array([params.in_scale, params.out_scale]),
        **params.weights(),
    )


def load_params(path, expect_hash: str | None = None) -> DlParams:
    """Load a parameter blob; optionally enforce the scenario hash."""
    with np.load(path, allow_pickle=False) as data:
        if int(data["format_version"][0]) != _FORMAT_VERSION:
            raise ConfigError(f"unsupported parameter blob version {data['format_version'][0]}")
        stored = str(data["config_hash"][0])
        if expect_hash is not None and stored != expect_hash:
            raise ConfigError(f"parameter blob hash {stored} does not match scenario {expect_hash}")
        return DlParams(
            w1=data["w1"],
            b1=data["b1"],
            w2=data["w2"],
            b2=data["b2"],
            w3=data["w3"],
            b3=data["b3"],
            mf=data["mf"],
            in_scale=float(data["scales"][0]),
            out_scale=float(data["scales"][1]),
            config_hash=stored,
        )
