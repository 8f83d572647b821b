"""FC + LSTM engagement classifier trained from scratch.

Architecture: up to three fully connected layers (width 2C, each with
dropout then ReLU) applied per sequence point, one or two LSTM layers
(hidden size C) and a final fully connected layer with softmax over the
3 classes. Training is staged: the FC stack is pre-trained with a
temporary per-segment softmax head, then frozen while the LSTM and the
output layer learn, with early stopping and learning-rate drops in each
stage. The loss is class-weighted cross-entropy averaged over the batch
and all sequence steps.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import expit as sigmoid

PROB_CLAMP = 1e-12


class TrainingDiverged(RuntimeError):
    """Training loss became non-finite; the run cannot continue."""


@dataclass
class NetConfig:
    input_dim: int = 116
    hidden: int = 560  # C; FC layers are 2C wide
    classes: int = 3
    n_fc: int = 3
    n_lstm: int = 1
    dropout_p: float = 0.5
    batch: int = 16
    seq_len: int = 30

    def __post_init__(self):
        if self.n_fc not in (2, 3):
            raise ValueError("n_fc must be 2 or 3")
        if self.n_lstm not in (1, 2):
            raise ValueError("n_lstm must be 1 or 2")
        if min(self.input_dim, self.hidden, self.classes, self.batch, self.seq_len) <= 0:
            raise ValueError("all dimensions must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")

    @property
    def fc_width(self) -> int:
        return 2 * self.hidden


@dataclass
class TrainConfig:
    lr0: float = 0.1
    momentum: float = 0.5
    weight_decay: float = 1e-6
    patience: int = 10
    lr_drop_factor: float = 10.0
    grad_clip: float = 0.1
    class_weights: tuple = (9.16, 1.00, 3.42)
    val_fraction: float = 0.1
    max_lr_drops: int = 2
    max_epochs: int = 500
    seed: int = 0

    def __post_init__(self):
        if min(self.lr0, self.patience, self.lr_drop_factor, self.grad_clip) <= 0:
            raise ValueError("lr0, patience, lr_drop_factor and grad_clip must be positive")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("momentum and weight_decay must be non-negative")


@dataclass
class NetParams:
    """Named parameter tensors plus the architecture they belong to."""

    config: NetConfig
    tensors: dict[str, np.ndarray]

    def copy(self) -> "NetParams":
        return NetParams(self.config, {k: v.copy() for k, v in self.tensors.items()})


def fc_keys(config: NetConfig) -> list[str]:
    keys = []
    for i in range(1, config.n_fc + 1):
        keys += [f"fc{i}.W", f"fc{i}.b"]
    return keys


def lstm_keys(config: NetConfig) -> list[str]:
    keys = []
    for i in range(1, config.n_lstm + 1):
        keys += [f"lstm{i}.Wx", f"lstm{i}.Wh", f"lstm{i}.b"]
    return keys


def init_params(config: NetConfig, rng: np.random.Generator, with_head: bool = False) -> NetParams:
    """Uniform +-1/sqrt(fan_in) weights, zero biases, LSTM forget bias +1."""

    def uniform(fan_in, shape):
        lim = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-lim, lim, size=shape)

    c = config.hidden
    w = config.fc_width
    tensors: dict[str, np.ndarray] = {}
    in_dim = config.input_dim
    for i in range(1, config.n_fc + 1):
        tensors[f"fc{i}.W"] = uniform(in_dim, (in_dim, w))
        tensors[f"fc{i}.b"] = np.zeros(w)
        in_dim = w
    lstm_in = w
    for i in range(1, config.n_lstm + 1):
        tensors[f"lstm{i}.Wx"] = uniform(lstm_in, (lstm_in, 4 * c))
        tensors[f"lstm{i}.Wh"] = uniform(c, (c, 4 * c))
        b = np.zeros(4 * c)
        b[c : 2 * c] = 1.0  # forget gate opens at init
        tensors[f"lstm{i}.b"] = b
        lstm_in = c
    tensors["out.W"] = uniform(c, (c, config.classes))
    tensors["out.b"] = np.zeros(config.classes)
    if with_head:
        tensors["head.W"] = uniform(w, (w, config.classes))
        tensors["head.b"] = np.zeros(config.classes)
    return NetParams(config, tensors)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _lstm_forward(wx, wh, b, x):
    """Run one LSTM layer over (N, L, In); returns outputs and step cache."""
    n, seq_len, _ = x.shape
    c_dim = wh.shape[0]
    pre = x @ wx + b  # (N, L, 4C)
    gi = np.empty((seq_len, n, c_dim))
    gf = np.empty_like(gi)
    gg = np.empty_like(gi)
    go = np.empty_like(gi)
    cells = np.empty_like(gi)
    hidden = np.empty_like(gi)
    h = np.zeros((n, c_dim))
    c = np.zeros((n, c_dim))
    for t in range(seq_len):
        z = pre[:, t] + h @ wh
        gi[t] = sigmoid(z[:, :c_dim])
        gf[t] = sigmoid(z[:, c_dim : 2 * c_dim])
        gg[t] = np.tanh(z[:, 2 * c_dim : 3 * c_dim])
        go[t] = sigmoid(z[:, 3 * c_dim :])
        c = gf[t] * c + gi[t] * gg[t]
        cells[t] = c
        h = go[t] * np.tanh(c)
        hidden[t] = h
    cache = {"x": x, "i": gi, "f": gf, "g": gg, "o": go, "c": cells, "h": hidden}
    return hidden.transpose(1, 0, 2), cache


def _lstm_backward(wx, wh, cache, d_out):
    """Backprop one LSTM layer; d_out is (N, L, C). Returns (dx, dWx, dWh, db)."""
    x = cache["x"]
    gi, gf, gg, go, cells, hidden = (
        cache["i"],
        cache["f"],
        cache["g"],
        cache["o"],
        cache["c"],
        cache["h"],
    )
    n, seq_len, in_dim = x.shape
    c_dim = wh.shape[0]
    d_wx = np.zeros_like(wx)
    d_wh = np.zeros_like(wh)
    d_b = np.zeros(4 * c_dim)
    dx = np.empty_like(x)
    dh_next = np.zeros((n, c_dim))
    dc_next = np.zeros((n, c_dim))
    for t in range(seq_len - 1, -1, -1):
        dh = d_out[:, t] + dh_next
        tanh_c = np.tanh(cells[t])
        do = dh * tanh_c
        dc = dh * go[t] * (1.0 - tanh_c**2) + dc_next
        c_prev = cells[t - 1] if t > 0 else np.zeros((n, c_dim))
        di = dc * gg[t]
        df = dc * c_prev
        dg = dc * gi[t]
        dz = np.concatenate(
            [
                di * gi[t] * (1.0 - gi[t]),
                df * gf[t] * (1.0 - gf[t]),
                dg * (1.0 - gg[t] ** 2),
                do * go[t] * (1.0 - go[t]),
            ],
            axis=1,
        )  # (N, 4C)
        h_prev = hidden[t - 1] if t > 0 else np.zeros((n, c_dim))
        d_wx += x[:, t].T @ dz
        d_wh += h_prev.T @ dz
        d_b += dz.sum(axis=0)
        dx[:, t] = dz @ wx.T
        dh_next = dz @ wh.T
        dc_next = dc * gf[t]
    return dx, d_wx, d_wh, d_b


def forward(
    params: NetParams,
    x: np.ndarray,
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
    stage1: bool = False,
):
    """Run the network on a (N, L, D) batch.

    Train mode applies inverted dropout after each FC affine map (before
    the ReLU), so eval needs no rescaling. ``stage1`` routes the FC stack
    into the temporary per-segment head instead of the LSTM. Returns
    (probabilities (N, L, K), cache).
    """
    cfg = params.config
    x = np.asarray(x, dtype=float)
    if x.ndim != 3 or x.shape[2] != cfg.input_dim:
        raise ValueError(f"expected (N, L, {cfg.input_dim}) input, got {x.shape}")
    train = mode == "train"
    if train and cfg.dropout_p > 0 and rng is None:
        raise ValueError("train mode needs an rng for dropout")
    cache: dict = {"stage1": stage1, "fc": []}
    h = x
    for i in range(1, cfg.n_fc + 1):
        w, b = params.tensors[f"fc{i}.W"], params.tensors[f"fc{i}.b"]
        z = h @ w + b
        mask = None
        if train and cfg.dropout_p > 0:
            keep = 1.0 - cfg.dropout_p
            mask = (rng.random(z.shape) < keep) / keep
            z = z * mask
        cache["fc"].append({"inp": h, "mask": mask, "pre": z})
        h = np.maximum(z, 0.0)
    if stage1:
        cache["feat"] = h
        logits = h @ params.tensors["head.W"] + params.tensors["head.b"]
    else:
        cache["lstm"] = []
        inp = h
        for i in range(1, cfg.n_lstm + 1):
            inp, layer_cache = _lstm_forward(
                params.tensors[f"lstm{i}.Wx"],
                params.tensors[f"lstm{i}.Wh"],
                params.tensors[f"lstm{i}.b"],
                inp,
            )
            cache["lstm"].append(layer_cache)
        cache["feat"] = inp
        logits = inp @ params.tensors["out.W"] + params.tensors["out.b"]
    probs = softmax(logits)
    cache["probs"] = probs
    return probs, cache


def weighted_ce_loss(probs: np.ndarray, labels: np.ndarray, class_weights) -> float:
    """Class-weighted cross-entropy, averaged over batch and sequence steps.

    ``labels`` holds class ids in {1, 2, 3}. True-class probabilities
    below 1e-12 are clamped (with a warning) to keep the loss finite.
    """
    w = np.asarray(class_weights, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n, seq_len = labels.shape
    p_true = np.take_along_axis(probs, (labels - 1)[..., None], axis=2)[..., 0]
    if np.any(p_true < PROB_CLAMP):
        warnings.warn("clamped zero probabilities in cross-entropy", stacklevel=2)
        p_true = np.maximum(p_true, PROB_CLAMP)
    return float(-(w[labels - 1] * np.log(p_true)).sum() / (n * seq_len))


def backward(params: NetParams, cache: dict, labels: np.ndarray, class_weights) -> dict:
    """Analytic gradients of the weighted cross-entropy for every tensor
    that took part in the forward pass."""
    cfg = params.config
    probs = cache["probs"]
    labels = np.asarray(labels, dtype=int)
    w = np.asarray(class_weights, dtype=float)
    n, seq_len, _ = probs.shape

    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, (labels - 1)[..., None], 1.0, axis=2)
    d_logits = w[labels - 1][..., None] * (probs - onehot) / (n * seq_len)

    grads: dict[str, np.ndarray] = {}
    feat = cache["feat"]
    feat_dim = feat.shape[2]
    if cache["stage1"]:
        w_out = params.tensors["head.W"]
        grads["head.W"] = feat.reshape(-1, feat_dim).T @ d_logits.reshape(-1, cfg.classes)
        grads["head.b"] = d_logits.sum(axis=(0, 1))
    else:
        w_out = params.tensors["out.W"]
        grads["out.W"] = feat.reshape(-1, feat_dim).T @ d_logits.reshape(-1, cfg.classes)
        grads["out.b"] = d_logits.sum(axis=(0, 1))
    d = d_logits @ w_out.T

    if not cache["stage1"]:
        for i in range(cfg.n_lstm, 0, -1):
            d, d_wx, d_wh, d_b = _lstm_backward(
                params.tensors[f"lstm{i}.Wx"],
                params.tensors[f"lstm{i}.Wh"],
                cache["lstm"][i - 1],
                d,
            )
            grads[f"lstm{i}.Wx"] = d_wx
            grads[f"lstm{i}.Wh"] = d_wh
            grads[f"lstm{i}.b"] = d_b

    for i in range(cfg.n_fc, 0, -1):
        fc = cache["fc"][i - 1]
        dz = d * (fc["pre"] > 0)
        if fc["mask"] is not None:
            dz = dz * fc["mask"]
        inp = fc["inp"]
        in_dim = inp.shape[2]
        grads[f"fc{i}.W"] = inp.reshape(-1, in_dim).T @ dz.reshape(-1, dz.shape[2])
        grads[f"fc{i}.b"] = dz.sum(axis=(0, 1))
        d = dz @ params.tensors[f"fc{i}.W"].T
    return grads


def clip_grad_norm(grads: dict, cap: float = 0.1, keys: Optional[list] = None) -> float:
    """Scale the LSTM-layer gradients so their global L2 norm is at most
    ``cap``; other gradients are untouched. Returns the pre-clip norm."""
    if cap <= 0:
        raise ValueError("cap must be positive")
    if keys is None:
        keys = [k for k in grads if k.startswith("lstm")]
    norm = float(np.sqrt(sum(float((grads[k] ** 2).sum()) for k in keys)))
    if norm > cap and norm > 0:
        scale = cap / norm
        for k in keys:
            grads[k] = grads[k] * scale
    return norm


def sgd_step(
    params: NetParams,
    grads: dict,
    velocity: dict,
    lr: float,
    momentum: float,
    weight_decay: float,
    keys: Optional[list] = None,
) -> None:
    """Momentum SGD with L2 weight decay, in place on ``params``.

    v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.
    Only ``keys`` (default: every gradient present) are updated.
    """
    for k in keys if keys is not None else grads:
        v = velocity[k]
        v *= momentum
        v += grads[k] + weight_decay * params.tensors[k]
        params.tensors[k] -= lr * v


@dataclass
class TrainResult:
    params: NetParams
    log: list[dict] = field(default_factory=list)
    best_val_loss: float = np.inf


def _eval_loss(params, x, y, class_weights, stage1, batch):
    total, count = 0.0, 0
    for start in range(0, len(x), batch):
        xb, yb = x[start : start + batch], y[start : start + batch]
        probs, _ = forward(params, xb, mode="eval", stage1=stage1)
        total += weighted_ce_loss(probs, yb, class_weights) * len(xb)
        count += len(xb)
    return total / max(count, 1)


def _run_stage(
    stage: int,
    params: NetParams,
    trainable: list,
    stage1: bool,
    sampler,
    tcfg: TrainConfig,
    rng: np.random.Generator,
    log: list,
) -> float:
    cfg = params.config
    w = np.asarray(tcfg.class_weights, dtype=float)
    velocity = {k: np.zeros_like(params.tensors[k]) for k in trainable}
    x_val, y_val = sampler.val_set()
    have_val = len(x_val) > 0
    lr = tcfg.lr0
    drops = 0
    since_improve = 0
    best_val = np.inf
    best = params.copy()
    for epoch in range(tcfg.max_epochs):
        x, y = sampler.train_epoch(rng)
        order = rng.permutation(len(x))
        total, count = 0.0, 0
        for start in range(0, len(order), cfg.batch):
            sel = order[start : start + cfg.batch]
            probs, cache = forward(params, x[sel], mode="train", rng=rng, stage1=stage1)
            loss = weighted_ce_loss(probs, y[sel], w)
            grads = backward(params, cache, y[sel], w)
            if not stage1:
                clip_grad_norm(grads, tcfg.grad_clip)
            sgd_step(params, grads, velocity, lr, tcfg.momentum, tcfg.weight_decay, trainable)
            total += loss * len(sel)
            count += len(sel)
        train_loss = total / count
        if not np.isfinite(train_loss):
            raise TrainingDiverged(f"stage {stage} loss is not finite at epoch {epoch}")
        val_loss = (
            _eval_loss(params, x_val, y_val, w, stage1, cfg.batch) if have_val else train_loss
        )
        log.append(
            {
                "stage": stage,
                "epoch": epoch,
                "lr": lr,
                "train_loss": train_loss,
                "val_loss": val_loss,
            }
        )
        if val_loss < best_val:
            best_val = val_loss
            best = params.copy()
            since_improve = 0
        else:
            since_improve += 1
        if since_improve >= tcfg.patience:
            params.tensors.update({k: v.copy() for k, v in best.tensors.items()})
            if drops >= tcfg.max_lr_drops:
                break
            lr /= tcfg.lr_drop_factor
            drops += 1
            since_improve = 0
            for v in velocity.values():
                v[:] = 0.0
    params.tensors.update({k: v.copy() for k, v in best.tensors.items()})
    return best_val


def train(
    sampler,
    net_config: NetConfig,
    train_config: TrainConfig,
    rng: Optional[np.random.Generator] = None,
) -> TrainResult:
    """Two-stage training: FC stack with a temporary per-segment softmax
    head first, then the FC weights are frozen while the LSTM and output
    layer train. Each stage early-stops on the sampler's held-out subset
    (patience epochs without improvement), restores the best weights and
    drops the learning rate, ending after the configured number of drops.
    """
    if rng is None:
        rng = np.random.default_rng(train_config.seed)
    params = init_params(net_config, rng, with_head=True)
    log: list[dict] = []
    head = [f"fc{i}.{p}" for i in range(1, net_config.n_fc + 1) for p in ("W", "b")]
    _run_stage(1, params, head + ["head.W", "head.b"], True, sampler, train_config, rng, log)
    del params.tensors["head.W"], params.tensors["head.b"]
    rest = lstm_keys(net_config) + ["out.W", "out.b"]
    best_val = _run_stage(2, params, rest, False, sampler, train_config, rng, log)
    return TrainResult(params, log, best_val)


def predict_sequence(params: NetParams, features: np.ndarray):
    """Per-segment class ids (argmax, ties to the lower id) and softmax
    probabilities for a single (L', D) sequence."""
    features = np.asarray(features, dtype=float)
    probs, _ = forward(params, features[None], mode="eval")
    probs = probs[0]
    return np.argmax(probs, axis=1) + 1, probs


def predict_segments(params: NetParams, features: np.ndarray, seq_len: Optional[int] = None):
    """Predict every segment of a session by chunking it into sequences of
    ``seq_len`` (config default); the trailing partial chunk runs as a
    shorter sequence from a fresh LSTM state."""
    seq_len = seq_len or params.config.seq_len
    features = np.asarray(features, dtype=float)
    classes = np.empty(len(features), dtype=int)
    probs = np.empty((len(features), params.config.classes))
    for start in range(0, len(features), seq_len):
        chunk = features[start : start + seq_len]
        classes[start : start + len(chunk)], probs[start : start + len(chunk)] = (
            predict_sequence(params, chunk)
        )
    return classes, probs


# --- weight container -------------------------------------------------------

WEIGHTS_MAGIC = b"ENGG"
WEIGHTS_VERSION = 1


def save_params(path, params: NetParams) -> None:
    """Binary container: magic, version, NetConfig fields, then named
    tensors as row-major little-endian float32."""
    cfg = params.config
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", WEIGHTS_VERSION))
        fh.write(
            struct.pack(
                "<7I",
                cfg.input_dim,
                cfg.hidden,
                cfg.classes,
                cfg.n_fc,
                cfg.n_lstm,
                cfg.batch,
                cfg.seq_len,
            )
        )
        fh.write(struct.pack("<f", cfg.dropout_p))
        names = sorted(params.tensors)
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            data = np.ascontiguousarray(params.tensors[name], dtype="<f4")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def load_params(path) -> NetParams:
    with open(path, "rb") as fh:
        if fh.read(4) != WEIGHTS_MAGIC:
            raise ValueError("not a weight container (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != WEIGHTS_VERSION:
            raise ValueError(f"unsupported container version {version}")
        dims = struct.unpack("<7I", fh.read(28))
        (dropout_p,) = struct.unpack("<f", fh.read(4))
        cfg = NetConfig(
            input_dim=dims[0],
            hidden=dims[1],
            classes=dims[2],
            n_fc=dims[3],
            n_lstm=dims[4],
            dropout_p=float(dropout_p),
            batch=dims[5],
            seq_len=dims[6],
        )
        (n_tensors,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
            count = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
            tensors[name] = data.astype(float)
    return NetParams(cfg, tensors)
