"""Self-contained learning substrate: dense nets, an LSTM classifier, Adam.

Everything is float64 numpy. Two network shapes are used across the package:

* sequence classifier: LSTM cell -> affine stack -> softmax over classes;
* probability regressor: tanh hidden stack -> single sigmoid unit.

The LSTM cell update is intentionally nonstandard: the forget gate scales the
previous step's tanh candidate rather than the previous cell state,

    c_t = i_t * tanh(W_c z_t + b_c) + f_t * tanh(W_c z_{t-1} + b_c),

with z_t the concatenation [a_{t-1}, x_t]. The conventional update
(f_t * c_{t-1}) is available via ``standard_cell=True``.

Checkpoint format (little endian): magic ``FSNN\\x01``, uint32 JSON-header
length, JSON header (structure, sizes, feature normalization), then each
parameter array as uint8 ndim, uint32 dims, row-major float64 payload.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig

GRAD_CLIP_NORM = 10.0
CE_EPS = 1e-12

# Counts how often cross_entropy had to clamp a zero probability.
clamp_warnings = 0


class NeuralError(ValueError):
    pass


def _init_matrix(rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
    r = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-r, r, size=(n_out, n_in))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class DenseLayer:
    """Affine layer with an elementwise activation."""

    ACTIVATIONS = ("identity", "tanh", "sigmoid")

    def __init__(self, n_in: int, n_out: int, activation: str = "identity",
                 rng: np.random.Generator | None = None):
        if activation not in self.ACTIVATIONS:
            raise NeuralError(f"unknown activation {activation!r}")
        rng = rng or np.random.default_rng(0)
        self.W = _init_matrix(rng, n_out, n_in)
        self.b = np.zeros(n_out)
        self.activation = activation

    def forward(self, x: np.ndarray):
        z = x @ self.W.T + self.b
        if self.activation == "tanh":
            a = np.tanh(z)
        elif self.activation == "sigmoid":
            a = sigmoid(z)
        else:
            a = z
        return a, (x, a)

    def backward(self, cache, grad_out: np.ndarray):
        x, a = cache
        if self.activation == "tanh":
            dz = grad_out * (1.0 - a * a)
        elif self.activation == "sigmoid":
            dz = grad_out * a * (1.0 - a)
        else:
            dz = grad_out
        dW = dz.T @ x
        db = dz.sum(axis=0)
        dx = dz @ self.W
        return dx, [dW, db]

    def params(self):
        return [self.W, self.b]


class LstmCell:
    """Single LSTM cell read out at the final step of the window."""

    def __init__(self, n_in: int, hidden: int, standard_cell: bool = False,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        width = hidden + n_in
        self.n_in = n_in
        self.hidden = hidden
        self.standard_cell = standard_cell
        self.W_i = _init_matrix(rng, hidden, width)
        self.W_f = _init_matrix(rng, hidden, width)
        self.W_o = _init_matrix(rng, hidden, width)
        self.W_c = _init_matrix(rng, hidden, width)
        self.b_i = np.zeros(hidden)
        self.b_f = np.zeros(hidden)
        self.b_o = np.zeros(hidden)
        self.b_c = np.zeros(hidden)

    def params(self):
        return [self.W_i, self.W_f, self.W_o, self.W_c,
                self.b_i, self.b_f, self.b_o, self.b_c]

    def forward(self, seq: np.ndarray):
        """seq: (batch, steps, n_in) -> final activation (batch, hidden)."""
        if seq.ndim != 3 or seq.shape[2] != self.n_in:
            raise NeuralError("sequence must be (batch, steps, n_in)")
        if not np.isfinite(seq).all():
            raise NeuralError("non-finite input")
        B, T, _ = seq.shape
        H = self.hidden
        a_prev = np.zeros((B, H))
        c_prev = np.zeros((B, H))
        # Candidate of the pre-window step: z_0 is all zero.
        g_prev = np.tile(np.tanh(self.b_c), (B, 1))
        steps = []
        for t in range(T):
            z = np.concatenate([a_prev, seq[:, t, :]], axis=1)
            i = sigmoid(z @ self.W_i.T + self.b_i)
            f = sigmoid(z @ self.W_f.T + self.b_f)
            o = sigmoid(z @ self.W_o.T + self.b_o)
            g = np.tanh(z @ self.W_c.T + self.b_c)
            if self.standard_cell:
                c = i * g + f * c_prev
            else:
                c = i * g + f * g_prev
            tc = np.tanh(c)
            a = o * tc
            steps.append((z, i, f, o, g, c, tc, g_prev, c_prev))
            a_prev, c_prev, g_prev = a, c, g
        return a_prev, (seq, steps)

    def backward(self, cache, grad_a_final: np.ndarray):
        seq, steps = cache
        B, T, _ = seq.shape
        H = self.hidden
        dW_i = np.zeros_like(self.W_i)
        dW_f = np.zeros_like(self.W_f)
        dW_o = np.zeros_like(self.W_o)
        dW_c = np.zeros_like(self.W_c)
        db_i = np.zeros_like(self.b_i)
        db_f = np.zeros_like(self.b_f)
        db_o = np.zeros_like(self.b_o)
        db_c = np.zeros_like(self.b_c)

        da_next = grad_a_final
        dc_next = np.zeros((B, H))       # dL/dc_{t+1}
        dg_from_next = np.zeros((B, H))  # forget-branch reuse of g_t at t+1
        for t in range(T - 1, -1, -1):
            z, i, f, o, g, c, tc, g_prev, c_prev = steps[t]
            da = da_next
            dc = da * o * (1.0 - tc * tc) + dc_next
            do = da * tc
            di = dc * g
            dg = dc * i + dg_from_next
            if self.standard_cell:
                df = dc * c_prev
                dc_next = dc * f
                dg_from_next = np.zeros((B, H))
            else:
                df = dc * g_prev
                dc_next = np.zeros((B, H))
                dg_from_next = dc * f
            dzi = di * i * (1.0 - i)
            dzf = df * f * (1.0 - f)
            dzo = do * o * (1.0 - o)
            dzg = dg * (1.0 - g * g)
            dW_i += dzi.T @ z
            dW_f += dzf.T @ z
            dW_o += dzo.T @ z
            dW_c += dzg.T @ z
            db_i += dzi.sum(axis=0)
            db_f += dzf.sum(axis=0)
            db_o += dzo.sum(axis=0)
            db_c += dzg.sum(axis=0)
            dz = dzi @ self.W_i + dzf @ self.W_f + dzo @ self.W_o + dzg @ self.W_c
            da_next = dz[:, :H]
        # The pre-window candidate g_0 = tanh(b_c) feeds the first forget branch.
        if not self.standard_cell:
            g0 = np.tanh(self.b_c)
            db_c += (dg_from_next * (1.0 - g0 * g0)).sum(axis=0)
        return [dW_i, dW_f, dW_o, dW_c, db_i, db_f, db_o, db_c]


class Network:
    """LSTM classifier or dense probability regressor, depending on parts."""

    def __init__(self, lstm: LstmCell | None, dense: list[DenseLayer], head: str):
        if head not in ("softmax", "sigmoid"):
            raise NeuralError(f"unknown head {head!r}")
        self.lstm = lstm
        self.dense = dense
        self.head = head
        self.feature_mean: np.ndarray | None = None
        self.feature_std: np.ndarray | None = None

    # -- construction -------------------------------------------------------
    @staticmethod
    def lstm_classifier(n_in: int, n_classes: int, hidden: int,
                        dense_hidden: tuple[int, ...], seed: int,
                        standard_cell: bool = False) -> "Network":
        rng = np.random.default_rng(seed)
        cell = LstmCell(n_in, hidden, standard_cell=standard_cell, rng=rng)
        layers = []
        prev = hidden
        for width in dense_hidden:
            layers.append(DenseLayer(prev, width, "identity", rng))
            prev = width
        layers.append(DenseLayer(prev, n_classes, "identity", rng))
        return Network(cell, layers, "softmax")

    @staticmethod
    def probability_regressor(n_in: int, dense_hidden: tuple[int, ...],
                              seed: int) -> "Network":
        rng = np.random.default_rng(seed)
        layers = []
        prev = n_in
        for width in dense_hidden:
            layers.append(DenseLayer(prev, width, "tanh", rng))
            prev = width
        layers.append(DenseLayer(prev, 1, "sigmoid", rng))
        return Network(None, layers, "sigmoid")

    # -- inference ----------------------------------------------------------
    def normalize(self, X: np.ndarray) -> np.ndarray:
        if self.feature_mean is None:
            return X
        return (X - self.feature_mean) / self.feature_std

    def forward(self, X: np.ndarray, normalized: bool = False):
        if not np.isfinite(X).all():
            raise NeuralError("non-finite input")
        if not normalized:
            X = self.normalize(X)
        caches = []
        if self.lstm is not None:
            a, cache = self.lstm.forward(X)
            caches.append(cache)
        else:
            a = X
        for layer in self.dense:
            a, cache = layer.forward(a)
            caches.append(cache)
        if self.head == "softmax":
            out = softmax(a)
        else:
            out = a  # sigmoid applied by the final layer activation
        return out, (caches, out)

    def predict(self, X: np.ndarray) -> np.ndarray:
        out, _ = self.forward(X)
        return out

    # -- training -----------------------------------------------------------
    def loss(self, out: np.ndarray, y: np.ndarray) -> float:
        if self.head == "softmax":
            p = out[np.arange(out.shape[0]), y.astype(int)]
            return float(-np.log(np.maximum(p, CE_EPS)).mean())
        p = out[:, 0]
        p = np.clip(p, CE_EPS, 1.0 - CE_EPS)
        yv = y.astype(float)
        return float(-(yv * np.log(p) + (1.0 - yv) * np.log(1.0 - p)).mean())

    def loss_and_grads(self, X: np.ndarray, y: np.ndarray,
                       sample_weight: np.ndarray | None = None):
        """Mean loss over the batch plus exact gradients for every parameter."""
        Xn = self.normalize(X)
        out, (caches, _) = self.forward(Xn, normalized=True)
        B = out.shape[0]
        weight = np.ones(B) if sample_weight is None else sample_weight
        wsum = float(weight.sum())
        if self.head == "softmax":
            p = out[np.arange(B), y.astype(int)]
            loss = float(-(weight * np.log(np.maximum(p, CE_EPS))).sum() / wsum)
            grad = out.copy()
            grad[np.arange(B), y.astype(int)] -= 1.0
            grad *= (weight / wsum)[:, None]
        else:
            p = np.clip(out[:, 0], CE_EPS, 1.0 - CE_EPS)
            yv = y.astype(float)
            loss = float(-(weight * (yv * np.log(p) + (1.0 - yv) * np.log(1.0 - p))).sum() / wsum)
            # Combined with the sigmoid layer: d loss / d z = p - y.
            grad = ((out[:, 0] - yv) * weight / wsum)[:, None]

        grads: list[np.ndarray] = []
        cache_iter = list(caches)
        if self.head == "sigmoid":
            # The final layer's sigmoid derivative is folded into grad above:
            # feed (p - y) straight through as dz of the last layer.
            last = self.dense[-1]
            x_last, _ = cache_iter[-1]
            dW = grad.T @ x_last
            db = grad.sum(axis=0)
            dx = grad @ last.W
            grads = [dW, db]
            upstream = dx
            remaining = self.dense[:-1]
            rem_caches = cache_iter[len(cache_iter) - 1 - len(remaining):-1]
            for layer, cache in zip(reversed(remaining), reversed(rem_caches)):
                upstream, g = layer.backward(cache, upstream)
                grads = g + grads
        else:
            upstream = grad
            dense_caches = cache_iter[1:] if self.lstm is not None else cache_iter
            for layer, cache in zip(reversed(self.dense), reversed(dense_caches)):
                upstream, g = layer.backward(cache, upstream)
                grads = g + grads
        if self.lstm is not None:
            grads = self.lstm.backward(cache_iter[0], upstream) + grads
        return loss, grads

    def params(self) -> list[np.ndarray]:
        out = list(self.lstm.params()) if self.lstm is not None else []
        for layer in self.dense:
            out += layer.params()
        return out

    def set_params(self, values: list[np.ndarray]) -> None:
        for current, new in zip(self.params(), values):
            current[...] = new

    # -- persistence --------------------------------------------------------
    MAGIC = b"FSNN\x01"

    def save(self, path) -> None:
        header = {
            "head": self.head,
            "has_lstm": self.lstm is not None,
            "dense": [(l.W.shape[1], l.W.shape[0], l.activation) for l in self.dense],
            "normalized": self.feature_mean is not None,
        }
        if self.lstm is not None:
            header["lstm"] = {"n_in": self.lstm.n_in, "hidden": self.lstm.hidden,
                              "standard_cell": self.lstm.standard_cell}
        arrays = self.params()
        if self.feature_mean is not None:
            arrays = arrays + [self.feature_mean, self.feature_std]
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(self.MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<I", len(arrays)))
            for arr in arrays:
                fh.write(struct.pack("<B", arr.ndim))
                for dim in arr.shape:
                    fh.write(struct.pack("<I", dim))
                fh.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())

    @staticmethod
    def load(path) -> "Network":
        with open(path, "rb") as fh:
            magic = fh.read(5)
            if magic != Network.MAGIC:
                raise NeuralError("not a fleetsim network checkpoint")
            (hlen,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(hlen))
            (count,) = struct.unpack("<I", fh.read(4))
            arrays = []
            for _ in range(count):
                (ndim,) = struct.unpack("<B", fh.read(1))
                shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
                size = int(np.prod(shape)) if shape else 1
                data = np.frombuffer(fh.read(8 * size), dtype=np.float64).reshape(shape)
                arrays.append(data.copy())
        lstm = None
        if header["has_lstm"]:
            meta = header["lstm"]
            lstm = LstmCell(meta["n_in"], meta["hidden"], meta["standard_cell"])
        dense = [DenseLayer(n_in, n_out, act) for n_in, n_out, act in header["dense"]]
        net = Network(lstm, dense, header["head"])
        n_params = len(net.params())
        net.set_params(arrays[:n_params])
        if header["normalized"]:
            net.feature_mean = arrays[n_params]
            net.feature_std = arrays[n_params + 1]
        return net


def cross_entropy(p: np.ndarray, label: int) -> float:
    """-log p[label], with zero probabilities clamped at 1e-12 (counted)."""
    global clamp_warnings
    p = np.asarray(p, dtype=np.float64)
    if label < 0 or label >= p.shape[-1]:
        raise NeuralError(f"label {label} out of range")
    value = float(p[label])
    if value < CE_EPS:
        clamp_warnings += 1
        value = CE_EPS
    return float(-np.log(value))


def lstm_forward(network: Network, window: np.ndarray) -> np.ndarray:
    """Class probabilities for one (steps, features) window."""
    if network.lstm is None or network.head != "softmax":
        raise NeuralError("lstm_forward needs an LSTM classifier")
    out, _ = network.forward(window[None, :, :])
    return out[0]


@dataclass
class TrainResult:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False


class AdamState:
    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_gradients(grads: list[np.ndarray], max_norm: float = GRAD_CLIP_NORM) -> None:
    total = 0.0
    for g in grads:
        total += float((g * g).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale


def train(network: Network, X: np.ndarray, y: np.ndarray, cfg: TrainConfig,
          seed: int = 0) -> TrainResult:
    """Mini-batch Adam with a validation split and early stopping.

    Feature normalization statistics come from the training split only and
    are stored on the network. Deterministic given the seed.
    """
    n = X.shape[0]
    if n == 0:
        raise NeuralError("empty dataset")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_val = int(round(n * cfg.validation_fraction))
    if n - n_val < 1:
        n_val = 0
    val_idx = order[:n_val]
    train_idx = order[n_val:]

    if X.ndim == 3:
        # Sequence input: one statistic per channel, pooled over window steps.
        pooled = X[train_idx].reshape(-1, X.shape[2])
    else:
        pooled = X[train_idx]
    mean = pooled.mean(axis=0)
    std = pooled.std(axis=0)
    std = np.where(std < 1e-9, 1.0, std)
    network.feature_mean = mean
    network.feature_std = std

    optimizer = AdamState(network.params(), cfg.learning_rate)
    result = TrainResult()
    best_val = np.inf
    best_params = [p.copy() for p in network.params()]
    patience_left = cfg.patience

    Xtr, ytr = X[train_idx], y[train_idx]
    Xval, yval = X[val_idx], y[val_idx]

    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(train_idx))
        epoch_loss = 0.0
        seen = 0
        for start in range(0, len(perm), cfg.batch_size):
            batch = perm[start:start + cfg.batch_size]
            loss, grads = network.loss_and_grads(Xtr[batch], ytr[batch])
            clip_gradients(grads)
            optimizer.step(network.params(), grads)
            epoch_loss += loss * len(batch)
            seen += len(batch)
        train_loss = epoch_loss / max(seen, 1)
        if n_val:
            out = network.predict(Xval)
            val_loss = network.loss(out, yval)
        else:
            val_loss = train_loss
        result.train_loss.append(train_loss)
        result.val_loss.append(val_loss)
        if not np.isfinite(val_loss):
            break
        if val_loss < best_val - 1e-9:
            best_val = val_loss
            result.best_epoch = epoch
            best_params = [p.copy() for p in network.params()]
            patience_left = cfg.patience
        else:
            patience_left -= 1
            if patience_left <= 0:
                result.stopped_early = True
                break
    network.set_params(best_params)
    return result


def numeric_gradients(network: Network, X: np.ndarray, y: np.ndarray,
                      h: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of the mean batch loss, for verification."""
    grads = []
    for p in network.params():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            out, _ = network.forward(X)
            lo_plus = network.loss(out, y)
            flat[idx] = orig - h
            out, _ = network.forward(X)
            lo_minus = network.loss(out, y)
            flat[idx] = orig
            gflat[idx] = (lo_plus - lo_minus) / (2 * h)
        grads.append(g)
    return grads
