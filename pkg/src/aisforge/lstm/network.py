"""Stacked LSTM regressor with hand-written backpropagation through time.

Gate weights are stored stacked along the last axis in the order
input (i), forget (f), candidate (k), output (o)::

    W: (in, 4u)   U: (u, 4u)   b: (4u,)   V_o: (u,)

One step, with ``h`` the state and ``c`` the carry entering the step::

    i = sigmoid(x W_i + h U_i + b_i)
    f = sigmoid(x W_f + h U_f + b_f)
    k = tanh(x W_k + h U_k + b_k)
    c' = i * k + c * f
    o = sigmoid(x W_o + h U_o + c * V_o + b_o)
    h' = o * tanh(c')        (h' = o when ``literal_eq9`` is set)
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ShapeMismatch

GATES = ("i", "f", "k", "o")
HEADS = ("relu", "inverted_relu", "linear")
SNAPSHOT_VERSION = 1


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(eq=False)
class LstmLayer:
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    V_o: np.ndarray
    return_sequences: bool = True
    literal_eq9: bool = False

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.U = np.asarray(self.U, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.V_o = np.asarray(self.V_o, dtype=float)
        u = self.units
        if self.W.ndim != 2 or self.W.shape[1] != 4 * u:
            raise ShapeMismatch(f"W has shape {self.W.shape}, expected (in, {4 * u})")
        if self.U.shape != (u, 4 * u) or self.b.shape != (4 * u,) or self.V_o.shape != (u,):
            raise ShapeMismatch("U, b and V_o must have shapes (u, 4u), (4u,), (u,)")

    @property
    def units(self) -> int:
        return self.U.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W.shape[0]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(W_g, U_g, b_g) views for one gate."""
        g = GATES.index(name)
        u = self.units
        sl = slice(g * u, (g + 1) * u)
        return self.W[:, sl], self.U[:, sl], self.b[sl]


@dataclass(eq=False)
class LstmNetwork:
    layers: list[LstmLayer]
    head_w: np.ndarray
    head_b: float | np.ndarray = 0.0
    head: str = "linear"
    l2: float = 1e-6
    dropout: float = 0.0
    # Fixed (non-trainable) affine scaling: inputs are multiplied by
    # ``input_scale`` and the head output by ``output_scale``.
    input_scale: float = 1.0
    output_scale: float = 1.0

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}")
        if not self.layers:
            raise ValueError("need at least one LSTM layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.units != nxt.input_dim:
                raise ShapeMismatch(f"layer of {prev.units} units feeds a layer expecting {nxt.input_dim}")
            if not prev.return_sequences:
                raise ValueError("only the last LSTM layer may drop the sequence")
        if self.layers[-1].return_sequences:
            raise ValueError("last LSTM layer must return only its final output")
        self.head_w = np.asarray(self.head_w, dtype=float)
        if self.head_w.shape != (self.layers[-1].units,):
            raise ShapeMismatch("head weights must match the last layer's units")
        # 0-d array so optimizers can update it in place like the others
        self.head_b = np.array(float(self.head_b))

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    # parameter access ------------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        """Live references to every trainable array, in a fixed order."""
        out = {}
        for n, layer in enumerate(self.layers):
            out[f"layers.{n}.W"] = layer.W
            out[f"layers.{n}.U"] = layer.U
            out[f"layers.{n}.b"] = layer.b
            out[f"layers.{n}.V_o"] = layer.V_o
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out

    def get_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params().items()}

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        live = self.params()
        for k, v in values.items():
            if live[k].shape != np.shape(v):
                raise ShapeMismatch(f"{k}: {np.shape(v)} != {live[k].shape}")
            live[k][...] = v

    def l2_penalty(self) -> float:
        return self.l2 * sum(float(np.sum(l.W**2) + np.sum(l.U**2)) for l in self.layers)


def init_layer(input_dim, units, rng, return_sequences=True, literal_eq9=False, zeros=False) -> LstmLayer:
    if zeros:
        W = np.zeros((input_dim, 4 * units))
        U = np.zeros((units, 4 * units))
        b = np.zeros(4 * units)
    else:
        lim_w = np.sqrt(6.0 / (input_dim + 4 * units))
        lim_u = np.sqrt(6.0 / (units + 4 * units))
        W = rng.uniform(-lim_w, lim_w, size=(input_dim, 4 * units))
        U = rng.uniform(-lim_u, lim_u, size=(units, 4 * units))
        b = np.zeros(4 * units)
        b[units:2 * units] = 1.0
    return LstmLayer(W, U, b, np.zeros(units), return_sequences, literal_eq9)


def init_network(units=(8, 4), input_dim: int = 1, head: str = "linear", l2: float = 1e-6,
                 dropout: float = 0.0, literal_eq9: bool = False, rng=None, zeros: bool = False) -> LstmNetwork:
    """Glorot-uniform W/U, zero biases except a forget-gate bias of 1."""
    rng = rng if rng is not None else np.random.default_rng(0)
    layers = []
    dim = input_dim
    for n, u in enumerate(units):
        last = n == len(units) - 1
        layers.append(init_layer(dim, u, rng, not last, literal_eq9, zeros))
        dim = u
    if zeros:
        head_w = np.zeros(dim)
    else:
        lim = np.sqrt(6.0 / (dim + 1))
        head_w = rng.uniform(-lim, lim, size=dim)
    return LstmNetwork(layers, head_w, 0.0, head, l2, dropout)


def cell_step(layer: LstmLayer, x, h, c):
    """One step; returns ``(output, carry_next)``. Works on vectors or row batches."""
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    c = np.asarray(c, dtype=float)
    if x.shape[-1] != layer.input_dim or h.shape[-1] != layer.units or c.shape[-1] != layer.units:
        raise ShapeMismatch("input, state or carry width does not match the layer")
    out, c_new, _ = _step(layer, x, h, c)
    return out, c_new


def _step(layer, x, h, c):
    u = layer.units
    a = x @ layer.W + h @ layer.U + layer.b
    i = sigmoid(a[..., :u])
    f = sigmoid(a[..., u:2 * u])
    k = np.tanh(a[..., 2 * u:3 * u])
    o = sigmoid(a[..., 3 * u:] + c * layer.V_o)
    c_new = i * k + c * f
    tc = np.tanh(c_new)
    out = o if layer.literal_eq9 else o * tc
    return out, c_new, (i, f, k, o, tc)


def _layer_forward(layer: LstmLayer, X: np.ndarray, mask=None):
    B, T, _ = X.shape
    u = layer.units
    Xin = X * mask[:, None, :] if mask is not None else X
    H = np.zeros((B, T + 1, u))
    C = np.zeros((B, T + 1, u))
    gates = np.empty((B, T, 5, u))
    for t in range(T):
        h, c, g = _step(layer, Xin[:, t], H[:, t], C[:, t])
        H[:, t + 1] = h
        C[:, t + 1] = c
        gates[:, t] = np.stack(g, axis=1)
    return H[:, 1:], (Xin, H, C, gates, mask)


def _layer_backward(layer: LstmLayer, cache, dH: np.ndarray):
    Xin, H, C, gates, mask = cache
    B, T, u = dH.shape
    dW = np.zeros_like(layer.W)
    dU = np.zeros_like(layer.U)
    db = np.zeros_like(layer.b)
    dV = np.zeros_like(layer.V_o)
    dX = np.empty_like(Xin)
    dh_next = np.zeros((B, u))
    dc_next = np.zeros((B, u))
    for t in range(T - 1, -1, -1):
        i, f, k, o, tc = (gates[:, t, j] for j in range(5))
        c_prev = C[:, t]
        dh = dH[:, t] + dh_next
        if layer.literal_eq9:
            do = dh
            dc = dc_next
        else:
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
        da_o = do * o * (1.0 - o)
        da = np.concatenate([
            dc * k * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dc * i * (1.0 - k * k),
            da_o,
        ], axis=1)
        dW += Xin[:, t].T @ da
        dU += H[:, t].T @ da
        db += da.sum(axis=0)
        dV += np.sum(da_o * c_prev, axis=0)
        dX[:, t] = da @ layer.W.T
        dh_next = da @ layer.U.T
        dc_next = dc * f + da_o * layer.V_o
    if mask is not None:
        dX *= mask[:, None, :]
    return {"W": dW, "U": dU, "b": db, "V_o": dV}, dX


def _as_batch(net: LstmNetwork, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :, None]
    elif X.ndim == 2:
        X = X[:, :, None] if net.input_dim == 1 else X[None]
    if X.ndim != 3 or X.shape[2] != net.input_dim:
        raise ShapeMismatch(f"input of shape {X.shape} does not fit input_dim {net.input_dim}")
    return X


def _head(net: LstmNetwork, z):
    if net.head == "relu":
        return np.maximum(z, 0.0), (z > 0).astype(float)
    if net.head == "inverted_relu":
        return np.minimum(z, 0.0), (z < 0).astype(float)
    return z, np.ones_like(z)


def forward(net: LstmNetwork, X, seq_len: int | None = None) -> np.ndarray:
    """Predictions for a batch of sequences (dropout off).

    ``X`` may be ``(T,)`` for one univariate sequence, ``(B, T)`` or
    ``(B, T, input_dim)``; the result has shape ``(B,)``.
    """
    Xb = _as_batch(net, X)
    if seq_len is not None and Xb.shape[1] != seq_len:
        raise ShapeMismatch(f"sequence length {Xb.shape[1]} != {seq_len}")
    if not np.all(np.isfinite(Xb)):
        raise ValueError("non-finite input")
    out = Xb * net.input_scale
    for layer in net.layers:
        out, _ = _layer_forward(layer, out)
    z = out[:, -1] @ net.head_w + float(net.head_b)
    return net.output_scale * _head(net, z)[0]


def forward_backward(net: LstmNetwork, X, dloss_dpred, rng=None, training: bool = False):
    """Forward pass followed by backprop of ``dloss/dpred`` (L2 not included).

    ``dloss_dpred`` is a callable taking the predictions and returning
    ``(loss, grad)``. Dropout masks are drawn from ``rng`` when training.
    Returns ``(loss, predictions, grads)``.
    """
    Xb = _as_batch(net, X)
    B = Xb.shape[0]
    caches = []
    out = Xb * net.input_scale
    for layer in net.layers:
        mask = None
        if training and net.dropout > 0:
            keep = 1.0 - net.dropout
            mask = (rng.random((B, layer.input_dim)) < keep) / keep
        out, cache = _layer_forward(layer, out, mask)
        caches.append(cache)
    h_last = out[:, -1]
    z = h_last @ net.head_w + float(net.head_b)
    act, dact = _head(net, z)
    pred = net.output_scale * act
    loss, dpred = dloss_dpred(pred)
    dz = dpred * net.output_scale * dact

    grads = {"head.w": h_last.T @ dz, "head.b": np.array(dz.sum())}
    dH = np.zeros_like(out)
    dH[:, -1] = np.outer(dz, net.head_w)
    for n in range(len(net.layers) - 1, -1, -1):
        g, dX = _layer_backward(net.layers[n], caches[n], dH)
        for name, val in g.items():
            grads[f"layers.{n}.{name}"] = val
        dH = dX
    return loss, pred, grads


def add_l2(net: LstmNetwork, grads: dict[str, np.ndarray]) -> float:
    """Add the L2 gradient in place and return the penalty value."""
    if net.l2 == 0:
        return 0.0
    for n, layer in enumerate(net.layers):
        grads[f"layers.{n}.W"] = grads[f"layers.{n}.W"] + 2.0 * net.l2 * layer.W
        grads[f"layers.{n}.U"] = grads[f"layers.{n}.U"] + 2.0 * net.l2 * layer.U
    return net.l2_penalty()


# snapshots -----------------------------------------------------------------

def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def snapshot_dict(net: LstmNetwork, config: dict | None = None) -> dict:
    layers = []
    for layer in net.layers:
        entry = {"units": layer.units, "input_dim": layer.input_dim,
                 "return_sequences": layer.return_sequences, "gate_order": "".join(GATES)}
        for name in ("W", "U", "b", "V_o"):
            arr = getattr(layer, name)
            entry[name] = {"shape": list(arr.shape), "data": arr.ravel(order="C").tolist()}
        layers.append(entry)
    return {
        "version": SNAPSHOT_VERSION,
        "config_hash": config_hash(config or {}),
        "head": net.head,
        "l2": net.l2,
        "dropout": net.dropout,
        "literal_eq9": net.layers[0].literal_eq9,
        "layers": layers,
        "head_w": net.head_w.tolist(),
        "head_b": float(net.head_b),
        "input_scale": net.input_scale,
        "output_scale": net.output_scale,
    }


def save_snapshot(net: LstmNetwork, path: str | Path, config: dict | None = None) -> None:
    Path(path).write_text(json.dumps(snapshot_dict(net, config)), encoding="utf-8")


def load_snapshot(path: str | Path) -> LstmNetwork:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if d.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {d.get('version')!r}")
    layers = []
    for e in d["layers"]:
        arrs = {n: np.asarray(e[n]["data"], dtype=float).reshape(e[n]["shape"]) for n in ("W", "U", "b", "V_o")}
        layers.append(LstmLayer(arrs["W"], arrs["U"], arrs["b"], arrs["V_o"],
                                e["return_sequences"], d["literal_eq9"]))
    return LstmNetwork(layers, np.asarray(d["head_w"]), d["head_b"], d["head"], d["l2"], d["dropout"],
                       d.get("input_scale", 1.0), d.get("output_scale", 1.0))
