"""Learned message passing on the Tanner graph.

One decoding iteration on every node ``j`` of the combined Tanner graph:

* message  ``m_{i->j} = W2 relu(W1 [h_i ; h_j ; e_{type(i->j)}] + b1) + b2``
* aggregate ``M_j = sum_{i in N(j)} m_{i->j}``
* update   ``h_j <- GRU(h_j, [x_j ; M_j])``

and a readout MLP turns the state of every error node into logits over
``{I, X, Z, Y}``. The raw input ``x_j`` is the embedded syndrome bit
(``x * w_embed``, no bias), so error nodes and unflipped checks start from
the zero vector. Check type enters through four learned edge-type vectors:
error->X check, error->Z check, X check->error, Z check->error.

Parameter shapes depend only on the feature sizes, so one model runs on
Tanner graphs of any size.

The second message layer is linear, so it is applied after summing the
hidden activations over each neighbourhood; neighbours are summed in
ascending node order.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import noise
from ._accel import USE_NUMBA, njit
from .codes import TannerGraph

NUM_CLASSES = 4
NUM_EDGE_TYPES = 4

# checkpoint block order
PARAM_NAMES = (
    "embed", "edge_embed",
    "msg_w1", "msg_b1", "msg_w2", "msg_b2",
    "gru_wx", "gru_wm", "gru_wh", "gru_bi", "gru_bh",
    "ro_w1", "ro_b1", "ro_w2", "ro_b2",
)


def param_shapes(node_dim: int, msg_hidden: int, edge_dim: int) -> dict[str, tuple[int, ...]]:
    d, hid, e = node_dim, msg_hidden, edge_dim
    return {
        "embed": (d,),
        "edge_embed": (NUM_EDGE_TYPES, e),
        "msg_w1": (2 * d + e, hid),
        "msg_b1": (hid,),
        "msg_w2": (hid, d),
        "msg_b2": (d,),
        "gru_wx": (d, 3 * d),
        "gru_wm": (d, 3 * d),
        "gru_wh": (d, 3 * d),
        "gru_bi": (3 * d,),
        "gru_bh": (3 * d,),
        "ro_w1": (d, d),
        "ro_b1": (d,),
        "ro_w2": (d, NUM_CLASSES),
        "ro_b2": (NUM_CLASSES,),
    }


_FAN_IN = {
    "embed": lambda d, h, e: 1, "edge_embed": lambda d, h, e: 1,
    "msg_w1": lambda d, h, e: 2 * d + e, "msg_b1": lambda d, h, e: 2 * d + e,
    "msg_w2": lambda d, h, e: h, "msg_b2": lambda d, h, e: h,
    "gru_wx": lambda d, h, e: d, "gru_wm": lambda d, h, e: d, "gru_wh": lambda d, h, e: d,
    "gru_bi": lambda d, h, e: d, "gru_bh": lambda d, h, e: d,
    "ro_w1": lambda d, h, e: d, "ro_b1": lambda d, h, e: d,
    "ro_w2": lambda d, h, e: d, "ro_b2": lambda d, h, e: d,
}


@dataclass
class GnnModel:
    node_dim: int
    msg_hidden: int
    edge_dim: int
    params: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    @classmethod
    def init(cls, node_dim: int = 64, msg_hidden: int = 128, edge_dim: int | None = None,
             seed: int = 0, scale: float = 1.0, dtype=np.float32) -> "GnnModel":
        """Uniform ``+-scale/sqrt(fan_in)`` initialisation."""
        edge_dim = node_dim if edge_dim is None else edge_dim
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in param_shapes(node_dim, msg_hidden, edge_dim).items():
            bound = scale / np.sqrt(_FAN_IN[name](node_dim, msg_hidden, edge_dim))
            params[name] = rng.uniform(-bound, bound, shape).astype(dtype)
        return cls(node_dim, msg_hidden, edge_dim, params)

    @property
    def dtype(self):
        return self.params["embed"].dtype

    def astype(self, dtype) -> "GnnModel":
        return GnnModel(self.node_dim, self.msg_hidden, self.edge_dim,
                        {k: v.astype(dtype) for k, v in self.params.items()}, dict(self.meta))

    def copy(self) -> "GnnModel":
        return self.astype(self.dtype)

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def check(self) -> None:
        shapes = param_shapes(self.node_dim, self.msg_hidden, self.edge_dim)
        for name, shape in shapes.items():
            if self.params[name].shape != shape:
                raise ValueError(f"{name}: shape {self.params[name].shape}, expected {shape}")
            if not np.all(np.isfinite(self.params[name])):
                raise ValueError(f"{name}: non-finite parameters")


# Checkpoint file, little-endian:
#   magic b"TGNN", u16 version (1), u32 header length L, L bytes UTF-8 JSON
#   header {"node_dim", "msg_hidden", "edge_dim", "param_order", "meta": {...}}
#   then every block of PARAM_NAMES in order as raw float32, C order
CKPT_MAGIC = b"TGNN"
CKPT_VERSION = 1


def save_model(model: GnnModel, path) -> None:
    header = json.dumps({
        "node_dim": model.node_dim, "msg_hidden": model.msg_hidden, "edge_dim": model.edge_dim,
        "param_order": list(PARAM_NAMES), "meta": model.meta,
    }, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC + struct.pack("<HI", CKPT_VERSION, len(header)) + header)
    for name in PARAM_NAMES:
        buf.write(np.ascontiguousarray(model.params[name], dtype="<f4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_model(path) -> GnnModel:
    raw = Path(path).read_bytes()
    if raw[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    version, hlen = struct.unpack_from("<HI", raw, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 10
    header = json.loads(raw[off:off + hlen].decode("utf-8"))
    off += hlen
    shapes = param_shapes(header["node_dim"], header["msg_hidden"], header["edge_dim"])
    params = {}
    for name in header["param_order"]:
        size = int(np.prod(shapes[name]))
        params[name] = np.frombuffer(raw, dtype="<f4", count=size, offset=off).reshape(shapes[name]).astype(np.float32)
        off += 4 * size
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    model = GnnModel(header["node_dim"], header["msg_hidden"], header["edge_dim"], params, header.get("meta", {}))
    model.check()
    return model


@dataclass(frozen=True, eq=False)
class GraphIndex:
    """Padded neighbour tables of a Tanner graph used by the batched kernels."""

    n: int
    num_nodes: int
    nbr: np.ndarray  # (N, K) source node of slot k of node j; pads point at 0
    mask: np.ndarray  # (N, K) 1.0 for real slots
    etype: np.ndarray  # (N, K) edge type of nbr[j, k] -> j
    deg: np.ndarray  # (N,)
    rev: np.ndarray  # (N, K) flat slot (j*K + k) where node i is a source; pads -> N*K
    h_x: np.ndarray
    h_z: np.ndarray

    @property
    def width(self) -> int:
        return self.nbr.shape[1]

    @classmethod
    def build(cls, graph: TannerGraph, h_x: np.ndarray, h_z: np.ndarray) -> "GraphIndex":
        n, mx = graph.num_error_nodes, graph.num_x_checks
        big_n = graph.num_nodes
        nbhd = graph.neighborhoods
        width = max(1, max((len(nb) for nb in nbhd), default=1))
        nbr = np.zeros((big_n, width), dtype=np.int64)
        mask = np.zeros((big_n, width))
        etype = np.zeros((big_n, width), dtype=np.int64)
        slot_of = {}
        for j, nb in enumerate(nbhd):
            for k, i in enumerate(nb):
                nbr[j, k] = i
                mask[j, k] = 1.0
                slot_of[(int(i), j)] = j * width + k
                if j < n:  # check -> error
                    etype[j, k] = 2 if i < n + mx else 3
                else:  # error -> check
                    etype[j, k] = 0 if j < n + mx else 1
        rev = np.full((big_n, width), big_n * width, dtype=np.int64)
        for i, nb in enumerate(nbhd):
            for k, j in enumerate(nb):
                rev[i, k] = slot_of[(i, int(j))]
        return cls(n, big_n, nbr, mask, etype, mask.sum(axis=1), rev,
                   np.asarray(h_x, dtype=np.uint8), np.asarray(h_z, dtype=np.uint8))

    @classmethod
    def from_code(cls, code) -> "GraphIndex":
        from .codes import tanner_graph

        return cls.build(tanner_graph(code), code.h_x, code.h_z)

    def node_inputs(self, syndromes: np.ndarray, dtype=np.float32) -> np.ndarray:
        syndromes = np.asarray(syndromes)
        if syndromes.shape[-1] != self.num_nodes - self.n:
            raise ValueError(f"syndrome length {syndromes.shape[-1]} != {self.num_nodes - self.n} checks")
        x = np.zeros(syndromes.shape[:-1] + (self.num_nodes,), dtype=dtype)
        x[..., self.n:] = syndromes
        return x

    def syndrome_of(self, words: np.ndarray) -> np.ndarray:
        ex = noise.x_part(words).astype(np.int32)
        ez = noise.z_part(words).astype(np.int32)
        sx = (ez @ self.h_x.T.astype(np.int32)) & 1
        sz = (ex @ self.h_z.T.astype(np.int32)) & 1
        return np.concatenate([sx, sz], axis=-1).astype(np.uint8)


# ---------------------------------------------------------------- primitives

def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def embed_input(model: GnnModel, x) -> np.ndarray:
    return np.asarray(x, dtype=model.dtype)[..., None] * model.params["embed"]


def message(model: GnnModel, h_src, h_dst, edge_type: int = 0) -> np.ndarray:
    """Direction-dependent message from ``h_src`` to ``h_dst``."""
    p = model.params
    d = model.node_dim
    e = p["edge_embed"][edge_type]
    pre = h_src @ p["msg_w1"][:d] + h_dst @ p["msg_w1"][d:2 * d] + e @ p["msg_w1"][2 * d:] + p["msg_b1"]
    return np.maximum(pre, 0.0) @ p["msg_w2"] + p["msg_b2"]


def aggregate(graph: TannerGraph, messages: dict) -> np.ndarray:
    """Sum incoming messages per node.

    ``messages`` maps a directed edge ``(i, j)`` to the message ``m_{i->j}``.
    Node ``j`` receives the sum over ``i`` in ``N(j)`` taken in ascending
    ``i``; isolated nodes get zeros.
    """
    dim = len(next(iter(messages.values()))) if messages else 0
    out = np.zeros((graph.num_nodes, dim))
    for j, nb in enumerate(graph.neighborhoods):
        acc = np.zeros(dim)
        for i in nb:
            acc = acc + messages[(int(i), j)]
        out[j] = acc
    return out


def gru_gates(model: GnnModel, h_prev, x_embed, m_agg):
    p = model.params
    d = model.node_dim
    gi = x_embed @ p["gru_wx"] + m_agg @ p["gru_wm"] + p["gru_bi"]
    gh = h_prev @ p["gru_wh"] + p["gru_bh"]
    reset = sigmoid(gi[..., :d] + gh[..., :d])
    upd = sigmoid(gi[..., d:2 * d] + gh[..., d:2 * d])
    cand = np.tanh(gi[..., 2 * d:] + reset * gh[..., 2 * d:])
    return reset, upd, cand


def update(model: GnnModel, h_prev, x_embed, m_agg) -> np.ndarray:
    """One GRU step; the update gate mixes ``(1 - u) * h_prev + u * candidate``."""
    _, upd, cand = gru_gates(model, h_prev, x_embed, m_agg)
    return (1.0 - upd) * h_prev + upd * cand


def readout_logits(model: GnnModel, h) -> np.ndarray:
    p = model.params
    return np.maximum(h @ p["ro_w1"] + p["ro_b1"], 0.0) @ p["ro_w2"] + p["ro_b2"]


def readout(model: GnnModel, h) -> np.ndarray:
    """Distribution over ``{I, X, Z, Y}`` for each node state."""
    return softmax(readout_logits(model, h))


@dataclass
class NodeState:
    h: np.ndarray
    x: np.ndarray


def init_states(model: GnnModel, graph: TannerGraph, syndrome) -> NodeState:
    syndrome = np.asarray(syndrome)
    if syndrome.shape[-1] != graph.num_syndrome_nodes:
        raise ValueError(f"syndrome has length {syndrome.shape[-1]}, graph has "
                         f"{graph.num_syndrome_nodes} syndrome nodes")
    x = np.zeros(syndrome.shape[:-1] + (graph.num_nodes,), dtype=model.dtype)
    x[..., graph.num_error_nodes:] = syndrome
    return NodeState(embed_input(model, x), x)


# ---------------------------------------------------------------- edge kernels

_NO_KEEP = np.zeros((0, 1, 1, 1), dtype=np.bool_)

@njit(cache=True)
def _edge_forward_numba(src, dst, eb, nbr, mask, keep, scale):
    # src, dst: (B, N, H); eb: (N, K, H); keep: bool (B, N, K, H) or empty
    bsz, big_n, hid = src.shape
    width = nbr.shape[1]
    agg = np.zeros((bsz, big_n, hid), dtype=src.dtype)
    active = np.zeros((bsz, big_n, width, hid), dtype=np.bool_)
    use_keep = keep.shape[0] > 0
    for b in range(bsz):
        for j in range(big_n):
            for k in range(width):
                if mask[j, k] == 0.0:
                    continue
                i = nbr[j, k]
                for t in range(hid):
                    z = src[b, i, t] + dst[b, j, t] + eb[j, k, t]
                    if z > 0:
                        if use_keep:
                            if keep[b, j, k, t]:
                                active[b, j, k, t] = True
                                agg[b, j, t] += z * scale
                        else:
                            active[b, j, k, t] = True
                            agg[b, j, t] += z
    return agg, active


def _edge_forward_numpy(src, dst, eb, nbr, mask, keep, scale):
    z = src[:, nbr] + dst[:, :, None, :] + eb[None]
    active = (z > 0) & (mask[None, :, :, None] > 0)
    if keep.shape[0] > 0:
        active &= keep
        z = z * src.dtype.type(scale)
    a = np.where(active, z, 0.0).astype(src.dtype)
    return a.sum(axis=2), active


def edge_forward(src, dst, eb, nbr, mask, keep=None, scale=1.0):
    """Summed hidden message activations per destination node.

    Returns ``(agg, active)`` where ``active`` marks units that are positive
    and, with dropout, kept. Kept units are multiplied by ``scale``.
    """
    if keep is None:
        keep = _NO_KEEP
    if USE_NUMBA:
        return _edge_forward_numba(src, dst, eb, nbr, mask, keep, scale)
    return _edge_forward_numpy(src, dst, eb, nbr, mask, keep, scale)


@njit(cache=True)
def _edge_backward_numba(d_agg, active, scale, nbr, rev, mask):
    bsz, big_n, hid = d_agg.shape
    width = nbr.shape[1]
    dz = np.zeros((bsz, big_n * width + 1, hid), dtype=d_agg.dtype)
    d_dst = np.zeros((bsz, big_n, hid), dtype=d_agg.dtype)
    for b in range(bsz):
        for j in range(big_n):
            for k in range(width):
                if mask[j, k] == 0.0:
                    continue
                s = j * width + k
                for t in range(hid):
                    if active[b, j, k, t]:
                        g = d_agg[b, j, t] * scale
                        dz[b, s, t] = g
                        d_dst[b, j, t] += g
    d_src = np.zeros((bsz, big_n, hid), dtype=d_agg.dtype)
    for b in range(bsz):
        for i in range(big_n):
            for k in range(width):
                s = rev[i, k]
                for t in range(hid):
                    d_src[b, i, t] += dz[b, s, t]
    out = np.ascontiguousarray(dz[:, : big_n * width])
    return out.reshape(bsz, big_n, width, hid), d_src, d_dst


def _edge_backward_numpy(d_agg, active, scale, nbr, rev, mask):
    bsz, big_n, hid = d_agg.shape
    width = nbr.shape[1]
    dz = np.where(active, d_agg[:, :, None, :] * d_agg.dtype.type(scale), 0.0).astype(d_agg.dtype)
    d_dst = dz.sum(axis=2)
    flat = np.concatenate([dz.reshape(bsz, big_n * width, hid),
                           np.zeros((bsz, 1, hid), dtype=dz.dtype)], axis=1)
    d_src = flat[:, rev].sum(axis=2)
    return dz, d_src, d_dst


def edge_backward(d_agg, active, nbr, rev, mask, scale=1.0):
    """Gradients of :func:`edge_forward` w.r.t. its pre-activation terms.

    Returns ``(dz, d_src, d_dst)``; ``dz`` has the per-slot gradient.
    """
    if USE_NUMBA:
        return _edge_backward_numba(d_agg, active, scale, nbr, rev, mask)
    return _edge_backward_numpy(d_agg, active, scale, nbr, rev, mask)


# ---------------------------------------------------------------- forward pass

def _edge_bias(model: GnnModel, gi: GraphIndex) -> np.ndarray:
    p = model.params
    d = model.node_dim
    return p["edge_embed"][gi.etype] @ p["msg_w1"][2 * d:] + p["msg_b1"]


def _step(model: GnnModel, gi: GraphIndex, h, gx, eb, keep=None, scale=1.0):
    p = model.params
    d = model.node_dim
    src = h @ p["msg_w1"][:d]
    dst = h @ p["msg_w1"][d:2 * d]
    agg, active = edge_forward(src, dst, eb, gi.nbr, gi.mask, keep, scale)
    m = agg @ p["msg_w2"] + gi.deg.astype(h.dtype)[:, None] * p["msg_b2"]
    gin = gx + m @ p["gru_wm"]
    gh = h @ p["gru_wh"] + p["gru_bh"]
    reset = sigmoid(gin[..., :d] + gh[..., :d])
    upd = sigmoid(gin[..., d:2 * d] + gh[..., d:2 * d])
    cand = np.tanh(gin[..., 2 * d:] + reset * gh[..., 2 * d:])
    h_new = (1.0 - upd) * h + upd * cand
    cache = (h, active, agg, m, reset, upd, cand, gh[..., 2 * d:], scale)
    return h_new, cache


def _prepare(model: GnnModel, gi: GraphIndex, syndromes):
    x = gi.node_inputs(syndromes, dtype=model.dtype)
    xe = embed_input(model, x)
    gx = xe @ model.params["gru_wx"] + model.params["gru_bi"]
    return x, xe, gx, _edge_bias(model, gi).astype(model.dtype)


@dataclass
class DecodeOutput:
    class_probs: np.ndarray
    hard_error: np.ndarray
    converged: bool | np.ndarray
    iterations_used: int | np.ndarray


def decode_batch(model: GnnModel, gi: GraphIndex, syndromes, max_iterations: int,
                 early_stop: bool = True) -> DecodeOutput:
    """Decode a ``(batch, m)`` stack of syndromes.

    After every iteration the error nodes are read out and the argmax word is
    checked against the syndrome. A converged sample keeps the output of its
    first converging iteration. Unconverged samples report the last iteration.
    """
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    syndromes = np.atleast_2d(np.asarray(syndromes, dtype=np.uint8))
    bsz = syndromes.shape[0]
    n = gi.n
    probs = np.zeros((bsz, n, NUM_CLASSES), dtype=model.dtype)
    hard = np.zeros((bsz, n), dtype=np.uint8)
    converged = np.zeros(bsz, dtype=bool)
    iters = np.full(bsz, max_iterations, dtype=np.int64)
    _, _, gx, eb = _prepare(model, gi, syndromes)
    h = embed_input(model, gi.node_inputs(syndromes, dtype=model.dtype))
    alive = np.arange(bsz)
    live_syn = syndromes
    for t in range(1, max_iterations + 1):
        h, _ = _step(model, gi, h, gx, eb)
        pr = readout(model, h[:, :n])
        word = pr.argmax(axis=-1).astype(np.uint8)
        probs[alive] = pr
        hard[alive] = word
        if not early_stop:
            continue
        ok = np.all(gi.syndrome_of(word) == live_syn, axis=1)
        if ok.any():
            converged[alive[ok]] = True
            iters[alive[ok]] = t
            keep = ~ok
            alive, h, gx = alive[keep], h[keep], gx[keep]
            live_syn = live_syn[keep]
            if alive.size == 0:
                break
    if not early_stop:
        converged = np.all(gi.syndrome_of(hard) == syndromes, axis=1)
    return DecodeOutput(probs, hard, converged, iters)


def decode(model: GnnModel, graph, syndrome, max_iterations: int = 30) -> DecodeOutput:
    """Decode a single syndrome. ``graph`` may be a :class:`GraphIndex` or a CssCode."""
    gi = graph if isinstance(graph, GraphIndex) else GraphIndex.from_code(graph)
    out = decode_batch(model, gi, np.asarray(syndrome)[None, :], max_iterations)
    return DecodeOutput(out.class_probs[0], out.hard_error[0], bool(out.converged[0]), int(out.iterations_used[0]))


# ---------------------------------------------------------------- training pass

def forward_train(model: GnnModel, gi: GraphIndex, syndromes, iterations: int,
                  dropout: float = 0.0, rng=None):
    """Unrolled forward pass keeping every intermediate needed by :func:`backward`.

    Returns ``(logits, tape)`` with logits for the error nodes after the
    final iteration.
    """
    x, xe, gx, eb = _prepare(model, gi, syndromes)
    h = xe
    steps = []
    bsz = x.shape[0]
    scale = 1.0 / (1.0 - dropout)
    for _ in range(iterations):
        keep = None
        if dropout > 0:
            shape = (bsz, gi.num_nodes, gi.width, model.msg_hidden)
            keep = rng.random(shape, dtype=np.float32) >= dropout
        h, cache = _step(model, gi, h, gx, eb, keep, scale)
        steps.append(cache)
    p = model.params
    hn = h[:, : gi.n]
    pre = hn @ p["ro_w1"] + p["ro_b1"]
    act = np.maximum(pre, 0.0)
    logits = act @ p["ro_w2"] + p["ro_b2"]
    return logits, (x, xe, steps, hn, pre, act)


def backward(model: GnnModel, gi: GraphIndex, tape, d_logits) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of a scalar loss given ``d loss / d logits``."""
    p = model.params
    d = model.node_dim
    x, xe, steps, hn, pre, act = tape
    g = {k: np.zeros_like(v) for k, v in p.items()}
    bsz = x.shape[0]

    def mm(a, b):  # sum over batch and nodes of a^T b
        return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])

    g["ro_w2"] += mm(act, d_logits)
    g["ro_b2"] += d_logits.sum(axis=(0, 1))
    d_pre = (d_logits @ p["ro_w2"].T) * (pre > 0)
    g["ro_w1"] += mm(hn, d_pre)
    g["ro_b1"] += d_pre.sum(axis=(0, 1))
    dh = np.zeros((bsz, gi.num_nodes, d), dtype=model.dtype)
    dh[:, : gi.n] = d_pre @ p["ro_w1"].T

    d_gx = np.zeros((bsz, gi.num_nodes, 3 * d), dtype=model.dtype)
    d_eb = np.zeros(gi.nbr.shape + (model.msg_hidden,), dtype=model.dtype)
    w_src, w_dst = p["msg_w1"][:d], p["msg_w1"][d:2 * d]
    deg = gi.deg.astype(model.dtype)
    for h, active, agg, m, reset, upd, cand, gh_n, scale in reversed(steps):
        d_upd = dh * (cand - h)
        d_cand = dh * upd
        dh_prev = dh * (1.0 - upd)
        d_cpre = d_cand * (1.0 - cand * cand)
        d_reset = d_cpre * gh_n
        d_rpre = d_reset * reset * (1.0 - reset)
        d_upre = d_upd * upd * (1.0 - upd)
        d_gi = np.concatenate([d_rpre, d_upre, d_cpre], axis=-1)
        d_gh = np.concatenate([d_rpre, d_upre, d_cpre * reset], axis=-1)
        d_gx += d_gi
        g["gru_wm"] += mm(m, d_gi)
        g["gru_wh"] += mm(h, d_gh)
        g["gru_bh"] += d_gh.sum(axis=(0, 1))
        dh_prev += d_gh @ p["gru_wh"].T
        dm = d_gi @ p["gru_wm"].T
        g["msg_w2"] += mm(agg, dm)
        g["msg_b2"] += (dm * deg[None, :, None]).sum(axis=(0, 1))
        d_agg = np.ascontiguousarray(dm @ p["msg_w2"].T)
        dz, d_src, d_dst = edge_backward(d_agg, active, gi.nbr, gi.rev, gi.mask, scale)
        d_eb += dz.sum(axis=0)
        g["msg_w1"][:d] += mm(h, d_src)
        g["msg_w1"][d:2 * d] += mm(h, d_dst)
        dh_prev += d_src @ w_src.T + d_dst @ w_dst.T
        dh = dh_prev
    # the initial state is the input embedding itself
    d_xe = dh + d_gx @ p["gru_wx"].T
    g["gru_wx"] += mm(xe, d_gx)
    g["gru_bi"] += d_gx.sum(axis=(0, 1))
    g["embed"] += (x[..., None] * d_xe).sum(axis=(0, 1))
    d_eb = d_eb * gi.mask[:, :, None]
    g["msg_b1"] += d_eb.sum(axis=(0, 1))
    emb = p["edge_embed"][gi.etype]  # (N, K, E)
    g["msg_w1"][2 * d:] += emb.reshape(-1, model.edge_dim).T @ d_eb.reshape(-1, model.msg_hidden)
    d_emb = d_eb @ p["msg_w1"][2 * d:].T
    for t in range(NUM_EDGE_TYPES):
        g["edge_embed"][t] += d_emb[gi.etype == t].sum(axis=0)
    return g
