"""Trainable student projection head: a linear map or a 2-layer tanh MLP from
base features into the teacher embedding space, with Adam + linear warmup and
a bit-exact binary checkpoint format (magic "KDCK")."""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadCheckpoint, BadConfig, DimMismatch, NonFiniteGradient

CKPT_MAGIC = b"KDCK"
CKPT_VERSION = 1
ARCH_TAGS = {"linear": 0, "mlp2": 1}
ARCH_NAMES = {v: k for k, v in ARCH_TAGS.items()}


@dataclass
class StudentParams:
    arch: str
    in_dim: int
    hidden_dim: int
    out_dim: int
    layers: list  # list of (W, b) pairs, W is (fan_in, fan_out)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for W, b in self.layers for a in (W, b)])

    def set_flat(self, v):
        v = np.asarray(v, dtype=np.float64)
        off = 0
        for W, b in self.layers:
            W[...] = v[off:off + W.size].reshape(W.shape)
            off += W.size
            b[...] = v[off:off + b.size]
            off += b.size
        if off != v.size:
            raise DimMismatch(f"set_flat: expected {off} values, got {v.size}")


def student_init(arch: str, in_dim: int, out_dim: int, seed: int,
                 hidden_dim: int = 0) -> StudentParams:
    """Deterministic init: uniform in +-1/sqrt(fan_in) per layer."""
    if arch not in ARCH_TAGS:
        raise BadConfig(f"unknown arch '{arch}'")
    if in_dim < 1 or out_dim < 1:
        raise BadConfig("dims must be >= 1")
    if arch == "mlp2" and hidden_dim < 1:
        raise BadConfig("mlp2 needs hidden_dim >= 1")
    if arch == "linear":
        hidden_dim = 0
    rng = np.random.default_rng(seed)
    shapes = ([(in_dim, out_dim)] if arch == "linear"
              else [(in_dim, hidden_dim), (hidden_dim, out_dim)])
    layers = []
    for fan_in, fan_out in shapes:
        bound = 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=fan_out)
        layers.append((W, b))
    return StudentParams(arch, in_dim, hidden_dim, out_dim, layers)


def student_forward(p: StudentParams, X):
    """Apply the head to a batch. Returns (Z, tape); the tape carries the
    activations student_backward needs."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != p.in_dim:
        raise DimMismatch(f"forward: expected (*, {p.in_dim}), got {X.shape}")
    if p.arch == "linear":
        W, b = p.layers[0]
        return X @ W + b, {"X": X}
    (W1, b1), (W2, b2) = p.layers
    H = np.tanh(X @ W1 + b1)
    return H @ W2 + b2, {"X": X, "H": H}


def student_backward(p: StudentParams, tape, grad_Z):
    """Chain output gradients into per-parameter gradients (same layout as
    p.layers)."""
    grad_Z = np.asarray(grad_Z)
    X = tape["X"]
    if grad_Z.shape != (X.shape[0], p.out_dim):
        raise DimMismatch(f"backward: grad shape {grad_Z.shape}")
    if p.arch == "linear":
        return [(X.T @ grad_Z, grad_Z.sum(axis=0))]
    H = tape["H"]
    W2 = p.layers[1][0]
    gW2 = H.T @ grad_Z
    gb2 = grad_Z.sum(axis=0)
    gH = (grad_Z @ W2.T) * (1.0 - H * H)
    return [(X.T @ gH, gH.sum(axis=0)), (gW2, gb2)]


def add_grads(a, b):
    return [(ga + gb, ba + bb) for (ga, ba), (gb, bb) in zip(a, b)]


@dataclass
class OptimizerState:
    base_lr: float
    warmup_steps: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = None
    v: np.ndarray = None

    @classmethod
    def new(cls, n_params, base_lr, warmup_steps):
        return cls(base_lr=base_lr, warmup_steps=warmup_steps,
                   m=np.zeros(n_params), v=np.zeros(n_params))

    def effective_lr(self):
        if self.warmup_steps <= 0:
            return self.base_lr
        return self.base_lr * min(1.0, self.t / self.warmup_steps)


def adam_step(opt: OptimizerState, p: StudentParams, grads):
    """One Adam update with bias correction; lr ramps linearly over warmup."""
    g = np.concatenate([a.ravel() for gW, gb in grads for a in (gW, gb)])
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient("adam_step: non-finite gradient, step aborted")
    lr = opt.effective_lr()
    opt.t += 1
    opt.m = opt.beta1 * opt.m + (1 - opt.beta1) * g
    opt.v = opt.beta2 * opt.v + (1 - opt.beta2) * g * g
    mhat = opt.m / (1 - opt.beta1 ** opt.t)
    vhat = opt.v / (1 - opt.beta2 ** opt.t)
    theta = p.flat()
    theta -= lr * mhat / (np.sqrt(vhat) + opt.eps)
    p.set_flat(theta)


# -- checkpoint serialization --------------------------------------------

def save_checkpoint(path, p: StudentParams, opt: OptimizerState, seed: int,
                    step: int, queue=None):
    """Write a KDCK checkpoint. `queue` is an optional NegativeQueue whose
    contents are embedded so mid-training resume is exact."""
    theta = p.flat()
    parts = [
        CKPT_MAGIC,
        struct.pack("<IBIII", CKPT_VERSION, ARCH_TAGS[p.arch],
                    p.in_dim, p.hidden_dim, p.out_dim),
        struct.pack("<Q", theta.size),
        theta.astype("<f8").tobytes(),
        struct.pack("<QdIddd", opt.t, opt.base_lr, opt.warmup_steps,
                    opt.beta1, opt.beta2, opt.eps),
        opt.m.astype("<f8").tobytes(),
        opt.v.astype("<f8").tobytes(),
        struct.pack("<QQ", seed, step),
    ]
    if queue is None:
        parts.append(struct.pack("<B", 0))
    else:
        rows = queue.state()
        parts.append(struct.pack("<BQIQ", 1, queue.capacity, queue.dim,
                                 rows.shape[0]))
        parts.append(rows.astype("<f8").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


def load_checkpoint(path):
    """Read a KDCK checkpoint. Returns dict with params, optimizer state,
    seed, step, and queue state (or None)."""
    with open(path, "rb") as f:
        data = f.read()
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise BadCheckpoint("truncated checkpoint")
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(4)) != CKPT_MAGIC:
        raise BadCheckpoint("bad checkpoint magic")
    version, arch_tag, in_dim, hidden_dim, out_dim = struct.unpack(
        "<IBIII", take(17))
    if version != CKPT_VERSION:
        raise BadCheckpoint(f"unsupported checkpoint version {version}")
    if arch_tag not in ARCH_NAMES:
        raise BadCheckpoint(f"unknown arch tag {arch_tag}")
    arch = ARCH_NAMES[arch_tag]
    (n_params,) = struct.unpack("<Q", take(8))
    theta = np.frombuffer(take(8 * n_params), dtype="<f8").astype(np.float64)
    t, base_lr, warmup, beta1, beta2, eps = struct.unpack("<QdIddd", take(44))
    m = np.frombuffer(take(8 * n_params), dtype="<f8").astype(np.float64)
    v = np.frombuffer(take(8 * n_params), dtype="<f8").astype(np.float64)
    seed, step = struct.unpack("<QQ", take(16))
    (has_queue,) = struct.unpack("<B", take(1))
    queue_state = None
    if has_queue:
        qcap, qdim, qlen = struct.unpack("<QIQ", take(20))
        rows = np.frombuffer(take(8 * qlen * qdim), dtype="<f8")
        queue_state = {"capacity": qcap, "dim": qdim,
                       "rows": rows.reshape(qlen, qdim).astype(np.float64)}
    if pos != len(data):
        raise BadCheckpoint("trailing bytes in checkpoint")

    p = student_init(arch, in_dim, out_dim, seed=0, hidden_dim=hidden_dim)
    p.set_flat(theta)
    opt = OptimizerState(base_lr=base_lr, warmup_steps=warmup, beta1=beta1,
                         beta2=beta2, eps=eps, t=t, m=m, v=v)
    return {"params": p, "opt": opt, "seed": seed, "step": step,
            "queue": queue_state}
