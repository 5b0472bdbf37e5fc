"""Small dense math kernels the loss and metric modules build on.

Everything here is a pure function over numpy arrays. Tests run in float64;
callers may pass float32 arrays for cheaper training.
"""

import numpy as np

from .errors import BadTemperature, DimMismatch, ZeroVector

LOG_CLAMP = 1e-12


def _as_matrix(x, name="input"):
    a = np.asarray(x)
    if a.ndim != 2:
        raise DimMismatch(f"{name} must be 2-D, got shape {a.shape}")
    return a


def cosine_sim(a, b):
    """Cosine similarity of two vectors. Raises on zero norm or dim mismatch."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimMismatch(f"cosine_sim: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine_sim: zero-norm input")
    return float(np.dot(a, b) / (na * nb))


def softmax(v, tau=1.0):
    """Temperature softmax along the last axis, stabilized by max subtraction."""
    if tau <= 0:
        raise BadTemperature(f"temperature must be > 0, got {tau}")
    v = np.asarray(v)
    z = v / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def pairwise_cosine(A, B):
    """Matrix of cosine similarities: out[i, j] = cos(A[i], B[j])."""
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise DimMismatch(f"pairwise_cosine: dims {A.shape[1]} vs {B.shape[1]}")
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ZeroVector("pairwise_cosine: zero-norm row")
    return (A @ B.T) / np.outer(na, nb)


def normalize_rows(M):
    """L2-normalize each row. Raises ZeroVector on any zero row."""
    M = _as_matrix(M, "M")
    n = np.linalg.norm(M, axis=1, keepdims=True)
    if np.any(n == 0):
        raise ZeroVector("normalize_rows: zero-norm row")
    return M / n


def cross_entropy(p, q):
    """-sum(p * log q) with q clamped at 1e-12 before the log."""
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if p.shape != q.shape:
        raise DimMismatch(f"cross_entropy: {p.shape} vs {q.shape}")
    return float(-np.sum(p * np.log(np.maximum(q, LOG_CLAMP))))


def entropy(p):
    """Shannon entropy in nats, with the same clamp as cross_entropy."""
    p = np.asarray(p, dtype=np.float64).ravel()
    return float(-np.sum(p * np.log(np.maximum(p, LOG_CLAMP))))


def row_entropies(P):
    """Per-row entropy of a stack of distributions."""
    P = _as_matrix(P, "P")
    return -np.sum(P * np.log(np.maximum(P, LOG_CLAMP)), axis=1)
