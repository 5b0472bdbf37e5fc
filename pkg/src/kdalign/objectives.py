"""Distillation objectives over frozen teacher embeddings.

Five losses (feature MSE, English-controlled MSE, soft-logit cross-entropy,
contrastive alignment, and queue-based distribution replication) plus their
weighted combination. Each returns the scalar loss together with analytic
gradients w.r.t. the two student embedding streams; teacher embeddings and
queue contents never receive gradient.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BadConfig, BadTemperature, DimMismatch, EmptyQueue
from .tensormath import pairwise_cosine, softmax

OBJECTIVE_NAMES = ("FD", "ED", "SD", "MCL", "DR")


@dataclass
class AnchorTriple:
    """Aligned batch of embeddings: student multilingual, student anchor-language,
    and teacher anchor. All three are B x D with rows paired by sample."""

    zS_m: np.ndarray
    zS_e: np.ndarray
    zT_e: np.ndarray

    def __post_init__(self):
        self.zS_m = np.asarray(self.zS_m)
        self.zS_e = np.asarray(self.zS_e)
        self.zT_e = np.asarray(self.zT_e)
        shape = self.zS_m.shape
        if len(shape) != 2 or shape[0] < 1:
            raise DimMismatch(f"AnchorTriple needs B x D matrices, got {shape}")
        if self.zS_e.shape != shape or self.zT_e.shape != shape:
            raise DimMismatch(
                f"AnchorTriple shape mismatch: {shape}, {self.zS_e.shape}, {self.zT_e.shape}"
            )

    @property
    def batch_size(self):
        return self.zS_m.shape[0]


@dataclass
class LossReport:
    value: float
    grad_zS_m: np.ndarray
    grad_zS_e: np.ndarray
    components: dict = field(default_factory=dict)


@dataclass
class Temperatures:
    tau_T: float = 0.05
    tau_S: float = 0.07
    tau_MCL: float = 0.07
    tau_SD: float = 1.0


def _check_tau(tau):
    if tau <= 0:
        raise BadTemperature(f"temperature must be > 0, got {tau}")


def _sim_matrix(U, V, sim):
    if sim == "cosine":
        return pairwise_cosine(U, V)
    if sim == "dot":
        return U @ V.T
    raise BadConfig(f"unknown similarity '{sim}'")


def _sim_grad(U, V, C, sim):
    """Gradient of sum_ik C[i,k] * sim(U[i], V[k]) w.r.t. U."""
    if sim == "dot":
        return C @ V
    nu = np.linalg.norm(U, axis=1)
    nv = np.linalg.norm(V, axis=1)
    S = (U @ V.T) / np.outer(nu, nv)
    g = (C / np.outer(nu, nv)) @ V
    g -= ((C * S).sum(axis=1) / nu**2)[:, None] * U
    return g


def _log_softmax(S, tau):
    z = S / tau
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def fd_loss(t: AnchorTriple) -> LossReport:
    """Mean squared error between student multilingual and teacher anchor rows."""
    B = t.batch_size
    diff = t.zS_m - t.zT_e
    value = float(np.sum(diff * diff) / B)
    return LossReport(value, (2.0 / B) * diff, np.zeros_like(t.zS_e))


def ed_loss(t: AnchorTriple) -> LossReport:
    """MSE pulling both student streams toward the teacher anchor; the extra
    anchor-language term counteracts collapse of all languages onto one point."""
    B = t.batch_size
    dm = t.zS_m - t.zT_e
    de = t.zS_e - t.zT_e
    value = float((np.sum(dm * dm) + np.sum(de * de)) / B)
    return LossReport(value, (2.0 / B) * dm, (2.0 / B) * de)


def sd_loss(t: AnchorTriple, tau_sd: float = 1.0) -> LossReport:
    """Cross-entropy between teacher and student rows softened per-dimension
    into categorical distributions at a shared temperature."""
    _check_tau(tau_sd)
    B = t.batch_size
    pT = softmax(t.zT_e, tau_sd)
    logS = _log_softmax(t.zS_m, tau_sd)
    pS = np.exp(logS)
    value = float(-np.sum(pT * logS) / B)
    grad_m = (pS - pT) / (B * tau_sd)
    return LossReport(value, grad_m, np.zeros_like(t.zS_e))


def mcl_loss(t: AnchorTriple, tau: float = 0.07, sim: str = "cosine") -> LossReport:
    """InfoNCE alignment of each student stream against the teacher batch as
    the key set; positives sit on the diagonal."""
    _check_tau(tau)
    B = t.batch_size
    eye = np.eye(B)
    value = 0.0
    grads = []
    for Z in (t.zS_e, t.zS_m):
        S = _sim_matrix(Z, t.zT_e, sim)
        logA = _log_softmax(S, tau)
        value += float(-np.trace(logA))
        A = np.exp(logA)
        C = (A - eye) / (tau * 2.0 * B)
        grads.append(_sim_grad(Z, t.zT_e, C, sim))
    value /= 2.0 * B
    grad_e, grad_m = grads
    return LossReport(value, grad_m, grad_e)


def dr_distribution(Z, Q, tau: float, sim: str = "cosine") -> np.ndarray:
    """Row-wise softmax of similarities between Z rows and every queue row."""
    Q = np.asarray(Q)
    if Q.ndim != 2 or Q.shape[0] == 0:
        raise EmptyQueue("dr_distribution: queue has no rows")
    _check_tau(tau)
    S = _sim_matrix(np.asarray(Z), Q, sim)
    return softmax(S, tau)


def dr_loss(
    t: AnchorTriple,
    Q,
    tau_T: float = 0.05,
    tau_S: float = 0.07,
    sim: str = "cosine",
) -> LossReport:
    """Distribution replication over a queue of teacher keys: the teacher's
    similarity distribution is the target for both student streams."""
    Q = np.asarray(Q)
    if Q.ndim != 2 or Q.shape[0] == 0:
        raise EmptyQueue("dr_loss: queue has no rows")
    _check_tau(tau_T)
    _check_tau(tau_S)
    B = t.batch_size

    pT = dr_distribution(t.zT_e, Q, tau_T, sim)
    value = 0.0
    grads = []
    for Z in (t.zS_e, t.zS_m):
        logS = _log_softmax(_sim_matrix(np.asarray(Z), Q, sim), tau_S)
        value += float(-np.sum(pT * logS))
        C = (np.exp(logS) - pT) / (tau_S * 2.0 * B)
        grads.append(_sim_grad(Z, Q, C, sim))
    value /= 2.0 * B
    grad_e, grad_m = grads
    return LossReport(value, grad_m, grad_e)


def validate_weights(w: dict) -> dict:
    """Normalize an objective-weight mapping; at least one weight must be > 0."""
    out = {}
    for name, lam in w.items():
        if name not in OBJECTIVE_NAMES:
            raise BadConfig(f"unknown objective '{name}' (expected one of {OBJECTIVE_NAMES})")
        lam = float(lam)
        if lam < 0:
            raise BadConfig(f"weight for {name} must be >= 0, got {lam}")
        out[name] = lam
    if not any(v > 0 for v in out.values()):
        raise BadConfig("at least one objective weight must be > 0")
    return out


def combined_loss(
    t: AnchorTriple,
    Q,
    weights: dict,
    temps: Temperatures = Temperatures(),
    sim: str = "cosine",
) -> LossReport:
    """Weighted sum of the active objectives. Components with zero weight are
    never evaluated; per-component unweighted values are kept for logging."""
    weights = validate_weights(weights)
    value = 0.0
    grad_m = np.zeros_like(t.zS_m, dtype=np.float64)
    grad_e = np.zeros_like(t.zS_e, dtype=np.float64)
    components = {}
    for name, lam in weights.items():
        if lam == 0:
            continue
        if name == "FD":
            rep = fd_loss(t)
        elif name == "ED":
            rep = ed_loss(t)
        elif name == "SD":
            rep = sd_loss(t, temps.tau_SD)
        elif name == "MCL":
            rep = mcl_loss(t, temps.tau_MCL, sim)
        else:
            rep = dr_loss(t, Q, temps.tau_T, temps.tau_S, sim)
        components[name] = rep.value
        value += lam * rep.value
        grad_m += lam * rep.grad_zS_m
        grad_e += lam * rep.grad_zS_e
    return LossReport(value, grad_m, grad_e, components)
