import numpy as np
import pytest

from kdalign.objectives import AnchorTriple


def fd_grad(f, X, h=1e-5):
    """Central finite differences of a scalar function over every entry of X."""
    X = np.array(X, dtype=np.float64)
    g = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        orig = X[idx]
        X[idx] = orig + h
        fp = f(X)
        X[idx] = orig - h
        fm = f(X)
        X[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_err(analytic, numeric):
    denom = max(1.0, np.abs(numeric).max())
    return np.abs(np.asarray(analytic) - numeric).max() / denom


def random_triple(rng, B, D, scale=1.0):
    return AnchorTriple(
        scale * rng.standard_normal((B, D)),
        scale * rng.standard_normal((B, D)),
        scale * rng.standard_normal((B, D)),
    )


def check_loss_grads(loss_fn, triple, h=1e-5, tol=1e-5):
    """Assert analytic gradients of both student streams match central
    differences of the loss value."""
    rep = loss_fn(triple)

    def val_m(Zm):
        return loss_fn(AnchorTriple(Zm, triple.zS_e, triple.zT_e)).value

    def val_e(Ze):
        return loss_fn(AnchorTriple(triple.zS_m, Ze, triple.zT_e)).value

    err_m = rel_err(rep.grad_zS_m, fd_grad(val_m, triple.zS_m, h))
    err_e = rel_err(rep.grad_zS_e, fd_grad(val_e, triple.zS_e, h))
    return max(err_m, err_e)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
