"""Closed-form ridge regression, used as an internal reference model."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch, SingularSystem


def fit_ridge(X: np.ndarray, Y: np.ndarray, lam: float = 0.0, rcond: float = 1e-12) -> np.ndarray:
    """Solve ``(X^T X + lam I) W = X^T Y``.

    Parameters
    ----------
    X : (n, p) design matrix. No intercept column is added.
    Y : (n,) or (n, q) targets.
    lam : ridge strength, ``>= 0``.
    rcond : relative singular-value floor below which an unregularized
        system counts as rank deficient.

    Returns
    -------
    ndarray of shape (p,) or (p, q), matching the dimensionality of ``Y``.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.shape[0] != X.shape[0]:
        raise ShapeMismatch(f"fit_ridge: X {X.shape} vs Y {Y.shape}")
    if lam < 0:
        raise ValueError("lam must be non-negative")
    p = X.shape[1]
    if lam == 0:
        s = np.linalg.svd(X, compute_uv=False)
        if len(s) < p or s[-1] <= rcond * max(s[0], 1.0):
            raise SingularSystem("X is rank deficient and lam = 0")
        # least squares on X directly avoids squaring the condition number
        return np.linalg.lstsq(X, Y, rcond=None)[0]
    # augmented least squares: [X; sqrt(lam) I] W = [Y; 0]
    Xa = np.vstack([X, np.sqrt(lam) * np.eye(p)])
    Ya = np.concatenate([Y, np.zeros((p,) + Y.shape[1:])])
    return np.linalg.lstsq(Xa, Ya, rcond=None)[0]


def predict_ridge(W: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.asarray(X, dtype=np.float64) @ W
