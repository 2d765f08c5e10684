"""Perturbed regularized linear models on node embeddings.

Binary tasks minimize

    L_b(w) = sum_{i in train} l(z_i^T w, y_i) + (lam * n_t / 2) ||w||^2 + b^T w

with l either binary logistic (y in {-1, +1}) or least squares; the ridge
term is summed per training node, so the Hessian's smallest eigenvalue is
at least ``lam * n_t``.  Multiclass goes through one-vs-all: class k maps
to +1, all others to -1, one independent noise vector b per task.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.special import expit

from .errors import ConfigError, ParseError, SolveError, TrainingError

__all__ = [
    "LossSpec",
    "OneVsAllModel",
    "loss",
    "gradient",
    "hessian",
    "train_binary",
    "train",
    "predict",
    "accuracy",
    "default_tolerance",
    "save_model",
    "load_model",
]

_KINDS = ("logistic", "least_squares")


@dataclass(frozen=True)
class LossSpec:
    """Loss kind, ridge strength, and the smoothness constants the bounds use."""

    kind: str
    lam: float
    c: float
    c1: float
    gamma1: float
    gamma2: float

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}")
        if self.lam <= 0:
            raise ConfigError(f"lambda must be > 0, got {self.lam}")

    @staticmethod
    def logistic(lam: float) -> "LossSpec":
        return LossSpec("logistic", lam, c=1.0, c1=1.0, gamma1=0.25, gamma2=0.25)

    @staticmethod
    def least_squares(lam: float) -> "LossSpec":
        # l'' is the constant 1, so gamma2 = 0: Newton is exact and the
        # unlearning term of the data-dependent bound vanishes.
        return LossSpec("least_squares", lam, c=1.0, c1=1.0, gamma1=1.0, gamma2=0.0)

    @staticmethod
    def make(kind: str, lam: float) -> "LossSpec":
        if kind == "logistic":
            return LossSpec.logistic(lam)
        if kind == "least_squares":
            return LossSpec.least_squares(lam)
        raise ConfigError(f"unknown loss kind {kind!r}")


def default_tolerance(n_train: int) -> float:
    """Trainer gradient tolerance; tight so it never pollutes residual plots."""
    return 1e-10 * max(n_train, 1)


def _training_rows(Z, y, mask):
    mask = np.asarray(mask, dtype=bool)
    n_t = int(mask.sum())
    if n_t == 0:
        raise ConfigError("training set is empty")
    return Z[mask], np.asarray(y, dtype=np.float64)[mask], n_t


def loss(w, Z, y, mask, spec: LossSpec, b=None) -> float:
    Zt, yt, n_t = _training_rows(Z, y, mask)
    margins = Zt @ w
    if spec.kind == "logistic":
        data = np.logaddexp(0.0, -yt * margins).sum()
    else:
        data = 0.5 * np.square(margins - yt).sum()
    total = data + 0.5 * spec.lam * n_t * (w @ w)
    if b is not None:
        total += b @ w
    return float(total)


def gradient(w, Z, y, mask, spec: LossSpec, b=None) -> np.ndarray:
    Zt, yt, n_t = _training_rows(Z, y, mask)
    margins = Zt @ w
    if spec.kind == "logistic":
        lprime = -yt * expit(-yt * margins)
    else:
        lprime = margins - yt
    grad = Zt.T @ lprime + spec.lam * n_t * w
    if b is not None:
        grad = grad + b
    return grad


def hessian(w, Z, mask, spec: LossSpec) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    n_t = int(mask.sum())
    if n_t == 0:
        raise ConfigError("training set is empty")
    Zt = Z[mask]
    if spec.kind == "logistic":
        # sigma(m) sigma(-m) is even in m, so the labels drop out
        margins = Zt @ w
        curv = expit(margins) * expit(-margins)
        H = (Zt * curv[:, None]).T @ Zt
    else:
        H = Zt.T @ Zt
    H[np.diag_indices_from(H)] += spec.lam * n_t
    return H


def solve_spd(H: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cholesky solve; breakdown means lambda/tolerances are misconfigured."""
    try:
        factor = scipy.linalg.cho_factor(H, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise SolveError(f"Hessian not positive definite: {exc}") from None
    return scipy.linalg.cho_solve(factor, rhs, check_finite=False)


def train_binary(Z, y_pm, mask, spec: LossSpec, b=None, tol=None, w0=None,
                 max_newton=60) -> np.ndarray:
    """Minimize the perturbed loss to gradient norm <= tol.

    Least squares solves the normal equations directly.  Logistic runs
    L-BFGS for a warm start, then damped Newton steps until the gradient
    tolerance is met (quadratic tail convergence; the loss is smooth and
    lam*n_t-strongly convex).
    """
    Zt, yt, n_t = _training_rows(Z, y_pm, mask)
    if tol is None:
        tol = default_tolerance(n_t)
    F = Z.shape[1]
    if b is None:
        b = np.zeros(F)

    if spec.kind == "least_squares":
        H = Zt.T @ Zt
        H[np.diag_indices_from(H)] += spec.lam * n_t
        return solve_spd(H, Zt.T @ yt - b)

    def fun(w):
        return (loss(w, Z, y_pm, mask, spec, b), gradient(w, Z, y_pm, mask, spec, b))

    w = np.zeros(F) if w0 is None else np.asarray(w0, dtype=np.float64).copy()
    res = scipy.optimize.minimize(
        fun, w, jac=True, method="L-BFGS-B",
        options={"maxiter": 500, "ftol": 1e-14, "gtol": min(tol, 1e-8)},
    )
    w = res.x
    g_cur = gradient(w, Z, y_pm, mask, spec, b)
    for _ in range(max_newton):
        gnorm = np.linalg.norm(g_cur)
        if gnorm <= tol:
            return w
        H = hessian(w, Z, mask, spec)
        step = solve_spd(H, -g_cur)
        # backtrack on the gradient norm: the Newton direction descends
        # 0.5*||grad||^2 for convex losses, and near the optimum the loss
        # itself is too flat to compare reliably in floating point
        t = 1.0
        accepted = False
        for _ in range(40):
            w_try = w + t * step
            g_try = gradient(w_try, Z, y_pm, mask, spec, b)
            if np.linalg.norm(g_try) < gnorm:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        w, g_cur = w_try, g_try
    gnorm = float(np.linalg.norm(g_cur))
    if gnorm > tol:
        raise TrainingError(f"trainer stalled at gradient norm {gnorm:.3e} > tol {tol:.3e}")
    return w


@dataclass
class OneVsAllModel:
    """Per-class weight and noise vectors plus the shared hyperparameters."""

    classes: np.ndarray  # (K,) sorted class values
    W: np.ndarray  # (K, F)
    B: np.ndarray  # (K, F) loss-perturbation vectors
    spec: LossSpec
    alpha: float
    seed: int

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def binary_labels(self, y, k: int) -> np.ndarray:
        return np.where(np.asarray(y) == self.classes[k], 1.0, -1.0)


def train(Z, y, mask, spec: LossSpec, alpha: float, seed: int, tol=None,
          classes=None, n_threads: int = 1) -> OneVsAllModel:
    """Train one perturbed binary task per class; b ~ N(0, alpha^2)^F i.i.d."""
    if alpha < 0:
        raise ConfigError(f"noise std alpha must be >= 0, got {alpha}")
    if classes is None:
        classes = np.unique(np.asarray(y)[np.asarray(mask, dtype=bool)])
    classes = np.asarray(classes)
    F = Z.shape[1]
    rng = np.random.default_rng(seed)
    B = rng.normal(0.0, alpha, size=(len(classes), F)) if alpha > 0 else np.zeros((len(classes), F))

    def fit(k):
        y_pm = np.where(np.asarray(y) == classes[k], 1.0, -1.0)
        return train_binary(Z, y_pm, mask, spec, b=B[k], tol=tol)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            W = np.stack(list(pool.map(fit, range(len(classes)))))
    else:
        W = np.stack([fit(k) for k in range(len(classes))])
    return OneVsAllModel(classes=classes, W=W, B=B, spec=spec, alpha=alpha, seed=seed)


def predict(model: OneVsAllModel, Z) -> np.ndarray:
    """argmax over per-class margins; ties break toward the lowest class index."""
    margins = Z @ model.W.T
    return model.classes[np.argmax(margins, axis=1)]


def accuracy(model: OneVsAllModel, Z, y, mask) -> float:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return float("nan")
    return float((predict(model, Z[mask]) == np.asarray(y)[mask]).mean())


# -- model file -----------------------------------------------------------

_MODEL_MAGIC = b"GULM"
_MODEL_VERSION = 1


def save_model(model: OneVsAllModel, path) -> None:
    """Header (kind, F, classes, lambda, alpha, seed) + per-class w and b."""
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        kind_code = _KINDS.index(model.spec.kind)
        F = model.W.shape[1]
        fh.write(struct.pack("<IIiiddq", _MODEL_VERSION, kind_code, F,
                             model.n_classes, model.spec.lam, model.alpha, model.seed))
        model.classes.astype("<i8").tofile(fh)
        for k in range(model.n_classes):
            model.W[k].astype("<f8").tofile(fh)
            model.B[k].astype("<f8").tofile(fh)


def load_model(path) -> OneVsAllModel:
    with open(path, "rb") as fh:
        if fh.read(4) != _MODEL_MAGIC:
            raise ParseError(f"{path}: not a model file")
        version, kind_code, F, K, lam, alpha, seed = struct.unpack("<IIiiddq", fh.read(40))
        if version != _MODEL_VERSION:
            raise ParseError(f"{path}: unsupported model version {version}")
        classes = np.fromfile(fh, dtype="<i8", count=K)
        W = np.empty((K, F))
        B = np.empty((K, F))
        for k in range(K):
            W[k] = np.fromfile(fh, dtype="<f8", count=F)
            B[k] = np.fromfile(fh, dtype="<f8", count=F)
    spec = LossSpec.make(_KINDS[kind_code], lam)
    return OneVsAllModel(classes=classes, W=W, B=B, spec=spec, alpha=alpha, seed=seed)
