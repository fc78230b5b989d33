"""Linear SVM trained by dual coordinate descent.

Solves ``min_w 1/2 |w|^2 + C sum loss(y_i (w . x_i + b))`` with the bias folded
in as an extra feature fixed at 1 (so the bias is regularised too).  The
coordinate sweep follows Hsieh et al. (ICML 2008), the solver behind
LIBLINEAR's dual-form L1/L2-loss SVC, without shrinking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

MAGIC = "KNEELOC-SVM"
VERSION = "v1"


class ModelFormatError(ValueError):
    """Raised by :func:`load` on malformed model files."""


@dataclass(frozen=True, eq=False)
class SvmModel:
    weights: np.ndarray
    bias: float
    c_reg: float

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).ravel()
        if w.size == 0:
            raise ValueError("model must have at least one weight")
        if not np.all(np.isfinite(w)) or not math.isfinite(self.bias):
            raise ValueError("model weights and bias must be finite")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))
        object.__setattr__(self, "c_reg", float(self.c_reg))

    @property
    def dim(self) -> int:
        return self.weights.size

    def __eq__(self, other):
        if not isinstance(other, SvmModel):
            return NotImplemented
        return (np.array_equal(self.weights, other.weights) and self.bias == other.bias
                and self.c_reg == other.c_reg)

    __hash__ = None


@dataclass
class TrainSet:
    features: np.ndarray
    labels: np.ndarray
    n_augmented: int = 0

    def __post_init__(self):
        self.features = np.asarray(self.features)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ValueError("features must be N x dim with one label per row")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must be +1 or -1")

    @property
    def n_pos(self) -> int:
        return int(np.sum(self.labels > 0))

    @property
    def n_neg(self) -> int:
        return int(np.sum(self.labels < 0))


@dataclass
class DualSolution:
    model: SvmModel
    alpha: np.ndarray
    epochs: int
    violation: float
    dual_objective: float
    converged: bool


@njit(cache=True, nogil=True)
def _epoch(X, y, alpha, w, wb, qd, diag, upper, order):
    """One pass of coordinate updates in ``order``; returns the max |projected gradient|."""
    dim = X.shape[1]
    worst = 0.0
    for i in order:
        dot = wb[0]
        for j in range(dim):
            dot += w[j] * X[i, j]
        g = y[i] * dot - 1.0 + diag * alpha[i]
        a = alpha[i]
        if a == 0.0:
            pg = min(g, 0.0)
        elif a == upper:
            pg = max(g, 0.0)
        else:
            pg = g
        if abs(pg) > worst:
            worst = abs(pg)
        if pg != 0.0:
            a_new = min(max(a - g / qd[i], 0.0), upper)
            step = (a_new - a) * y[i]
            if step != 0.0:
                for j in range(dim):
                    w[j] += step * X[i, j]
                wb[0] += step
                alpha[i] = a_new
    return worst


def fit_dual(data: TrainSet, c_reg: float = 0.01, tol: float = 1e-3, max_epochs: int = 1000,
             seed: int = 0, loss: str = "hinge") -> DualSolution:
    """Dual coordinate descent with a fresh seeded permutation every epoch.

    Stops once the largest projected-gradient violation of an epoch drops
    below ``tol``.  ``loss="squared_hinge"`` gives the L2-loss variant.
    """
    X, y = data.features, data.labels
    if c_reg <= 0:
        raise ValueError(f"c_reg must be positive, got {c_reg}")
    if data.n_pos == 0 or data.n_neg == 0:
        raise ValueError("training data must contain both classes")
    if not np.all(np.isfinite(X)):
        raise ValueError("training features contain non-finite values")
    if loss == "hinge":
        diag, upper = 0.0, float(c_reg)
    elif loss == "squared_hinge":
        diag, upper = 0.5 / c_reg, math.inf
    else:
        raise ValueError(f"unknown loss {loss!r}")
    if X.dtype not in (np.float32, np.float64):
        X = X.astype(np.float64)
    X = np.ascontiguousarray(X)
    n = len(y)
    qd = np.einsum("ij,ij->i", X, X, dtype=np.float64) + 1.0 + diag
    alpha = np.zeros(n)
    w = np.zeros(X.shape[1])
    wb = np.zeros(1)
    rng = np.random.default_rng(seed)
    violation, epochs = math.inf, 0
    while epochs < max_epochs:
        order = rng.permutation(n)
        violation = _epoch(X, y, alpha, w, wb, qd, diag, upper, order)
        epochs += 1
        if violation < tol:
            break
    model = SvmModel(w, wb[0], c_reg)
    return DualSolution(model, alpha, epochs, violation,
                        dual_objective(w, wb[0], alpha, diag), violation < tol)


def dual_objective(w, bias, alpha, diag: float = 0.0) -> float:
    """``1/2 a'Qa - sum(a)`` in minimisation form, from the primal weights."""
    return float(0.5 * (np.dot(w, w) + bias * bias) + 0.5 * diag * np.dot(alpha, alpha)
                 - np.sum(alpha))


def primal_objective(model: SvmModel, data: TrainSet, loss: str = "hinge") -> float:
    margins = 1.0 - data.labels * decision_values(model, data.features)
    slack = np.maximum(margins, 0.0)
    if loss == "squared_hinge":
        slack = slack * slack
    reg = 0.5 * (np.dot(model.weights, model.weights) + model.bias ** 2)
    return float(reg + model.c_reg * slack.sum())


def train(data: TrainSet, c_reg: float = 0.01, tol: float = 1e-3, max_epochs: int = 1000,
          seed: int = 0, loss: str = "hinge") -> SvmModel:
    return fit_dual(data, c_reg, tol, max_epochs, seed, loss).model


def score(model: SvmModel, feat) -> float:
    """Raw decision value ``w . x + b``."""
    feat = np.asarray(feat, dtype=np.float64).ravel()
    if feat.size != model.dim:
        raise ValueError(f"feature has {feat.size} values, model expects {model.dim}")
    return float(np.dot(model.weights, feat) + model.bias)


def decision_values(model: SvmModel, features) -> np.ndarray:
    features = np.asarray(features)
    if features.shape[-1] != model.dim:
        raise ValueError(f"features have {features.shape[-1]} columns, model expects {model.dim}")
    return features @ model.weights + model.bias


# ---------------------------------------------------------------------------
# persistence

def save(model: SvmModel) -> bytes:
    lines = [f"{MAGIC} {VERSION} dim={model.dim} c_reg={model.c_reg!r}", repr(model.bias)]
    lines.extend(repr(float(v)) for v in model.weights)
    return ("\n".join(lines) + "\n").encode("ascii")


def load(data: bytes) -> SvmModel:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        raise ModelFormatError("model file is not ASCII") from None
    lines = text.split("\n")
    header = lines[0].split()
    if len(header) < 3 or header[0] != MAGIC:
        raise ModelFormatError(f"bad magic header {lines[0][:40]!r}")
    if header[1] != VERSION:
        raise ModelFormatError(f"unsupported model version {header[1]!r}, expected {VERSION}")
    fields = dict(tok.split("=", 1) for tok in header[2:] if "=" in tok)
    try:
        dim = int(fields["dim"])
        c_reg = float(fields.get("c_reg", "nan"))
    except (KeyError, ValueError):
        raise ModelFormatError(f"malformed header {lines[0]!r}") from None
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != dim + 1:
        raise ModelFormatError(f"header declares dim={dim} but file holds {len(body) - 1} weights")
    try:
        values = [float(v) for v in body]
    except ValueError as exc:
        raise ModelFormatError(f"bad numeric value: {exc}") from None
    return SvmModel(np.array(values[1:]), values[0], c_reg)


def save_file(path, model: SvmModel) -> None:
    with open(path, "wb") as fh:
        fh.write(save(model))


def load_file(path) -> SvmModel:
    with open(path, "rb") as fh:
        return load(fh.read())
