"""Soft-margin SVM trained with sequential minimal optimization.

Labels are encoded CNN = +1, RNN = -1. Features are standardized with a
training-set ``Scaler`` before training and prediction. The decision value
is ``f(x) = sum_i coef_i K(sv_i, x) + bias`` with ``coef_i = alpha_i y_i``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import ConfigError, NonConvergenceWarning
from ..features import LabeledDataset
from ..session import Label
from .scaler import Scaler, fit_scaler

ALPHA_EPS = 1e-8
MAX_SWEEPS = 10_000
STEP_EPS = 1e-12  # minimum relative multiplier change that counts as progress


def kernel_matrix(A: np.ndarray, B: np.ndarray, kernel: dict) -> np.ndarray:
    if kernel["kind"] == "linear":
        return A @ B.T
    if kernel["kind"] == "rbf":
        sq = (A**2).sum(1)[:, None] + (B**2).sum(1)[None, :] - 2 * A @ B.T
        return np.exp(-kernel["gamma"] * np.maximum(sq, 0.0))
    raise ConfigError(f"unknown kernel {kernel['kind']!r}")


def make_kernel(kind: str = "linear", gamma: Optional[float] = None) -> dict:
    if kind == "linear":
        return {"kind": "linear"}
    if kind == "rbf":
        if gamma is None or not gamma > 0:
            raise ConfigError("rbf kernel needs gamma > 0")
        return {"kind": "rbf", "gamma": float(gamma)}
    raise ConfigError(f"unknown kernel {kind!r}")


@dataclass
class SvmModel:
    support_vectors: np.ndarray  # standardized
    coef: np.ndarray  # alpha_i * y_i
    bias: float
    kernel: dict
    C: float
    scaler: Scaler
    names: Tuple[str, ...]
    params: dict
    converged: bool = True
    sweeps: int = 0
    kind = "svm"
    seed = 0

    def decision(self, X) -> np.ndarray:
        Z = self.scaler.transform(np.atleast_2d(X))
        return kernel_matrix(Z, self.support_vectors, self.kernel) @ self.coef + self.bias

    def predict_row(self, x) -> Tuple[Label, float]:
        f = float(self.decision(x)[0])
        return Label.from_sign(f), abs(f)

    def payload(self) -> dict:
        return {
            "support_vectors": self.support_vectors.tolist(),
            "coef": self.coef.tolist(),
            "bias": self.bias,
            "kernel": self.kernel,
            "C": self.C,
            "scaler": self.scaler.to_dict(),
            "converged": self.converged,
            "sweeps": self.sweeps,
        }

    @classmethod
    def from_payload(cls, payload, params, seed, names):
        return cls(
            np.array(payload["support_vectors"], dtype=np.float64).reshape(len(payload["coef"]), -1),
            np.array(payload["coef"], dtype=np.float64),
            float(payload["bias"]),
            dict(payload["kernel"]),
            float(payload["C"]),
            Scaler.from_dict(payload["scaler"]),
            tuple(names),
            dict(params),
            bool(payload["converged"]),
            int(payload["sweeps"]),
        )


class _Smo:
    """Pairwise dual updates with two-threshold KKT checks.

    ``F[i] = sum_j alpha_j y_j K[i, j] - y[i]`` does not involve the bias, so
    optimality is judged from the worst pair instead of a running bias
    estimate: ``b_low <= b_up + 2 tol`` with
    ``b_up = min F over I_up`` and ``b_low = max F over I_low``.
    """

    def __init__(self, K, y, C, tol):
        self.K, self.y, self.C, self.tol = K, y, C, tol
        self.alpha = np.zeros(len(y))
        self.F = -y.astype(np.float64)

    def _up(self):
        a, y = self.alpha, self.y
        return ((y > 0) & (a < self.C)) | ((y < 0) & (a > 0))

    def _low(self):
        a, y = self.alpha, self.y
        return ((y > 0) & (a > 0)) | ((y < 0) & (a < self.C))

    def bias(self) -> float:
        up, low = self._up(), self._low()
        b_up = self.F[up].min() if up.any() else self.F[low].max()
        b_low = self.F[low].max() if low.any() else b_up
        return float(-(b_up + b_low) / 2)

    def take_step(self, i1, i2) -> bool:
        if i1 == i2:
            return False
        K, y, C = self.K, self.y, self.C
        a1, a2 = self.alpha[i1], self.alpha[i2]
        y1, y2 = y[i1], y[i2]
        F1, F2 = self.F[i1], self.F[i2]
        s = y1 * y2
        if s < 0:
            L, H = max(0.0, a2 - a1), min(C, C + a2 - a1)
        else:
            L, H = max(0.0, a2 + a1 - C), min(C, a2 + a1)
        if H - L < 1e-12:
            return False
        k11, k12, k22 = K[i1, i1], K[i1, i2], K[i2, i2]
        eta = k11 + k22 - 2 * k12
        if eta > 1e-12:
            a2n = min(max(a2 + y2 * (F1 - F2) / eta, L), H)
        else:
            # objective at both ends of the feasible segment
            f1 = y1 * F1 - a1 * k11 - s * a2 * k12
            f2 = y2 * F2 - s * a1 * k12 - a2 * k22
            L1, H1 = a1 + s * (a2 - L), a1 + s * (a2 - H)
            obj_L = L1 * f1 + L * f2 + 0.5 * L1 * L1 * k11 + 0.5 * L * L * k22 + s * L * L1 * k12
            obj_H = H1 * f1 + H * f2 + 0.5 * H1 * H1 * k11 + 0.5 * H * H * k22 + s * H * H1 * k12
            if obj_L < obj_H - 1e-12:
                a2n = L
            elif obj_L > obj_H + 1e-12:
                a2n = H
            else:
                a2n = a2
        if abs(a2n - a2) < STEP_EPS * (a2n + a2 + STEP_EPS):
            return False
        a1n = min(max(a1 + s * (a2 - a2n), 0.0), C)
        self.F += y1 * (a1n - a1) * K[:, i1] + y2 * (a2n - a2) * K[:, i2]
        self.alpha[i1], self.alpha[i2] = a1n, a2n
        return True

    def examine(self, i2) -> bool:
        F, tol = self.F, self.tol
        up, low = self._up(), self._low()
        cand = []
        # i2 can move up but some low index sits more than 2 tol above it, or vice versa
        if up[i2] and low.any():
            j = int(np.flatnonzero(low)[np.argmax(F[low])])
            if F[j] - F[i2] > 2 * tol:
                cand.append((F[j] - F[i2], j))
        if low[i2] and up.any():
            j = int(np.flatnonzero(up)[np.argmin(F[up])])
            if F[i2] - F[j] > 2 * tol:
                cand.append((F[i2] - F[j], j))
        if not cand:
            return False
        _, best = max(cand)
        if self.take_step(best, i2):
            return True
        # fall back to any partner, starting after i2
        n = len(self.y)
        for i1 in np.roll(np.arange(n), -((i2 + 1) % n)):
            if self.take_step(int(i1), i2):
                return True
        return False


def train_svm(
    train: LabeledDataset,
    C: float = 1.0,
    kernel="linear",
    tol: float = 1e-3,
    max_passes: int = 3,
    gamma: Optional[float] = None,
) -> SvmModel:
    """Fit on standardized features.

    Sweeps over every training row, optimizing KKT-violating pairs, until
    ``max_passes`` consecutive sweeps change nothing. If that does not happen
    within ``MAX_SWEEPS`` sweeps the model is still returned, with
    ``converged=False`` and a ``NonConvergenceWarning``.
    """
    train.require_both_classes()
    if not C > 0 or not tol > 0:
        raise ConfigError("C and tol must be positive")
    if isinstance(kernel, str):
        kernel = make_kernel(kernel, gamma)
    scaler = fit_scaler(train.X)
    Z = scaler.transform(train.X)
    y = train.y.astype(np.float64)
    smo = _Smo(kernel_matrix(Z, Z, kernel), y, float(C), float(tol))
    passes = sweeps = 0
    while passes < max_passes and sweeps < MAX_SWEEPS:
        changed = sum(smo.examine(i) for i in range(len(y)))
        sweeps += 1
        passes = passes + 1 if changed == 0 else 0
    converged = passes >= max_passes
    if not converged:
        warnings.warn(f"SMO did not converge after {sweeps} sweeps", NonConvergenceWarning, stacklevel=2)
    keep = smo.alpha > ALPHA_EPS
    if not keep.any():
        # all multipliers vanished: keep the largest so the model stays well-formed
        keep[int(np.argmax(smo.alpha))] = True
    params = {"C": float(C), "kernel": kernel["kind"], "tol": float(tol), "max_passes": int(max_passes)}
    if "gamma" in kernel:
        params["gamma"] = kernel["gamma"]
    return SvmModel(
        Z[keep].copy(),
        (smo.alpha * y)[keep],
        smo.bias(),
        kernel,
        float(C),
        scaler,
        train.names,
        params,
        converged,
        sweeps,
    )


def dual_alphas(model: SvmModel) -> np.ndarray:
    return np.abs(model.coef)
