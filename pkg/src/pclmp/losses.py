"""InfoNCE over prototype banks and the progressive multi-prototype objective."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Callable, Union

import numpy as np

from .errors import InvalidConfig, InvalidIndex, NonPositiveTau
from .numerics import log_softmax


@dataclass(frozen=True)
class HyperParams:
    tau: float = 0.05
    alpha: float = 0.1
    beta: float = 0.999
    lam: float = 0.5
    e_cpcl: int = 50
    k: int = 1
    M: int = 16
    eps: float = 0.6
    min_pts: int = 4
    P: int = 16
    K: int = 16
    lr: float = 3.5e-4
    lr_decay: float = 0.1
    lr_period: int = 20

    def __post_init__(self):
        checks = {
            "tau": self.tau > 0,
            "alpha": 0.0 <= self.alpha <= 1.0,
            "beta": 0.0 <= self.beta <= 1.0,
            "lam": 0.0 <= self.lam <= 1.0,
            "e_cpcl": self.e_cpcl >= 0,
            "k": self.k >= 1,
            "M": self.M >= 1,
            "eps": self.eps > 0,
            "min_pts": self.min_pts >= 1,
            "P": self.P >= 2,
            "K": self.K >= 1,
            "lr": self.lr > 0,
            "lr_decay": 0.0 < self.lr_decay <= 1.0,
            "lr_period": self.lr_period >= 1,
        }
        bad = [name for name, ok in checks.items() if not ok]
        if bad:
            vals = ", ".join(f"{n}={getattr(self, n)!r}" for n in bad)
            raise InvalidConfig(f"invalid hyper-parameters: {vals}")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class LossOutput:
    """Loss value and d(value)/d(query) for the visible and infrared batches."""

    value: float
    grad_v: np.ndarray
    grad_r: np.ndarray

    def scaled(self, w: float) -> "LossOutput":
        return LossOutput(w * self.value, w * self.grad_v, w * self.grad_r)

    def __add__(self, other: "LossOutput") -> "LossOutput":
        return LossOutput(self.value + other.value, self.grad_v + other.grad_v, self.grad_r + other.grad_r)


def info_nce(query, bank, pos: int, tau: float):
    """-log softmax(bank @ q / tau)[pos] and its gradient w.r.t. q."""
    if not tau > 0:
        raise NonPositiveTau(f"tau must be > 0, got {tau}")
    q = np.asarray(query, dtype=np.float64)
    bank = np.asarray(bank, dtype=np.float64)
    if not 0 <= pos < bank.shape[0]:
        raise InvalidIndex(f"positive index {pos} outside bank of size {bank.shape[0]}")
    logp = log_softmax(bank @ q / tau)
    p = np.exp(logp)
    return float(-logp[pos]), (p @ bank - bank[pos]) / tau


def info_nce_batch(queries, banks, pos, tau: float):
    """Vectorised ``info_nce``; ``banks`` is (N, d) shared or (B, N, d) per query."""
    if not tau > 0:
        raise NonPositiveTau(f"tau must be > 0, got {tau}")
    q = np.asarray(queries, dtype=np.float64)
    pos = np.asarray(pos, dtype=np.int64)
    banks = np.asarray(banks, dtype=np.float64)
    n = banks.shape[-2]
    if q.shape[0] == 0:
        return np.zeros(0), np.zeros_like(q)
    if np.any((pos < 0) | (pos >= n)):
        raise InvalidIndex(f"positive indices must lie in [0, {n})")
    rows = np.arange(q.shape[0])
    if banks.ndim == 2:
        logp = log_softmax(q @ banks.T / tau)
        p = np.exp(logp)
        grad = (p @ banks - banks[pos]) / tau
    else:
        logp = log_softmax(np.matmul(banks, q[:, :, None])[:, :, 0] / tau)
        p = np.exp(logp)
        grad = (np.matmul(p[:, None, :], banks)[:, 0, :] - banks[rows, pos]) / tau
    return -logp[rows, pos], grad


def _modality_term(q, y, bank, tau):
    if q.shape[0] == 0:
        return 0.0, np.zeros_like(q)
    losses, grads = info_nce_batch(q, bank, y, tau)
    b = q.shape[0]
    return float(losses.sum() / b), grads / b


def bimodal_loss(qv, yv, qr, yr, bank_v, bank_r, tau: float) -> LossOutput:
    """Mean InfoNCE over visible queries plus mean over infrared queries."""
    qv, qr = np.atleast_2d(qv), np.atleast_2d(qr)
    lv, gv = _modality_term(qv, np.asarray(yv), bank_v, tau)
    lr_, gr = _modality_term(qr, np.asarray(yr), bank_r, tau)
    return LossOutput(lv + lr_, gv, gr)


LazyLoss = Union[LossOutput, Callable[[], LossOutput]]


def _force(x: LazyLoss) -> LossOutput:
    return x() if callable(x) else x


def pclmp_loss(epoch: int, hp: HyperParams, cpcl: LazyLoss, hpcl: LazyLoss, dpcl: LazyLoss) -> LossOutput:
    """Centroid loss up to and including epoch ``e_cpcl``, afterwards
    ``lam * hard + (1 - lam) * dynamic``. Components may be passed as
    zero-argument callables; the branch not taken is never evaluated."""
    if epoch <= hp.e_cpcl:
        return _force(cpcl)
    return _force(hpcl).scaled(hp.lam) + _force(dpcl).scaled(1.0 - hp.lam)
