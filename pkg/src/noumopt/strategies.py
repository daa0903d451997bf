"""Transmission strategies and their instantaneous / sampled-average rates.

Four strategies share one signal structure (a common-stream precoder plus K
private precoders):

* MULP  - all streams linearly precoded; the common stream carries only the
          multicast message, so no rate from it is credited to unicast users.
* RS1   - like MULP, but the common stream is a super-common stream that also
          carries a common part of each unicast message.
* DPC   - private streams encoded successively; interference from streams
          encoded earlier is pre-cancelled up to the channel-estimate part,
          leaving residual interference through the estimation error.
* DPCRS1- DPC private streams plus the RS1 super-common stream.

Every receiver decodes the common stream first (treating all private streams
as noise), removes it, then decodes its private stream.  Rates are in
bit/s/Hz (log base 2).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .channel import SampleSet


class Strategy(enum.Enum):
    DPC = "dpc"
    DPCRS1 = "dpcrs1"
    RS1 = "rs1"
    MULP = "mulp"

    @property
    def uses_dpc(self) -> bool:
        """Private streams are successively encoded (an encoding order applies)."""
        return self in (Strategy.DPC, Strategy.DPCRS1)

    @property
    def has_common_unicast(self) -> bool:
        """Common stream carries per-user unicast parts (C_1..C_K free)."""
        return self in (Strategy.DPCRS1, Strategy.RS1)


@dataclass(frozen=True)
class PrecoderSet:
    """Common-stream precoder, K private precoders, and the encoding order.

    ``private[:, k]`` is the precoder of user k's private stream.  ``order``
    lists 0-based user indices in encoding order (order[0] encoded first);
    it is ignored by the linear strategies.
    """

    common: np.ndarray   # (N_t,)
    private: np.ndarray  # (N_t, K)
    order: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.common.ndim != 1 or self.private.ndim != 2:
            raise ValueError("common must be a vector and private a matrix")
        if self.private.shape[0] != self.common.shape[0]:
            raise ValueError("precoder lengths must agree")
        if self.order is not None and sorted(self.order) != list(range(self.num_users)):
            raise ValueError("order must be a permutation of the user indices")

    @property
    def num_users(self) -> int:
        return self.private.shape[1]

    def total_power(self) -> float:
        return float(np.sum(np.abs(self.common) ** 2) + np.sum(np.abs(self.private) ** 2))

    def require_order(self) -> tuple[int, ...]:
        if self.order is None:
            raise ValueError("this strategy requires an encoding order")
        return self.order


@dataclass(frozen=True)
class CommonRateAlloc:
    """Split of the common-stream rate: [C_0, C_1, ..., C_K] in bit/s/Hz.

    C_0 goes to the multicast message, C_k to user k's common unicast part.
    For DPC and MULP all C_k (k >= 1) are identically zero.
    """

    rates: np.ndarray  # (K+1,)

    def __post_init__(self):
        if self.rates.ndim != 1 or self.rates.shape[0] < 2:
            raise ValueError("allocation must be [C_0, C_1, ..., C_K]")
        if np.any(self.rates < -1e-12):
            raise ValueError("allocation entries must be >= 0")

    @property
    def multicast(self) -> float:
        return float(self.rates[0])

    @property
    def per_user(self) -> np.ndarray:
        return self.rates[1:]

    def total(self) -> float:
        return float(np.sum(self.rates))

    @staticmethod
    def zeros(num_users: int) -> "CommonRateAlloc":
        return CommonRateAlloc(np.zeros(num_users + 1))


@dataclass(frozen=True)
class RateReport:
    """Per-user sampled average rates of the common and private streams."""

    common_per_user: np.ndarray   # (K,)
    private_per_user: np.ndarray  # (K,)

    @property
    def num_users(self) -> int:
        return self.common_per_user.shape[0]

    @property
    def common_bound(self) -> float:
        """Largest common-stream rate decodable by every user."""
        return float(np.min(self.common_per_user))


def _gains(channels: np.ndarray, precoders: np.ndarray) -> np.ndarray:
    """|h_k^H p_j|^2 for channels (..., N_t, K) and precoders (N_t, J) -> (..., K, J)."""
    inner = np.einsum("...nk,nj->...kj", channels.conj(), precoders)
    return np.abs(inner) ** 2


def _common_rates(channels: np.ndarray, precoders: PrecoderSet) -> np.ndarray:
    """Common-stream rate per (..., user); identical formula for all strategies."""
    sig = _gains(channels, precoders.common[:, np.newaxis])[..., 0]
    interference = np.sum(_gains(channels, precoders.private), axis=-1)
    return np.log2(1.0 + sig / (interference + 1.0))


def _private_denominators(
    strategy: Strategy,
    channels: np.ndarray,
    errors: np.ndarray | None,
    precoders: PrecoderSet,
) -> np.ndarray:
    """Interference-plus-noise per (..., user) seen by each private stream."""
    g_true = _gains(channels, precoders.private)  # (..., K, K)
    k_users = precoders.num_users
    own = np.arange(k_users)
    if not strategy.uses_dpc:
        return np.sum(g_true, axis=-1) - g_true[..., own, own] + 1.0
    order = precoders.require_order()
    g_err = _gains(errors, precoders.private)
    denom = np.ones(g_true.shape[:-1])
    for pos, user in enumerate(order):
        earlier = list(order[:pos])
        later = list(order[pos + 1:])
        if earlier:
            denom[..., user] += np.sum(g_err[..., user, earlier], axis=-1)
        if later:
            denom[..., user] += np.sum(g_true[..., user, later], axis=-1)
    return denom


def _private_rates(
    strategy: Strategy,
    channels: np.ndarray,
    errors: np.ndarray | None,
    precoders: PrecoderSet,
) -> np.ndarray:
    g_true = _gains(channels, precoders.private)
    own = np.arange(precoders.num_users)
    sig = g_true[..., own, own]
    denom = _private_denominators(strategy, channels, errors, precoders)
    return np.log2(1.0 + sig / denom)


def instantaneous_common_rate(
    strategy: Strategy,
    channel: np.ndarray,
    error: np.ndarray | None,
    precoders: PrecoderSet,
) -> float:
    """Rate of decoding the common/multicast stream at one user, one channel draw."""
    del strategy, error  # common-stream decoding is strategy-independent
    sig = np.abs(np.vdot(channel, precoders.common)) ** 2
    interference = np.sum(np.abs(channel.conj() @ precoders.private) ** 2)
    return float(np.log2(1.0 + sig / (interference + 1.0)))


def instantaneous_private_rate(
    strategy: Strategy,
    channel: np.ndarray,
    error: np.ndarray | None,
    precoders: PrecoderSet,
    user: int,
) -> float:
    """Rate of decoding user k's private stream after the common stream is removed.

    For DPC-family strategies the interference from streams encoded before
    user k survives only through the estimation-error channel; streams
    encoded after contribute in full.  Linear strategies see every other
    private stream in full.
    """
    g_true = np.abs(channel.conj() @ precoders.private) ** 2
    sig = g_true[user]
    if strategy.uses_dpc:
        order = precoders.require_order()
        pos = order.index(user)
        g_err = np.abs(error.conj() @ precoders.private) ** 2
        denom = 1.0 + np.sum(g_err[list(order[:pos])]) + np.sum(g_true[list(order[pos + 1:])])
    else:
        denom = 1.0 + np.sum(g_true) - sig
    return float(np.log2(1.0 + sig / denom))


def sampled_average_rates(
    strategy: Strategy,
    samples: SampleSet,
    precoders: PrecoderSet,
) -> RateReport:
    """Arithmetic mean of the instantaneous rates over the M channel samples."""
    common = _common_rates(samples.realizations, precoders)
    private = _private_rates(strategy, samples.realizations, samples.errors, precoders)
    return RateReport(common.mean(axis=0), private.mean(axis=0))


def common_rate_bound(report: RateReport) -> float:
    """min_k of the per-user common-stream average rates."""
    return report.common_bound


def total_unicast_rates(report: RateReport, alloc: CommonRateAlloc, tol: float = 1e-9) -> np.ndarray:
    """Per-user unicast totals C_k + private AR; rejects invalid allocations."""
    if alloc.rates.shape[0] != report.num_users + 1:
        raise ValueError("allocation length must be num_users + 1")
    if np.any(alloc.rates < -tol):
        raise ValueError("allocation entries must be >= 0")
    if alloc.total() > report.common_bound + tol:
        raise ValueError(
            f"allocation total {alloc.total():.6g} exceeds the common-stream "
            f"bound {report.common_bound:.6g}"
        )
    return alloc.per_user + report.private_per_user


def wasr(weights: np.ndarray, totals: np.ndarray) -> float:
    """Weighted sum of the per-user unicast totals."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0):
        raise ValueError("weights must be > 0")
    return float(np.dot(weights, totals))
