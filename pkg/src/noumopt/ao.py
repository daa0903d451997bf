"""Alternating optimization: closed-form MSE updates + convex precoder solve.

One iteration updates every per-sample equalizer and weight in closed form,
re-assembles the averaged quadratic coefficients, and solves the convex
subproblem for new precoders and slack rates.  The weighted average sum rate
(recomputed from actual sampled rates, not the surrogate) is tracked until
it stabilizes.  Because the closed forms are the exact minimizers of the
nats-flavoured surrogate, each full iteration cannot decrease the true
weighted average sum rate beyond solver tolerance.

DPC-family strategies additionally search over encoding orders by full
enumeration (factorial in the number of users, capped).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .channel import ChannelEstimate, SampleSet, SystemConfig, perturbation_stream
from .strategies import (
    CommonRateAlloc,
    PrecoderSet,
    RateReport,
    Strategy,
    sampled_average_rates,
    wasr,
)
from .subproblem import SubproblemSolution, build_subproblem, solve
from .wmmse import assemble_coefficients, update_equalizers_weights

# Common-stream surrogate rate below which the stream is treated as off
# (only when no multicast rate is required); bounds the one-step WASR loss.
_PIN_RATE_TOL = 1e-9


@dataclass(frozen=True)
class AoConfig:
    """Alternating-optimization knobs (defaults suit desk-scale studies)."""

    convergence_eps: float = 1e-4
    max_iterations: int = 200
    init_scheme: str = "mrt-svd"
    subproblem_tol: float = 1e-8
    n_starts: int = 1
    order_cap: int = 5

    def __post_init__(self):
        if self.convergence_eps <= 0:
            raise ValueError("convergence_eps must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class AoResult:
    strategy: Strategy
    precoders: PrecoderSet
    alloc: CommonRateAlloc
    report: RateReport
    trace: tuple[float, ...]
    status: str                      # converged | max_iter | infeasible
    order: tuple[int, ...] | None
    wasr: float
    last_kkt_residual: float

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1

    def totals(self) -> np.ndarray:
        return self.alloc.per_user + self.report.private_per_user


def initialize_precoders(
    estimate: ChannelEstimate,
    strategy: Strategy,
    cfg: SystemConfig,
    order: tuple[int, ...] | None = None,
) -> PrecoderSet:
    """Matched-filter private precoders plus a dominant-direction common one.

    The power split gives the common stream the fraction
    beta = min(0.5, P_t^(-min(alpha, 1)) * K/(K+1)): worse CSIT (smaller
    alpha) pushes more power onto the common stream.  Zero estimate columns
    fall back to deterministic unit vectors so the split stays exact.
    """
    h = estimate.matrix
    n_t, k_users = h.shape
    p_t = cfg.transmit_power
    beta = min(0.5, p_t ** (-min(cfg.csit_alpha, 1.0)) * k_users / (k_users + 1))

    private = np.zeros((n_t, k_users), dtype=complex)
    for k in range(k_users):
        norm = np.linalg.norm(h[:, k])
        if norm > 1e-12:
            direction = h[:, k] / norm
        else:
            direction = np.zeros(n_t, dtype=complex)
            direction[k % n_t] = 1.0
        private[:, k] = direction * np.sqrt((1.0 - beta) * p_t / k_users)

    if np.linalg.norm(h) > 1e-12:
        u, _, _ = np.linalg.svd(h, full_matrices=False)
        direction = u[:, 0]
        pivot = direction[np.argmax(np.abs(direction))]
        direction = direction * (pivot.conj() / abs(pivot))
    else:
        direction = np.zeros(n_t, dtype=complex)
        direction[0] = 1.0
    common = direction * np.sqrt(beta * p_t)
    return PrecoderSet(common, private, order)


def _seed_alloc(
    strategy: Strategy,
    report: RateReport,
    multicast_threshold: float,
) -> CommonRateAlloc:
    """Feasible-by-construction allocation for the initial trace point."""
    bound = report.common_bound
    k = report.num_users
    rates = np.zeros(k + 1)
    if strategy.has_common_unicast:
        rates[0] = min(multicast_threshold, bound)
        rates[1:] = (bound - rates[0]) / k
    else:
        rates[0] = bound
    return CommonRateAlloc(rates)


def _should_pin_common(
    strategy: Strategy,
    multicast_threshold: float,
    coeffs,
    prev_alloc: CommonRateAlloc,
) -> bool:
    if multicast_threshold > 0:
        return False
    if not strategy.has_common_unicast:
        return True
    surrogate_rate = max(sc.nu_bits for sc in coeffs.common)
    return surrogate_rate < _PIN_RATE_TOL and prev_alloc.total() < _PIN_RATE_TOL


# Rescue starts for active multicast thresholds: increasing common-stream
# power fractions tried when the first surrogate is infeasible.
_RESCUE_COMMON_FRACTIONS = (0.5, 0.9, 1.0 - 1e-6)


def _common_boosted_initializer(
    estimate: ChannelEstimate,
    strategy: Strategy,
    cfg: SystemConfig,
    order: tuple[int, ...] | None,
    common_fraction: float,
) -> PrecoderSet:
    """Rescue start: put ``common_fraction`` of the budget on the common stream.

    The default initializer puts little power on the common stream when CSIT
    is good; the surrogate built there cannot certify demanding multicast
    thresholds (its reach is local), so the first subproblem can look
    infeasible even though the true problem is feasible.
    """
    base = initialize_precoders(estimate, strategy, cfg, order)
    p_t = cfg.transmit_power
    common_power = np.sum(np.abs(base.common) ** 2)
    private_power = np.sum(np.abs(base.private) ** 2)
    common = base.common * np.sqrt(common_fraction * p_t / common_power)
    private = base.private * np.sqrt((1.0 - common_fraction) * p_t / private_power)
    return PrecoderSet(common, private, order)


def optimize(
    cfg: SystemConfig,
    strategy: Strategy,
    estimate: ChannelEstimate,
    samples: SampleSet,
    weights: np.ndarray,
    multicast_threshold: float = 0.0,
    unicast_thresholds: np.ndarray | None = None,
    order: tuple[int, ...] | None = None,
    ao: AoConfig = AoConfig(),
    initial: PrecoderSet | None = None,
) -> AoResult:
    """Run the alternating optimization for one strategy and encoding order.

    Returns the best iterate visited.  The stopping rule compares true
    weighted average sum rates of consecutive iterates against
    ``ao.convergence_eps``.  If the very first surrogate is infeasible under
    an active multicast threshold, the run restarts from progressively more
    common-stream-heavy initializers before reporting infeasibility.
    """
    weights = np.asarray(weights, dtype=float)
    k_users = cfg.num_users
    if unicast_thresholds is None:
        unicast_thresholds = np.zeros(k_users)
    unicast_thresholds = np.asarray(unicast_thresholds, dtype=float)
    if strategy.uses_dpc:
        if order is None:
            raise ValueError(f"{strategy.value} requires an encoding order")
        order = tuple(order)
    else:
        order = tuple(order) if order is not None else None

    if initial is None:
        precoders = initialize_precoders(estimate, strategy, cfg, order)
    else:
        precoders = replace(initial, order=order)

    result = _run_ao(
        cfg, strategy, samples, weights, multicast_threshold,
        unicast_thresholds, order, ao, precoders,
    )
    if multicast_threshold > 0:
        for fraction in _RESCUE_COMMON_FRACTIONS:
            if not (result.status == "infeasible" and result.iterations == 0):
                break
            boosted = _common_boosted_initializer(estimate, strategy, cfg, order, fraction)
            result = _run_ao(
                cfg, strategy, samples, weights, multicast_threshold,
                unicast_thresholds, order, ao, boosted,
            )
    return result


# Step-scaling factors tried on every accepted subproblem step; the scaled
# point is kept only when it strictly improves the true WASR and stays
# feasible, so monotonicity is preserved while the slow AO tail (power
# drifting between streams at a geometric rate) is shortcut.
_EXTRAPOLATION_FACTORS = (1.5, 2.0, 3.0, 5.0, 8.0)


def _greedy_alloc(
    strategy: Strategy,
    report: RateReport,
    weights: np.ndarray,
    multicast_threshold: float,
    unicast_thresholds: np.ndarray,
) -> CommonRateAlloc | None:
    """WASR-maximal allocation of the true common budget at fixed precoders.

    The multicast part takes exactly its threshold (the full budget for the
    strategies with no common unicast parts), QoS shortfalls claim their
    minima, and the surplus goes to the maximum-weight users (split evenly
    on ties).  Returns None when the budget cannot cover the requirements.
    The subproblem's own allocation is always feasible for this little LP,
    so the greedy choice never loses WASR; re-allocating against the true
    sampled bound (the surrogate bound can only lag it) is what lets the
    common stream's rate be harvested at every iterate.
    """
    bound = report.common_bound
    k = report.num_users
    if bound < multicast_threshold - 1e-12:
        return None
    rates = np.zeros(k + 1)
    if not strategy.has_common_unicast:
        rates[0] = bound
        return CommonRateAlloc(rates)
    rates[0] = multicast_threshold
    lower = np.maximum(0.0, unicast_thresholds - report.private_per_user)
    surplus = bound - rates[0] - float(np.sum(lower))
    if surplus < -1e-12:
        return None
    rates[1:] = lower
    winners = np.flatnonzero(weights >= np.max(weights) - 1e-12)
    rates[1 + winners] += max(surplus, 0.0) / winners.size
    return CommonRateAlloc(rates)


def _candidate_state(
    strategy: Strategy,
    samples: SampleSet,
    precoders: PrecoderSet,
    weights: np.ndarray,
    multicast_threshold: float,
    unicast_thresholds: np.ndarray,
    p_t: float,
):
    """Evaluate a candidate iterate; None when it violates the rate constraints."""
    power = precoders.total_power()
    if power > p_t:
        scale = np.sqrt(p_t / power)
        precoders = PrecoderSet(precoders.common * scale, precoders.private * scale,
                                precoders.order)
    report = sampled_average_rates(strategy, samples, precoders)
    alloc = _greedy_alloc(strategy, report, weights, multicast_threshold, unicast_thresholds)
    if alloc is None:
        return None
    totals = alloc.per_user + report.private_per_user
    if np.any(totals < unicast_thresholds - 1e-9):
        return None
    return wasr(weights, totals), precoders, alloc, report


def _run_ao(
    cfg: SystemConfig,
    strategy: Strategy,
    samples: SampleSet,
    weights: np.ndarray,
    multicast_threshold: float,
    unicast_thresholds: np.ndarray,
    order: tuple[int, ...] | None,
    ao: AoConfig,
    precoders: PrecoderSet,
) -> AoResult:
    report = sampled_average_rates(strategy, samples, precoders)
    alloc = _greedy_alloc(strategy, report, weights, multicast_threshold, unicast_thresholds)
    if alloc is None:
        alloc = _seed_alloc(strategy, report, multicast_threshold)
    current = wasr(weights, alloc.per_user + report.private_per_user)
    trace = [current]
    best = (current, precoders, alloc, report)
    status = "max_iter"
    last_kkt = np.inf

    for _ in range(ao.max_iterations):
        eq, wt = update_equalizers_weights(strategy, samples, precoders)
        coeffs = assemble_coefficients(strategy, samples, eq, wt, order)
        pin = _should_pin_common(strategy, multicast_threshold, coeffs, alloc)
        spec = build_subproblem(
            coeffs,
            weights,
            unicast_thresholds,
            multicast_threshold,
            cfg.transmit_power,
            strategy,
            order,
            pin_common=pin,
        )
        sol: SubproblemSolution = solve(spec, tol=ao.subproblem_tol, initial=precoders)
        if sol.status == "infeasible":
            status = "infeasible"
            break
        last_kkt = sol.kkt_residual
        previous = precoders
        step = _candidate_state(
            strategy, samples, sol.precoders, weights,
            multicast_threshold, unicast_thresholds, cfg.transmit_power,
        )
        if step is None:
            # Solver tolerance left the point outside the rate constraints by
            # more than the clamps can absorb; keep the best iterate.
            status = "max_iter"
            break
        for gamma in _EXTRAPOLATION_FACTORS:
            scaled = PrecoderSet(
                previous.common + gamma * (sol.precoders.common - previous.common),
                previous.private + gamma * (sol.precoders.private - previous.private),
                order,
            )
            candidate = _candidate_state(
                strategy, samples, scaled, weights,
                multicast_threshold, unicast_thresholds, cfg.transmit_power,
            )
            if candidate is not None and candidate[0] > step[0]:
                step = candidate
        current, precoders, alloc, report = step
        trace.append(current)
        if current > best[0]:
            best = (current, precoders, alloc, report)
        if abs(trace[-1] - trace[-2]) <= ao.convergence_eps:
            status = "converged"
            break

    return AoResult(
        strategy=strategy,
        precoders=best[1],
        alloc=best[2],
        report=best[3],
        trace=tuple(trace),
        status=status,
        order=order,
        wasr=best[0],
        last_kkt_residual=last_kkt,
    )


def _perturbed_initial(
    cfg: SystemConfig,
    base: PrecoderSet,
    start_index: int,
) -> PrecoderSet:
    rng = perturbation_stream(cfg, start_index)
    shape = base.private.shape

    def jostle(mat: np.ndarray) -> np.ndarray:
        noise = rng.standard_normal(mat.shape) + 1j * rng.standard_normal(mat.shape)
        return mat + 0.1 * np.sqrt(cfg.transmit_power / (2 * mat.size)) * noise

    common = jostle(base.common)
    private = jostle(base.private.reshape(-1)).reshape(shape)
    scale = np.sqrt(cfg.transmit_power / (np.sum(np.abs(common) ** 2) + np.sum(np.abs(private) ** 2)))
    return PrecoderSet(common * scale, private * scale, base.order)


def optimize_multistart(
    cfg: SystemConfig,
    strategy: Strategy,
    estimate: ChannelEstimate,
    samples: SampleSet,
    weights: np.ndarray,
    multicast_threshold: float = 0.0,
    unicast_thresholds: np.ndarray | None = None,
    order: tuple[int, ...] | None = None,
    ao: AoConfig = AoConfig(),
) -> AoResult:
    """Best of n_starts AO runs: the deterministic initializer plus perturbations."""
    base = initialize_precoders(estimate, strategy, cfg, order)
    best: AoResult | None = None
    for start in range(max(1, ao.n_starts)):
        initial = base if start == 0 else _perturbed_initial(cfg, base, start)
        result = optimize(
            cfg, strategy, estimate, samples, weights,
            multicast_threshold, unicast_thresholds, order, ao, initial,
        )
        if best is None or (result.status != "infeasible" and result.wasr > best.wasr):
            best = result
    return best


def optimize_over_orders(
    cfg: SystemConfig,
    strategy: Strategy,
    estimate: ChannelEstimate,
    samples: SampleSet,
    weights: np.ndarray,
    multicast_threshold: float = 0.0,
    unicast_thresholds: np.ndarray | None = None,
    ao: AoConfig = AoConfig(),
) -> AoResult:
    """Enumerate every DPC encoding order and keep the max-WASR result.

    Ties break toward the lexicographically first order (deterministic).
    """
    if not strategy.uses_dpc:
        raise ValueError("only DPC-family strategies have an encoding order")
    if cfg.num_users > ao.order_cap:
        raise ValueError(
            f"num_users={cfg.num_users} exceeds the order enumeration cap {ao.order_cap}"
        )
    best: AoResult | None = None
    for order in itertools.permutations(range(cfg.num_users)):
        result = optimize_multistart(
            cfg, strategy, estimate, samples, weights,
            multicast_threshold, unicast_thresholds, order, ao,
        )
        if best is None:
            best = result
        elif result.status != "infeasible" and (
            best.status == "infeasible" or result.wasr > best.wasr
        ):
            best = result
    return best


def optimize_strategy(
    cfg: SystemConfig,
    strategy: Strategy,
    estimate: ChannelEstimate,
    samples: SampleSet,
    weights: np.ndarray,
    multicast_threshold: float = 0.0,
    unicast_thresholds: np.ndarray | None = None,
    ao: AoConfig = AoConfig(),
) -> AoResult:
    """Dispatch: order enumeration for the DPC family, plain AO otherwise."""
    if strategy.uses_dpc:
        return optimize_over_orders(
            cfg, strategy, estimate, samples, weights,
            multicast_threshold, unicast_thresholds, ao,
        )
    return optimize_multistart(
        cfg, strategy, estimate, samples, weights,
        multicast_threshold, unicast_thresholds, None, ao,
    )
