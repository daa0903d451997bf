"""Per-iteration convex QCQP in the precoders and the slack rate vector.

For fixed equalizers and weights the averaged WMSEs are convex quadratics in
the stacked precoders, so maximizing the weighted sum rate surrogate becomes
a QCQP: linear objective in the slack rates xhat = -chat plus convex
quadratics in the precoders, with common-stream decodability constraints per
user, per-user QoS constraints, a multicast QoS bound, a total power ball,
and sign constraints on the slacks.

Complex precoders are lifted to real variables (Re/Im stacked per column),
Hermitian forms become symmetric real forms.  The surrogate is built from
the nats-flavoured averaged WMSE, which the closed-form weight update
minimizes exactly; slack rates are therefore in nats internally and
converted to bit/s/Hz on the way out.

Layout of the real decision vector z:

    [Re p_c, Im p_c, Re p_1, Im p_1, ..., Re p_K, Im p_K, xhat...]

with xhat = [X_0, X_1, ..., X_K] for the strategies whose common stream
carries unicast parts, xhat = [X_0] for DPC and MULP, and no slack at all
when the common stream is pinned off (multicast threshold zero and nothing
allocated to it).
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .ipm import IpmResult, QuadraticForm, find_strictly_feasible, solve_barrier, solve_primal_dual
from .strategies import CommonRateAlloc, PrecoderSet, Strategy
from .wmmse import COMMON, LN2, PRIVATE, QuadCoefficients

_PSD_TOL = -1e-9


def _lift_hermitian(mat: np.ndarray) -> np.ndarray:
    """Real symmetric matrix B with [x;y]' B [x;y] = p^H M p for p = x + iy."""
    return np.block([[mat.real, -mat.imag], [mat.imag, mat.real]])


def _lift_vector(vec: np.ndarray) -> np.ndarray:
    """Real vector r with r'[x;y] = Re{f^H p}."""
    return np.concatenate([vec.real, vec.imag])


@dataclass(frozen=True)
class SubproblemSpec:
    """Compiled QCQP plus the raw ingredients it was built from."""

    coefficients: QuadCoefficients
    weights: np.ndarray
    unicast_thresholds: np.ndarray      # bit/s/Hz
    multicast_threshold: float          # bit/s/Hz
    power_budget: float
    strategy: Strategy
    order: tuple[int, ...] | None
    pin_common: bool
    num_users: int
    num_tx: int
    num_slack: int
    objective: QuadraticForm
    constraints: tuple[QuadraticForm, ...]
    constraint_labels: tuple[str, ...]

    @property
    def dim(self) -> int:
        return 2 * self.num_tx * (self.num_users + 1) + self.num_slack

    def column_offset(self, col: int) -> int:
        """Start of precoder column col in z (0 = common, 1 + k = user k)."""
        return 2 * self.num_tx * col

    @property
    def slack_offset(self) -> int:
        return 2 * self.num_tx * (self.num_users + 1)

    def pack(self, precoders: PrecoderSet, xhat_nats: np.ndarray) -> np.ndarray:
        z = np.zeros(self.dim)
        n = self.num_tx
        z[: 2 * n] = _lift_vector(precoders.common)
        for k in range(self.num_users):
            off = self.column_offset(1 + k)
            z[off : off + 2 * n] = _lift_vector(precoders.private[:, k])
        if self.num_slack:
            z[self.slack_offset :] = xhat_nats
        return z

    def unpack(self, z: np.ndarray) -> tuple[PrecoderSet, np.ndarray]:
        n = self.num_tx
        common = z[:n] + 1j * z[n : 2 * n]
        private = np.empty((n, self.num_users), dtype=complex)
        for k in range(self.num_users):
            off = self.column_offset(1 + k)
            private[:, k] = z[off : off + n] + 1j * z[off + n : off + 2 * n]
        xhat = z[self.slack_offset :].copy()
        return PrecoderSet(common, private, self.order), xhat

    def objective_value(self, precoders: PrecoderSet, xhat_nats: np.ndarray) -> float:
        return self.objective.value(self.pack(precoders, xhat_nats))

    def constraint_values(self, precoders: PrecoderSet, xhat_nats: np.ndarray) -> np.ndarray:
        z = self.pack(precoders, xhat_nats)
        return np.array([f.value(z) for f in self.constraints])

    def dump(self, stream: io.TextIOBase) -> None:
        """Text serialization: one `key = value` line per scalar, matrices as
        row-major bracketed float lists.  For offline inspection only."""

        def fmt(arr: np.ndarray) -> str:
            return "[" + ", ".join(repr(float(v)) for v in np.asarray(arr).ravel()) + "]"

        stream.write(f"strategy = {self.strategy.value}\n")
        stream.write(f"num_users = {self.num_users}\n")
        stream.write(f"num_tx = {self.num_tx}\n")
        stream.write(f"num_slack = {self.num_slack}\n")
        stream.write(f"power_budget = {self.power_budget!r}\n")
        stream.write(f"weights = {fmt(self.weights)}\n")
        stream.write(f"objective.A = {fmt(self.objective.A)}\n")
        stream.write(f"objective.b = {fmt(self.objective.b)}\n")
        stream.write(f"objective.c = {self.objective.c!r}\n")
        for label, con in zip(self.constraint_labels, self.constraints):
            a_txt = fmt(con.A) if con.A is not None else "[]"
            stream.write(f"constraint.{label}.A = {a_txt}\n")
            stream.write(f"constraint.{label}.b = {fmt(con.b)}\n")
            stream.write(f"constraint.{label}.c = {con.c!r}\n")


@dataclass(frozen=True)
class SubproblemSolution:
    precoders: PrecoderSet | None
    xhat: np.ndarray | None             # nats
    alloc: CommonRateAlloc | None       # bit/s/Hz, length K+1
    objective: float
    status: str                         # optimal | infeasible | max_iter
    iterations: int
    kkt_stationarity: float
    kkt_primal: float
    kkt_complementarity: float
    gap_trace: tuple[float, ...]
    multipliers: np.ndarray | None
    infeasibility: float | None = None  # worst phase-1 slack when infeasible

    @property
    def kkt_residual(self) -> float:
        return max(self.kkt_stationarity, self.kkt_primal, self.kkt_complementarity)


def _validate_psd(coeffs: QuadCoefficients) -> None:
    for group in (coeffs.common, coeffs.private):
        for sc in group:
            for mat in (sc.psi, sc.phi):
                if mat is None:
                    continue
                if float(np.min(np.linalg.eigvalsh(0.5 * (mat + mat.conj().T)))) < _PSD_TOL:
                    raise ValueError("coefficient matrix is not PSD within tolerance")


def _xi_quadratic(
    coeffs: QuadCoefficients,
    stream: str,
    user: int,
    num_tx: int,
    num_users: int,
    dim: int,
    nu: float,
) -> QuadraticForm:
    """Averaged-WMSE surrogate of one (stream, user) as a quadratic in z."""
    sc = coeffs.stream(stream, user)
    A = np.zeros((dim, dim))
    b = np.zeros(dim)
    w = 2 * num_tx

    def add_block(col: int, mat: np.ndarray) -> None:
        off = w * col
        A[off : off + w, off : off + w] += _lift_hermitian(mat)

    if stream == COMMON:
        for col in range(num_users + 1):
            add_block(col, sc.psi)
        own_col = 0
    else:
        own_col = 1 + user
        if coeffs.strategy.uses_dpc:
            order = coeffs.order
            pos = order.index(user)
            add_block(own_col, sc.psi)
            for j in order[pos + 1 :]:
                add_block(1 + j, sc.psi)
            for i in order[:pos]:
                add_block(1 + i, sc.phi)
        else:
            for j in range(num_users):
                add_block(1 + j, sc.psi)
    off = w * own_col
    b[off : off + w] = -2.0 * _lift_vector(sc.f)
    return QuadraticForm(A, b, sc.t + sc.w - nu)


def build_subproblem(
    coeffs: QuadCoefficients,
    weights: np.ndarray,
    unicast_thresholds: np.ndarray,
    multicast_threshold: float,
    power_budget: float,
    strategy: Strategy,
    order: tuple[int, ...] | None = None,
    pin_common: bool = False,
) -> SubproblemSpec:
    """Compile the convex program for fixed equalizers and weights.

    ``pin_common`` drops the slack vector and the common-stream constraints
    entirely; it is only valid when the multicast threshold is zero (the
    zero allocation then satisfies every dropped constraint trivially).
    """
    weights = np.asarray(weights, dtype=float)
    unicast_thresholds = np.asarray(unicast_thresholds, dtype=float)
    k_users = coeffs.num_users
    if weights.shape != (k_users,) or np.any(weights <= 0):
        raise ValueError("weights must be positive, one per user")
    if unicast_thresholds.shape != (k_users,) or np.any(unicast_thresholds < 0):
        raise ValueError("unicast thresholds must be >= 0, one per user")
    if multicast_threshold < 0 or power_budget <= 0:
        raise ValueError("thresholds must be >= 0 and power budget > 0")
    if pin_common and multicast_threshold > 0:
        raise ValueError("pin_common requires a zero multicast threshold")
    if strategy.uses_dpc and (order is None or coeffs.order != tuple(order)):
        raise ValueError("DPC-family subproblems need the coefficients' encoding order")
    _validate_psd(coeffs)

    num_tx = coeffs.common[0].psi.shape[0]
    if pin_common:
        num_slack = 0
    elif strategy.has_common_unicast:
        num_slack = k_users + 1
    else:
        num_slack = 1
    dim = 2 * num_tx * (k_users + 1) + num_slack
    slack_off = 2 * num_tx * (k_users + 1)

    def slack_unit(j: int) -> np.ndarray:
        e = np.zeros(dim)
        e[slack_off + j] = 1.0
        return e

    xi_private = [
        _xi_quadratic(coeffs, PRIVATE, k, num_tx, k_users, dim, coeffs.private[k].nu_nats)
        for k in range(k_users)
    ]
    xi_common = [
        _xi_quadratic(coeffs, COMMON, k, num_tx, k_users, dim, coeffs.common[k].nu_nats)
        for k in range(k_users)
    ]

    obj_A = np.zeros((dim, dim))
    obj_b = np.zeros(dim)
    obj_c = 0.0
    for k in range(k_users):
        obj_A += weights[k] * xi_private[k].A
        obj_b += weights[k] * xi_private[k].b
        obj_c += weights[k] * xi_private[k].c
        if num_slack > 1:
            obj_b += weights[k] * slack_unit(1 + k)
    objective = QuadraticForm(obj_A, obj_b, obj_c)

    constraints: list[QuadraticForm] = []
    labels: list[str] = []
    if not pin_common:
        slack_sum = sum(slack_unit(j) for j in range(num_slack))
        for k in range(k_users):
            constraints.append(
                QuadraticForm(xi_common[k].A, xi_common[k].b - slack_sum, xi_common[k].c - 1.0)
            )
            labels.append(f"common_decodability_user{k}")
    for k in range(k_users):
        b = xi_private[k].b + (slack_unit(1 + k) if num_slack > 1 else 0.0)
        constraints.append(
            QuadraticForm(xi_private[k].A, b, xi_private[k].c - 1.0 + unicast_thresholds[k] * LN2)
        )
        labels.append(f"qos_user{k}")
    if not pin_common:
        constraints.append(QuadraticForm(None, slack_unit(0), multicast_threshold * LN2))
        labels.append("multicast_qos")
    power_A = np.zeros((dim, dim))
    power_A[:slack_off, :slack_off] = np.eye(slack_off)
    constraints.append(QuadraticForm(power_A, np.zeros(dim), -power_budget))
    labels.append("power")
    for j in range(num_slack):
        constraints.append(QuadraticForm(None, slack_unit(j), 0.0))
        labels.append(f"sign_x{j}")

    return SubproblemSpec(
        coefficients=coeffs,
        weights=weights,
        unicast_thresholds=unicast_thresholds,
        multicast_threshold=multicast_threshold,
        power_budget=power_budget,
        strategy=strategy,
        order=tuple(order) if order is not None else None,
        pin_common=pin_common,
        num_users=k_users,
        num_tx=num_tx,
        num_slack=num_slack,
        objective=objective,
        constraints=tuple(constraints),
        constraint_labels=tuple(labels),
    )


def _interior_candidate(
    spec: SubproblemSpec,
    precoders: PrecoderSet | None,
    margin: float = 1e-3,
) -> np.ndarray:
    """Heuristic strictly-feasible candidate: shrink the precoders inside the
    power ball, then place the slacks halfway into their feasible interval."""
    k = spec.num_users
    n = spec.num_tx
    if precoders is None:
        precoders = PrecoderSet(np.zeros(n, complex), np.zeros((n, k), complex), spec.order)
    power = precoders.total_power()
    limit = spec.power_budget * (1.0 - margin)
    if power > limit:
        scale = np.sqrt(limit / power) if power > 0 else 0.0
        precoders = PrecoderSet(precoders.common * scale, precoders.private * scale, spec.order)
    if spec.num_slack == 0:
        return spec.pack(precoders, np.zeros(0))

    z_p = spec.pack(precoders, np.zeros(spec.num_slack))
    r0 = spec.multicast_threshold * LN2
    if spec.num_slack == 1:
        # Only X_0 is free: pick the middle of its feasible interval.
        xi_c = [spec.constraints[i].value(z_p) for i in range(k)]  # at xhat = 0
        lo = float(np.max(xi_c))        # X_0 >= xi_c,k(P) - 1 (shifted form)
        hi = -r0
        x0 = 0.5 * (max(lo, -1e3) + hi) if lo < hi else hi - 1e-3
        return spec.pack(precoders, np.array([min(x0, -r0 - 1e-9)]))

    # Full slack vector: required lower bounds per component, surplus split.
    xi_c_vals = []
    xi_p_vals = []
    for kk in range(k):
        xi_c_vals.append(spec.constraints[kk].value(z_p) + 1.0)      # xi_c,k(P)
        xi_p_vals.append(
            spec.constraints[k + kk].value(z_p) + 1.0 - spec.unicast_thresholds[kk] * LN2
        )
    bound = 1.0 - float(np.max(xi_c_vals))  # surrogate common budget (nats)
    lower = np.empty(k + 1)
    lower[0] = r0
    for kk in range(k):
        lower[1 + kk] = max(0.0, spec.unicast_thresholds[kk] * LN2 - (1.0 - xi_p_vals[kk]))
    room = bound - float(np.sum(lower))
    if room <= 1e-9:
        # No obvious interior allocation; return a sign-feasible guess and let
        # phase-1 sort it out.
        chat = lower + 1e-6
    else:
        chat = lower + room / (2.0 * (k + 1))
    return spec.pack(precoders, -chat)


def kkt_residual(
    spec: SubproblemSpec,
    precoders: PrecoderSet,
    xhat_nats: np.ndarray,
    multipliers: np.ndarray | None = None,
) -> float:
    """Max of stationarity, primal-violation, and complementarity norms.

    When multipliers are not supplied, the best nonnegative least-squares
    multipliers for the stationarity condition are implied.
    """
    z = spec.pack(precoders, xhat_nats)
    fvals = np.array([f.value(z) for f in spec.constraints])
    J = np.stack([f.grad(z) for f in spec.constraints])
    g0 = spec.objective.grad(z)
    if multipliers is None:
        multipliers, _ = nnls(J.T, -g0)
    stationarity = float(np.linalg.norm(g0 + J.T @ multipliers, np.inf))
    primal = float(max(0.0, np.max(fvals)))
    complementarity = float(np.max(np.abs(multipliers * fvals)))
    return max(stationarity, primal, complementarity)


def solve(
    spec: SubproblemSpec,
    tol: float = 1e-8,
    initial: PrecoderSet | None = None,
    max_iter: int = 200,
) -> SubproblemSolution:
    """Solve the QCQP to a KKT residual <= tol (or detect infeasibility).

    ``initial`` is a warm-start hint; convexity makes it a speed knob only.
    Falls back from the primal-dual method to the log-barrier method if the
    line search stalls.
    """
    z0 = _interior_candidate(spec, initial)
    fvals = np.array([f.value(z0) for f in spec.constraints])
    if np.any(fvals >= -1e-12):
        z0, worst = find_strictly_feasible(spec.constraints, z0, margin=1e-12, tol=tol)
        if z0 is None:
            return SubproblemSolution(
                precoders=None, xhat=None, alloc=None, objective=np.inf,
                status="infeasible", iterations=0, kkt_stationarity=np.inf,
                kkt_primal=np.inf, kkt_complementarity=np.inf, gap_trace=(),
                multipliers=None, infeasibility=worst,
            )

    res: IpmResult = solve_primal_dual(
        spec.objective, spec.constraints, z0, tol=tol / 2, feas_tol=tol / 2, max_iter=max_iter
    )
    if res.status in ("stalled", "max_iter"):
        fallback = solve_barrier(
            spec.objective, spec.constraints, res.z, tol=tol / 2, max_iter=2 * max_iter
        )
        if fallback.gap <= res.gap:
            res = fallback

    z, lam = res.z, res.lam
    fvals = np.array([f.value(z) for f in spec.constraints])
    J = np.stack([f.grad(z) for f in spec.constraints])
    stationarity = float(np.linalg.norm(spec.objective.grad(z) + J.T @ lam, np.inf))
    primal = float(max(0.0, np.max(fvals)))
    complementarity = float(np.max(np.abs(lam * fvals)))
    precoders, xhat = spec.unpack(z)

    chat_bits = np.zeros(spec.num_users + 1)
    if spec.num_slack == 1:
        chat_bits[0] = -xhat[0] / LN2
    elif spec.num_slack > 1:
        chat_bits = -xhat / LN2
    chat_bits[chat_bits < 1e-9] = 0.0
    status = "optimal" if res.status in ("optimal", "early") else "max_iter"
    if status == "max_iter" and max(stationarity, primal, complementarity) <= tol:
        status = "optimal"
    return SubproblemSolution(
        precoders=precoders,
        xhat=xhat,
        alloc=CommonRateAlloc(chat_bits),
        objective=spec.objective.value(z),
        status=status,
        iterations=res.iterations,
        kkt_stationarity=stationarity,
        kkt_primal=primal,
        kkt_complementarity=complementarity,
        gap_trace=tuple(res.gap_trace),
        multipliers=lam,
    )
