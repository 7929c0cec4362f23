"""Barrier-synchronous head/tail iteration engine.

One iteration runs three phases. Heads solve their subproblems against
the last models they received from tails and (depending on the variant)
quantize and censor before broadcasting. Tails then do the same against
the fresh head models. Finally every worker moves its aggregated dual
``alpha_n`` using only models it has sent or received.

Every message is serialized to bytes and decoded by each receiving
neighbor, so neighbor views are genuinely replicated state.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import compression as cz
from .compression import CensorPolicy, FullPrecisionPayload, QuantizerState
from .errors import (
    BitBudgetExceeded,
    ConfigError,
    InvariantViolation,
    NoConverge,
    SingularSystem,
)
from .kernels import counter_uniforms
from .objectives import LINEAR, LocalObjective
from .solvers import LinearFactorCache, NewtonSettings, SubproblemSpec, solve_subproblem
from .topology import Topology, incidence_set

log = logging.getLogger(__name__)

GGADMM = "ggadmm"
C_GGADMM = "c_ggadmm"
CQ_GGADMM = "cq_ggadmm"
VARIANTS = (GGADMM, C_GGADMM, CQ_GGADMM)

DUAL_SUM_TOL = 1e-9
COLUMN_SPACE_RTOL = 1e-8
COLUMN_SPACE_ATOL = 1e-12


@dataclass(frozen=True)
class RunConfig:
    variant: str = GGADMM
    rho: float = 1.0
    max_iters: int = 100
    censor: CensorPolicy | None = None
    omega: float = 0.97
    init_bits: int = 2
    seed: int = 0
    solver: NewtonSettings = field(default_factory=NewtonSettings)
    stop_gap: float | None = None
    threads: int = 1
    b_R: int = 32
    b_b: int = 32
    word_bits: int = 32
    range_policy: str = cz.FILL
    on_bit_overflow: str = "stop"
    check_invariants: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not self.rho > 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if self.max_iters < 0:
            raise ConfigError(f"max_iters must be nonnegative, got {self.max_iters}")
        if self.range_policy not in cz.RANGE_POLICIES:
            raise ConfigError(f"unknown range policy {self.range_policy!r}")
        if self.on_bit_overflow not in ("stop", "raise"):
            raise ConfigError(f"on_bit_overflow must be 'stop' or 'raise', got {self.on_bit_overflow!r}")
        if self.threads < 1:
            raise ConfigError(f"threads must be positive, got {self.threads}")
        if self.variant == CQ_GGADMM:
            if not 0.0 < self.omega < 1.0:
                raise ConfigError(f"omega must lie in (0, 1), got {self.omega}")
            if not 1 <= self.init_bits <= cz.MAX_BITS:
                raise ConfigError(f"init_bits must lie in [1, {cz.MAX_BITS}]")

    @property
    def censored(self) -> bool:
        return self.variant in (C_GGADMM, CQ_GGADMM)

    @property
    def quantized(self) -> bool:
        return self.variant == CQ_GGADMM


@dataclass
class WorkerState:
    id: int
    objective: LocalObjective
    neighbors: tuple[int, ...]
    is_head: bool
    theta: np.ndarray
    alpha: np.ndarray
    last_sent: np.ndarray
    neighbor_view: dict[int, np.ndarray]
    quantizer: QuantizerState | None = None

    @property
    def degree(self) -> int:
        return len(self.neighbors)


@dataclass
class IterationRecord:
    """What happened during one iteration (``k`` counts completed iterations)."""

    k: int
    transmitted: list[bool]
    payload_bits: list[int]
    sent_prev: list[np.ndarray]
    steps: list[float]
    censor_residual: list[float]
    total_error_sq: list[float]

    @property
    def n_transmitted(self) -> int:
        return sum(self.transmitted)


@dataclass
class EngineState:
    config: RunConfig
    topology: Topology
    workers: list[WorkerState]
    k: int = 0
    factor_cache: LinearFactorCache = field(default_factory=LinearFactorCache)
    column_projector: np.ndarray | None = None
    first_steps: list[float | None] = field(default_factory=list)
    executor: ThreadPoolExecutor | None = None

    @property
    def dim(self) -> int:
        return self.workers[0].theta.shape[0]

    def thetas(self) -> np.ndarray:
        return np.stack([w.theta for w in self.workers])

    def alphas(self) -> np.ndarray:
        return np.stack([w.alpha for w in self.workers])

    def last_sent(self) -> np.ndarray:
        return np.stack([w.last_sent for w in self.workers])

    def close(self) -> None:
        if self.executor is not None:
            self.executor.shutdown()
            self.executor = None


def init_run(
    config: RunConfig, topology: Topology, objectives: Sequence[LocalObjective]
) -> EngineState:
    """Zero all primal, dual and transmitted variables and set up codecs."""
    if len(objectives) != topology.n_workers:
        raise ConfigError(
            f"{len(objectives)} objectives for {topology.n_workers} workers"
        )
    dims = {obj.dim for obj in objectives}
    if len(dims) != 1:
        raise ConfigError(f"objectives disagree on dimension: {sorted(dims)}")
    if config.censored and config.censor is None:
        raise ConfigError(f"variant {config.variant} needs a censoring policy")
    if config.variant == GGADMM and config.censor is not None:
        warnings.warn("censoring policy ignored for ggadmm", stacklevel=2)
    d = dims.pop()

    heads = set(topology.heads)
    workers = []
    for n, obj in enumerate(objectives):
        nbrs = topology.neighbors[n]
        workers.append(
            WorkerState(
                id=n,
                objective=obj,
                neighbors=nbrs,
                is_head=n in heads,
                theta=np.zeros(d),
                alpha=np.zeros(d),
                last_sent=np.zeros(d),
                neighbor_view={m: np.zeros(d) for m in nbrs},
                quantizer=(
                    QuantizerState.initial(d, config.omega, config.init_bits)
                    if config.quantized
                    else None
                ),
            )
        )

    state = EngineState(config, topology, workers, first_steps=[None] * len(workers))
    for w in workers:
        if w.objective.kind == LINEAR:
            # populate before any parallel phase touches the cache
            state.factor_cache.get(w.objective, config.rho * w.degree)
    if config.check_invariants:
        m = incidence_set(topology).m_signed.astype(float)
        state.column_projector = m @ np.linalg.pinv(m)
    if config.threads > 1:
        state.executor = ThreadPoolExecutor(max_workers=config.threads)
    return state


@dataclass
class _Outgoing:
    worker: int
    theta: np.ndarray
    payload: object | None
    last_sent: np.ndarray
    quantizer: QuantizerState | None
    step: float
    censor_residual: float


def _primal_update(state: EngineState, n: int) -> _Outgoing:
    cfg = state.config
    w = state.workers[n]
    received = np.sum([w.neighbor_view[m] for m in w.neighbors], axis=0)
    spec = SubproblemSpec(w.objective, w.alpha - cfg.rho * received, cfg.rho * w.degree)
    theta = solve_subproblem(spec, w.theta, cfg.solver, state.factor_cache)
    k = state.k

    if cfg.variant == GGADMM:
        return _Outgoing(n, theta, FullPrecisionPayload(theta), theta, None, np.nan, 0.0)

    if cfg.variant == C_GGADMM:
        send = cz.censor_decide(w.last_sent, theta, k, cfg.censor)
        if send:
            return _Outgoing(n, theta, FullPrecisionPayload(theta), theta, None, np.nan, 0.0)
        residual = float(np.linalg.norm(theta - w.last_sent))
        return _Outgoing(n, theta, None, w.last_sent, None, np.nan, residual)

    uniforms = counter_uniforms(cfg.seed, n, k, theta.shape[0])
    payload, candidate, qstate = cz.quantize(
        theta, w.quantizer, uniforms, range_policy=cfg.range_policy
    )
    if cz.censor_decide(w.last_sent, candidate, k, cfg.censor):
        return _Outgoing(n, theta, payload, candidate, qstate, qstate.prev_step, 0.0)
    # censored: receivers never see the candidate, so the next difference is
    # taken against the value they do hold
    qstate = replace(qstate, prev_reconstruction=w.last_sent)
    residual = float(np.linalg.norm(candidate - w.last_sent))
    return _Outgoing(n, theta, None, w.last_sent, qstate, qstate.prev_step, residual)


def _decode(payload_bytes: bytes, reference: np.ndarray) -> np.ndarray:
    payload = cz.deserialize(payload_bytes)
    if isinstance(payload, FullPrecisionPayload):
        return payload.values.copy()
    return cz.reconstruct(payload, reference)


def _run_phase(state: EngineState, group: Iterable[int], record: IterationRecord) -> None:
    cfg = state.config
    group = list(group)
    if state.executor is not None and len(group) > 1:
        outgoing = list(state.executor.map(lambda n: _primal_update(state, n), group))
    else:
        outgoing = [_primal_update(state, n) for n in group]

    for out in outgoing:
        w = state.workers[out.worker]
        w.theta = out.theta
        w.last_sent = out.last_sent
        w.quantizer = out.quantizer
        record.steps[w.id] = out.step
        record.censor_residual[w.id] = out.censor_residual
        err = w.theta - w.last_sent
        record.total_error_sq[w.id] = float(err @ err)
        if out.payload is None:
            continue
        record.transmitted[w.id] = True
        record.payload_bits[w.id] = cz.payload_bits(out.payload, cfg.b_R, cfg.b_b, cfg.word_bits)
        wire = cz.serialize(out.payload)
        for m in w.neighbors:
            receiver = state.workers[m]
            view = _decode(wire, receiver.neighbor_view[w.id])
            if not np.array_equal(view, w.last_sent):
                raise InvariantViolation(
                    f"worker {m} decoded a different model for worker {w.id}"
                )
            receiver.neighbor_view[w.id] = view


def _snapshot(state: EngineState):
    # arrays are replaced, never mutated, so shallow copies suffice
    return [
        (w.theta, w.alpha, w.last_sent, dict(w.neighbor_view), w.quantizer)
        for w in state.workers
    ], list(state.first_steps)


def _restore(state: EngineState, snap) -> None:
    saved, first_steps = snap
    for w, (theta, alpha, sent, view, quantizer) in zip(state.workers, saved):
        w.theta, w.alpha, w.last_sent, w.neighbor_view, w.quantizer = (
            theta, alpha, sent, view, quantizer
        )
    state.first_steps = first_steps


def step(state: EngineState) -> IterationRecord:
    """Run one head phase, one tail phase and the local dual updates.

    If any phase raises, the state is rolled back to the start of the
    iteration before the error propagates.
    """
    snap = _snapshot(state)
    try:
        return _step(state)
    except Exception:
        _restore(state, snap)
        raise


def _step(state: EngineState) -> IterationRecord:
    cfg = state.config
    topo = state.topology
    n_workers = topo.n_workers
    record = IterationRecord(
        k=state.k + 1,
        transmitted=[False] * n_workers,
        payload_bits=[0] * n_workers,
        sent_prev=[w.last_sent for w in state.workers],
        steps=[np.nan] * n_workers,
        censor_residual=[0.0] * n_workers,
        total_error_sq=[0.0] * n_workers,
    )
    prev_steps = [w.quantizer.prev_step if w.quantizer else None for w in state.workers]

    _run_phase(state, topo.heads, record)
    _run_phase(state, topo.tails, record)

    for w in state.workers:
        diff = np.sum([w.last_sent - w.neighbor_view[m] for m in w.neighbors], axis=0)
        w.alpha = w.alpha + cfg.rho * diff

    if cfg.check_invariants:
        _check_invariants(state, record, prev_steps)
    for n, s in enumerate(record.steps):
        if state.first_steps[n] is None and not np.isnan(s):
            state.first_steps[n] = s
    state.k += 1
    return record


def _check_invariants(
    state: EngineState, record: IterationRecord, prev_steps: list[float | None]
) -> None:
    cfg = state.config
    k = state.k
    if cfg.quantized:
        for n, (new, old) in enumerate(zip(record.steps, prev_steps)):
            if old is not None and not new <= cfg.omega * old:
                raise InvariantViolation(
                    f"step law broken at worker {n}, iteration {k + 1}: {new} > {cfg.omega} * {old}"
                )
    if cfg.censored:
        limit = cfg.censor.tau0 * cfg.censor.xi ** (k + 1)
        for n, res in enumerate(record.censor_residual):
            if not res <= limit:
                raise InvariantViolation(
                    f"censoring residual {res} above {limit} at worker {n}, iteration {k + 1}"
                )
    alpha = state.alphas()
    drift = float(np.max(np.abs(alpha.sum(axis=0))))
    if drift > DUAL_SUM_TOL:
        raise InvariantViolation(f"sum of duals drifted to {drift} at iteration {k + 1}")
    if state.column_projector is not None:
        resid = np.linalg.norm(alpha - state.column_projector @ alpha)
        if resid > COLUMN_SPACE_RTOL * np.linalg.norm(alpha) + COLUMN_SPACE_ATOL:
            raise InvariantViolation(
                f"duals left the incidence column space ({resid}) at iteration {k + 1}"
            )


@dataclass
class RunResult:
    state: EngineState
    rows: list
    records: list[IterationRecord]
    stop_reason: str = "max_iters"

    @property
    def workers(self) -> list[WorkerState]:
        return self.state.workers


Sink = Callable[[IterationRecord, object, EngineState], None]


def run(
    config: RunConfig,
    topology: Topology,
    objectives: Sequence[LocalObjective],
    sinks: Sequence[Sink] = (),
    *,
    reference: np.ndarray | None = None,
    energy=None,
    keep_records: bool = True,
) -> RunResult:
    """Iterate up to ``config.max_iters`` times, streaming metrics to ``sinks``.

    With a ``reference`` solution and ``config.stop_gap`` set, the run stops
    as soon as the optimality gap falls to ``stop_gap``. When the quantizer
    can no longer honor the step law within 32 bits (double-precision
    floor), the run ends there unless ``config.on_bit_overflow == "raise"``.
    """
    from .metrics import EnergyModel, MetricsTracker

    state = init_run(config, topology, objectives)
    tracker = MetricsTracker(state, reference=reference, energy=energy or EnergyModel())
    rows, records = [], []
    stop_reason = "max_iters"
    try:
        for _ in range(config.max_iters):
            try:
                record = step(state)
            except BitBudgetExceeded as exc:
                if config.on_bit_overflow == "raise":
                    raise
                log.warning("%s: stopping after %d iterations: %s", config.variant, state.k, exc)
                stop_reason = "bit_budget"
                break
            row = tracker.update(state, record)
            rows.append(row)
            if keep_records:
                records.append(record)
            for sink in sinks:
                sink(record, row, state)
            if config.stop_gap is not None and reference is not None and row.gap <= config.stop_gap:
                stop_reason = "stop_gap"
                break
    finally:
        state.close()
    return RunResult(state, rows, records, stop_reason)


def reference_solution(
    objectives: Sequence[LocalObjective], grad_tol: float = 1e-12, max_iters: int = 100
) -> np.ndarray:
    """Centralized minimizer of the summed objective.

    Raises
    ------
    SingularSystem
        The summed linear system is not positive definite.
    NoConverge
        Newton failed to reach ``grad_tol`` on the logistic task.
    """
    d = objectives[0].dim
    if all(obj.kind == LINEAR for obj in objectives):
        gram = sum(obj.gram() for obj in objectives)
        rhs = sum(obj.data.features.T @ obj.data.labels for obj in objectives)
        try:
            factor = cho_factor(gram, lower=True)
        except LinAlgError:
            raise SingularSystem("sum of X^T X is not positive definite") from None
        theta = cho_solve(factor, rhs)
        if not np.all(np.isfinite(theta)):
            raise SingularSystem("reference solve produced non-finite values")
        return theta

    def total(theta):
        return sum(obj.value(theta) for obj in objectives)

    theta = np.zeros(d)
    f = total(theta)
    for _ in range(max_iters):
        g = sum(obj.gradient(theta) for obj in objectives)
        if np.linalg.norm(g) <= grad_tol:
            return theta
        H = sum(obj.hessian(theta) for obj in objectives)
        try:
            step_dir = cho_solve(cho_factor(H, lower=True), g)
        except LinAlgError:
            raise SingularSystem("summed Hessian is not positive definite") from None
        if np.linalg.norm(step_dir) <= 1e-15 * (1.0 + np.linalg.norm(theta)):
            # Newton step below roundoff: as close as double precision gets
            return theta
        t = 1.0
        for _ in range(60):
            candidate = theta - t * step_dir
            f_new = total(candidate)
            if f_new <= f:
                break
            t *= 0.5
        theta, f = candidate, f_new
    raise NoConverge(f"reference Newton exceeded {max_iters} iterations", iterations=max_iters)
