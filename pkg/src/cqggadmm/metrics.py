"""Convergence diagnostics and communication/energy accounting."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument, MissingReference, NonPositiveSeries
from .topology import Topology, incidence_set

CSV_HEADER = (
    "k",
    "loss",
    "gap",
    "primal_res",
    "dual_res",
    "rounds_cum",
    "bits_cum",
    "energy_cum_J",
    "censored_count",
)

ALTERNATING = "alternating"
PARALLEL = "parallel"


@dataclass(frozen=True)
class EnergyModel:
    total_bandwidth: float = 2e6
    noise_psd: float = 1e-6
    slot_time: float = 1e-3
    distance: float = 1.0
    scheme: str = ALTERNATING

    def __post_init__(self):
        for f in ("total_bandwidth", "noise_psd", "slot_time", "distance"):
            if not getattr(self, f) > 0:
                raise InvalidArgument(f"{f} must be positive, got {getattr(self, f)}")
        if self.scheme not in (ALTERNATING, PARALLEL):
            raise InvalidArgument(f"unknown scheme {self.scheme!r}")


@dataclass(frozen=True)
class MetricsRow:
    k: int
    loss: float
    gap: float
    primal_res: float
    dual_res: float
    rounds_cum: int
    bits_cum: int
    energy_cum: float
    censored_count: int
    primal_res_rss: float = 0.0
    dual_res_rss: float = 0.0

    def csv_fields(self) -> list[str]:
        return [
            str(self.k),
            _fmt(self.loss),
            _fmt(self.gap),
            _fmt(self.primal_res),
            _fmt(self.dual_res),
            str(self.rounds_cum),
            str(self.bits_cum),
            _fmt(self.energy_cum),
            str(self.censored_count),
        ]


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def bandwidth_per_worker(model: EnergyModel, n_workers: int) -> float:
    """Alternating groups split the band among N/2 senders, parallel among N."""
    if n_workers < 1:
        raise InvalidArgument(f"n_workers must be positive, got {n_workers}")
    if model.scheme == ALTERNATING:
        return 2.0 * model.total_bandwidth / n_workers
    return model.total_bandwidth / n_workers


def transmission_energy(bits: int, model: EnergyModel, bandwidth: float) -> float:
    """Energy to push ``bits`` in one slot at the Shannon-capacity power level."""
    if bits < 0:
        raise InvalidArgument(f"bits must be nonnegative, got {bits}")
    if not bandwidth > 0:
        raise InvalidArgument(f"bandwidth must be positive, got {bandwidth}")
    rate = bits / model.slot_time
    power = (
        model.slot_time
        * model.distance**2
        * model.noise_psd
        * bandwidth
        * (2.0 ** (rate / bandwidth) - 1.0)
    )
    return power * model.slot_time


def residuals(state, prev_sent: Sequence[np.ndarray] | None = None):
    """Per-edge primal residuals (head minus tail) and per-head dual residuals.

    ``prev_sent`` holds every worker's transmitted model from the previous
    iteration; without it the dual residuals are zero.
    """
    topo: Topology = state.topology
    workers = state.workers
    r = {(h, t): workers[h].theta - workers[t].theta for h, t in topo.oriented_edges()}
    s = {}
    rho = state.config.rho
    for h in topo.heads:
        if prev_sent is None:
            s[h] = np.zeros_like(workers[h].theta)
            continue
        s[h] = rho * np.sum(
            [workers[m].last_sent - prev_sent[m] for m in topo.neighbors[h]], axis=0
        )
    return r, s


def global_loss(objectives, thetas) -> float:
    return float(sum(obj.value(th) for obj, th in zip(objectives, thetas)))


class MetricsTracker:
    """Turns iteration records into cumulative metric rows."""

    def __init__(self, state, reference: np.ndarray | None = None, energy: EnergyModel | None = None):
        self.objectives = [w.objective for w in state.workers]
        self.n_workers = len(self.objectives)
        self.energy = energy or EnergyModel()
        self.bandwidth = bandwidth_per_worker(self.energy, self.n_workers)
        self.reference = None if reference is None else np.asarray(reference, dtype=float)
        self.optimum = (
            None
            if reference is None
            else global_loss(self.objectives, [self.reference] * self.n_workers)
        )
        self.rounds = 0
        self.bits = 0
        self.energy_cum = 0.0
        self._energy_cache: dict[int, float] = {}

    def _energy(self, bits: int) -> float:
        e = self._energy_cache.get(bits)
        if e is None:
            e = transmission_energy(bits, self.energy, self.bandwidth)
            self._energy_cache[bits] = e
        return e

    def update(self, state, record) -> MetricsRow:
        for sent, nbits in zip(record.transmitted, record.payload_bits):
            if sent:
                self.rounds += 1
                self.bits += nbits
                self.energy_cum += self._energy(nbits)
        loss = global_loss(self.objectives, [w.theta for w in state.workers])
        gap = math.nan if self.optimum is None else abs(loss - self.optimum)
        r, s = residuals(state, record.sent_prev)
        r_norms = np.array([np.linalg.norm(v) for v in r.values()])
        s_norms = np.array([np.linalg.norm(v) for v in s.values()])
        return MetricsRow(
            k=record.k,
            loss=loss,
            gap=gap,
            primal_res=float(r_norms.max()) if r_norms.size else 0.0,
            dual_res=float(s_norms.max()) if s_norms.size else 0.0,
            rounds_cum=self.rounds,
            bits_cum=self.bits,
            energy_cum=self.energy_cum,
            censored_count=self.n_workers - record.n_transmitted,
            primal_res_rss=float(np.sqrt((r_norms**2).sum())),
            dual_res_rss=float(np.sqrt((s_norms**2).sum())),
        )


def write_csv(rows: Iterable[MetricsRow], path: str | Path | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.csv_fields())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(path: str | Path) -> list[MetricsRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise InvalidArgument(f"unexpected header {header}")
        rows = []
        for rec in reader:
            rows.append(
                MetricsRow(
                    k=int(rec[0]),
                    loss=float(rec[1]),
                    gap=float(rec[2]),
                    primal_res=float(rec[3]),
                    dual_res=float(rec[4]),
                    rounds_cum=int(rec[5]),
                    bits_cum=int(rec[6]),
                    energy_cum=float(rec[7]),
                    censored_count=int(rec[8]),
                )
            )
    return rows


def edge_duals(topology: Topology, alphas: np.ndarray) -> np.ndarray:
    """Least-squares per-edge duals ``lambda`` with ``alpha = B lambda``.

    ``B`` is the head-to-tail half of the signed incidence matrix; rows of
    the result follow ``topology.oriented_edges()``.
    """
    m = incidence_set(topology).m_signed[:, : topology.n_edges].astype(float)
    lam, *_ = np.linalg.lstsq(m, np.asarray(alphas, dtype=float), rcond=None)
    return lam


@dataclass(frozen=True)
class LyapunovReference:
    theta_star: np.ndarray
    lambda_star: np.ndarray

    @classmethod
    def from_state(cls, state, theta_star: np.ndarray | None = None) -> "LyapunovReference":
        """Proxy optimum taken from the final iterate of a long run."""
        if theta_star is None:
            theta_star = state.thetas().mean(axis=0)
        return cls(np.asarray(theta_star, dtype=float), edge_duals(state.topology, state.alphas()))


def lyapunov_proxy(state, reference: LyapunovReference | None, rho: float | None = None) -> float:
    """(1/rho) sum_edges ||lambda - lambda*||^2 + rho sum_tails ||theta_t - theta*||^2,
    with lambda* replaced by a reference-run proxy."""
    if reference is None:
        raise MissingReference("the Lyapunov proxy needs a reference run")
    rho = state.config.rho if rho is None else rho
    lam = edge_duals(state.topology, state.alphas())
    dual_part = float(np.sum((lam - reference.lambda_star) ** 2)) / rho
    thetas = state.thetas()
    tails = list(state.topology.tails)
    primal_part = rho * float(np.sum((thetas[tails] - reference.theta_star) ** 2))
    return dual_part + primal_part


def fit_linear_rate(series: Sequence[float]) -> float:
    """Per-iteration contraction factor fitted over the second half of ``series``."""
    y = np.asarray(series, dtype=float)
    if y.size < 20:
        raise InvalidArgument(f"need at least 20 points, got {y.size}")
    if not np.all(y > 0):
        raise NonPositiveSeries("series must be strictly positive to take logs")
    start = y.size // 2
    k = np.arange(start, y.size, dtype=float)
    slope = np.polyfit(k, np.log(y[start:]), 1)[0]
    return float(np.exp(slope))


def iterations_to_threshold(rows: Sequence[MetricsRow], threshold: float) -> int | None:
    """Index of the first row after which ``gap`` stays at or below ``threshold``."""
    hit = None
    for i, row in enumerate(rows):
        if row.gap <= threshold:
            if hit is None:
                hit = i
        else:
            hit = None
    return hit


def row_fields() -> list[str]:
    return [f.name for f in fields(MetricsRow)]
