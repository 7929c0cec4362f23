"""Algorithm sweeps: wire data, topology and engine, then write result files."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentSpec
from .engine import RunResult, reference_solution, run
from .errors import CQGGADMMError
from .metrics import MetricsRow, iterations_to_threshold, write_csv
from .objectives import (
    LOGISTIC,
    CsvSchema,
    LocalObjective,
    generate_synthetic,
    load_csv,
    make_objectives,
    partition_uniform,
)
from .topology import Topology, generate_path, generate_random_bipartite, load_edge_list

log = logging.getLogger(__name__)

NOT_REACHED = "not reached"
PLOT_AXES = {
    "iterations": lambda r: r.k,
    "rounds": lambda r: r.rounds_cum,
    "bits": lambda r: r.bits_cum,
    "energy": lambda r: r.energy_cum,
}
SUMMARY_HEADER = (
    "variant",
    "threshold",
    "iterations",
    "rounds",
    "bits",
    "energy_J",
    "final_gap",
    "stop_reason",
)


class ExperimentError(CQGGADMMError):
    """Wraps a module error with the variant that raised it."""

    def __init__(self, variant: str, cause: Exception):
        self.variant = variant
        self.cause = cause
        super().__init__(f"{variant}: {cause}")


@dataclass
class VariantOutcome:
    variant: str
    rows: list[MetricsRow]
    stop_reason: str
    reached: dict[float, MetricsRow | None]


@dataclass
class Summary:
    outcomes: list[VariantOutcome]
    reference: np.ndarray
    optimum: float
    output_dir: Path | None

    def outcome(self, variant: str) -> VariantOutcome:
        for o in self.outcomes:
            if o.variant == variant:
                return o
        raise KeyError(variant)


def build_topology_from_spec(spec: ExperimentSpec) -> Topology:
    t = spec.topology
    if t.kind == "path":
        return generate_path(t.n)
    if t.kind == "random":
        return generate_random_bipartite(t.n_heads, t.n_tails, t.p, spec.seed)
    return load_edge_list(spec.resolve(t.path))


def build_objectives(spec: ExperimentSpec, n_workers: int) -> list[LocalObjective]:
    ds = spec.dataset
    if ds.kind == "synthetic":
        data, _ = generate_synthetic(spec.task, ds.samples, ds.dim, ds.noise_std, spec.seed)
    else:
        schema = CsvSchema(ds.label_column, ds.has_header, classification=spec.task == LOGISTIC)
        data = load_csv(spec.resolve(ds.path), schema)
    return make_objectives(spec.task, partition_uniform(data, n_workers), ds.mu0)


def prepare(spec: ExperimentSpec):
    topology = build_topology_from_spec(spec)
    objectives = build_objectives(spec, topology.n_workers)
    reference = reference_solution(objectives)
    return topology, objectives, reference


def _run_variant(spec, config, topology, objectives, reference) -> VariantOutcome:
    try:
        result: RunResult = run(
            config,
            topology,
            objectives,
            reference=reference,
            energy=spec.energy,
            keep_records=False,
        )
    except CQGGADMMError as exc:
        raise ExperimentError(config.variant, exc) from exc
    reached = {}
    for thr in spec.thresholds:
        idx = iterations_to_threshold(result.rows, thr)
        reached[thr] = None if idx is None else result.rows[idx]
    return VariantOutcome(config.variant, result.rows, result.stop_reason, reached)


def run_experiment(spec: ExperimentSpec, output_dir: str | Path | None = None) -> Summary:
    """Run every configured algorithm and write series, summary and plot data.

    Files written to the output directory: ``<variant>.csv`` per algorithm,
    ``summary.csv``, ``plot_<axis>.csv`` for axes iterations, rounds, bits
    and energy, and ``topology.txt``.
    """
    topology, objectives, reference = prepare(spec)
    optimum = float(sum(obj.value(reference) for obj in objectives))
    configs = spec.algorithms
    if spec.parallel_variants and len(configs) > 1:
        with ThreadPoolExecutor(max_workers=len(configs)) as pool:
            outcomes = list(
                pool.map(
                    lambda c: _run_variant(spec, c, topology, objectives, reference), configs
                )
            )
    else:
        outcomes = [_run_variant(spec, c, topology, objectives, reference) for c in configs]

    out = None
    if output_dir is not None or spec.output_dir:
        out = Path(output_dir) if output_dir is not None else spec.resolve(spec.output_dir)
        write_outputs(out, outcomes, spec.thresholds, topology)
    return Summary(outcomes, reference, optimum, out)


def summary_csv(outcomes: list[VariantOutcome], thresholds) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for o in outcomes:
        final_gap = f"{o.rows[-1].gap:.12g}" if o.rows else NOT_REACHED
        for thr in thresholds:
            row = o.reached[thr]
            if row is None:
                cells = [NOT_REACHED] * 4
            else:
                cells = [str(row.k), str(row.rounds_cum), str(row.bits_cum), f"{row.energy_cum:.12g}"]
            w.writerow([o.variant, f"{thr:.12g}", *cells, final_gap, o.stop_reason])
    return buf.getvalue()


def plot_csv(outcomes: list[VariantOutcome], axis: str) -> str:
    get = PLOT_AXES[axis]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("variant", axis, "gap"))
    for o in outcomes:
        for r in o.rows:
            x = get(r)
            w.writerow([o.variant, x if isinstance(x, int) else f"{x:.12g}", f"{r.gap:.12g}"])
    return buf.getvalue()


def write_outputs(out: Path, outcomes, thresholds, topology: Topology) -> None:
    from .topology import format_edge_list

    out.mkdir(parents=True, exist_ok=True)
    for o in outcomes:
        write_csv(o.rows, out / f"{o.variant}.csv")
    (out / "summary.csv").write_text(summary_csv(outcomes, thresholds))
    for axis in PLOT_AXES:
        (out / f"plot_{axis}.csv").write_text(plot_csv(outcomes, axis))
    (out / "topology.txt").write_text(format_edge_list(topology))
    log.info("wrote results to %s", out)


def read_summary(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def render_plots(directory: str | Path) -> list[Path]:
    """Draw one log-scale line chart per plot-data file found in ``directory``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    directory = Path(directory)
    written = []
    for axis in PLOT_AXES:
        src = directory / f"plot_{axis}.csv"
        if not src.exists():
            continue
        series: dict[str, tuple[list[float], list[float]]] = {}
        with open(src, newline="") as fh:
            for rec in csv.DictReader(fh):
                xs, ys = series.setdefault(rec["variant"], ([], []))
                xs.append(float(rec[axis]))
                ys.append(float(rec["gap"]))
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for variant, (xs, ys) in series.items():
            ys = np.maximum(ys, 1e-16)
            ax.semilogy(xs, ys, label=variant)
        ax.set_xlabel(axis)
        ax.set_ylabel("optimality gap")
        ax.legend()
        fig.tight_layout()
        dest = directory / f"plot_{axis}.png"
        fig.savefig(dest, dpi=120)
        plt.close(fig)
        written.append(dest)
    return written
