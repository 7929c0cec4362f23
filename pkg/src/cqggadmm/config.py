"""Experiment configuration files.

Plain ``key = value`` lines with optional ``[section]`` headers; a header
prefixes the keys below it, so these two spellings are equivalent::

    dataset.kind = synthetic

    [dataset]
    kind = synthetic

Algorithms live in indexed sections ``[algo[0]]``, ``[algo[1]]``, ... (or
``algo[0].variant = ...`` at top level). ``#`` starts a comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .compression import RANGE_POLICIES, CensorPolicy
from .engine import GGADMM, VARIANTS, RunConfig
from .errors import ConfigParseError, ConfigValidationError, InvalidArgument
from .metrics import ALTERNATING, PARALLEL, EnergyModel
from .objectives import canonical_kind
from .solvers import NewtonSettings

_SECTION = re.compile(r"^\[\s*([A-Za-z0-9_.\[\]]+)\s*\]$")
_ALGO_KEY = re.compile(r"^algo\[(\d+)\]\.([a-z0-9_]+)$")


def _float(s: str) -> float:
    return float(s)


def _int(s: str) -> int:
    return int(s, 0)


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _str(s: str) -> str:
    return s


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.replace(",", " ").split())


TOP_KEYS = {
    "task": _str,
    "seed": _int,
    "stop_gap": _float,
    "output_dir": _str,
    "threads": _int,
    "parallel_variants": _bool,
    "thresholds": _floats,
    "dataset.kind": _str,
    "dataset.samples": _int,
    "dataset.dim": _int,
    "dataset.noise_std": _float,
    "dataset.path": _str,
    "dataset.label_column": _int,
    "dataset.has_header": _bool,
    "dataset.mu0": _float,
    "topology.kind": _str,
    "topology.n": _int,
    "topology.n_heads": _int,
    "topology.n_tails": _int,
    "topology.p": _float,
    "topology.path": _str,
    "energy.bandwidth_hz": _float,
    "energy.n0": _float,
    "energy.tau_s": _float,
    "energy.distance": _float,
    "energy.scheme": _str,
}

ALGO_KEYS = {
    "variant": _str,
    "rho": _float,
    "tau0": _float,
    "xi": _float,
    "omega": _float,
    "init_bits": _int,
    "max_iters": _int,
    "grad_tol": _float,
    "newton_max_iters": _int,
    "range_policy": _str,
    "on_bit_overflow": _str,
}


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "synthetic"
    samples: int = 1200
    dim: int = 50
    noise_std: float = 0.1
    path: str | None = None
    label_column: int = -1
    has_header: bool = False
    mu0: float = 0.0


@dataclass(frozen=True)
class TopologySpec:
    kind: str = "random"
    n: int = 20
    n_heads: int = 10
    n_tails: int = 10
    p: float = 0.4
    path: str | None = None

    @property
    def n_workers(self) -> int:
        if self.kind == "random":
            return self.n_heads + self.n_tails
        return self.n


@dataclass(frozen=True)
class ExperimentSpec:
    task: str
    dataset: DatasetSpec
    topology: TopologySpec
    algorithms: tuple[RunConfig, ...]
    energy: EnergyModel = field(default_factory=EnergyModel)
    output_dir: str = "runs/default"
    seed: int = 0
    thresholds: tuple[float, ...] = (1e-4,)
    stop_gap: float | None = None
    threads: int = 1
    parallel_variants: bool = False
    base_dir: Path = field(default_factory=Path.cwd, compare=False)

    def with_seed(self, seed: int) -> "ExperimentSpec":
        return replace(
            self, seed=seed, algorithms=tuple(replace(a, seed=seed) for a in self.algorithms)
        )

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def _read_pairs(text: str) -> list[tuple[str, str, int]]:
    pairs = []
    seen: dict[str, int] = {}
    prefix = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            prefix = m.group(1) + "."
            continue
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigParseError("empty key", line=lineno)
        key = prefix + key
        if key in seen:
            raise ConfigParseError(f"duplicate key (first set on line {seen[key]})", key, lineno)
        seen[key] = lineno
        pairs.append((key, value, lineno))
    return pairs


def parse_spec_text(text: str, base_dir: Path | None = None) -> ExperimentSpec:
    top: dict[str, object] = {}
    algos: dict[int, dict[str, object]] = {}
    for key, raw, lineno in _read_pairs(text):
        m = _ALGO_KEY.match(key)
        if m:
            idx, sub = int(m.group(1)), m.group(2)
            conv = ALGO_KEYS.get(sub)
            target = algos.setdefault(idx, {})
            name = sub
        else:
            conv = TOP_KEYS.get(key)
            target = top
            name = key
        if conv is None:
            raise ConfigParseError("unknown key", key, lineno)
        try:
            target[name] = conv(raw)
        except ValueError as exc:
            raise ConfigParseError(f"bad value {raw!r}: {exc}", key, lineno) from None
    return _build(top, algos, base_dir or Path.cwd())


def parse_spec(path: str | Path) -> ExperimentSpec:
    """Parse a config file, applying defaults for every missing key.

    Raises
    ------
    ConfigParseError
        Syntax errors, unknown keys, unparseable values.
    ConfigValidationError
        Values outside their allowed ranges.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc}") from None
    return parse_spec_text(text, base_dir=path.parent)


def _need(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigValidationError(message)


def _build(top, algos, base_dir) -> ExperimentSpec:
    if "task" not in top:
        raise ConfigValidationError("missing required key 'task'")
    try:
        task = canonical_kind(top["task"])
    except InvalidArgument as exc:
        raise ConfigValidationError(str(exc)) from None

    ds = DatasetSpec(
        **{k.split(".", 1)[1]: v for k, v in top.items() if k.startswith("dataset.")}
    )
    _need(ds.kind in ("synthetic", "csv"), f"dataset.kind must be synthetic or csv, got {ds.kind!r}")
    if ds.kind == "synthetic":
        _need(ds.samples >= 1 and ds.dim >= 1, "dataset.samples and dataset.dim must be positive")
        _need(ds.noise_std >= 0, "dataset.noise_std must be nonnegative")
    else:
        _need(ds.path is not None, "dataset.path is required for csv datasets")
    _need(ds.mu0 >= 0, "dataset.mu0 must be nonnegative")
    if task == "logistic_regression" and "dataset.mu0" not in top:
        ds = replace(ds, mu0=1e-3)

    topo = TopologySpec(
        **{k.split(".", 1)[1]: v for k, v in top.items() if k.startswith("topology.")}
    )
    _need(topo.kind in ("path", "random", "edges"), f"unknown topology.kind {topo.kind!r}")
    if topo.kind == "path":
        _need(topo.n >= 2, "topology.n must be at least 2")
    elif topo.kind == "random":
        _need(topo.n_heads >= 1 and topo.n_tails >= 1, "topology needs a head and a tail")
        _need(0.0 < topo.p <= 1.0, f"topology.p must lie in (0, 1], got {topo.p}")
    else:
        _need(topo.path is not None, "topology.path is required for edge-list topologies")

    energy_kwargs = {
        "total_bandwidth": top.get("energy.bandwidth_hz", 2e6),
        "noise_psd": top.get("energy.n0", 1e-6),
        "slot_time": top.get("energy.tau_s", 1e-3),
        "distance": top.get("energy.distance", 1.0),
        "scheme": top.get("energy.scheme", ALTERNATING),
    }
    _need(energy_kwargs["scheme"] in (ALTERNATING, PARALLEL), "energy.scheme must be alternating or parallel")
    try:
        energy = EnergyModel(**energy_kwargs)
    except InvalidArgument as exc:
        raise ConfigValidationError(str(exc)) from None

    seed = top.get("seed", 0)
    _need(0 <= seed < 2**64, "seed must fit in an unsigned 64-bit integer")
    stop_gap = top.get("stop_gap")
    _need(stop_gap is None or stop_gap >= 0, "stop_gap must be nonnegative")
    threads = top.get("threads", 1)
    _need(threads >= 1, "threads must be positive")
    thresholds = top.get("thresholds", (1e-4,))
    _need(len(thresholds) > 0 and all(t > 0 for t in thresholds), "thresholds must be positive")

    if not algos:
        raise ConfigValidationError("at least one algo[i] section is required")
    runs = []
    variants = set()
    for idx in sorted(algos):
        runs.append(_algo(idx, algos[idx], seed, stop_gap, threads))
        if runs[-1].variant in variants:
            raise ConfigValidationError(f"variant {runs[-1].variant} listed twice")
        variants.add(runs[-1].variant)

    return ExperimentSpec(
        task=task,
        dataset=ds,
        topology=topo,
        algorithms=tuple(runs),
        energy=energy,
        output_dir=top.get("output_dir", "runs/default"),
        seed=seed,
        thresholds=tuple(thresholds),
        stop_gap=stop_gap,
        threads=threads,
        parallel_variants=top.get("parallel_variants", False),
        base_dir=base_dir,
    )


def _algo(idx: int, fields_: dict, seed: int, stop_gap, threads: int) -> RunConfig:
    where = f"algo[{idx}]"
    variant = fields_.get("variant")
    _need(variant is not None, f"{where}.variant is required")
    _need(variant in VARIANTS, f"{where}.variant must be one of {VARIANTS}, got {variant!r}")
    rho = fields_.get("rho", 1.0)
    _need(rho > 0, f"{where}.rho must be positive")
    tau0 = fields_.get("tau0", 1.0)
    xi = fields_.get("xi", 0.97)
    omega = fields_.get("omega", 0.97)
    _need(tau0 > 0, f"{where}.tau0 must be positive")
    _need(0.0 < xi < 1.0, f"{where}.xi must lie in (0, 1), got {xi}")
    _need(0.0 < omega < 1.0, f"{where}.omega must lie in (0, 1), got {omega}")
    init_bits = fields_.get("init_bits", 2)
    _need(1 <= init_bits <= 32, f"{where}.init_bits must lie in [1, 32]")
    max_iters = fields_.get("max_iters", 1000)
    _need(max_iters >= 0, f"{where}.max_iters must be nonnegative")
    grad_tol = fields_.get("grad_tol", 1e-10)
    newton_iters = fields_.get("newton_max_iters", 50)
    _need(grad_tol > 0 and newton_iters >= 1, f"{where} Newton settings must be positive")
    range_policy = fields_.get("range_policy", "fill")
    _need(range_policy in RANGE_POLICIES, f"{where}.range_policy must be one of {RANGE_POLICIES}")
    overflow = fields_.get("on_bit_overflow", "stop")
    _need(overflow in ("stop", "raise"), f"{where}.on_bit_overflow must be stop or raise")

    has_censor_keys = "tau0" in fields_ or "xi" in fields_
    censor = CensorPolicy(tau0, xi) if variant != GGADMM or has_censor_keys else None
    return RunConfig(
        variant=variant,
        rho=rho,
        max_iters=max_iters,
        censor=censor,
        omega=omega,
        init_bits=init_bits,
        seed=seed,
        solver=NewtonSettings(grad_tol=grad_tol, max_iters=newton_iters),
        stop_gap=stop_gap,
        threads=threads,
        range_policy=range_policy,
        on_bit_overflow=overflow,
    )
