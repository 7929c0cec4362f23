"""Stochastic quantization, censoring and the payload wire format.

A worker quantizes the difference between its model and a reference that
both ends of the link already hold. With range ``R`` and ``b`` bits the
grid step is ``2R / (2^b - 1)``; each coordinate is rounded up or down at
random so that the reconstruction is unbiased.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import (
    BitBudgetExceeded,
    CodeOutOfRange,
    DimensionMismatch,
    InvalidArgument,
    MalformedPayload,
)

MAX_BITS = 32
RANGE_FLOOR = 1e-12
TIGHT = "tight"
FILL = "fill"
RANGE_POLICIES = (TIGHT, FILL)

QUANTIZED_MAGIC = 0x51
FULL_MAGIC = 0x46
WIRE_VERSION = 0x01
_QHEADER = struct.Struct("<BBBIf")
_FHEADER = struct.Struct("<BBI")


def step_size(range_: float, bits: int) -> float:
    return 2.0 * range_ / ((1 << bits) - 1)


@dataclass(frozen=True)
class QuantizerState:
    """Sender-side codec memory.

    ``prev_range``/``prev_bits``/``prev_step`` are ``None`` until the first
    quantization; ``prev_bits`` then holds the configured initial width.
    """

    prev_reconstruction: np.ndarray
    prev_bits: int
    omega: float
    prev_range: float | None = None
    prev_step: float | None = None

    def __post_init__(self):
        if not 0.0 < self.omega < 1.0:
            raise InvalidArgument(f"omega must lie in (0, 1), got {self.omega}")
        if not 1 <= self.prev_bits <= MAX_BITS:
            raise InvalidArgument(f"bits must lie in [1, {MAX_BITS}], got {self.prev_bits}")

    @classmethod
    def initial(cls, dim: int, omega: float, init_bits: int = 2) -> "QuantizerState":
        return cls(np.zeros(dim), init_bits, omega)

    @property
    def started(self) -> bool:
        return self.prev_range is not None


@dataclass(frozen=True)
class QuantizedPayload:
    codes: np.ndarray
    range: float
    bits: int

    def __post_init__(self):
        object.__setattr__(self, "codes", np.asarray(self.codes, dtype=np.uint64).reshape(-1))

    @property
    def dim(self) -> int:
        return self.codes.shape[0]

    @property
    def step(self) -> float:
        return step_size(self.range, self.bits)

    def __eq__(self, other):
        if not isinstance(other, QuantizedPayload):
            return NotImplemented
        return (
            self.bits == other.bits
            and self.range == other.range
            and np.array_equal(self.codes, other.codes)
        )


@dataclass(frozen=True)
class FullPrecisionPayload:
    """Unquantized model, used by the uncompressed variants."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64).reshape(-1))

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, FullPrecisionPayload):
            return NotImplemented
        return np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class CensorPolicy:
    tau0: float = 1.0
    xi: float = 0.97

    def __post_init__(self):
        if not self.tau0 > 0:
            raise InvalidArgument(f"tau0 must be positive, got {self.tau0}")
        if not 0.0 < self.xi < 1.0:
            raise InvalidArgument(f"xi must lie in (0, 1), got {self.xi}")

    def threshold(self, k: int) -> float:
        """Threshold applied when deciding the transmission of iterate ``k + 1``."""
        return self.tau0 * self.xi ** (k + 1)


@dataclass(frozen=True)
class TotalErrorBoundParams:
    c0: float
    psi: float

    @classmethod
    def from_run(cls, tau0: float, xi: float, omega: float, dim: int, first_step: float):
        return cls(max(tau0, math.sqrt(dim) * first_step), max(xi, omega))

    def bound(self, k: int) -> float:
        """Bound on ``||theta^{k+1} - theta_hat^{k+1}||^2``."""
        return 4.0 * self.c0**2 * self.psi ** (2 * k)


def _ceil_to_float32(x: float) -> float:
    r = np.float32(x)
    if float(r) < x:
        r = np.nextafter(r, np.float32(np.inf))
    return float(r)


def _floor_to_float32(x: float) -> float:
    r = np.float32(x)
    if float(r) > x:
        r = np.nextafter(r, np.float32(0.0))
    return float(r)


def _fill_range(state: QuantizerState, tight_range: float, bits: int) -> tuple[float, int]:
    limit = state.omega * state.prev_step
    while True:
        widened = _floor_to_float32(limit * ((1 << bits) - 1) / 2.0)
        range_ = max(widened, tight_range)
        if step_size(range_, bits) <= limit:
            return range_, bits
        bits += 1
        if bits > MAX_BITS:
            raise BitBudgetExceeded("no width keeps the step within omega", required_bits=bits)


def select_bits(state: QuantizerState, new_range: float) -> int:
    """Smallest width keeping the new step within ``omega`` of the old one.

    Before the first quantization the configured initial width is used.

    Raises
    ------
    BitBudgetExceeded
        More than 32 bits would be required.
    """
    if not new_range > 0:
        raise InvalidArgument(f"range must be positive, got {new_range}")
    if not state.started:
        return state.prev_bits
    ratio = ((1 << state.prev_bits) - 1) * new_range / (state.omega * state.prev_range)
    bits = max(1, math.ceil(math.log2(1.0 + ratio)))
    # the closed form can land one short after rounding
    limit = state.omega * state.prev_step
    while bits <= MAX_BITS and step_size(new_range, bits) > limit:
        bits += 1
    if bits > MAX_BITS:
        raise BitBudgetExceeded(
            f"{bits} bits needed to shrink the step by omega={state.omega}", required_bits=bits
        )
    return bits


def quantize(
    theta,
    state: QuantizerState,
    rng,
    *,
    range_override: float | None = None,
    bits_override: int | None = None,
    range_policy: str = FILL,
) -> tuple[QuantizedPayload, np.ndarray, QuantizerState]:
    """Quantize ``theta`` against ``state.prev_reconstruction``.

    ``rng`` is either a numpy ``Generator`` or an array of ``d`` uniforms.
    Returns the payload, its reconstruction, and the advanced state.

    With ``range_policy="tight"`` the range is the largest coordinate
    difference. ``"fill"`` (default) widens it so the step is exactly
    ``omega`` times the previous one at the chosen width; a tight range
    lets the step collapse whenever the difference briefly dips, after
    which the bit width must climb to keep up.
    """
    theta = np.asarray(theta, dtype=np.float64)
    prev = state.prev_reconstruction
    if theta.shape != prev.shape:
        raise DimensionMismatch(f"theta has shape {theta.shape}, state holds {prev.shape}")
    diff = theta - prev

    if range_override is None:
        spread = float(np.max(np.abs(diff))) if diff.size else 0.0
        new_range = _ceil_to_float32(max(spread, RANGE_FLOOR))
        if bits_override is None:
            bits = select_bits(state, new_range)
            if range_policy == FILL and state.started:
                new_range, bits = _fill_range(state, new_range, bits)
        else:
            bits = int(bits_override)
    else:
        new_range = float(range_override)
        bits = select_bits(state, new_range) if bits_override is None else int(bits_override)

    levels = (1 << bits) - 1
    delta = step_size(new_range, bits)
    c = (diff + new_range) / delta
    if isinstance(rng, np.random.Generator):
        u = rng.random(theta.shape[0])
    else:
        u = np.asarray(rng, dtype=np.float64)
    codes = kernels.stochastic_round(c, u, levels)

    payload = QuantizedPayload(codes, new_range, bits)
    recon = reconstruct(payload, prev)
    new_state = replace(
        state,
        prev_reconstruction=recon,
        prev_range=new_range,
        prev_bits=bits,
        prev_step=delta,
    )
    return payload, recon, new_state


def reconstruct(payload: QuantizedPayload, prev_reconstruction) -> np.ndarray:
    prev = np.asarray(prev_reconstruction, dtype=np.float64)
    if prev.shape != (payload.dim,):
        raise DimensionMismatch(f"payload has {payload.dim} codes, reference has {prev.shape}")
    levels = (1 << payload.bits) - 1
    if payload.dim and int(payload.codes.max()) > levels:
        raise CodeOutOfRange(f"code {int(payload.codes.max())} exceeds {levels}")
    return prev + payload.step * payload.codes.astype(np.float64) - payload.range


def payload_bits(payload, b_R: int = 32, b_b: int = 32, word_bits: int = 32) -> int:
    """Accounted payload size; full-precision payloads cost ``word_bits`` per entry."""
    if isinstance(payload, FullPrecisionPayload):
        return word_bits * payload.dim
    if b_R > 32 or b_b > 32:
        raise InvalidArgument("b_R and b_b are at most 32")
    return payload.bits * payload.dim + b_R + b_b


def censor_decide(last_sent, candidate, k: int, policy: CensorPolicy) -> bool:
    """True when the candidate moved at least ``tau0 * xi^(k+1)`` from the last sent value."""
    last_sent = np.asarray(last_sent, dtype=np.float64)
    candidate = np.asarray(candidate, dtype=np.float64)
    if last_sent.shape != candidate.shape:
        raise DimensionMismatch(f"{last_sent.shape} vs {candidate.shape}")
    if k < 0:
        raise InvalidArgument(f"iteration index must be nonnegative, got {k}")
    return bool(np.linalg.norm(candidate - last_sent) >= policy.threshold(k))


def serialize(payload) -> bytes:
    if isinstance(payload, FullPrecisionPayload):
        head = _FHEADER.pack(FULL_MAGIC, WIRE_VERSION, payload.dim)
        return head + payload.values.astype("<f8").tobytes()
    if not 1 <= payload.bits <= MAX_BITS:
        raise MalformedPayload(f"bits {payload.bits} outside [1, {MAX_BITS}]")
    if float(np.float32(payload.range)) != payload.range:
        raise MalformedPayload(f"range {payload.range!r} is not representable in binary32")
    if payload.dim and int(payload.codes.max()) > (1 << payload.bits) - 1:
        raise MalformedPayload("code exceeds the bit width")
    head = _QHEADER.pack(QUANTIZED_MAGIC, WIRE_VERSION, payload.bits, payload.dim, payload.range)
    return head + kernels.pack_codes(payload.codes, payload.bits)


def deserialize(data: bytes):
    data = bytes(data)
    if len(data) < 2:
        raise MalformedPayload("truncated header")
    magic, version = data[0], data[1]
    if version != WIRE_VERSION:
        raise MalformedPayload(f"unsupported version {version}")
    if magic == FULL_MAGIC:
        if len(data) < _FHEADER.size:
            raise MalformedPayload("truncated header")
        _, _, d = _FHEADER.unpack_from(data)
        if len(data) != _FHEADER.size + 8 * d:
            raise MalformedPayload(f"expected {_FHEADER.size + 8 * d} bytes, got {len(data)}")
        return FullPrecisionPayload(np.frombuffer(data, dtype="<f8", offset=_FHEADER.size))
    if magic != QUANTIZED_MAGIC:
        raise MalformedPayload(f"bad magic byte 0x{magic:02x}")
    if len(data) < _QHEADER.size:
        raise MalformedPayload("truncated header")
    _, _, bits, d, range_ = _QHEADER.unpack_from(data)
    if not 1 <= bits <= MAX_BITS:
        raise MalformedPayload(f"bits {bits} outside [1, {MAX_BITS}]")
    if not (math.isfinite(range_) and range_ > 0):
        raise MalformedPayload(f"range {range_} must be finite and positive")
    n_bits = d * bits
    body = data[_QHEADER.size :]
    if len(body) != (n_bits + 7) // 8:
        raise MalformedPayload(f"expected {(n_bits + 7) // 8} code bytes, got {len(body)}")
    if n_bits % 8 and body[-1] >> (n_bits % 8):
        raise MalformedPayload("nonzero padding bits")
    codes = kernels.unpack_codes(body, d, bits)
    return QuantizedPayload(codes, range_, bits)
