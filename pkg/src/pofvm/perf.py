"""Throughput/latency projection for a run-to-completion NPU.

Throughput is ``cf / i`` packets per second where ``cf`` is the chip's
aggregate cycle rate (cores x frequency) and ``i`` the micro-instruction
count per packet. Latency in cycles is modelled as ``i + p*s``: every thread
switch ``s`` costs ``p`` cycles of waiting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import PofError

# Basic IPv4 forwarding measurements: (instr count, thread switches, Mpps, latency cycles).
REFERENCE_ROWS: dict[str, tuple[int, int, float, int]] = {
    "non-sdn": (496, 94, 77.5, 4468),
    "interp": (1089, 146, 35.3, 6361),
    "compile": (550, 74, 69.8, 4022),
}


@dataclass(frozen=True)
class CostReport:
    """Micro-instruction count ``i`` and thread-switch count ``s``."""

    i: int = 0
    s: int = 0

    def __add__(self, other: "CostReport") -> "CostReport":
        return CostReport(self.i + other.i, self.s + other.s)

    def __iter__(self):
        yield self.i
        yield self.s


@dataclass(frozen=True)
class ChipModel:
    cf: float  # cores * frequency, cycles/s
    p: float  # cycles per thread switch
    t: int = 1  # hardware threads per core
    overhead: float = 0.0  # fixed latency cycles (affine fit only)

    def __post_init__(self) -> None:
        if self.cf <= 0 or self.p < 0 or self.t <= 0:
            raise PofError("BAD_CHIP", f"non-positive chip constants {self}")

    @classmethod
    def from_cores(cls, cores: int, freq_hz: float, p: float, t: int = 1) -> "ChipModel":
        return cls(cores * freq_hz, p, t)


def throughput(i: float, chip: ChipModel) -> float:
    """Packets per second for ``i`` micro-instructions per packet."""
    if i <= 0:
        raise PofError("ZERO_COST", "instruction count must be positive")
    return chip.cf / i


def latency_time(t: float, rate: float) -> float:
    """``t / R``: seconds per packet with ``t`` threads in flight."""
    if rate <= 0:
        raise PofError("ZERO_THROUGHPUT", "throughput must be positive")
    return t / rate


def latency_cycles(i: float, s: float, p: float, overhead: float = 0.0) -> float:
    return i + p * s + overhead


def project(cost: CostReport, chip: ChipModel) -> tuple[float, float]:
    """(Mpps, latency cycles) for one per-packet cost."""
    return throughput(cost.i, chip) / 1e6, latency_cycles(cost.i, cost.s, chip.p, chip.overhead)


def fit_chip(rows: Iterable[Sequence[float]], affine: bool = False, t: int = 1) -> ChipModel:
    """Fit ``cf`` and ``p`` from measured ``(i, s, R_Mpps, L_cycles)`` rows.

    ``cf`` is the mean of ``i * R``. ``p`` is the least-squares slope of
    ``L - i`` against ``s`` through the origin; with ``affine=True`` an
    intercept is fitted too and returned as ``overhead``.
    """
    rows = [tuple(map(float, r)) for r in rows]
    if len(rows) < 2:
        raise PofError("DEGENERATE", "need at least two rows")
    ss = [r[1] for r in rows]
    if len(set(ss)) == 1:
        raise PofError("DEGENERATE", "all rows have the same thread-switch count")
    cf = sum(r[0] * r[2] * 1e6 for r in rows) / len(rows)
    ys = [r[3] - r[0] for r in rows]
    if affine:
        ms = sum(ss) / len(ss)
        my = sum(ys) / len(ys)
        p = sum((s - ms) * (y - my) for s, y in zip(ss, ys)) / sum((s - ms) ** 2 for s in ss)
        return ChipModel(cf, p, t, my - p * ms)
    p = sum(s * y for s, y in zip(ss, ys)) / sum(s * s for s in ss)
    return ChipModel(cf, p, t)


def default_chip() -> ChipModel:
    return fit_chip(REFERENCE_ROWS.values())


def fit_framework(interp: CostReport, row: str = "interp") -> CostReport:
    """Per-packet receive/parse/transmit cost shared by both modes.

    Calibrated from the interpreter measurement only: whatever the app's
    flow instructions do not account for in that row is charged to the
    framework. The compiler-mode total is then a prediction, not a fit.
    """
    ri = REFERENCE_ROWS[row]
    return CostReport(max(ri[0] - interp.i, 0), max(ri[1] - interp.s, 0))
