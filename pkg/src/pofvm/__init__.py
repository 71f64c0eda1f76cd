"""Protocol-oblivious forwarding VM with interpreter and compiler engines."""

from .asm import assemble, disassemble, parse
from .codec import decode, encode
from .isa import FieldRef, Imm, InstructionBlock, Program, Space, validate_program
from .perf import ChipModel, CostReport, fit_chip, throughput
from .runtime import InjectionRecord, Mode, SwitchRuntime

__version__ = "0.1.0"

__all__ = [
    "assemble", "disassemble", "parse", "decode", "encode", "FieldRef", "Imm", "InstructionBlock", "Program",
    "Space", "validate_program", "ChipModel", "CostReport", "fit_chip", "throughput", "InjectionRecord", "Mode",
    "SwitchRuntime",
]
