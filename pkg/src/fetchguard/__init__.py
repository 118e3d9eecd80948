"""fetchguard: instruction-fetch integrity checking with check-bit shadow memories.

A checker sits conceptually between a CPU and its instruction memory.  At
installation time it stores, per program word, the Hamming or CRC check
bits of coupled address/instruction chunks; at runtime it recomputes the
check bits of every fetch and raises an alarm on any mismatch.  The
harness measures false-positive and false-negative rates of that scheme
under randomized attack injection.
"""

__version__ = "0.1.0"

from .chunking import ChunkingSpec, Coupling, make_chunks, memory_index
from .codec import (CheckCode, CodeFamily, CodeKind, Correction,
                    CorrectionStatus, HammingLayout, crc_checkbits,
                    hamming_correct, hamming_layout, hamming_parity,
                    hamming_parity_width, hamming_syndrome)
from .errors import (AlignmentError, CollisionError, DataError, FetchGuardError,
                     FormatError, ModeError, ParameterError)
from .harness import (AttackModel, AttackSpec, AttackVariant, ExperimentConfig,
                      ExperimentReport, FetchEvent, FnPrediction, TraceMode,
                      binomial_ci95, emit_report, gen_trace, inject,
                      load_trace_csv, parse_config, predict_fn, run_experiment,
                      save_trace_csv)
from .hsc import (Checker, CheckResult, DepthPolicy, HscConfig, PRESETS,
                  install, resolve_depth)
from .hsm import (HsmSpec, Mode, SecurityModule, UnconfiguredPolicy, Verdict,
                  VerdictReason)
from .riscv import (DecodedInstr, OpClass, ProgramImage, decode, gen_mirrored,
                    gen_overlap, gen_synthetic, image_from_bytes,
                    image_from_hex, load_image, load_image_file, save_image)

__all__ = [name for name in dir() if not name.startswith("_")]
