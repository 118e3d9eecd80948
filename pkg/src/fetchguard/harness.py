"""Fetch traces, attack injection, Monte Carlo experiments, and reports.

An experiment installs a checker once, replays clean traces to measure
the false-positive rate, and replays attacked traces (exactly one
injected event per run) to measure the false-negative rate.  A clean run
counts as a false positive if any of its events raises an alarm; an
attacked run counts as a false negative if the verdict at the injected
cycle raises none.

Reproducibility contract: run r of the clean phase uses seed base+r, run
r of the attacked phase uses seed base+runs_clean+r.  Each run derives
its trace stream and attack stream from that seed with domain tags, so
reports are bit-identical regardless of worker count or execution lane.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.stats import beta as _beta_dist

from . import _kernels
from .chunking import Coupling
from .errors import FormatError, ParameterError
from .hsc import Checker, DepthPolicy, HscConfig, PRESETS, install, resolve_depth
from .hsm import UnconfiguredPolicy
from .riscv import (OpClass, ProgramImage, decode, gen_mirrored, gen_overlap,
                    gen_synthetic, load_image_file)
from .rng import ATTACK_TAG, MASK64, TRACE_TAG, derive, draw

TRACE_CSV_HEADER = ("cycle", "address", "instruction")


class TraceMode(Enum):
    LINEAR = "linear"
    CFG_WALK = "cfg_walk"
    FILE = "file"


class AttackModel(Enum):
    M1_ADDRESS = "m1_address"
    M2_INSTRUCTION = "m2_instruction"


class AttackVariant(Enum):
    OUT_OF_IMAGE = "out_of_image"
    IN_IMAGE_ALIAS = "in_image_alias"
    RANDOM_WORD = "random_word"
    OTHER_IMAGE_INSTR = "other_image_instr"
    SINGLE_BIT_FLIP = "single_bit_flip"
    RANDOM_BYTE = "random_byte"


_MODEL_VARIANTS = {
    AttackModel.M1_ADDRESS: (AttackVariant.OUT_OF_IMAGE,
                             AttackVariant.IN_IMAGE_ALIAS),
    AttackModel.M2_INSTRUCTION: (AttackVariant.RANDOM_WORD,
                                 AttackVariant.OTHER_IMAGE_INSTR,
                                 AttackVariant.SINGLE_BIT_FLIP,
                                 AttackVariant.RANDOM_BYTE),
}

_VARIANT_CODES = {
    AttackVariant.OUT_OF_IMAGE: _kernels.V_OUT_OF_IMAGE,
    AttackVariant.IN_IMAGE_ALIAS: _kernels.V_IN_IMAGE_ALIAS,
    AttackVariant.RANDOM_WORD: _kernels.V_RANDOM_WORD,
    AttackVariant.OTHER_IMAGE_INSTR: _kernels.V_OTHER_IMAGE_INSTR,
    AttackVariant.SINGLE_BIT_FLIP: _kernels.V_SINGLE_BIT_FLIP,
    AttackVariant.RANDOM_BYTE: _kernels.V_RANDOM_BYTE,
}


@dataclass(frozen=True)
class FetchEvent:
    cycle: int
    address: int
    instruction: int
    tampered: bool = False
    kind: str | None = None


@dataclass(frozen=True)
class AttackSpec:
    model: AttackModel
    variant: AttackVariant
    seed: int = 0

    def __post_init__(self):
        if self.variant not in _MODEL_VARIANTS[self.model]:
            raise ParameterError(
                f"variant {self.variant.name} does not belong to model "
                f"{self.model.name}")

    @property
    def name(self) -> str:
        return f"{self.model.name}/{self.variant.name}"


@dataclass
class ExperimentConfig:
    image: ProgramImage
    preset: str = "PAPER_COMBINED"
    coupling: Coupling = Coupling.XOR
    depth_policy: DepthPolicy = DepthPolicy.EXACT
    unconfigured: UnconfiguredPolicy = UnconfiguredPolicy.ZERO_INIT
    trace_mode: TraceMode = TraceMode.LINEAR
    trace_path: str | None = None
    runs_attacked: int = 10_000
    runs_clean: int = 10_000
    attack: AttackSpec = field(default_factory=lambda: AttackSpec(
        AttackModel.M1_ADDRESS, AttackVariant.OUT_OF_IMAGE))
    seed: int = 0
    trace_len: int | None = None  # None: one pass over the image / the file

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ParameterError(f"unknown preset {self.preset!r}")
        if self.runs_attacked < 0 or self.runs_clean < 0:
            raise ParameterError("run counts must be non-negative")
        if self.trace_mode is TraceMode.FILE and not self.trace_path:
            raise ParameterError("FILE trace mode needs a trace path")


# -- trace generation ------------------------------------------------------

def _walk_tables(image: ProgramImage):
    """Per-word successor metadata: kind (0 fall, 1 branch, 2 jal, 3 redirect)."""
    size = len(image)
    kind = np.zeros(size, dtype=np.uint8)
    target = np.zeros(size, dtype=np.uint64)
    for j, word in enumerate(image.words):
        d = decode(word)
        if d.cls is OpClass.BRANCH:
            t = j + d.imm // 4
            if 0 <= t < size:
                kind[j] = 1
                target[j] = t
            else:
                kind[j] = 3
        elif d.cls is OpClass.JAL:
            t = j + d.imm // 4
            if 0 <= t < size:
                kind[j] = 2
                target[j] = t
            else:
                kind[j] = 3
        elif d.cls in (OpClass.JALR, OpClass.SYSTEM, OpClass.ILLEGAL):
            kind[j] = 3
    return kind, target


def gen_trace(image: ProgramImage, mode: TraceMode, seed: int = 0,
              max_len: int | None = None,
              trace_path: str | None = None) -> list[FetchEvent]:
    """Scalar reference fetch stream; the batch engine reproduces it exactly.

    LINEAR cycles through the image in address order.  CFG_WALK follows
    decoded control flow, taking branches on the low bit of the step's
    draw; jump-register, system, and illegal words redirect to the base.
    The seed is used as the trace stream directly (draw t decides step t).
    """
    if mode is TraceMode.FILE:
        if not trace_path:
            raise ParameterError("FILE trace mode needs a trace path")
        events = load_trace_csv(trace_path)
        return events[:max_len] if max_len is not None else events
    size = len(image)
    length = size if max_len is None else max_len
    if length < 1:
        raise ParameterError("trace length must be >= 1")
    events = []
    if mode is TraceMode.LINEAR:
        for t in range(length):
            j = t % size
            events.append(FetchEvent(t, image.address_of(j), image.words[j]))
        return events
    kind, target = _walk_tables(image)
    widx = 0
    for t in range(length):
        events.append(FetchEvent(t, image.address_of(widx), image.words[widx]))
        d = draw(seed, t)
        k = kind[widx]
        if k == 1:
            widx = int(target[widx]) if d & 1 else widx + 1
        elif k == 2:
            widx = int(target[widx])
        elif k == 3:
            widx = 0
        else:
            widx += 1
        if widx >= size:
            widx = 0
    return events


def load_trace_csv(source: str) -> list[FetchEvent]:
    """Parse a trace file: header cycle,address,instruction, hex 0x fields."""
    if os.path.exists(source):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    else:
        text = source
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows or tuple(h.strip() for h in rows[0]) != TRACE_CSV_HEADER:
        raise FormatError("trace file must start with header "
                          "'cycle,address,instruction'", line=1)
    events = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise FormatError(f"expected 3 fields, got {len(row)}", line=lineno)
        try:
            cycle = int(row[0].strip())
            address = int(row[1].strip(), 16)
            instruction = int(row[2].strip(), 16)
            if not (row[1].strip().lower().startswith("0x")
                    and row[2].strip().lower().startswith("0x")):
                raise ValueError("hex fields must be 0x-prefixed")
        except ValueError as exc:
            raise FormatError(f"bad trace row: {exc}", line=lineno) from None
        events.append(FetchEvent(cycle, address, instruction))
    if not events:
        raise FormatError("trace file has no events", line=2)
    return events


def save_trace_csv(events, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_CSV_HEADER)
        for e in events:
            writer.writerow([e.cycle, f"0x{e.address:08x}", f"0x{e.instruction:08x}"])


# -- attack injection ------------------------------------------------------

def inject(trace: list[FetchEvent], spec: AttackSpec,
           image: ProgramImage) -> tuple[list[FetchEvent], int]:
    """Mutate exactly one event of a trace; returns (new trace, cycle index).

    spec.seed is the attack stream: draw 0 picks the injection cycle
    (uniform over the trace), draws 1-2 feed the variant's mutation.
    """
    if not trace:
        raise ParameterError("cannot inject into an empty trace")
    size = len(image)
    if (spec.variant in (AttackVariant.IN_IMAGE_ALIAS,
                         AttackVariant.OTHER_IMAGE_INSTR) and size < 2):
        raise ParameterError(f"{spec.variant.name} needs an image with >= 2 words")
    t = draw(spec.seed, 0) % len(trace)
    event = trace[t]
    d1 = draw(spec.seed, 1)
    d2 = draw(spec.seed, 2)
    address, instruction = event.address, event.instruction
    wordmask = 0xFFFFFFFF
    try:
        owi = image.word_index(address)
    except ParameterError:
        owi = size  # out-of-image sentinel; only FILE traces can produce it
    if spec.variant is AttackVariant.OUT_OF_IMAGE:
        total = 1 << 30
        base_wi = image.base >> 2
        j = d1 % (total - size)
        wi = j if j < base_wi else j + size
        address = (wi << 2) & wordmask
        instruction = d2 & wordmask
    elif spec.variant is AttackVariant.IN_IMAGE_ALIAS:
        if owi < size:
            j = d1 % (size - 1)
            wi = j + 1 if j >= owi else j
        else:
            wi = d1 % size
        address = image.address_of(wi)
        instruction = d2 & wordmask
    elif spec.variant is AttackVariant.RANDOM_WORD:
        instruction = d1 & wordmask
    elif spec.variant is AttackVariant.OTHER_IMAGE_INSTR:
        if owi < size:
            j = d1 % (size - 1)
            wi = j + 1 if j >= owi else j
        else:
            wi = d1 % size
        instruction = image.words[wi]
    elif spec.variant is AttackVariant.SINGLE_BIT_FLIP:
        instruction = instruction ^ (1 << (d1 % 32))
    else:  # RANDOM_BYTE
        bidx = 8 * (d1 % 4)
        old = (instruction >> bidx) & 0xFF
        nb = d2 % 255
        if nb >= old:
            nb += 1
        instruction = (instruction & ~(0xFF << bidx)) | (nb << bidx)
    mutated = FetchEvent(event.cycle, address, instruction, True, spec.name)
    out = list(trace)
    out[t] = mutated
    return out, t


# -- statistics ------------------------------------------------------------

def binomial_ci95(count: int, trials: int) -> tuple[float, float]:
    """95% interval for a binomial rate.

    Normal approximation, switching to exact Clopper-Pearson when either
    tail has fewer than 5 events.
    """
    if trials <= 0:
        return (0.0, 0.0)
    p = count / trials
    if count >= 5 and trials - count >= 5:
        half = 1.96 * (p * (1.0 - p) / trials) ** 0.5
        return (max(0.0, p - half), min(1.0, p + half))
    lo = 0.0 if count == 0 else float(_beta_dist.ppf(0.025, count, trials - count + 1))
    hi = 1.0 if count == trials else float(_beta_dist.ppf(0.975, count + 1,
                                                          trials - count))
    return (lo, hi)


# -- the experiment engine -------------------------------------------------

@dataclass(frozen=True)
class ExperimentReport:
    benchmark: str
    preset: str
    model: str
    variant: str
    runs_clean: int
    runs_attacked: int
    fp_count: int
    fn_count: int
    fp_rate: float
    fn_rate: float
    fp_ci95: tuple[float, float]
    fn_ci95: tuple[float, float]
    member_labels: tuple[str, ...]
    member_detections: tuple[int, ...]
    config_echo: dict

    def to_row(self) -> dict:
        row = {
            "benchmark": self.benchmark,
            "preset": self.preset,
            "model": self.model,
            "variant": self.variant,
            "runs_clean": self.runs_clean,
            "runs_attacked": self.runs_attacked,
            "fp_count": self.fp_count,
            "fn_count": self.fn_count,
            "fp_percent": f"{100.0 * self.fp_rate:.3f}",
            "fn_percent": f"{100.0 * self.fn_rate:.3f}",
            "fn_ci95_low": f"{100.0 * self.fn_ci95[0]:.3f}",
            "fn_ci95_high": f"{100.0 * self.fn_ci95[1]:.3f}",
            "member_detections": ";".join(
                f"{label}:{n}" for label, n in zip(self.member_labels,
                                                   self.member_detections)),
        }
        row.update(self.config_echo)
        return row


CSV_COLUMNS = (
    "benchmark", "preset", "model", "variant", "runs_clean", "runs_attacked",
    "fp_count", "fn_count", "fp_percent", "fn_percent", "fn_ci95_low",
    "fn_ci95_high", "member_detections", "image_size", "image_base",
    "coupling", "depth_policy", "unconfigured_policy", "trace_mode",
    "trace_len", "seed", "codecs",
)


def _blocks(count: int, block: int):
    start = 0
    while start < count:
        yield start, min(block, count - start)
        start += min(block, count - start)


def _run_blocks(jobs, workers: int):
    """Execute callables and sum their result tuples in submission order."""
    if workers <= 1:
        results = [job() for job in jobs]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            results = [f.result() for f in [pool.submit(job) for job in jobs]]
    return results


def build_checker(config: ExperimentConfig) -> Checker:
    depth = resolve_depth(len(config.image), config.depth_policy)
    hsc_config = HscConfig.from_preset(config.preset, depth,
                                       config.unconfigured, config.coupling)
    return install(config.image, hsc_config)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Monte Carlo FP/FN measurement; deterministic in (config, seed)."""
    image = config.image
    size = len(image)
    checker = build_checker(config)
    compiled = checker.compiled()
    base_seed = config.seed & MASK64
    variant_code = _VARIANT_CODES[config.attack.variant]
    if (config.attack.variant in (AttackVariant.IN_IMAGE_ALIAS,
                                  AttackVariant.OTHER_IMAGE_INSTR) and size < 2):
        raise ParameterError(
            f"{config.attack.variant.name} needs an image with >= 2 words")

    if config.trace_mode is TraceMode.FILE:
        events = load_trace_csv(config.trace_path)
        if config.trace_len is not None:
            events = events[:config.trace_len]
        addrs = np.array([e.address for e in events], dtype=np.uint64)
        instrs = np.array([e.instruction for e in events], dtype=np.uint64)
        trace_len = len(events)
    else:
        trace_len = config.trace_len if config.trace_len is not None else size
        if trace_len < 1:
            raise ParameterError("trace length must be >= 1")
    if config.trace_mode is TraceMode.LINEAR:
        widx = np.arange(trace_len, dtype=np.uint64) % np.uint64(size)
        addrs = np.uint64(image.base) + np.uint64(4) * widx
        instrs = image.words_u64[widx.astype(np.intp)]
    elif config.trace_mode is TraceMode.FILE:
        off = ((addrs - np.uint64(image.base)) & np.uint64(MASK64 >> 32)) >> np.uint64(2)
        widx = np.where(off < np.uint64(size), off,
                        np.uint64(size)).astype(np.uint64)
    else:
        walk_kind, walk_target = _walk_tables(image)

    run_block = 4096

    clean_jobs = []
    for start, count in _blocks(config.runs_clean, run_block):
        if config.trace_mode is TraceMode.CFG_WALK:
            seeds = (base_seed + np.arange(start, start + count,
                                           dtype=np.uint64)) & np.uint64(MASK64)
            clean_jobs.append(
                lambda s=seeds: (_kernels.clean_runs_cfg(
                    compiled, walk_kind, walk_target, image.words_u64,
                    trace_len, s),))
        else:
            clean_jobs.append(
                lambda n=count: (_kernels.clean_runs_fixed(
                    compiled, addrs, instrs, n),))
    fp_count = sum(r[0] for r in _run_blocks(clean_jobs, workers))

    attacked_jobs = []
    for start, count in _blocks(config.runs_attacked, run_block):
        lo = config.runs_clean + start
        seeds = (base_seed + np.arange(lo, lo + count,
                                       dtype=np.uint64)) & np.uint64(MASK64)
        if config.trace_mode is TraceMode.CFG_WALK:
            attacked_jobs.append(
                lambda s=seeds: _kernels.attacked_runs_cfg(
                    compiled, walk_kind, walk_target, image.words_u64,
                    trace_len, s, variant_code))
        else:
            attacked_jobs.append(
                lambda s=seeds: _kernels.attacked_runs_fixed(
                    compiled, addrs, instrs, widx, image.words_u64, s,
                    variant_code))
    fn_count = 0
    det = np.zeros(compiled.n_members, dtype=np.int64)
    for result in _run_blocks(attacked_jobs, workers):
        fn_count += result[0]
        det += result[1]

    fp_rate = fp_count / config.runs_clean if config.runs_clean else 0.0
    fn_rate = fn_count / config.runs_attacked if config.runs_attacked else 0.0
    echo = {
        "image_size": size,
        "image_base": f"0x{image.base:08x}",
        "coupling": config.coupling.value,
        "depth_policy": config.depth_policy.value,
        "unconfigured_policy": config.unconfigured.value,
        "trace_mode": config.trace_mode.value,
        "trace_len": trace_len,
        "seed": config.seed,
        "codecs": "|".join(m.code.provenance for m in checker.modules),
    }
    return ExperimentReport(
        benchmark=image.name,
        preset=config.preset,
        model=config.attack.model.name,
        variant=config.attack.variant.name,
        runs_clean=config.runs_clean,
        runs_attacked=config.runs_attacked,
        fp_count=fp_count,
        fn_count=fn_count,
        fp_rate=fp_rate,
        fn_rate=fn_rate,
        fp_ci95=binomial_ci95(fp_count, config.runs_clean),
        fn_ci95=binomial_ci95(fn_count, config.runs_attacked),
        member_labels=compiled.member_labels,
        member_detections=tuple(int(x) for x in det),
        config_echo=echo,
    )


# -- analytic false-negative prediction ------------------------------------

@dataclass(frozen=True)
class FnPrediction:
    per_bank_match: tuple[float, ...]
    independence_product: float
    joint_rate: float
    uniform_baseline: float
    samples: int

    def summary(self) -> str:
        banks = ", ".join(f"{r:.5f}" for r in self.per_bank_match)
        return (f"per-bank match rates: [{banks}]\n"
                f"independence product: {self.independence_product:.3e}\n"
                f"joint empirical rate: {self.joint_rate:.3e}\n"
                f"uniform-model baseline 2^-sum(p): {self.uniform_baseline:.3e}\n"
                f"samples: {self.samples}")


def predict_fn(image: ProgramImage, config: ExperimentConfig,
               samples: int = 100_000, seed: int = 0x5EED) -> FnPrediction:
    """Empirical per-bank aliasing estimate for the configured attack.

    Samples attacker draws against the installed checker, reports the
    per-bank probability that recomputed check bits match the stored
    entry at the aliased index, the product of those rates (independence
    assumption), the joint empirical rate, and the uniform-content
    baseline 2**-sum(p).
    """
    if samples < 1:
        raise ParameterError("sample count must be >= 1")
    cfg = ExperimentConfig(
        image=image, preset=config.preset, coupling=config.coupling,
        depth_policy=config.depth_policy, unconfigured=config.unconfigured,
        trace_mode=TraceMode.LINEAR, runs_attacked=0, runs_clean=0,
        attack=config.attack, seed=seed, trace_len=config.trace_len)
    checker = build_checker(cfg)
    compiled = checker.compiled()
    size = len(image)
    trace_len = cfg.trace_len if cfg.trace_len is not None else size
    widx = np.arange(trace_len, dtype=np.uint64) % np.uint64(size)
    addrs = np.uint64(image.base) + np.uint64(4) * widx
    instrs = image.words_u64[widx.astype(np.intp)]
    seeds = (np.uint64(seed & MASK64)
             + np.arange(samples, dtype=np.uint64)) & np.uint64(MASK64)
    # Draw the attacked events exactly as the experiment engine would.
    ats = _kernels._np_mix64(seeds ^ np.uint64(ATTACK_TAG))
    t = (_kernels._np_draw(ats, 0) % np.uint64(trace_len)).astype(np.intp)
    aa, ww = _kernels._np_mutate(compiled,
                                 _VARIANT_CODES[config.attack.variant],
                                 _kernels._np_draw(ats, 1),
                                 _kernels._np_draw(ats, 2),
                                 addrs[t].copy(), instrs[t].copy(), widx[t],
                                 image.words_u64)
    rates, joint = _kernels.lane_match_rates(compiled, aa, ww)
    product = float(np.prod(rates))
    total_p = sum(m.code.check_width * m.spec.chunking.k
                  for m in checker.modules)
    return FnPrediction(tuple(rates), product, joint, 2.0 ** -total_p, samples)


# -- report rendering ------------------------------------------------------

def emit_report(reports, fmt: str = "markdown") -> str:
    """Render reports as CSV (one row per report) or a Markdown table."""
    if isinstance(reports, ExperimentReport):
        reports = [reports]
    fmt = fmt.lower()
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for report in reports:
            writer.writerow(report.to_row())
        return buf.getvalue()
    if fmt != "markdown":
        raise ParameterError(f"unknown report format {fmt!r}")
    lines = ["| Benchmark | FP | FN | CI95 | Preset | Model |",
             "|---|---|---|---|---|---|"]
    for r in reports:
        ci = f"[{100.0 * r.fn_ci95[0]:.3f}%, {100.0 * r.fn_ci95[1]:.3f}%]"
        lines.append(
            f"| {r.benchmark} | {100.0 * r.fp_rate:.3f}% "
            f"| {100.0 * r.fn_rate:.3f}% | {ci} | {r.preset} "
            f"| {r.model}/{r.variant} |")
    if reports:
        echo = reports[0].config_echo
        lines.append("")
        lines.append(f"codecs: {echo['codecs']}")
        lines.append(
            f"policies: coupling={echo['coupling']}, depth={echo['depth_policy']}, "
            f"unconfigured={echo['unconfigured_policy']}, seed={echo['seed']}")
    return "\n".join(lines) + "\n"


# -- experiment config files -----------------------------------------------

_CONFIG_KEYS = ("image", "base", "preset", "coupling", "depth_policy",
                "unconfigured_policy", "trace_mode", "runs_attacked",
                "runs_clean", "attack_model", "attack_variant", "seed")


def _image_from_token(token: str, base: int, base_dir: str) -> ProgramImage:
    makers = {"synth": gen_synthetic, "mirror": gen_mirrored,
              "overlap": gen_overlap}
    head = token.split(":", 1)[0]
    if head in makers:
        parts = token.split(":")
        size = int(parts[1])
        gen_seed = int(parts[2], 0) if len(parts) > 2 else 1
        return makers[head](size, gen_seed, base=base)
    path = token if os.path.isabs(token) else os.path.join(base_dir, token)
    return load_image_file(path, base=base)


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    """Parse the flat key=value experiment format.

    Keys: image, base, preset, coupling, depth_policy, unconfigured_policy,
    trace_mode, runs_attacked, runs_clean, attack_model, attack_variant,
    seed.  The image value is a file path or synth:SIZE[:GENSEED] /
    overlap:SIZE[:GENSEED] / mirror:SIZE[:GENSEED]; a FILE trace mode
    value carries its path as FILE:path.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"expected key=value, got {line!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise FormatError(f"unknown config key {key!r}", line=lineno)
        if key in values:
            raise FormatError(f"duplicate config key {key!r}", line=lineno)
        values[key] = value
    if "image" not in values:
        raise FormatError("config is missing the image key", line=1)
    base = int(values.get("base", "0"), 0)
    image = _image_from_token(values["image"], base, base_dir)
    trace_mode_raw = values.get("trace_mode", "LINEAR")
    trace_path = None
    if trace_mode_raw.upper().startswith("FILE:"):
        trace_mode = TraceMode.FILE
        trace_path = trace_mode_raw[5:]
        if not os.path.isabs(trace_path):
            trace_path = os.path.join(base_dir, trace_path)
    else:
        trace_mode = TraceMode[trace_mode_raw.upper()]
    model = AttackModel[values.get("attack_model", "M1_ADDRESS").upper()]
    variant = AttackVariant[values.get("attack_variant", "OUT_OF_IMAGE").upper()]
    return ExperimentConfig(
        image=image,
        preset=values.get("preset", "PAPER_COMBINED"),
        coupling=Coupling[values.get("coupling", "XOR").upper()],
        depth_policy=DepthPolicy[values.get("depth_policy", "EXACT").upper()],
        unconfigured=UnconfiguredPolicy[
            values.get("unconfigured_policy", "ZERO_INIT").upper()],
        trace_mode=trace_mode,
        trace_path=trace_path,
        runs_attacked=int(values.get("runs_attacked", "10000")),
        runs_clean=int(values.get("runs_clean", "10000")),
        attack=AttackSpec(model, variant),
        seed=int(values.get("seed", "0"), 0),
    )
