"""Command-line front end.

Exit code contract: 0 means success (and no alarm for run/attack), 2
means an alarm was raised, 1 means a usage or data error.  Results go to
stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from ._kernels import backend_name
from .chunking import Coupling
from .codec import CRC8_POLY, CRC16_POLY, CRC32_POLY
from .errors import FetchGuardError
from .harness import (AttackModel, AttackSpec, AttackVariant, ExperimentConfig,
                      TraceMode, emit_report, gen_trace, inject, parse_config,
                      predict_fn, run_experiment, build_checker)
from .hsc import Checker, DepthPolicy, HscConfig, PRESETS, install, resolve_depth
from .hsm import UnconfiguredPolicy
from .riscv import (gen_mirrored, gen_overlap, gen_synthetic,
                    load_image_file, save_image)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ALARM = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for alarms here.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self._usage_exit(message))

    def _usage_exit(self, message):
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return EXIT_USAGE


def _version_text() -> str:
    return "\n".join([
        f"fetchguard {__version__}",
        f"backend: {backend_name()}",
        "hamming construction: pow2-positions/lsb-data",
        f"crc polynomials: crc8={CRC8_POLY:#x} crc16={CRC16_POLY:#x} "
        f"crc32={CRC32_POLY:#x} (init=0, no reflection, no final xor)",
    ])


def _build_parser() -> _Parser:
    parser = _Parser(prog="fetchguard",
                     description="ECC shadow-memory checker for instruction "
                                 "fetch streams")
    parser.add_argument("--version", action="version", version=_version_text())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic program image")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=lambda s: int(s, 0), default=1)
    p.add_argument("--base", type=lambda s: int(s, 0), default=0)
    p.add_argument("--profile", choices=["default", "overlap", "mirror"],
                   default="default")
    p.add_argument("--out", required=True, help=".hex or .bin path")

    p = sub.add_parser("install", help="install an image into a checker snapshot")
    p.add_argument("--image", required=True)
    p.add_argument("--preset", choices=sorted(PRESETS), default="PAPER_COMBINED")
    p.add_argument("--coupling", choices=["XOR", "CONCAT"], default="XOR")
    p.add_argument("--depth-policy", choices=["EXACT", "POW2"], default="EXACT")
    p.add_argument("--unconfigured", choices=["ZERO_INIT", "VALID_BIT"],
                   default="ZERO_INIT")
    p.add_argument("--out", required=True, help="snapshot path")

    p = sub.add_parser("run", help="replay a trace against a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--trace", help="trace CSV (cycle,address,instruction)")
    p.add_argument("--image", help="image for generated traces")
    p.add_argument("--mode", choices=["LINEAR", "CFG_WALK"], default="LINEAR")
    p.add_argument("--seed", type=lambda s: int(s, 0), default=0)
    p.add_argument("--max-len", type=int, default=None)

    p = sub.add_parser("attack", help="single run with one injected event")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--model", choices=[m.name for m in AttackModel],
                   required=True)
    p.add_argument("--variant", choices=[v.name for v in AttackVariant],
                   required=True)
    p.add_argument("--mode", choices=["LINEAR", "CFG_WALK"], default="LINEAR")
    p.add_argument("--seed", type=lambda s: int(s, 0), default=0)
    p.add_argument("--max-len", type=int, default=None)

    p = sub.add_parser("experiment", help="run a Monte Carlo FP/FN experiment")
    p.add_argument("--config", required=True, help="key=value experiment file")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-csv")
    p.add_argument("--out-md")

    p = sub.add_parser("predict", help="estimate the aliasing FN rate")
    p.add_argument("--image", required=True)
    p.add_argument("--preset", choices=sorted(PRESETS), default="PAPER_COMBINED")
    p.add_argument("--model", choices=[m.name for m in AttackModel],
                   default="M1_ADDRESS")
    p.add_argument("--variant", choices=[v.name for v in AttackVariant],
                   default="IN_IMAGE_ALIAS")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=lambda s: int(s, 0), default=0x5EED)

    p = sub.add_parser("estimate", help="shadow-memory storage bits of a preset")
    p.add_argument("--preset", choices=sorted(PRESETS), required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--depth-policy", choices=["EXACT", "POW2"], default="EXACT")
    p.add_argument("--unconfigured", choices=["ZERO_INIT", "VALID_BIT"],
                   default="ZERO_INIT")
    return parser


def _cmd_gen(args) -> int:
    makers = {"default": gen_synthetic, "overlap": gen_overlap,
              "mirror": gen_mirrored}
    image = makers[args.profile](args.size, args.seed, base=args.base)
    save_image(image, args.out)
    print(f"wrote {args.out}: {len(image)} words, base 0x{image.base:08x}, "
          f"name {image.name}")
    return EXIT_OK


def _cmd_install(args) -> int:
    image = load_image_file(args.image)
    depth = resolve_depth(len(image), DepthPolicy[args.depth_policy])
    config = HscConfig.from_preset(args.preset, depth,
                                   UnconfiguredPolicy[args.unconfigured],
                                   Coupling[args.coupling])
    checker = install(image, config)
    checker.save(args.out)
    print(f"installed {image.name} ({len(image)} words) into {args.preset}; "
          f"depth {depth}, {checker.storage_bits()} storage bits -> {args.out}")
    return EXIT_OK


def _load_run_trace(args):
    if args.trace:
        return gen_trace(None, TraceMode.FILE, trace_path=args.trace,
                         max_len=args.max_len)
    if not args.image:
        raise FetchGuardError("run needs --trace or --image")
    image = load_image_file(args.image)
    return gen_trace(image, TraceMode[args.mode], args.seed, args.max_len)


def _cmd_run(args) -> int:
    checker = Checker.load(args.snapshot)
    events = _load_run_trace(args)
    addresses = [e.address for e in events]
    instructions = [e.instruction for e in events]
    masks = checker.check_batch(addresses, instructions)
    alarms = int((masks != 0).sum())
    first = int(masks.nonzero()[0][0]) if alarms else -1
    print(f"events={len(events)} alarms={alarms} first_alarm_cycle={first}")
    return EXIT_ALARM if alarms else EXIT_OK


def _cmd_attack(args) -> int:
    checker = Checker.load(args.snapshot)
    image = load_image_file(args.image)
    spec = AttackSpec(AttackModel[args.model], AttackVariant[args.variant],
                      seed=args.seed)
    trace = gen_trace(image, TraceMode[args.mode], args.seed, args.max_len)
    mutated, cycle = inject(trace, spec, image)
    event = mutated[cycle]
    result = checker.check(event)
    members = ",".join(
        label for label, verdict in zip(
            (m.label for m in checker.modules), result.member_verdicts)
        if verdict.alarm) or "-"
    print(f"attack={spec.name} cycle={cycle} "
          f"address=0x{event.address:08x} instruction=0x{event.instruction:08x} "
          f"detected={result.alarm} members={members}")
    return EXIT_ALARM if result.alarm else EXIT_OK


def _cmd_experiment(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        text = fh.read()
    config = parse_config(text, base_dir=os.path.dirname(os.path.abspath(args.config)))
    report = run_experiment(config, workers=args.workers)
    if args.out_csv:
        with open(args.out_csv, "w", encoding="utf-8") as fh:
            fh.write(emit_report(report, "csv"))
    if args.out_md:
        with open(args.out_md, "w", encoding="utf-8") as fh:
            fh.write(emit_report(report, "markdown"))
    print(emit_report(report, "markdown"), end="")
    return EXIT_OK


def _cmd_predict(args) -> int:
    image = load_image_file(args.image)
    config = ExperimentConfig(
        image=image, preset=args.preset, runs_clean=0, runs_attacked=0,
        attack=AttackSpec(AttackModel[args.model], AttackVariant[args.variant]))
    prediction = predict_fn(image, config, samples=args.samples, seed=args.seed)
    print(prediction.summary())
    return EXIT_OK


def _cmd_estimate(args) -> int:
    depth = resolve_depth(args.size, DepthPolicy[args.depth_policy])
    hsc_config = HscConfig.from_preset(args.preset, depth,
                                       UnconfiguredPolicy[args.unconfigured])
    total = 0
    for spec in hsc_config.members:
        per_entry = spec.entry_bits
        if spec.unconfigured is UnconfiguredPolicy.VALID_BIT:
            per_entry += 1
        bits = spec.chunking.k * spec.depth * per_entry
        total += bits
        print(f"{spec.label}: k={spec.chunking.k} depth={spec.depth} "
              f"entry_bits={per_entry} -> {bits} bits", file=sys.stderr)
    print(total)
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "install": _cmd_install,
    "run": _cmd_run,
    "attack": _cmd_attack,
    "experiment": _cmd_experiment,
    "predict": _cmd_predict,
    "estimate": _cmd_estimate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except FetchGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
