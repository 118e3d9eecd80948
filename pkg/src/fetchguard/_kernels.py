"""Batch evaluation kernels: numba-jitted loops with a pure-numpy fallback.

The backend is chosen by the FETCHGUARD_BACKEND environment variable:
"numba", "numpy", or "auto" (default: numba when importable).  Both lanes
implement bit-identical algorithms, draw from the same counter-based
streams, and are cross-checked by the test suite, so experiment results
do not depend on the lane.

A checker is compiled to flat per-bank arrays ("lanes") so the kernels
can stay free of Python objects.  All kernel arithmetic is uint64; mixing
signed and unsigned types would trip numpy's promotion to float.

Per-run draw layout (shared with the scalar reference paths in harness):
  trace stream  = derive(run_seed, TRACE_TAG), counter t = step-t decision
  attack stream = derive(run_seed, ATTACK_TAG), counters 0..2 =
                  injection cycle, first mutation draw, second mutation draw
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .rng import ATTACK_TAG, TRACE_TAG

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# Attack variant codes shared by all lanes.
V_OUT_OF_IMAGE = 0
V_IN_IMAGE_ALIAS = 1
V_RANDOM_WORD = 2
V_OTHER_IMAGE_INSTR = 3
V_SINGLE_BIT_FLIP = 4
V_RANDOM_BYTE = 5

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via FETCHGUARD_BACKEND=numpy
    HAVE_NUMBA = False

_BACKEND = os.environ.get("FETCHGUARD_BACKEND", "auto").strip().lower()
if _BACKEND not in ("auto", "numba", "numpy"):
    raise ParameterError(f"FETCHGUARD_BACKEND must be auto|numba|numpy, got {_BACKEND!r}")


def set_backend(name: str) -> None:
    """Override the lane selection (used by tests and the benchmark)."""
    global _BACKEND
    if name not in ("auto", "numba", "numpy"):
        raise ParameterError(f"backend must be auto|numba|numpy, got {name!r}")
    _BACKEND = name


def backend_name() -> str:
    if _BACKEND == "numba" and not HAVE_NUMBA:
        raise RuntimeError("FETCHGUARD_BACKEND=numba but numba is not installed")
    if _BACKEND == "auto":
        return "numba" if HAVE_NUMBA else "numpy"
    return _BACKEND


def _use_numba() -> bool:
    return backend_name() == "numba"


@dataclass
class CompiledChecker:
    """Flat per-bank view of an installed checker."""

    shift: np.ndarray      # uint64[L]: right-shift selecting the slice
    cmask: np.ndarray      # uint64[L]: slice mask
    concat: np.ndarray     # uint8[L]:  1 = concatenate slices, 0 = XOR
    cw: np.ndarray         # uint64[L]: chunk width (concat shift)
    nbytes: np.ndarray     # int64[L]: table rows used by the codec width
    tables: np.ndarray     # uint64[L, 8, 256]: per-byte check-bit tables
    depth: np.ndarray      # uint64[L]
    validbit: np.ndarray   # uint8[L]
    stored: np.ndarray     # uint64[L, Dmax]
    valid: np.ndarray      # uint8[L, Dmax]
    member_bit: np.ndarray  # uint8[L]: 1 << member index
    n_members: int
    member_labels: tuple
    base: int
    wordmask: int
    word_width: int

    @property
    def lane_args(self) -> tuple:
        return (self.shift, self.cmask, self.concat, self.cw, self.nbytes,
                self.tables, self.depth, self.validbit, self.stored,
                self.valid, self.member_bit)

    @property
    def base_u(self) -> np.uint64:
        return np.uint64(self.base)

    @property
    def wordmask_u(self) -> np.uint64:
        return np.uint64(self.wordmask)


def compile_checker(checker) -> CompiledChecker:
    from .hsm import Mode, UnconfiguredPolicy

    if len(checker.modules) > 8:
        raise ParameterError("batch kernels support at most 8 member modules")
    rows = []
    for mi, module in enumerate(checker.modules):
        if module.mode is not Mode.QUERY:
            raise ParameterError("checker must be fully installed before compiling")
        if module.base != checker.base:
            raise ParameterError("member modules must share one base address")
        spec = module.spec
        ch = spec.chunking
        for i in range(ch.k):
            rows.append((
                (ch.k - 1 - i) * ch.chunk_width,
                (1 << ch.chunk_width) - 1,
                1 if ch.coupling.value == "concat" else 0,
                ch.chunk_width,
                (module.code.data_width + 7) // 8,
                module.code.byte_tables,
                spec.depth,
                1 if spec.unconfigured is UnconfiguredPolicy.VALID_BIT else 0,
                module._banks[i],
                module._written,
                mi,
            ))
    L = len(rows)
    dmax = max(r[6] for r in rows)
    c = CompiledChecker(
        shift=np.array([r[0] for r in rows], dtype=np.uint64),
        cmask=np.array([r[1] for r in rows], dtype=np.uint64),
        concat=np.array([r[2] for r in rows], dtype=np.uint8),
        cw=np.array([r[3] for r in rows], dtype=np.uint64),
        nbytes=np.array([r[4] for r in rows], dtype=np.int64),
        tables=np.zeros((L, 8, 256), dtype=np.uint64),
        depth=np.array([r[6] for r in rows], dtype=np.uint64),
        validbit=np.array([r[7] for r in rows], dtype=np.uint8),
        stored=np.zeros((L, dmax), dtype=np.uint64),
        valid=np.zeros((L, dmax), dtype=np.uint8),
        member_bit=np.array([1 << r[10] for r in rows], dtype=np.uint8),
        n_members=len(checker.modules),
        member_labels=tuple(m.label for m in checker.modules),
        base=checker.base,
        wordmask=checker.modules[0].spec.chunking.word_mask,
        word_width=checker.modules[0].spec.chunking.word_width,
    )
    for l, r in enumerate(rows):
        c.tables[l] = r[5]
        c.stored[l, :r[6]] = r[8]
        c.valid[l, :r[6]] = r[9].astype(np.uint8)
    return c


# ---------------------------------------------------------------------------
# numpy lane
# ---------------------------------------------------------------------------

def _np_mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def _np_draw(seed, counter: int):
    inc = np.uint64(((counter + 1) * _GAMMA) & ((1 << 64) - 1))
    return _np_mix64(seed + inc)


def _np_lane_bad(c: CompiledChecker, l: int, off, a, w):
    idx = (off % c.depth[l]).astype(np.intp)
    asl = (a >> c.shift[l]) & c.cmask[l]
    wsl = (w >> c.shift[l]) & c.cmask[l]
    if c.concat[l]:
        data = (asl << c.cw[l]) | wsl
    else:
        data = asl ^ wsl
    cb = np.zeros_like(data)
    for b in range(int(c.nbytes[l])):
        cb ^= c.tables[l, b][(data & np.uint64(0xFF)).astype(np.intp)]
        data = data >> np.uint64(8)
    bad = c.stored[l][idx] != cb
    if c.validbit[l]:
        bad |= c.valid[l][idx] == 0
    return bad


def _np_query(c: CompiledChecker, a, w):
    off = ((a - c.base_u) & c.wordmask_u) >> np.uint64(2)
    masks = np.zeros(a.shape, dtype=np.uint8)
    for l in range(c.shift.size):
        bad = _np_lane_bad(c, l, off, a, w)
        masks[bad] |= c.member_bit[l]
    return masks


def _np_clean_fixed(c, a, w, runs: int):
    run_block = max(1, (1 << 20) // max(1, a.size))
    fp = 0
    done = 0
    while done < runs:
        r = min(run_block, runs - done)
        aa = np.broadcast_to(a, (r, a.size)).reshape(-1)
        ww = np.broadcast_to(w, (r, w.size)).reshape(-1)
        masks = _np_query(c, aa, ww).reshape(r, a.size)
        fp += int((masks.any(axis=1)).sum())
        done += r
    return fp


def _np_walk_arrays(kind, target, widx, draws):
    nxt = widx + np.uint64(1)
    k = kind[widx.astype(np.intp)]
    tg = target[widx.astype(np.intp)]
    taken = (draws & np.uint64(1)).astype(bool)
    nxt = np.where(k == 3, np.uint64(0), nxt)
    nxt = np.where(k == 2, tg, nxt)
    nxt = np.where((k == 1) & taken, tg, nxt)
    return nxt


def _np_clean_cfg(c, kind, target, words, L: int, seeds):
    I = np.uint64(words.size)
    ts = _np_mix64(seeds ^ np.uint64(TRACE_TAG))
    widx = np.zeros(seeds.size, dtype=np.uint64)
    alarm = np.zeros(seeds.size, dtype=bool)
    for t in range(L):
        addr = c.base_u + np.uint64(4) * widx
        instr = words[widx.astype(np.intp)]
        alarm |= _np_query(c, addr, instr) != 0
        draws = _np_draw(ts, t)
        widx = _np_walk_arrays(kind, target, widx, draws)
        widx = np.where(widx >= I, np.uint64(0), widx)
    return int(alarm.sum())


def _np_mutate(c, variant: int, d1, d2, aa, ww, owi, words):
    """Vectorized single-event mutation; returns mutated (address, instruction)."""
    I = np.uint64(words.size)
    wordmask = c.wordmask_u
    if variant == V_OUT_OF_IMAGE:
        total = np.uint64(1 << (c.word_width - 2))
        base_wi = c.base_u >> np.uint64(2)
        j = d1 % (total - I)
        wi = np.where(j < base_wi, j, j + I)
        aa = (wi << np.uint64(2)) & wordmask
        ww = d2 & wordmask
    elif variant == V_IN_IMAGE_ALIAS:
        in_img = owi < I
        j = d1 % np.maximum(np.where(in_img, I - np.uint64(1), I), np.uint64(1))
        wi = np.where(in_img & (j >= owi), j + np.uint64(1), j)
        aa = c.base_u + (wi << np.uint64(2))
        ww = d2 & wordmask
    elif variant == V_RANDOM_WORD:
        ww = d1 & wordmask
    elif variant == V_OTHER_IMAGE_INSTR:
        in_img = owi < I
        j = d1 % np.maximum(np.where(in_img, I - np.uint64(1), I), np.uint64(1))
        wi = np.where(in_img & (j >= owi), j + np.uint64(1), j)
        ww = words[wi.astype(np.intp)]
    elif variant == V_SINGLE_BIT_FLIP:
        ww = ww ^ (np.uint64(1) << (d1 % np.uint64(c.word_width)))
    elif variant == V_RANDOM_BYTE:
        bidx = (d1 % np.uint64(c.word_width // 8)) * np.uint64(8)
        old = (ww >> bidx) & np.uint64(0xFF)
        nb = d2 % np.uint64(255)
        nb = np.where(nb >= old, nb + np.uint64(1), nb)
        ww = (ww & ~(np.uint64(0xFF) << bidx)) | (nb << bidx)
    else:
        raise ParameterError(f"unknown attack variant code {variant}")
    return aa, ww


def _np_attacked_fixed(c, a, w, widx_ev, words, seeds, variant: int):
    L = np.uint64(a.size)
    ats = _np_mix64(seeds ^ np.uint64(ATTACK_TAG))
    t = (_np_draw(ats, 0) % L).astype(np.intp)
    aa = a[t].copy()
    ww = w[t].copy()
    owi = widx_ev[t]
    aa, ww = _np_mutate(c, variant, _np_draw(ats, 1), _np_draw(ats, 2),
                        aa, ww, owi, words)
    masks = _np_query(c, aa, ww)
    return masks


def _np_attacked_cfg(c, kind, target, words, L: int, seeds, variant: int):
    I = np.uint64(words.size)
    ts = _np_mix64(seeds ^ np.uint64(TRACE_TAG))
    ats = _np_mix64(seeds ^ np.uint64(ATTACK_TAG))
    t = _np_draw(ats, 0) % np.uint64(L)
    widx = np.zeros(seeds.size, dtype=np.uint64)
    owi = np.zeros(seeds.size, dtype=np.uint64)
    tmax = int(t.max()) if seeds.size else 0
    for step in range(tmax + 1):
        hit = t == np.uint64(step)
        if hit.any():
            owi[hit] = widx[hit]
        if step == tmax:
            break
        draws = _np_draw(ts, step)
        widx = _np_walk_arrays(kind, target, widx, draws)
        widx = np.where(widx >= I, np.uint64(0), widx)
    aa = c.base_u + np.uint64(4) * owi
    ww = words[owi.astype(np.intp)]
    aa, ww = _np_mutate(c, variant, _np_draw(ats, 1), _np_draw(ats, 2),
                        aa, ww, owi, words)
    return _np_query(c, aa, ww)


# ---------------------------------------------------------------------------
# numba lane
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    _U = np.uint64

    @njit(inline="always")
    def _nb_mix64(z):
        z = (z ^ (z >> _U(30))) * _U(_MIX1)
        z = (z ^ (z >> _U(27))) * _U(_MIX2)
        return z ^ (z >> _U(31))

    @njit(inline="always")
    def _nb_draw(seed, counter):
        return _nb_mix64(seed + (counter + _U(1)) * _U(_GAMMA))

    @njit(inline="always")
    def _nb_event_mask(shift, cmask, concat, cw, nbytes, tables, depth,
                       validbit, stored, valid, member_bit, base, wordmask,
                       a, w):
        off = ((a - base) & wordmask) >> _U(2)
        m = np.uint8(0)
        for l in range(shift.size):
            idx = off % depth[l]
            asl = (a >> shift[l]) & cmask[l]
            wsl = (w >> shift[l]) & cmask[l]
            if concat[l]:
                data = (asl << cw[l]) | wsl
            else:
                data = asl ^ wsl
            cb = _U(0)
            for b in range(nbytes[l]):
                cb ^= tables[l, b, data & _U(0xFF)]
                data = data >> _U(8)
            bad = stored[l, idx] != cb
            if validbit[l] and valid[l, idx] == 0:
                bad = True
            if bad:
                m |= member_bit[l]
        return m

    @njit(nogil=True, cache=True)
    def _nb_query(shift, cmask, concat, cw, nbytes, tables, depth, validbit,
                  stored, valid, member_bit, base, wordmask, a, w, out):
        for e in range(a.size):
            out[e] = _nb_event_mask(shift, cmask, concat, cw, nbytes, tables,
                                    depth, validbit, stored, valid, member_bit,
                                    base, wordmask, a[e], w[e])

    @njit(nogil=True, cache=True)
    def _nb_clean_fixed(shift, cmask, concat, cw, nbytes, tables, depth,
                        validbit, stored, valid, member_bit, base, wordmask,
                        a, w, runs):
        fp = 0
        for _ in range(runs):
            alarm = False
            for e in range(a.size):
                if _nb_event_mask(shift, cmask, concat, cw, nbytes, tables,
                                  depth, validbit, stored, valid, member_bit,
                                  base, wordmask, a[e], w[e]):
                    alarm = True
                    break
            if alarm:
                fp += 1
        return fp

    @njit(inline="always")
    def _nb_step(kind, target, widx, draw, I):
        k = kind[widx]
        if k == 1:
            nxt = target[widx] if draw & _U(1) else widx + _U(1)
        elif k == 2:
            nxt = target[widx]
        elif k == 3:
            nxt = _U(0)
        else:
            nxt = widx + _U(1)
        if nxt >= I:
            nxt = _U(0)
        return nxt

    @njit(nogil=True, cache=True)
    def _nb_clean_cfg(shift, cmask, concat, cw, nbytes, tables, depth,
                      validbit, stored, valid, member_bit, base, wordmask,
                      kind, target, words, L, seeds):
        fp = 0
        I = _U(words.size)
        for r in range(seeds.size):
            ts = _nb_mix64(seeds[r] ^ _U(TRACE_TAG))
            widx = _U(0)
            alarm = False
            for t in range(L):
                addr = base + _U(4) * widx
                if _nb_event_mask(shift, cmask, concat, cw, nbytes, tables,
                                  depth, validbit, stored, valid, member_bit,
                                  base, wordmask, addr, words[widx]):
                    alarm = True
                    break
                widx = _nb_step(kind, target, widx, _nb_draw(ts, _U(t)), I)
            if alarm:
                fp += 1
        return fp

    @njit(inline="always")
    def _nb_mutate(variant, d1, d2, aa, ww, owi, words, base, wordmask,
                   word_width):
        I = _U(words.size)
        if variant == 0:  # out of image
            total = _U(1) << (word_width - _U(2))
            base_wi = base >> _U(2)
            j = d1 % (total - I)
            wi = j if j < base_wi else j + I
            aa = (wi << _U(2)) & wordmask
            ww = d2 & wordmask
        elif variant == 1:  # in-image alias
            if owi < I:
                j = d1 % (I - _U(1))
                wi = j + _U(1) if j >= owi else j
            else:
                wi = d1 % I
            aa = base + (wi << _U(2))
            ww = d2 & wordmask
        elif variant == 2:  # random word
            ww = d1 & wordmask
        elif variant == 3:  # other image instruction
            if owi < I:
                j = d1 % (I - _U(1))
                wi = j + _U(1) if j >= owi else j
            else:
                wi = d1 % I
            ww = words[wi]
        elif variant == 4:  # single bit flip
            ww = ww ^ (_U(1) << (d1 % word_width))
        else:  # random byte
            bidx = (d1 % (word_width >> _U(3))) * _U(8)
            old = (ww >> bidx) & _U(0xFF)
            nb = d2 % _U(255)
            if nb >= old:
                nb = nb + _U(1)
            ww = (ww & ~(_U(0xFF) << bidx)) | (nb << bidx)
        return aa, ww

    @njit(nogil=True, cache=True)
    def _nb_attacked_fixed(shift, cmask, concat, cw, nbytes, tables, depth,
                           validbit, stored, valid, member_bit, base, wordmask,
                           word_width, a, w, widx_ev, words, seeds, variant,
                           det_members):
        fn = 0
        L = _U(a.size)
        for r in range(seeds.size):
            ats = _nb_mix64(seeds[r] ^ _U(ATTACK_TAG))
            t = _nb_draw(ats, _U(0)) % L
            aa, ww = _nb_mutate(variant, _nb_draw(ats, _U(1)),
                                _nb_draw(ats, _U(2)), a[t], w[t], widx_ev[t],
                                words, base, wordmask, word_width)
            mask = _nb_event_mask(shift, cmask, concat, cw, nbytes, tables,
                                  depth, validbit, stored, valid, member_bit,
                                  base, wordmask, aa, ww)
            if mask == 0:
                fn += 1
            else:
                for m in range(det_members.size):
                    if mask & (1 << m):
                        det_members[m] += 1
        return fn

    @njit(nogil=True, cache=True)
    def _nb_attacked_cfg(shift, cmask, concat, cw, nbytes, tables, depth,
                         validbit, stored, valid, member_bit, base, wordmask,
                         word_width, kind, target, words, L, seeds, variant,
                         det_members):
        fn = 0
        I = _U(words.size)
        for r in range(seeds.size):
            ts = _nb_mix64(seeds[r] ^ _U(TRACE_TAG))
            ats = _nb_mix64(seeds[r] ^ _U(ATTACK_TAG))
            t = _nb_draw(ats, _U(0)) % _U(L)
            widx = _U(0)
            for step in range(np.int64(t)):
                widx = _nb_step(kind, target, widx, _nb_draw(ts, _U(step)), I)
            aa = base + _U(4) * widx
            aa, ww = _nb_mutate(variant, _nb_draw(ats, _U(1)),
                                _nb_draw(ats, _U(2)), aa, words[widx], widx,
                                words, base, wordmask, word_width)
            mask = _nb_event_mask(shift, cmask, concat, cw, nbytes, tables,
                                  depth, validbit, stored, valid, member_bit,
                                  base, wordmask, aa, ww)
            if mask == 0:
                fn += 1
            else:
                for m in range(det_members.size):
                    if mask & (1 << m):
                        det_members[m] += 1
        return fn


# ---------------------------------------------------------------------------
# dispatchers
# ---------------------------------------------------------------------------

def _as_u64(x):
    return np.ascontiguousarray(np.asarray(x, dtype=np.uint64))


def query_members(c: CompiledChecker, addresses, instructions) -> np.ndarray:
    """Per-event bitmask of alarming members."""
    a = _as_u64(addresses)
    w = _as_u64(instructions)
    if a.shape != w.shape:
        raise ParameterError("address and instruction arrays must match in shape")
    if _use_numba():
        out = np.empty(a.size, dtype=np.uint8)
        _nb_query(*c.lane_args, c.base_u, c.wordmask_u, a.ravel(), w.ravel(), out)
        return out.reshape(a.shape)
    return _np_query(c, a, w)


def clean_runs_fixed(c, addresses, instructions, runs: int) -> int:
    """Number of clean replays of a fixed event sequence that raise any alarm."""
    a, w = _as_u64(addresses), _as_u64(instructions)
    if _use_numba():
        return int(_nb_clean_fixed(*c.lane_args, c.base_u, c.wordmask_u,
                                   a, w, runs))
    return _np_clean_fixed(c, a, w, runs)


def clean_runs_cfg(c, kind, target, words, trace_len: int, seeds) -> int:
    seeds = _as_u64(seeds)
    kind = np.ascontiguousarray(np.asarray(kind, dtype=np.uint8))
    if _use_numba():
        return int(_nb_clean_cfg(*c.lane_args, c.base_u, c.wordmask_u,
                                 kind, _as_u64(target), _as_u64(words),
                                 trace_len, seeds))
    return _np_clean_cfg(c, kind, _as_u64(target), _as_u64(words),
                         trace_len, seeds)


def attacked_runs_fixed(c, addresses, instructions, widx_ev, words, seeds,
                        variant: int):
    """(false negatives, per-member detection counts) over one-injection runs."""
    a, w = _as_u64(addresses), _as_u64(instructions)
    seeds = _as_u64(seeds)
    det = np.zeros(c.n_members, dtype=np.int64)
    if _use_numba():
        fn = int(_nb_attacked_fixed(*c.lane_args, c.base_u, c.wordmask_u,
                                    np.uint64(c.word_width), a, w,
                                    _as_u64(widx_ev), _as_u64(words), seeds,
                                    variant, det))
        return fn, det
    masks = _np_attacked_fixed(c, a, w, _as_u64(widx_ev), _as_u64(words),
                               seeds, variant)
    fn = int((masks == 0).sum())
    for m in range(c.n_members):
        det[m] = int(((masks >> m) & 1).sum())
    return fn, det


def attacked_runs_cfg(c, kind, target, words, trace_len: int, seeds,
                      variant: int):
    seeds = _as_u64(seeds)
    kind = np.ascontiguousarray(np.asarray(kind, dtype=np.uint8))
    det = np.zeros(c.n_members, dtype=np.int64)
    if _use_numba():
        fn = int(_nb_attacked_cfg(*c.lane_args, c.base_u, c.wordmask_u,
                                  np.uint64(c.word_width), kind,
                                  _as_u64(target), _as_u64(words), trace_len,
                                  seeds, variant, det))
        return fn, det
    masks = _np_attacked_cfg(c, kind, _as_u64(target), _as_u64(words),
                             trace_len, seeds, variant)
    fn = int((masks == 0).sum())
    for m in range(c.n_members):
        det[m] = int(((masks >> m) & 1).sum())
    return fn, det


def lane_match_rates(c: CompiledChecker, addresses, instructions):
    """Per-bank probability of a stored/recomputed match, plus the joint rate.

    numpy-only estimation helper used by the analytic predictor.
    """
    a, w = _as_u64(addresses), _as_u64(instructions)
    off = ((a - c.base_u) & c.wordmask_u) >> np.uint64(2)
    all_ok = np.ones(a.size, dtype=bool)
    rates = []
    for l in range(c.shift.size):
        bad = _np_lane_bad(c, l, off, a, w)
        rates.append(float(1.0 - bad.mean()))
        all_ok &= ~bad
    return rates, float(all_ok.mean())
