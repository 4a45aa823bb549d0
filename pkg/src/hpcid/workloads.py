"""Built-in measurement targets and the dynamic-library symbol invoker.

The built-in suite provides idempotent functions spanning classic
benchmarking kernels and reference cryptographic primitives. Inputs are
derived deterministically from an instance seed, so repeated invocation
with the same (spec, instance_seed) performs the same computation; the
completion token returned by :func:`invoke` digests the output bytes and
makes that property checkable.
"""

import configparser
import ctypes
import hashlib
import math
import random
from dataclasses import dataclass

from . import refcrypto
from .errors import ConfigError, InvocationFailedError, SymbolNotFoundError

DEFAULT_LEN_RANGE = (8, 4096)

SIGNATURES = ("buf_len", "void", "u64")


@dataclass(frozen=True)
class WorkloadSpec:
    """One measurement target; ``id`` doubles as the class label."""

    id: int
    name: str
    kind: str = "builtin"  # builtin | dynamic_symbol
    input_policy: str = "random_length"  # fixed | random_length
    input_len_range: tuple = DEFAULT_LEN_RANGE
    seed: int = 0
    tag: str = ""  # per-workload provenance tag; empty inherits the plan tag
    library: str = ""  # dynamic_symbol only
    symbol: str = ""
    signature: str = "buf_len"

    def __post_init__(self):
        if self.kind not in ("builtin", "dynamic_symbol"):
            raise ConfigError(f"unknown workload kind {self.kind!r}")
        if self.input_policy not in ("fixed", "random_length"):
            raise ConfigError(f"unknown input policy {self.input_policy!r}")
        lo, hi = self.input_len_range
        if not (0 < lo <= hi):
            raise ConfigError(f"bad input length range {self.input_len_range}")
        if self.signature not in SIGNATURES:
            raise ConfigError(f"unknown signature {self.signature!r}")


# ---------------------------------------------------------------------------
# Built-in target functions. Each takes (data, rng) and returns output bytes;
# rng supplies per-instance key material where the target needs any.


def _quicksort(data, rng):
    values = list(data)
    # Hoare partition, recursing on the smaller side to bound stack depth.
    def sort(lo, hi):
        while lo < hi:
            pivot = values[(lo + hi) // 2]
            i, j = lo - 1, hi + 1
            while True:
                i += 1
                while values[i] < pivot:
                    i += 1
                j -= 1
                while values[j] > pivot:
                    j -= 1
                if i >= j:
                    break
                values[i], values[j] = values[j], values[i]
            if j - lo < hi - j:
                sort(lo, j)
                lo = j + 1
            else:
                sort(j + 1, hi)
                hi = j
    sort(0, len(values) - 1)
    return bytes(values)


def _matrix_multiply(data, rng):
    n = max(4, min(20, int(math.isqrt(len(data)))))
    need = 2 * n * n
    src = (data * (need // len(data) + 1))[:need]
    a = [list(src[r * n:(r + 1) * n]) for r in range(n)]
    b = [list(src[n * n + r * n:n * n + (r + 1) * n]) for r in range(n)]
    out = bytearray()
    for i in range(n):
        for j in range(n):
            acc = 0
            for k in range(n):
                acc += a[i][k] * b[k][j]
            out += (acc & 0xFFFFFFFF).to_bytes(4, "little")
    return bytes(out)


def crc32(data: bytes) -> int:
    """Bitwise reflected CRC-32 (IEEE polynomial)."""
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ (0xEDB88320 if crc & 1 else 0)
    return crc ^ 0xFFFFFFFF


def _crc32(data, rng):
    return crc32(data).to_bytes(4, "big")


def _fibonacci(data, rng):
    n = 64 + len(data) % 512
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a.to_bytes((a.bit_length() + 7) // 8 or 1, "big")


def _fft(data, rng):
    n = 1 << max(3, (len(data) - 1).bit_length())
    re = [float(data[i % len(data)]) for i in range(n)]
    im = [0.0] * n
    # bit-reversal permutation
    j = 0
    for i in range(1, n):
        bit = n >> 1
        while j & bit:
            j ^= bit
            bit >>= 1
        j |= bit
        if i < j:
            re[i], re[j] = re[j], re[i]
            im[i], im[j] = im[j], im[i]
    length = 2
    while length <= n:
        ang = -2.0 * math.pi / length
        wr, wi = math.cos(ang), math.sin(ang)
        for start in range(0, n, length):
            cr, ci = 1.0, 0.0
            half = length // 2
            for k in range(start, start + half):
                ur, ui = re[k], im[k]
                vr = re[k + half] * cr - im[k + half] * ci
                vi = re[k + half] * ci + im[k + half] * cr
                re[k], im[k] = ur + vr, ui + vi
                re[k + half], im[k + half] = ur - vr, ui - vi
                cr, ci = cr * wr - ci * wi, cr * wi + ci * wr
        length <<= 1
    out = bytearray()
    for r, i in zip(re, im):
        out += int(round(r)).to_bytes(8, "little", signed=True)
        out += int(round(i)).to_bytes(8, "little", signed=True)
    return bytes(out)


_B64_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"


def base64_encode(data: bytes) -> bytes:
    out = []
    for off in range(0, len(data), 3):
        chunk = data[off:off + 3]
        buf = int.from_bytes(chunk + b"\x00" * (3 - len(chunk)), "big")
        for k in range(4):
            out.append(_B64_ALPHABET[(buf >> (18 - 6 * k)) & 0x3F])
        if len(chunk) < 3:
            out[-(3 - len(chunk)):] = "=" * (3 - len(chunk))
    return "".join(out).encode("ascii")


def base64_decode(encoded: bytes) -> bytes:
    table = {c: i for i, c in enumerate(_B64_ALPHABET.encode("ascii"))}
    out = bytearray()
    buf = bits = 0
    for c in encoded:
        if c == ord("="):
            break
        buf = (buf << 6) | table[c]
        bits += 6
        if bits >= 8:
            bits -= 8
            out.append((buf >> bits) & 0xFF)
    return bytes(out)


def _base64_encode(data, rng):
    return base64_encode(data)


def _base64_decode(data, rng):
    return base64_decode(base64_encode(data))


def _xorshift(data, rng):
    state = int.from_bytes(data[:8].ljust(8, b"\x01"), "little") or 1
    for _ in range(len(data)):
        state ^= (state << 13) & 0xFFFFFFFFFFFFFFFF
        state ^= state >> 7
        state ^= (state << 17) & 0xFFFFFFFFFFFFFFFF
    return state.to_bytes(8, "little")


def _sha256(data, rng):
    return refcrypto.sha256(data)


def _aes_key(rng):
    size = rng.choice((16, 24, 32))
    return rng.randbytes(size)


def _aes_ecb(data, rng):
    return refcrypto.aes_ecb_encrypt(_aes_key(rng), data)


def _aes_ctr(data, rng):
    key = _aes_key(rng)
    nonce = rng.randbytes(16)
    return refcrypto.aes_ctr_encrypt(key, nonce, data)


def _hmac(data, rng):
    key = rng.randbytes(rng.randint(16, 64))
    return refcrypto.hmac_sha256(key, data)


BUILTIN_FUNCS = {
    "quicksort": _quicksort,
    "matrix_multiply": _matrix_multiply,
    "crc32": _crc32,
    "fibonacci": _fibonacci,
    "fft": _fft,
    "base64_encode": _base64_encode,
    "base64_decode": _base64_decode,
    "xorshift": _xorshift,
    "sha256": _sha256,
    "aes_ecb_encrypt": _aes_ecb,
    "aes_ctr_encrypt": _aes_ctr,
    "hmac_sha256": _hmac,
}


def builtin_suite(input_len_range=DEFAULT_LEN_RANGE, seed=0):
    """The built-in workload suite: ids contiguous from 0, both target
    families (benchmarking kernels and cryptographic primitives) covered."""
    return [
        WorkloadSpec(id=i, name=name, input_len_range=tuple(input_len_range), seed=seed)
        for i, name in enumerate(BUILTIN_FUNCS)
    ]


def _stub(data, rng):
    # Cheap deterministic spin target for synthetic-backend acquisitions.
    acc = 1469598103934665603
    for b in data[:32]:
        acc = ((acc ^ b) * 1099511628211) & 0xFFFFFFFFFFFFFFFF
    return acc.to_bytes(8, "little")


def stub_suite(n_classes, seed=0):
    """``n_classes`` trivial targets for synthetic acquisitions, ids 0..n-1."""
    return [
        WorkloadSpec(id=i, name=f"stub{i:02d}", input_len_range=(8, 32), seed=seed)
        for i in range(n_classes)
    ]


def _builtin_fn(name):
    if name.startswith("stub"):
        return _stub
    return BUILTIN_FUNCS.get(name)


# ---------------------------------------------------------------------------
# Invocation


def _derived_seed(*parts):
    h = hashlib.blake2s(digest_size=8)
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")


def instance_input(spec: WorkloadSpec, instance_seed: int):
    """Deterministic input bytes and key-material RNG for one instance.

    ``fixed`` policy pins the input bytes to the spec seed; key material
    still varies per instance.
    """
    if spec.input_policy == "fixed":
        data_rng = random.Random(_derived_seed(spec.seed, 0))
    else:
        data_rng = random.Random(_derived_seed(spec.seed, instance_seed, 0))
    key_rng = random.Random(_derived_seed(spec.seed, instance_seed, 1))
    lo, hi = spec.input_len_range
    n = data_rng.randint(lo, hi)
    data = data_rng.randbytes(n)
    return data, key_rng


def _load_symbol(spec: WorkloadSpec):
    try:
        lib = ctypes.CDLL(spec.library)
    except OSError as exc:
        raise SymbolNotFoundError(f"cannot load library {spec.library!r}: {exc}") from exc
    try:
        fn = getattr(lib, spec.symbol)
    except AttributeError as exc:
        raise SymbolNotFoundError(
            f"symbol {spec.symbol!r} not found in {spec.library!r}"
        ) from exc
    if spec.signature == "buf_len":
        fn.argtypes = [ctypes.c_char_p, ctypes.c_size_t]
    elif spec.signature == "u64":
        fn.argtypes = [ctypes.c_uint64]
    else:
        fn.argtypes = []
    fn.restype = ctypes.c_uint64
    return fn


def invoke(spec: WorkloadSpec, instance_seed: int) -> int:
    """Run the target exactly once; returns a completion token digesting
    the observable output, usable for idempotence checks."""
    data, rng = instance_input(spec, instance_seed)
    if spec.kind == "builtin":
        fn = _builtin_fn(spec.name)
        if fn is None:
            raise ConfigError(f"no builtin named {spec.name!r}")
        try:
            out = fn(data, rng)
        except Exception as exc:
            raise InvocationFailedError(f"builtin {spec.name!r} raised: {exc}") from exc
    else:
        fn = _load_symbol(spec)
        try:
            if spec.signature == "buf_len":
                ret = fn(data, len(data))
            elif spec.signature == "u64":
                ret = fn(int.from_bytes(data[:8].ljust(8, b"\x00"), "little"))
            else:
                ret = fn()
        except Exception as exc:
            raise InvocationFailedError(
                f"symbol {spec.symbol!r} invocation failed: {exc}"
            ) from exc
        out = int(ret or 0).to_bytes(8, "little")
    return int.from_bytes(hashlib.blake2s(out, digest_size=8).digest(), "big")


class WorkloadHandle:
    """Binds a spec to one instance; backends call :meth:`run` exactly once
    per measured execution."""

    def __init__(self, spec: WorkloadSpec, instance_seed: int):
        self.spec = spec
        self.instance_seed = instance_seed

    @property
    def class_id(self):
        return self.spec.id

    def run(self):
        return invoke(self.spec, self.instance_seed)


# ---------------------------------------------------------------------------
# Suite configuration file


def load_suite(path):
    """Read a workload suite from an INI file.

    Each ``[workload:<name>]`` section takes: kind, input_policy,
    input_len_range (``lo, hi``), seed, tag, and for dynamic targets
    library, symbol, signature. ids are assigned by file order.
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read workload suite file {path!r}")
    specs = []
    for section in parser.sections():
        if not section.startswith("workload:"):
            continue
        name = section.split(":", 1)[1]
        sec = parser[section]
        rng_txt = sec.get("input_len_range", "")
        if rng_txt:
            parts = [p.strip() for p in rng_txt.split(",")]
            if len(parts) != 2:
                raise ConfigError(f"bad input_len_range for {name!r}: {rng_txt!r}")
            len_range = (int(parts[0]), int(parts[1]))
        else:
            len_range = DEFAULT_LEN_RANGE
        specs.append(
            WorkloadSpec(
                id=len(specs),
                name=name,
                kind=sec.get("kind", "builtin"),
                input_policy=sec.get("input_policy", "random_length"),
                input_len_range=len_range,
                seed=sec.getint("seed", 0),
                tag=sec.get("tag", ""),
                library=sec.get("library", ""),
                symbol=sec.get("symbol", ""),
                signature=sec.get("signature", "buf_len"),
            )
        )
    if not specs:
        raise ConfigError(f"no [workload:*] sections in {path!r}")
    return specs
