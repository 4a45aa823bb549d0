"""Self-contained reference implementations of the cryptographic workloads.

These are deliberately plain, single-file implementations rather than
bindings to a vendor library: the measurement targets must be code the
toolkit controls so that what gets fingerprinted is known. Correctness is
pinned in the test suite against stdlib hashlib/hmac and published
known-answer vectors.
"""

import struct

# ---------------------------------------------------------------------------
# SHA-256

_SHA256_K = (
    0x428A2F98, 0x71374491, 0xB5C0FBCF, 0xE9B5DBA5, 0x3956C25B, 0x59F111F1,
    0x923F82A4, 0xAB1C5ED5, 0xD807AA98, 0x12835B01, 0x243185BE, 0x550C7DC3,
    0x72BE5D74, 0x80DEB1FE, 0x9BDC06A7, 0xC19BF174, 0xE49B69C1, 0xEFBE4786,
    0x0FC19DC6, 0x240CA1CC, 0x2DE92C6F, 0x4A7484AA, 0x5CB0A9DC, 0x76F988DA,
    0x983E5152, 0xA831C66D, 0xB00327C8, 0xBF597FC7, 0xC6E00BF3, 0xD5A79147,
    0x06CA6351, 0x14292967, 0x27B70A85, 0x2E1B2138, 0x4D2C6DFC, 0x53380D13,
    0x650A7354, 0x766A0ABB, 0x81C2C92E, 0x92722C85, 0xA2BFE8A1, 0xA81A664B,
    0xC24B8B70, 0xC76C51A3, 0xD192E819, 0xD6990624, 0xF40E3585, 0x106AA070,
    0x19A4C116, 0x1E376C08, 0x2748774C, 0x34B0BCB5, 0x391C0CB3, 0x4ED8AA4A,
    0x5B9CCA4F, 0x682E6FF3, 0x748F82EE, 0x78A5636F, 0x84C87814, 0x8CC70208,
    0x90BEFFFA, 0xA4506CEB, 0xBEF9A3F7, 0xC67178F2,
)

_MASK32 = 0xFFFFFFFF


def _rotr(x, n):
    return ((x >> n) | (x << (32 - n))) & _MASK32


def sha256(data: bytes) -> bytes:
    """SHA-256 digest of ``data``."""
    h = [0x6A09E667, 0xBB67AE85, 0x3C6EF372, 0xA54FF53A,
         0x510E527F, 0x9B05688C, 0x1F83D9AB, 0x5BE0CD19]
    padded = data + b"\x80"
    padded += b"\x00" * ((56 - len(padded) % 64) % 64)
    padded += struct.pack(">Q", len(data) * 8)

    for off in range(0, len(padded), 64):
        w = list(struct.unpack(">16I", padded[off:off + 64]))
        for t in range(16, 64):
            s0 = _rotr(w[t - 15], 7) ^ _rotr(w[t - 15], 18) ^ (w[t - 15] >> 3)
            s1 = _rotr(w[t - 2], 17) ^ _rotr(w[t - 2], 19) ^ (w[t - 2] >> 10)
            w.append((w[t - 16] + s0 + w[t - 7] + s1) & _MASK32)
        a, b, c, d, e, f, g, hh = h
        for t in range(64):
            s1 = _rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25)
            ch = (e & f) ^ (~e & g)
            t1 = (hh + s1 + ch + _SHA256_K[t] + w[t]) & _MASK32
            s0 = _rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)
            maj = (a & b) ^ (a & c) ^ (b & c)
            t2 = (s0 + maj) & _MASK32
            hh, g, f, e, d, c, b, a = g, f, e, (d + t1) & _MASK32, c, b, a, (t1 + t2) & _MASK32
        h = [(x + y) & _MASK32 for x, y in zip(h, (a, b, c, d, e, f, g, hh))]
    return struct.pack(">8I", *h)


def hmac_sha256(key: bytes, data: bytes) -> bytes:
    """HMAC-SHA256 over ``data`` with ``key``."""
    block = 64
    if len(key) > block:
        key = sha256(key)
    key = key + b"\x00" * (block - len(key))
    ipad = bytes(k ^ 0x36 for k in key)
    opad = bytes(k ^ 0x5C for k in key)
    return sha256(opad + sha256(ipad + data))


# ---------------------------------------------------------------------------
# AES (encryption only; 128/192/256-bit keys)

_SBOX = [0] * 256


def _init_sbox():
    # Multiplicative inverse in GF(2^8) followed by the affine transform.
    p, q = 1, 1
    inv = {0: 0}
    while True:
        p = p ^ ((p << 1) & 0xFF) ^ (0x1B if p & 0x80 else 0)
        q ^= q << 1
        q ^= q << 2
        q ^= q << 4
        q &= 0xFF
        if q & 0x80:
            q ^= 0x09
        inv[p] = q
        if p == 1:
            break
    for x in range(256):
        i = inv[x] if x else 0
        _SBOX[x] = (i ^ _rotl8(i, 1) ^ _rotl8(i, 2) ^ _rotl8(i, 3) ^ _rotl8(i, 4) ^ 0x63)


def _rotl8(x, n):
    return ((x << n) | (x >> (8 - n))) & 0xFF


_init_sbox()

_RCON = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36, 0x6C, 0xD8, 0xAB, 0x4D]


def _xtime(b):
    return ((b << 1) ^ 0x1B) & 0xFF if b & 0x80 else b << 1


def _round_keys(key: bytes):
    nk = len(key) // 4
    if nk not in (4, 6, 8):
        raise ValueError("AES key must be 16, 24, or 32 bytes")
    nr = nk + 6
    words = [list(key[4 * i:4 * i + 4]) for i in range(nk)]
    for i in range(nk, 4 * (nr + 1)):
        w = list(words[i - 1])
        if i % nk == 0:
            w = [_SBOX[b] for b in w[1:] + w[:1]]
            w[0] ^= _RCON[i // nk - 1]
        elif nk == 8 and i % nk == 4:
            w = [_SBOX[b] for b in w]
        words.append([a ^ b for a, b in zip(words[i - nk], w)])
    keys = []
    for r in range(nr + 1):
        keys.append(bytes(b for word in words[4 * r:4 * r + 4] for b in word))
    return keys, nr


def aes_encrypt_block(key: bytes, block: bytes) -> bytes:
    """Encrypt one 16-byte block."""
    if len(block) != 16:
        raise ValueError("AES block must be 16 bytes")
    round_keys, nr = _round_keys(key)
    # column-major state: state[4*c + r] is row r of column c
    state = [b ^ k for b, k in zip(block, round_keys[0])]
    for rnd in range(1, nr + 1):
        state = [_SBOX[b] for b in state]
        # ShiftRows on column-major layout
        shifted = list(state)
        for r in range(1, 4):
            row = [state[4 * c + r] for c in range(4)]
            row = row[r:] + row[:r]
            for c in range(4):
                shifted[4 * c + r] = row[c]
        state = shifted
        if rnd != nr:
            mixed = []
            for c in range(4):
                col = state[4 * c:4 * c + 4]
                t = col[0] ^ col[1] ^ col[2] ^ col[3]
                mixed.extend([
                    col[0] ^ t ^ _xtime(col[0] ^ col[1]),
                    col[1] ^ t ^ _xtime(col[1] ^ col[2]),
                    col[2] ^ t ^ _xtime(col[2] ^ col[3]),
                    col[3] ^ t ^ _xtime(col[3] ^ col[0]),
                ])
            state = mixed
        state = [b ^ k for b, k in zip(state, round_keys[rnd])]
    return bytes(state)


def pkcs7_pad(data: bytes, block: int = 16) -> bytes:
    n = block - len(data) % block
    return data + bytes([n]) * n


def aes_ecb_encrypt(key: bytes, data: bytes) -> bytes:
    """AES-ECB over PKCS#7-padded ``data``."""
    padded = pkcs7_pad(data)
    out = bytearray()
    for off in range(0, len(padded), 16):
        out += aes_encrypt_block(key, padded[off:off + 16])
    return bytes(out)


def aes_ctr_encrypt(key: bytes, nonce: bytes, data: bytes) -> bytes:
    """AES-CTR keystream XOR over ``data``; ``nonce`` is the 16-byte initial counter."""
    if len(nonce) != 16:
        raise ValueError("CTR nonce must be 16 bytes")
    counter = int.from_bytes(nonce, "big")
    out = bytearray()
    for off in range(0, len(data), 16):
        keystream = aes_encrypt_block(key, counter.to_bytes(16, "big"))
        counter = (counter + 1) % (1 << 128)
        chunk = data[off:off + 16]
        out += bytes(a ^ b for a, b in zip(chunk, keystream))
    return bytes(out)
