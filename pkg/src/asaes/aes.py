"""AES-128 encryption with access to round intermediates.

The cipher is vectorised over a batch of plaintexts so that trace synthesis
for tens of thousands of encryptions stays cheap. Only encryption is
provided; decryption lives in the test suite as scaffolding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_ROUNDS = 10


def _gf_mul(a: int, b: int) -> int:
    p = 0
    while b:
        if b & 1:
            p ^= a
        a = ((a << 1) ^ 0x11B) if a & 0x80 else (a << 1)
        b >>= 1
    return p


def _build_sbox() -> np.ndarray:
    inv = [0] * 256
    for x in range(1, 256):
        for y in range(1, 256):
            if _gf_mul(x, y) == 1:
                inv[x] = y
                break
    sbox = np.zeros(256, dtype=np.uint8)
    for x in range(256):
        b = inv[x]
        s = b
        for shift in range(1, 5):
            s ^= ((b << shift) | (b >> (8 - shift))) & 0xFF
        sbox[x] = s ^ 0x63
    return sbox


SBOX = _build_sbox()
HW = np.array([bin(x).count("1") for x in range(256)], dtype=np.uint8)
XTIME = np.array([_gf_mul(x, 2) for x in range(256)], dtype=np.uint8)

# HW_SBOX_XOR[p, k] = hw(sbox(p ^ k)); the attacker's hypothesis table.
HW_SBOX_XOR = HW[SBOX[np.bitwise_xor.outer(np.arange(256), np.arange(256))]]

# byte index i of the state is row i % 4, column i // 4 (FIPS-197 order)
_SHIFT_ROWS = np.array([(i + 4 * (i % 4)) % 16 for i in range(16)])
_RCON = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36]


def _as_block(data, name: str) -> np.ndarray:
    arr = np.frombuffer(bytes(data), dtype=np.uint8) if isinstance(data, (bytes, bytearray)) \
        else np.asarray(data, dtype=np.uint8)
    if arr.shape != (16,):
        raise ValueError(f"{name} must be 16 bytes, got shape {arr.shape}")
    return arr


def expand_key(key) -> np.ndarray:
    """Return the 11 x 16 round-key schedule for a 16-byte key."""
    k = _as_block(key, "key")
    words = [k[4 * i:4 * i + 4].copy() for i in range(4)]
    for i in range(4, 44):
        t = words[i - 1].copy()
        if i % 4 == 0:
            t = SBOX[np.roll(t, -1)]
            t[0] ^= _RCON[i // 4 - 1]
        words.append(words[i - 4] ^ t)
    return np.concatenate(words).reshape(11, 16)


def _mix_columns(s: np.ndarray) -> np.ndarray:
    cols = s.reshape(-1, 4, 4)
    a0, a1, a2, a3 = (cols[:, :, r] for r in range(4))
    t = a0 ^ a1 ^ a2 ^ a3
    out = np.empty_like(cols)
    out[:, :, 0] = a0 ^ t ^ XTIME[a0 ^ a1]
    out[:, :, 1] = a1 ^ t ^ XTIME[a1 ^ a2]
    out[:, :, 2] = a2 ^ t ^ XTIME[a2 ^ a3]
    out[:, :, 3] = a3 ^ t ^ XTIME[a3 ^ a0]
    return out.reshape(-1, 16)


@dataclass(frozen=True)
class AesState:
    key: np.ndarray
    round_keys: np.ndarray
    state: np.ndarray


@dataclass(frozen=True)
class RoundActivity:
    """Round intermediates of one or more encryptions.

    ``sbox_out`` has shape (..., 10, 16): SubBytes outputs of every round.
    ``registers`` has shape (..., 11, 16): the state register after the
    initial AddRoundKey and after each round.
    """

    sbox_out: np.ndarray
    registers: np.ndarray

    @property
    def first_round_sbox(self) -> np.ndarray:
        return self.sbox_out[..., 0, :]

    @property
    def round_hd(self) -> np.ndarray:
        """Hamming distance between successive state registers, shape (..., 10)."""
        flips = self.registers[..., 1:, :] ^ self.registers[..., :-1, :]
        return HW[flips].sum(axis=-1, dtype=np.int64)

    def intermediate(self, name: str) -> np.ndarray:
        """Named accessor for leakage-model extensions."""
        table = {
            "sbox_out": self.sbox_out,
            "registers": self.registers,
            "first_round_sbox": self.first_round_sbox,
            "round_hd": self.round_hd,
            "sbox_hw": HW[self.sbox_out],
        }
        try:
            return table[name]
        except KeyError:
            raise KeyError(f"unknown intermediate {name!r}; one of {sorted(table)}") from None


def encrypt_batch(key, plaintexts: np.ndarray) -> tuple[np.ndarray, RoundActivity]:
    """Encrypt an (n, 16) uint8 array of plaintexts under one key."""
    pts = np.asarray(plaintexts, dtype=np.uint8)
    if pts.ndim != 2 or pts.shape[1] != 16:
        raise ValueError(f"plaintexts must have shape (n, 16), got {pts.shape}")
    rk = expand_key(key)
    n = pts.shape[0]
    sbox_out = np.empty((n, N_ROUNDS, 16), dtype=np.uint8)
    registers = np.empty((n, N_ROUNDS + 1, 16), dtype=np.uint8)

    s = pts ^ rk[0]
    registers[:, 0] = s
    for r in range(1, N_ROUNDS + 1):
        s = SBOX[s]
        sbox_out[:, r - 1] = s
        s = s[:, _SHIFT_ROWS]
        if r != N_ROUNDS:
            s = _mix_columns(s)
        s = s ^ rk[r]
        registers[:, r] = s
    return s, RoundActivity(sbox_out=sbox_out, registers=registers)


def encrypt(key, plaintext) -> tuple[bytes, RoundActivity]:
    """Encrypt a single block; returns the ciphertext and its round activity."""
    pt = _as_block(plaintext, "plaintext")
    ct, act = encrypt_batch(key, pt[None, :])
    return ct[0].tobytes(), RoundActivity(sbox_out=act.sbox_out[0], registers=act.registers[0])


def sbox_hypothesis(pt_byte: int, key_guess: int) -> int:
    """Hamming weight of sbox(pt_byte ^ key_guess)."""
    return int(HW_SBOX_XOR[pt_byte & 0xFF, key_guess & 0xFF])
