"""Row-batched, poison-aware lane kernels.

A :class:`Batch` holds N independent evaluations of one value: ``vals`` is a
``(N, lanes)`` uint64 array of bit patterns and ``poison`` a matching bool
array.  Every kernel works on whole batches so that exhaustive and sampled
verification run at numpy speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import Type

U64 = np.uint64


def lane_mask(width: int) -> np.uint64:
    return U64((1 << width) - 1)


@dataclass
class Batch:
    ty: Type
    vals: np.ndarray
    poison: np.ndarray

    @property
    def rows(self) -> int:
        return self.vals.shape[0]

    @classmethod
    def const(cls, ty: Type, lanes, rows: int) -> "Batch":
        arr = np.array([v & ty.mask for v in lanes], dtype=U64)
        vals = np.broadcast_to(arr, (rows, ty.lanes)).copy()
        return cls(ty, vals, np.zeros((rows, ty.lanes), dtype=bool))

    @classmethod
    def zeros(cls, ty: Type, rows: int) -> "Batch":
        return cls(ty, np.zeros((rows, ty.lanes), dtype=U64), np.zeros((rows, ty.lanes), dtype=bool))

    def take(self, rows) -> "Batch":
        return Batch(self.ty, self.vals[rows], self.poison[rows])

    def clean(self) -> "Batch":
        """Zero the payload of poison lanes so equal batches compare equal."""
        return Batch(self.ty, np.where(self.poison, U64(0), self.vals), self.poison)


def to_signed(vals: np.ndarray, width: int) -> np.ndarray:
    if width == 64:
        return vals.view(np.int64)
    half = U64(1 << (width - 1))
    s = vals.astype(np.int64)
    return np.where(vals >= half, s - np.int64(1 << width) if width < 64 else s, s)


def from_signed(vals: np.ndarray, width: int) -> np.ndarray:
    return vals.astype(np.int64).view(U64) & lane_mask(width)


def _wrap(ty: Type, vals, poison) -> Batch:
    return Batch(ty, vals & lane_mask(ty.width), poison)


# ----------------------------------------------------------------- binary ops

def binary(op: str, a: Batch, b: Batch):
    """Returns ``(result, ub_rows)``; ``ub_rows`` is None unless op can trap."""
    w = a.ty.width
    x, y = a.vals, b.vals
    poison = a.poison | b.poison
    ub = None
    if op == "add":
        r = x + y
    elif op == "sub":
        r = x - y
    elif op == "mul":
        r = x * y
    elif op == "and":
        r = x & y
    elif op == "or":
        r = x | y
    elif op == "xor":
        r = x ^ y
    elif op in ("shl", "lshr", "ashr"):
        over = y >= U64(w)
        amt = np.where(over, U64(0), y)
        if op == "shl":
            r = x << amt
        elif op == "lshr":
            r = x >> amt
        else:
            r = from_signed(to_signed(x, w) >> amt.astype(np.int64), w)
        poison = poison | over
    elif op == "udiv":
        # Division by zero or by poison is immediate UB for the whole row.
        ub = ((y == 0) | b.poison).any(axis=1)
        r = x // np.where(y == 0, U64(1), y)
    elif op == "sdiv":
        sx, sy = to_signed(x, w), to_signed(y, w)
        smin = -(1 << (w - 1))
        overflow = (sx == smin) & (sy == -1)
        ub = ((y == 0) | overflow | b.poison).any(axis=1)
        ux = np.where(sx < 0, U64(0) - x, x) & lane_mask(w)
        uy = np.where(sy < 0, U64(0) - y, y) & lane_mask(w)
        q = ux // np.where(uy == 0, U64(1), uy)
        neg = (sx < 0) != (sy < 0)
        r = np.where(neg, U64(0) - q, q)
    else:
        raise ValueError(op)
    return _wrap(a.ty, r, poison), ub


def icmp(cond: str, a: Batch, b: Batch, result_ty: Type) -> Batch:
    w = a.ty.width
    x, y = a.vals, b.vals
    if cond == "eq":
        r = x == y
    elif cond == "ne":
        r = x != y
    elif cond == "ult":
        r = x < y
    elif cond == "ule":
        r = x <= y
    else:
        sx, sy = to_signed(x, w), to_signed(y, w)
        r = sx < sy if cond == "slt" else sx <= sy
    return Batch(result_ty, r.astype(U64), a.poison | b.poison)


# ------------------------------------------------------------------ unary ops

def _bits(vals: np.ndarray, width: int) -> np.ndarray:
    """(N, L, width) 0/1 array, least significant bit first."""
    shifts = np.arange(width, dtype=U64)
    return (vals[..., None] >> shifts) & U64(1)


def _pack(bits: np.ndarray) -> np.ndarray:
    width = bits.shape[-1]
    shifts = np.arange(width, dtype=U64)
    return (bits.astype(U64) << shifts).sum(axis=-1, dtype=U64)


def popcount(vals: np.ndarray) -> np.ndarray:
    # SWAR popcount on 64-bit words.
    v = vals - ((vals >> U64(1)) & U64(0x5555555555555555))
    v = (v & U64(0x3333333333333333)) + ((v >> U64(2)) & U64(0x3333333333333333))
    v = (v + (v >> U64(4))) & U64(0x0F0F0F0F0F0F0F0F)
    return (v * U64(0x0101010101010101)) >> U64(56)


def unary(op: str, a: Batch) -> Batch:
    w = a.ty.width
    x = a.vals
    if op == "ctpop":
        r = popcount(x)
    elif op == "ctlz":
        bits = _bits(x, w)[..., ::-1]
        first = np.argmax(bits == 1, axis=-1).astype(U64)
        r = np.where(x == 0, U64(w), first)
    elif op == "cttz":
        bits = _bits(x, w)
        first = np.argmax(bits == 1, axis=-1).astype(U64)
        r = np.where(x == 0, U64(w), first)
    elif op == "bswap":
        nbytes = w // 8
        r = np.zeros_like(x)
        for k in range(nbytes):
            byte = (x >> U64(8 * k)) & U64(0xFF)
            r |= byte << U64(8 * (nbytes - 1 - k))
    elif op == "bitreverse":
        r = _pack(_bits(x, w)[..., ::-1])
    else:
        raise ValueError(op)
    return _wrap(a.ty, r, a.poison.copy())


# ----------------------------------------------------------------- conversion

def convert(op: str, a: Batch, to: Type) -> Batch:
    if op == "zext":
        return Batch(to, a.vals.copy(), a.poison.copy())
    if op == "sext":
        return Batch(to, from_signed(to_signed(a.vals, a.ty.width), to.width), a.poison.copy())
    if op == "trunc":
        return _wrap(to, a.vals, a.poison.copy())
    if op == "bitcast":
        return bitcast(a, to)
    raise ValueError(op)


def bitcast(a: Batch, to: Type) -> Batch:
    if a.ty.lanes == to.lanes and a.ty.width == to.width:
        return Batch(to, a.vals, a.poison)
    n = a.rows
    bits = _bits(a.vals, a.ty.width).reshape(n, to.lanes, to.width)
    pbits = np.repeat(a.poison, a.ty.width, axis=1).reshape(n, to.lanes, to.width)
    return Batch(to, _pack(bits), pbits.any(axis=-1))


# ----------------------------------------------------------------- vector ops

def extractelement(v: Batch, idx: Batch, to: Type) -> Batch:
    i = idx.vals[:, 0]
    bad = (i >= U64(v.ty.lanes)) | idx.poison[:, 0]
    safe = np.where(bad, U64(0), i).astype(np.intp)
    rows = np.arange(v.rows)
    vals = v.vals[rows, safe][:, None]
    poison = (v.poison[rows, safe] | bad)[:, None]
    return Batch(to, vals, poison)


def insertelement(v: Batch, e: Batch, idx: Batch) -> Batch:
    i = idx.vals[:, 0]
    bad = (i >= U64(v.ty.lanes)) | idx.poison[:, 0]
    vals = v.vals.copy()
    poison = v.poison.copy()
    lanes = np.arange(v.ty.lanes, dtype=U64)[None, :]
    hit = lanes == i[:, None]
    vals = np.where(hit, e.vals[:, :1], vals)
    poison = np.where(hit, e.poison[:, :1], poison)
    poison = poison | bad[:, None]
    return Batch(v.ty, vals, poison)


def shufflevector(a: Batch, b: Batch, mask, to: Type) -> Batch:
    vals = np.concatenate([a.vals, b.vals], axis=1)
    poison = np.concatenate([a.poison, b.poison], axis=1)
    idx = np.asarray(mask, dtype=np.intp)
    return Batch(to, vals[:, idx], poison[:, idx])


def select_rows(cond: np.ndarray, a: Batch, b: Batch) -> Batch:
    """Row-wise choice: rows where ``cond`` take ``a``, others ``b``."""
    c = cond[:, None]
    return Batch(a.ty, np.where(c, a.vals, b.vals), np.where(c, a.poison, b.poison))
