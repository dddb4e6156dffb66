"""Bit-level dependence of a straight-line computation on its inputs.

Every value is summarised as one bitset per output bit (lane 0 in the low
bits): the set of input bits that bit may depend on.  Bitsets are Python
ints over a flat numbering of all input bits.  The summary is sound: if an
input bit is absent, flipping it can change neither the value, nor its
poison, nor whether evaluation has undefined behaviour.

The verifier uses the union of the supports of both sides to shrink the
input space it enumerates.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

from . import intrinsics, ir
from .rewrite import Const, Hole, Node, Op, Val, postorder
from .types import Type


@dataclass(frozen=True)
class Layout:
    """A flat bit numbering for a list of named inputs."""

    names: tuple[str, ...]
    types: tuple[Type, ...]

    @classmethod
    def of(cls, params) -> "Layout":
        params = list(params)
        return cls(tuple(p for p, _ in params), tuple(t for _, t in params))

    def offset(self, name: str) -> int:
        off = 0
        for n, t in zip(self.names, self.types):
            if n == name:
                return off
            off += t.bits
        raise KeyError(name)

    @property
    def total_bits(self) -> int:
        return sum(t.bits for t in self.types)

    def locate(self, bit: int) -> tuple[str, int, int]:
        """Input bit number -> (input name, lane, bit in lane)."""
        off = 0
        for n, t in zip(self.names, self.types):
            if bit < off + t.bits:
                k = bit - off
                return n, k // t.width, k % t.width
            off += t.bits
        raise IndexError(bit)


def _union(sets) -> int:
    return reduce(lambda a, b: a | b, sets, 0)


def _lanes(bits: list[int], ty: Type) -> list[list[int]]:
    w = ty.width
    return [bits[k * w:(k + 1) * w] for k in range(ty.lanes)]


def _flat(lanes: list[list[int]]) -> list[int]:
    return [b for lane in lanes for b in lane]


def _prefix(xs: list[int]) -> list[int]:
    out, acc = [], 0
    for x in xs:
        acc |= x
        out.append(acc)
    return out


def _const_lanes(n: Node):
    return n.lanes if isinstance(n, Const) else None


def _shift(kind: str, lane: list[int], amount: int, w: int) -> list[int]:
    if amount >= w:
        if kind == "ashr":
            return [lane[w - 1]] * w
        return [0] * w
    if kind == "shl":
        return [0] * amount + lane[:w - amount]
    if kind == "lshr":
        return lane[amount:] + [0] * amount
    return lane[amount:] + [lane[w - 1]] * amount


class Support:
    """Dependence summary of a rewrite tree (or a straight-line function)."""

    def __init__(self, root: Node, layout: Layout):
        self.layout = layout
        self.ub = 0  # input bits that can decide whether evaluation has UB
        memo: dict[Node, list[int]] = {}
        for n in postorder(root):
            memo[n] = self._node(n, memo)
        self.bits = memo[root]

    @property
    def all(self) -> int:
        return _union(self.bits) | self.ub

    def _node(self, n: Node, memo) -> list[int]:
        if isinstance(n, Val):
            off = self.layout.offset(n.name)
            return [1 << (off + k) for k in range(n.ty.bits)]
        if isinstance(n, Const):
            return [0] * n.ty.bits
        if isinstance(n, Hole):
            raise ValueError("support of a rewrite with holes")
        args = [memo[a] for a in n.args]
        return self._op(n, args)

    def _op(self, n: Op, args: list[list[int]]) -> list[int]:
        op, ty = n.op, n.ty
        w = ty.width
        if op == "bitcast":
            return list(args[0])
        if op in ("zext", "sext", "trunc"):
            src = n.args[0].ty
            out = []
            for lane in _lanes(args[0], src):
                if op == "trunc":
                    out.append(lane[:w])
                else:
                    fill = lane[-1] if op == "sext" else 0
                    out.append(lane + [fill] * (w - src.width))
            return _flat(out)
        if op in ("and", "or", "xor", "add", "sub", "mul"):
            a, b = _lanes(args[0], ty), _lanes(args[1], ty)
            ca, cb = _const_lanes(n.args[0]), _const_lanes(n.args[1])
            out = []
            for k in range(ty.lanes):
                if op in ("and", "or", "xor"):
                    lane = []
                    for j in range(w):
                        # A constant bit can absorb the other side.
                        absorbed = 0 if op == "and" else 1
                        if op != "xor" and ((ca and (ca[k] >> j) & 1 == absorbed) or
                                            (cb and (cb[k] >> j) & 1 == absorbed)):
                            lane.append(0)
                        else:
                            lane.append(a[k][j] | b[k][j])
                    out.append(lane)
                else:
                    # Low bits of add, sub and mul depend only on low bits.
                    out.append(_prefix([x | y for x, y in zip(a[k], b[k])]))
            return _flat(out)
        if op in ("shl", "lshr", "ashr"):
            a = _lanes(args[0], ty)
            amt = _const_lanes(n.args[1])
            if amt is None:
                b = _lanes(args[1], ty)
                return _flat([[_union(a[k]) | _union(b[k])] * w for k in range(ty.lanes)])
            return _flat([_shift(op, a[k], amt[k], w) for k in range(ty.lanes)])
        if op in ("udiv", "sdiv"):
            a, b = _lanes(args[0], ty), _lanes(args[1], ty)
            out = []
            for k in range(ty.lanes):
                dep = _union(a[k]) | _union(b[k])
                self.ub |= dep
                out.append([dep] * w)
            return _flat(out)
        if op in ("ctpop", "ctlz", "cttz"):
            return _flat([[_union(lane)] * w for lane in _lanes(args[0], ty)])
        if op == "bitreverse":
            return _flat([lane[::-1] for lane in _lanes(args[0], ty)])
        if op == "bswap":
            out = []
            for lane in _lanes(args[0], ty):
                bytes_ = [lane[i:i + 8] for i in range(0, w, 8)]
                out.append([b for byte in reversed(bytes_) for b in byte])
            return _flat(out)
        if op == "icmp":
            src = n.args[0].ty
            a, b = _lanes(args[0], src), _lanes(args[1], src)
            return [_union(a[k]) | _union(b[k]) for k in range(src.lanes)]
        if op == "extractelement":
            src = n.args[0].ty
            idx = _const_lanes(n.args[1])
            lanes = _lanes(args[0], src)
            if idx is not None:
                return list(lanes[idx[0]]) if idx[0] < src.lanes else [0] * w
            dep = _union(args[0]) | _union(args[1])
            return [dep] * w
        if op == "insertelement":
            idx = _const_lanes(n.args[2])
            lanes = _lanes(args[0], ty)
            if idx is not None:
                if idx[0] >= ty.lanes:
                    return [0] * ty.bits
                lanes[idx[0]] = list(args[1])
                return _flat(lanes)
            dep = _union(args[0]) | _union(args[1]) | _union(args[2])
            return [dep] * ty.bits
        if op == "shufflevector":
            src = n.args[0].ty
            both = _lanes(args[0], src) + _lanes(args[1], src)
            return _flat([both[m] for m in n.mask])
        if op == "call":
            return self._intrinsic(intrinsics.lookup(n.callee), n, args)
        raise ValueError(f"no dependence rule for {op}")

    def _intrinsic(self, desc, n: Op, args) -> list[int]:
        rty = desc.result_type
        w = desc.width
        if desc.family == "pavg":
            a, b = _lanes(args[0], rty), _lanes(args[1], rty)
            out = [[_union(a[k]) | _union(b[k])] * w for k in range(rty.lanes)]
        elif desc.family == "pmadd_wd":
            src = desc.input_type
            a, b = _lanes(args[0], src), _lanes(args[1], src)
            out = []
            for k in range(rty.lanes):
                dep = _union(a[2 * k] + a[2 * k + 1] + b[2 * k] + b[2 * k + 1])
                out.append([dep] * w)
        else:
            a = _lanes(args[0], rty)
            imm = _const_lanes(n.args[1])
            if imm is None:
                dep = _union(args[1])
                out = [[_union(lane) | dep] * w for lane in a]
            else:
                # Immediate shifts saturate instead of producing poison.
                kind = {"pslli": "shl", "psrli": "lshr", "psrai": "ashr"}[desc.family]
                out = [_shift(kind, lane, min(imm[0], w), w) for lane in a]
        if desc.masked:
            pt, m = _lanes(args[2], rty), args[3]
            out = [[o | p | m[k] for o, p in zip(out[k], pt[k])] for k in range(rty.lanes)]
        return _flat(out)


def support(root: Node, params) -> Support:
    return Support(root, Layout.of(params))


def popcount(x: int) -> int:
    return bin(x).count("1")
