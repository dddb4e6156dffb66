"""Persistent rewrite cache keyed by canonical slice text.

One file per entry under a root directory, named by the hex digest of the
key.  Files are written to a temporary name and renamed into place, so a
reader sees either a whole entry or none.  Entries record the tool version;
an entry written by another version reads as a miss.

Entry format::

    vexor-cache v1 <outcome> <target>
    tool=<version> config=<synth config or ->
    <canonical slice text>
    ---
    <rewrite S-expression, or "none">
    ---
    cost_before=<n> cost_after=<n> verdict=<status> inputs=<n>
"""

from __future__ import annotations

import hashlib
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from . import __version__
from .cfg import reverse_postorder
from .ir import Block, Function, Instruction, Ref, Terminator
from .rewrite import Node, RewriteError, parse_rewrite, print_rewrite, rename_vals
from .text import print_function

log = logging.getLogger(__name__)

HEADER = "vexor-cache v1"
FOUND = "rewrite-found"
NONE = "no-improvement"
ENV_VAR = "VEXOR_CACHE"


# ------------------------------------------------------------ canonical form

@dataclass(frozen=True)
class Canonical:
    function: Function
    text: str
    names: dict  # canonical value name -> original name
    result: str  # canonical name of the returned value, or its literal text

    def to_canonical(self) -> dict:
        return {v: k for k, v in self.names.items()}


def canonicalize(f: Function) -> Canonical:
    """Rename blocks to b0.. in reverse post-order and values to %0.. with
    parameters first, in order of first use, then instructions in order of
    definition."""
    order = reverse_postorder(f)
    blocks = {b.label: b for b in f.blocks}
    labels = {lab: f"b{k}" for k, lab in enumerate(order)}
    params = [p for p, _ in f.params]
    first_use: list[str] = []

    def use(name):
        if name in params and name not in first_use:
            first_use.append(name)

    for lab in order:
        b = blocks[lab]
        for i in b.insts:
            for r in i.refs():
                use(r)
        for r in b.term.refs():
            use(r)
    first_use += [p for p in params if p not in first_use]
    names: dict[str, str] = {}
    for p in first_use:
        names[p] = str(len(names))
    for lab in order:
        for i in blocks[lab].insts:
            if i.dest is not None:
                names[i.dest] = str(len(names))

    def op(a):
        return Ref(names[a.name]) if isinstance(a, Ref) else a

    out_blocks = []
    for lab in order:
        b = blocks[lab]
        insts = []
        for i in b.insts:
            inc = tuple(labels[x] for x in i.incoming) if i.incoming is not None else None
            insts.append(Instruction(names.get(i.dest) if i.dest is not None else None, i.op,
                                     tuple(op(a) for a in i.args), i.ty, i.argty, i.cond, i.mask,
                                     i.callee, inc))
        t = b.term
        out_blocks.append(Block(labels[lab], tuple(insts),
                                Terminator(t.kind, tuple(op(a) for a in t.args),
                                           tuple(labels[x] for x in t.targets))))
    ptypes = f.param_types()
    fn = Function("slice", tuple((names[p], ptypes[p]) for p in first_use), f.ret_ty, tuple(out_blocks))
    ret = next(b.term for b in out_blocks if b.term.kind == "ret").args[0]
    result = ret.name if isinstance(ret, Ref) else str(ret)
    return Canonical(fn, print_function(fn), {v: k for k, v in names.items()}, result)


def cache_key(canon: Canonical, target: str) -> str:
    h = hashlib.sha256()
    for part in (canon.text, canon.result, target):
        h.update(part.encode())
        h.update(b"\0")
    return h.hexdigest()


# ------------------------------------------------------------------ entries

@dataclass(frozen=True)
class CacheEntry:
    key: str
    outcome: str
    target: str
    slice_text: str
    rewrite: Optional[Node]  # over canonical names
    cost_before: int
    cost_after: int
    verdict: str = ""
    inputs: int = 0
    tool: str = __version__
    config: str = "-"

    @property
    def found(self) -> bool:
        return self.outcome == FOUND

    def serialize(self) -> str:
        rw = print_rewrite(self.rewrite) if self.rewrite is not None else "none"
        lines = [f"{HEADER} {self.outcome} {self.target}",
                 f"tool={self.tool} config={self.config}",
                 self.slice_text.rstrip("\n"), "---", rw, "---",
                 f"cost_before={self.cost_before} cost_after={self.cost_after} "
                 f"verdict={self.verdict or '-'} inputs={self.inputs}"]
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, key: str, text: str) -> "CacheEntry":
        lines = text.split("\n")
        head = lines[0].split()
        if len(head) != 4 or " ".join(head[:2]) != HEADER or head[2] not in (FOUND, NONE):
            raise ValueError("bad header")
        meta = dict(kv.split("=", 1) for kv in lines[1].split(" ", 1))
        body = "\n".join(lines[2:])
        parts = body.split("\n---\n")
        if len(parts) != 3:
            raise ValueError("expected three sections")
        slice_text, rw, costs = parts
        fields = dict(kv.split("=", 1) for kv in costs.split())
        rewrite = None if rw.strip() == "none" else parse_rewrite(rw)
        if (rewrite is None) != (head[2] == NONE):
            raise ValueError("outcome does not match rewrite section")
        verdict = fields.get("verdict", "-")
        return cls(key, head[2], head[3], slice_text + "\n", rewrite,
                   int(fields["cost_before"]), int(fields["cost_after"]),
                   "" if verdict == "-" else verdict, int(fields.get("inputs", 0)),
                   meta.get("tool", ""), meta.get("config", "-"))


class CacheError(OSError):
    pass


class RewriteCache:
    """File-backed store; ``root=None`` gives a cache that never hits."""

    def __init__(self, root: Union[str, Path, None]):
        self.root = Path(root) if root is not None else None
        self.hits = 0
        self.misses = 0
        if self.root is not None:
            try:
                self.root.mkdir(parents=True, exist_ok=True)
            except OSError as e:
                raise CacheError(f"cannot create cache directory {self.root}: {e}") from e

    @classmethod
    def from_env(cls, root=None) -> "RewriteCache":
        return cls(root if root is not None else os.environ.get(ENV_VAR))

    def path(self, key: str) -> Path:
        return self.root / key

    def get(self, key: str) -> Optional[CacheEntry]:
        if self.root is None:
            return None
        p = self.path(key)
        try:
            text = p.read_text(encoding="utf-8")
        except FileNotFoundError:
            self.misses += 1
            return None
        except OSError as e:
            log.warning("cache entry %s unreadable: %s", key, e)
            self.misses += 1
            return None
        try:
            entry = CacheEntry.parse(key, text)
        except (ValueError, KeyError, RewriteError) as e:
            log.warning("cache entry %s is corrupt (%s); ignoring it", key, e)
            self.misses += 1
            return None
        if entry.tool != __version__:
            self.misses += 1
            return None
        self.hits += 1
        return entry

    def put(self, entry: CacheEntry) -> None:
        if self.root is None:
            return
        data = entry.serialize()
        try:
            fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(data)
            os.replace(tmp, self.path(entry.key))
        except OSError as e:
            raise CacheError(f"cannot write cache entry {entry.key}: {e}") from e

    # convenience over slices -------------------------------------------

    def lookup(self, f: Function, target: str) -> tuple[str, Canonical, Optional[CacheEntry]]:
        canon = canonicalize(f)
        key = cache_key(canon, target)
        return key, canon, self.get(key)


def entry_for(key: str, canon: Canonical, target: str, record=None, cost_before: int = 0,
              config: str = "-") -> CacheEntry:
    """Build an entry from a synthesis result (``record`` None for no improvement)."""
    if record is None:
        return CacheEntry(key, NONE, target, canon.text, None, cost_before, cost_before, config=config)
    rw = rename_vals(record.rewrite, canon.to_canonical())
    return CacheEntry(key, FOUND, target, canon.text, rw, record.cost_before, record.cost_after,
                      record.verdict.status.value, record.verdict.inputs_checked)


def rewrite_from(entry: CacheEntry, canon: Canonical) -> Optional[Node]:
    """The entry's rewrite over the names of the slice ``canon`` came from."""
    if entry.rewrite is None:
        return None
    return rename_vals(entry.rewrite, canon.names)
