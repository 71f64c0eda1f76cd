"""Match-action tables with exact, longest-prefix and masked/priority matching."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterator

from .errors import TableError

MAX_KEY_BITS = 512
MAX_PARAM_BYTES = 32


class MatchType(enum.Enum):
    EXACT = "EXACT"
    LPM = "LPM"
    MASKED = "MASKED"


class MissKind(enum.Enum):
    DROP = "drop"
    PACKET_IN = "packetin"
    GOTO_BLOCK = "block"


@dataclass(frozen=True)
class MissPolicy:
    kind: MissKind = MissKind.DROP
    block_id: int | None = None

    @classmethod
    def drop(cls) -> "MissPolicy":
        return cls(MissKind.DROP)

    @classmethod
    def packet_in(cls) -> "MissPolicy":
        return cls(MissKind.PACKET_IN)

    @classmethod
    def goto_block(cls, block_id: int) -> "MissPolicy":
        return cls(MissKind.GOTO_BLOCK, block_id)


@dataclass(frozen=True)
class TableSchema:
    table_id: int
    match_type: MatchType
    key_width_bits: int
    max_entries: int = 1024
    miss_policy: MissPolicy = field(default_factory=MissPolicy)

    def __post_init__(self) -> None:
        if not 0 <= self.table_id < 1 << 16:
            raise TableError("BAD_SCHEMA", f"table id {self.table_id} not 16-bit")
        if not 1 <= self.key_width_bits <= MAX_KEY_BITS:
            raise TableError("BAD_SCHEMA", f"key width {self.key_width_bits} outside 1..{MAX_KEY_BITS}")
        if self.max_entries < 0:
            raise TableError("BAD_SCHEMA", "max_entries must be >= 0")

    @property
    def full_mask(self) -> int:
        return (1 << self.key_width_bits) - 1


@dataclass(frozen=True)
class FlowEntry:
    key_value: int
    key_mask: int
    block_id: int
    priority: int = 0
    params: bytes = b""

    def matches(self, key: int) -> bool:
        return key & self.key_mask == self.key_value


def prefix_mask(width: int, prefix_len: int) -> int:
    if not 0 <= prefix_len <= width:
        raise TableError("BAD_PREFIX", f"prefix length {prefix_len} outside 0..{width}")
    return ((1 << prefix_len) - 1) << (width - prefix_len)


def mask_prefix_len(width: int, mask: int) -> int | None:
    """Prefix length of ``mask`` or None when it is not a contiguous prefix."""
    n = bin(mask).count("1")
    return n if mask == prefix_mask(width, n) else None


class _Trie:
    """Binary prefix trie; each node may carry an entry for its prefix."""

    __slots__ = ("root",)

    def __init__(self) -> None:
        self.root: list = [None, None, None]  # [child0, child1, entry]

    def _walk(self, value: int, plen: int, width: int, create: bool):
        node = self.root
        for i in range(plen):
            bit = (value >> (width - 1 - i)) & 1
            nxt = node[bit]
            if nxt is None:
                if not create:
                    return None
                nxt = node[bit] = [None, None, None]
            node = nxt
        return node

    def get(self, value: int, plen: int, width: int) -> FlowEntry | None:
        node = self._walk(value, plen, width, create=False)
        return None if node is None else node[2]

    def put(self, value: int, plen: int, width: int, entry: FlowEntry | None) -> None:
        node = self._walk(value, plen, width, create=entry is not None)
        if node is not None:
            node[2] = entry

    def longest(self, key: int, width: int) -> FlowEntry | None:
        node = self.root
        best = node[2]
        for i in range(width):
            node = node[(key >> (width - 1 - i)) & 1]
            if node is None:
                break
            if node[2] is not None:
                best = node[2]
        return best


class Table:
    """One installed table plus its hit/miss counters."""

    def __init__(self, schema: TableSchema) -> None:
        self.schema = schema
        self.hits = 0
        self.misses = 0
        self._seq = 0
        self._exact: dict[int, FlowEntry] = {}
        self._trie = _Trie()
        self._lpm: dict[tuple[int, int], FlowEntry] = {}
        self._masked: list[tuple[int, int, FlowEntry]] = []  # (-priority, seq, entry)

    def __len__(self) -> int:
        mt = self.schema.match_type
        if mt is MatchType.EXACT:
            return len(self._exact)
        if mt is MatchType.LPM:
            return len(self._lpm)
        return len(self._masked)

    def entries(self) -> Iterator[FlowEntry]:
        """Entries in a deterministic order (insertion order for MASKED)."""
        mt = self.schema.match_type
        if mt is MatchType.EXACT:
            yield from (self._exact[k] for k in sorted(self._exact))
        elif mt is MatchType.LPM:
            yield from (self._lpm[k] for k in sorted(self._lpm))
        else:
            yield from (e for _, _, e in sorted(self._masked, key=lambda t: t[1]))

    def _normalize(self, entry: FlowEntry) -> FlowEntry:
        s = self.schema
        width = s.key_width_bits
        if entry.key_value >> width or entry.key_mask >> width or entry.key_value < 0 or entry.key_mask < 0:
            raise TableError("KEY_WIDTH", f"value/mask wider than {width} bits")
        if entry.key_value & ~entry.key_mask:
            raise TableError("NON_CANONICAL", "value has bits set outside mask")
        if len(entry.params) > MAX_PARAM_BYTES:
            raise TableError("PARAMS_TOO_LONG", f"{len(entry.params)} > {MAX_PARAM_BYTES} bytes")
        if s.match_type is MatchType.EXACT and entry.key_mask != s.full_mask:
            raise TableError("BAD_MASK", "EXACT entries need an all-ones mask")
        if s.match_type is MatchType.LPM and mask_prefix_len(width, entry.key_mask) is None:
            raise TableError("BAD_MASK", "LPM mask is not a prefix")
        if s.match_type is not MatchType.MASKED and entry.priority:
            entry = FlowEntry(entry.key_value, entry.key_mask, entry.block_id, 0, entry.params)
        return entry

    def _find(self, value: int, mask: int, priority: int | None):
        mt = self.schema.match_type
        if mt is MatchType.EXACT:
            return value if value in self._exact and mask == self.schema.full_mask else None
        if mt is MatchType.LPM:
            plen = mask_prefix_len(self.schema.key_width_bits, mask)
            return (value, plen) if (value, plen) in self._lpm else None
        for i, (_, _, e) in enumerate(self._masked):
            if e.key_value == value and e.key_mask == mask and (priority is None or e.priority == priority):
                return i
        return None

    def insert(self, entry: FlowEntry) -> None:
        entry = self._normalize(entry)
        if self._find(entry.key_value, entry.key_mask, entry.priority) is not None:
            raise TableError("DUPLICATE", f"entry {entry.key_value:#x}/{entry.key_mask:#x} already present")
        if len(self) >= self.schema.max_entries:
            raise TableError("TABLE_FULL", f"table {self.schema.table_id} holds {self.schema.max_entries}")
        mt = self.schema.match_type
        width = self.schema.key_width_bits
        if mt is MatchType.EXACT:
            self._exact[entry.key_value] = entry
        elif mt is MatchType.LPM:
            plen = mask_prefix_len(width, entry.key_mask)
            self._lpm[(entry.key_value, plen)] = entry
            self._trie.put(entry.key_value, plen, width, entry)
        else:
            self._seq += 1
            row = (-entry.priority, self._seq, entry)
            lo = 0
            while lo < len(self._masked) and self._masked[lo][:2] < row[:2]:
                lo += 1
            self._masked.insert(lo, row)

    def delete(self, value: int, mask: int, priority: int | None = None) -> FlowEntry:
        loc = self._find(value, mask, priority)
        if loc is None:
            raise TableError("NO_ENTRY", f"no entry {value:#x}/{mask:#x}")
        mt = self.schema.match_type
        if mt is MatchType.EXACT:
            return self._exact.pop(loc)
        if mt is MatchType.LPM:
            self._trie.put(loc[0], loc[1], self.schema.key_width_bits, None)
            return self._lpm.pop(loc)
        return self._masked.pop(loc)[2]

    def modify(self, value: int, mask: int, priority: int | None, block_id: int, params: bytes) -> None:
        """Swap block id and params of an existing entry in place."""
        loc = self._find(value, mask, priority)
        if loc is None:
            raise TableError("NO_ENTRY", f"no entry {value:#x}/{mask:#x}")
        if len(params) > MAX_PARAM_BYTES:
            raise TableError("PARAMS_TOO_LONG", f"{len(params)} > {MAX_PARAM_BYTES} bytes")
        mt = self.schema.match_type
        if mt is MatchType.EXACT:
            old = self._exact[loc]
            self._exact[loc] = FlowEntry(old.key_value, old.key_mask, block_id, old.priority, params)
        elif mt is MatchType.LPM:
            old = self._lpm[loc]
            new = FlowEntry(old.key_value, old.key_mask, block_id, old.priority, params)
            self._lpm[loc] = new
            self._trie.put(loc[0], loc[1], self.schema.key_width_bits, new)
        else:
            pri, seq, old = self._masked[loc]
            self._masked[loc] = (pri, seq, FlowEntry(old.key_value, old.key_mask, block_id, old.priority, params))

    def lookup(self, key: int, width: int | None = None) -> FlowEntry | None:
        """Match ``key`` and bump the hit/miss counter."""
        s = self.schema
        if width is not None and width != s.key_width_bits:
            raise TableError("KEY_WIDTH", f"key is {width} bits, table {s.table_id} expects {s.key_width_bits}")
        if key < 0 or key >> s.key_width_bits:
            raise TableError("KEY_WIDTH", f"key wider than {s.key_width_bits} bits")
        mt = s.match_type
        if mt is MatchType.EXACT:
            hit = self._exact.get(key)
        elif mt is MatchType.LPM:
            hit = self._trie.longest(key, s.key_width_bits)
        else:
            hit = next((e for _, _, e in self._masked if key & e.key_mask == e.key_value), None)
        if hit is None:
            self.misses += 1
        else:
            self.hits += 1
        return hit


class TableStore:
    """All installed tables. ``block_exists`` guards entry block references."""

    def __init__(self, block_exists: Callable[[int], bool] = lambda _b: True) -> None:
        self._tables: dict[int, Table] = {}
        self.block_exists = block_exists

    def __contains__(self, table_id: int) -> bool:
        return table_id in self._tables

    def __iter__(self) -> Iterator[Table]:
        return iter(self._tables[k] for k in sorted(self._tables))

    def get(self, table_id: int) -> Table:
        try:
            return self._tables[table_id]
        except KeyError:
            raise TableError("UNKNOWN_TABLE", f"table {table_id} not installed") from None

    def create(self, schema: TableSchema) -> Table:
        if schema.table_id in self._tables:
            raise TableError("DUPLICATE_TABLE", f"table {schema.table_id} exists")
        if schema.miss_policy.kind is MissKind.GOTO_BLOCK and not self.block_exists(schema.miss_policy.block_id):
            raise TableError("UNKNOWN_BLOCK", f"miss block {schema.miss_policy.block_id} not installed")
        table = self._tables[schema.table_id] = Table(schema)
        return table

    def drop(self, table_id: int) -> None:
        self.get(table_id)
        del self._tables[table_id]

    def insert(self, table_id: int, entry: FlowEntry) -> None:
        table = self.get(table_id)
        if not self.block_exists(entry.block_id):
            raise TableError("UNKNOWN_BLOCK", f"block {entry.block_id} not installed")
        table.insert(entry)

    def delete(self, table_id: int, value: int, mask: int, priority: int | None = None) -> FlowEntry:
        return self.get(table_id).delete(value, mask, priority)

    def modify(self, table_id: int, value: int, mask: int, priority: int | None, block_id: int, params: bytes) -> None:
        if not self.block_exists(block_id):
            raise TableError("UNKNOWN_BLOCK", f"block {block_id} not installed")
        self.get(table_id).modify(value, mask, priority, block_id, params)

    def lookup(self, table_id: int, key: int, width: int | None = None) -> FlowEntry | None:
        return self.get(table_id).lookup(key, width)

    def referenced_blocks(self) -> set[int]:
        refs = set()
        for t in self._tables.values():
            refs.update(e.block_id for e in t.entries())
            if t.schema.miss_policy.kind is MissKind.GOTO_BLOCK:
                refs.add(t.schema.miss_policy.block_id)
        return refs

    def snapshot(self) -> dict[int, tuple]:
        """Hashable view of schemas and entries, for equality checks."""
        return {t.schema.table_id: (t.schema, tuple(t.entries())) for t in self}
