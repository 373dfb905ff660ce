"""One-probe storage for dynamic sets.

A set of up to K elements from a universe of size N is stored as a bit
table indexed by the right nodes of a rich product graph.  Inserting x
runs the rich dynamic matcher, which hands x most of its neighborhood as
exclusive positions; those bits are set.  Deleting zeroes them and also
refreshes the oldest element, which keeps every matching assignment
younger than 2K assignments, exactly the expiration the matcher relies
on.  A membership query reads one uniformly random neighbor bit and is
wrong with probability at most eps.

State besides the table is the queue sigma of (x, positions) pairs in
insertion order with keyed lookup.  Plain dict preservation of insertion
order gives both the FIFO view and keyed removal in O(1) touches, well
inside the logarithmic budget the structure is allowed.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .rich import RichBuild, build_rich_graph
from .util import derive_seed

__all__ = ["SigmaQueue", "OneProbeStore", "VerifyReport", "HistoryError"]


class HistoryError(ValueError):
    """The requested operation would make the history illegal."""


class SigmaQueue:
    """Insertion-ordered catalog of (x, positions) with keyed access."""

    def __init__(self) -> None:
        self._d: dict[int, tuple[int, np.ndarray]] = {}
        self._seq = 0
        self.touches = 0

    def __contains__(self, x: int) -> bool:
        self.touches += 1
        return x in self._d

    def __len__(self) -> int:
        return len(self._d)

    def keys(self):
        return self._d.keys()

    def enqueue(self, x: int, positions: np.ndarray) -> int:
        seq = self._seq
        self._seq += 1
        self._d[x] = (seq, positions)
        self.touches += 1
        return seq

    def move_to_back(self, x: int) -> None:
        _, positions = self._d.pop(x)
        seq = self._seq
        self._seq += 1
        self._d[x] = (seq, positions)
        self.touches += 2

    def remove(self, x: int) -> np.ndarray:
        _, positions = self._d.pop(x)
        self.touches += 1
        return positions

    def oldest(self) -> tuple[int, np.ndarray]:
        x = next(iter(self._d))
        self.touches += 1
        return x, self._d[x][1]

    def items(self):
        for x, (seq, positions) in self._d.items():
            yield seq, x, positions


@dataclass
class VerifyReport:
    members_checked: int = 0
    nonmembers_checked: int = 0
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


class OneProbeStore:
    """The (sigma, table) pair plus the matcher that assigns positions."""

    def __init__(self, universe: int, K: int, eps: float, seed: int,
                 enforce_legal: bool = True, build: RichBuild | None = None) -> None:
        if 2 * K > universe:
            raise ValueError("dynamic set bound must satisfy 2K <= universe size")
        self.universe = universe
        self.K = K
        self.eps = eps
        self.seed = seed
        self.enforce_legal = enforce_legal
        if build is None:
            build = build_rich_graph(universe, K, eps, seed,
                                     T=max(2 * K, 1), capacity=K + 1)
        self.build = build
        self.graph = build.graph
        self.matcher = build.matcher
        self.table = np.zeros(-(-self.graph.right_size // 8), dtype=np.uint8)
        self.sigma = SigmaQueue()
        self.table_reads = 0
        self.ops = 0
        self._rng = random.Random(derive_seed(seed, "query"))
        self.read_only = False

    # -- bit table ------------------------------------------------------------

    def _set_bits(self, positions: np.ndarray) -> None:
        np.bitwise_or.at(self.table, positions >> 3,
                         np.uint8(1) << (positions & 7).astype(np.uint8))

    def _clear_bits(self, positions: np.ndarray) -> None:
        np.bitwise_and.at(self.table, positions >> 3,
                          ~(np.uint8(1) << (positions & 7).astype(np.uint8)))

    def _read_bit(self, position: int) -> int:
        """The single counted table probe."""
        self.table_reads += 1
        return (int(self.table[position >> 3]) >> (position & 7)) & 1

    def _audit_bits(self, positions: np.ndarray) -> np.ndarray:
        """Uncounted bulk reads for verification and harnesses."""
        return (self.table[positions >> 3] >> (positions & 7).astype(np.uint8)) & 1

    # -- operations -------------------------------------------------------------

    def members(self):
        return set(self.sigma.keys())

    def insert(self, x: int) -> None:
        self._mutable()
        if not 0 <= x < self.universe:
            raise ValueError(f"element {x} outside the universe")
        self.ops += 1
        if x in self.sigma:
            self.sigma.move_to_back(x)
            return
        if self.enforce_legal and len(self.sigma) >= self.K:
            raise HistoryError(f"inserting {x} would grow the set beyond {self.K}")
        positions = np.asarray(self.matcher.request(x), dtype=np.int64)
        self._set_bits(positions)
        self.sigma.enqueue(x, positions)

    def delete(self, x: int) -> None:
        self._mutable()
        if not 0 <= x < self.universe:
            raise ValueError(f"element {x} outside the universe")
        self.ops += 1
        if x in self.sigma:
            positions = self.sigma.remove(x)
            self._clear_bits(positions)
            self.matcher.retract(x)
        # refresh: the oldest survivor is re-matched with fresh positions
        if len(self.sigma):
            x_old, positions = self.sigma.oldest()
            self.sigma.remove(x_old)
            self._clear_bits(positions)
            self.matcher.retract(x_old)
            fresh = np.asarray(self.matcher.request(x_old), dtype=np.int64)
            self._set_bits(fresh)
            self.sigma.enqueue(x_old, fresh)

    def query(self, x: int, rng=None) -> int:
        """Read exactly one uniformly chosen neighbor bit of x."""
        rng = rng if rng is not None else self._rng
        j = rng.randrange(self.graph.degree)
        return self._read_bit(self.graph.neighbor(x, j))

    def query_majority(self, x: int) -> int:
        """Derandomized harness mode: majority over the whole neighborhood."""
        y1 = np.asarray(self.graph.first.neighbors(x), dtype=np.int64)
        pos2 = self.graph.second.positions(x)
        full = (y1[:, None] * self.graph.second.right_size + pos2[None, :]).ravel()
        return int(self._audit_bits(full).mean() >= 0.5)

    # -- verification --------------------------------------------------------------

    def _full_positions(self, x: int) -> np.ndarray:
        y1 = np.asarray(self.graph.first.neighbors(x), dtype=np.int64)
        pos2 = self.graph.second.positions(x)
        return (y1[:, None] * self.graph.second.right_size + pos2[None, :]).ravel()

    def verify_key_claim(self, nonmember_sample=None) -> VerifyReport:
        """Audit both directions of the stored-set claim.

        Members: all stored positions read 1 and at least a (1 - eps)
        fraction of the whole neighborhood reads 1.  Non-members: a
        counterfactual matcher request succeeds and all its positions
        read 0.
        """
        report = VerifyReport()
        for _, x, positions in self.sigma.items():
            report.members_checked += 1
            bits = self._audit_bits(positions)
            if not bits.all():
                report.failures.append((x, "member", "stored position reads 0"))
                continue
            frac = self._audit_bits(self._full_positions(x)).mean()
            if frac < 1 - self.eps:
                report.failures.append((x, "member", f"only {frac:.3f} of neighbors read 1"))
        members = self.members()
        for x in nonmember_sample or ():
            if x in members:
                continue
            report.nonmembers_checked += 1
            try:
                shadow = np.asarray(self.matcher.shadow_request(x), dtype=np.int64)
            except Exception as exc:  # noqa: BLE001 - report, do not mask
                report.failures.append((x, "nonmember", f"shadow request failed: {exc}"))
                continue
            if self._audit_bits(shadow).any():
                report.failures.append((x, "nonmember", "virtually assigned position reads 1"))
        return report

    # -- size accounting and serialization ------------------------------------------

    def _entry_capacity_bytes(self) -> int:
        digits_seq = len(str(max(self.sigma._seq, 1)))
        digits_x = len(str(max(self.universe - 1, 1)))
        digits_p = len(str(max(self.graph.right_size - 1, 1)))
        return digits_seq + 1 + digits_x + self.graph.degree * (1 + digits_p) + 1

    def size_bits(self) -> int:
        """Constructed size: the bit table plus sigma at capacity."""
        return self.graph.right_size + 8 * self.K * self._entry_capacity_bytes()

    def header_line(self) -> str:
        return (f"bitprobe {self.universe} {self.K} {self.eps!r} {self.seed} "
                f"{self.graph.right_size}")

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.header_line().encode() + b"\n")
            fh.write(self.table.tobytes())
            fh.write(b"\n")
            for seq, x, positions in self.sigma.items():
                line = f"{seq} {x} " + " ".join(str(int(p)) for p in positions)
                fh.write(line.encode() + b"\n")

    @classmethod
    def load(cls, path) -> "OneProbeStore":
        """Rebuild a store for querying.  The matcher's internal occupancy
        is not serialized, so the loaded store rejects further updates."""
        with open(path, "rb") as fh:
            header = fh.readline().decode().split()
            if header[0] != "bitprobe":
                raise ValueError("not a bitprobe state file")
            universe, K = int(header[1]), int(header[2])
            eps, seed, right = float(header[3]), int(header[4]), int(header[5])
            store = cls(universe, K, eps, seed)
            if store.graph.right_size != right:
                raise ValueError("table width mismatch: incompatible build parameters")
            table = fh.read(len(store.table))
            store.table = np.frombuffer(table, dtype=np.uint8).copy()
            if fh.read(1) != b"\n":
                raise ValueError("truncated table section")
            for raw in fh:
                toks = raw.split()
                if not toks:
                    continue
                seq, x = int(toks[0]), int(toks[1])
                positions = np.array([int(t) for t in toks[2:]], dtype=np.int64)
                store.sigma._d[x] = (seq, positions)
                store.sigma._seq = max(store.sigma._seq, seq + 1)
        store.read_only = True
        return store

    def _mutable(self) -> None:
        if self.read_only:
            raise RuntimeError("loaded stores are query-only; rebuild to mutate")
