"""Interaction log ingestion, deduplication, ID remapping and splitting.

Input files are UTF-8 TSV lines ``raw_user <TAB> raw_item <TAB> behavior``
with an optional integer timestamp as a fourth column. Raw IDs are arbitrary
strings; they are remapped to dense 0-based indices in first-appearance
order. The last behavior in a registry is the target behavior.
"""

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Interaction:
    user: int
    item: int
    behavior: int
    order: int


class BehaviorRegistry:
    """Ordered behavior names; the last entry is the target behavior."""

    def __init__(self, names):
        names = tuple(names)
        if not names:
            raise DataError("behavior registry needs at least one behavior")
        if len(set(names)) != len(names):
            raise DataError(f"duplicate behavior names: {names}")
        self.names = names

    @property
    def count(self):
        return len(self.names)

    @property
    def target(self):
        return len(self.names) - 1

    @property
    def target_name(self):
        return self.names[-1]

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown behavior {name!r}") from None

    def __eq__(self, other):
        return isinstance(other, BehaviorRegistry) and self.names == other.names

    def __repr__(self):
        return f"BehaviorRegistry({list(self.names)})"


@dataclass
class Dataset:
    """Deduplicated multi-behavior interactions over dense indices.

    Per-behavior interactions are stored as parallel arrays kept in file
    order; ties in ``order`` are broken by array position.
    """

    registry: BehaviorRegistry
    num_users: int
    num_items: int
    users: list  # per behavior: int64 array of user indices
    items: list  # per behavior: int64 array of item indices
    orders: list  # per behavior: int64 array of order stamps
    user_ids: list = None  # index -> raw user id
    item_ids: list = None  # index -> raw item id
    _csr_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.user_ids is None:
            self.user_ids = [str(u) for u in range(self.num_users)]
        if self.item_ids is None:
            self.item_ids = [str(i) for i in range(self.num_items)]

    @property
    def num_behaviors(self):
        return self.registry.count

    def count(self, behavior):
        return int(self.users[behavior].shape[0])

    def total_interactions(self):
        return sum(self.count(b) for b in range(self.num_behaviors))

    @property
    def user_target_count(self):
        counts = np.zeros(self.num_users, dtype=np.int64)
        np.add.at(counts, self.users[self.registry.target], 1)
        return counts

    def interactions(self, behavior):
        u, i, o = self.users[behavior], self.items[behavior], self.orders[behavior]
        return [Interaction(int(u[k]), int(i[k]), behavior, int(o[k])) for k in range(u.shape[0])]

    def user_item_csr(self, behaviors):
        """CSR of the union of user->item edges over the given behaviors.

        Column indices are sorted and unique per row. Cached per subset.
        """
        key = tuple(sorted(set(behaviors)))
        if not key:
            raise DataError("behavior subset must be non-empty")
        if key not in self._csr_cache:
            us = np.concatenate([self.users[b] for b in key])
            its = np.concatenate([self.items[b] for b in key])
            if us.shape[0]:
                pairs = np.unique(us * np.int64(self.num_items) + its)
                us = pairs // self.num_items
                its = pairs % self.num_items
            indptr = np.zeros(self.num_users + 1, dtype=np.int64)
            np.add.at(indptr, us + 1, 1)
            np.cumsum(indptr, out=indptr)
            self._csr_cache[key] = (indptr, its.astype(np.int64))
        return self._csr_cache[key]

    def target_items_of(self, user):
        """Sorted unique target-behavior items of a user."""
        indptr, indices = self.user_item_csr([self.registry.target])
        return indices[indptr[user]:indptr[user + 1]]

    def structurally_equal(self, other):
        """Equality of the remapped universe, ignoring raw ID maps."""
        if self.registry != other.registry:
            return False
        if (self.num_users, self.num_items) != (other.num_users, other.num_items):
            return False
        for b in range(self.num_behaviors):
            for mine, theirs in ((self.users, other.users), (self.items, other.items), (self.orders, other.orders)):
                if not np.array_equal(mine[b], theirs[b]):
                    return False
        return True

    def validate(self):
        for b in range(self.num_behaviors):
            u, i, o = self.users[b], self.items[b], self.orders[b]
            if not (u.shape == i.shape == o.shape):
                raise DataError("ragged interaction arrays")
            if u.shape[0] == 0:
                continue
            if u.min() < 0 or u.max() >= self.num_users:
                raise DataError(f"user index out of range in behavior {b}")
            if i.min() < 0 or i.max() >= self.num_items:
                raise DataError(f"item index out of range in behavior {b}")
            if o.min() < 0:
                raise DataError(f"negative order stamp in behavior {b}")
            if np.unique(u * np.int64(self.num_items) + i).shape[0] != u.shape[0]:
                raise DataError(f"duplicate (user, item) pair in behavior {b}")
        return self


@dataclass
class Split:
    """Training data plus at most one held-out target item per user."""

    train: Dataset
    test: dict  # user index -> held-out item index

    def validate(self):
        self.train.validate()
        indptr, indices = self.train.user_item_csr([self.train.registry.target])
        for u, i in self.test.items():
            if not (0 <= u < self.train.num_users and 0 <= i < self.train.num_items):
                raise DataError(f"held-out pair ({u}, {i}) out of range")
            row = indices[indptr[u]:indptr[u + 1]]
            pos = np.searchsorted(row, i)
            if pos < row.shape[0] and row[pos] == i:
                raise DataError(f"held-out pair ({u}, {i}) also present in training target behavior")
        return self


def load_interactions(path, registry):
    """Parse a TSV interaction log into a deduplicated, remapped Dataset.

    Duplicate (user, item, behavior) triples keep the earliest order stamp;
    ties keep the earliest file position. Order defaults to the 0-based line
    number when no timestamp column is present.
    """
    user_map = {}
    item_map = {}
    user_ids = []
    item_ids = []
    # (u, i, b) -> (order, file position)
    kept = {}
    n_lines = 0
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            n_lines += 1
            parts = line.split("\t")
            if len(parts) not in (3, 4):
                raise DataError(f"{path}:{lineno}: expected 3 or 4 tab-separated fields, got {len(parts)}")
            raw_u, raw_i, bname = parts[0], parts[1], parts[2]
            if bname not in registry.names:
                raise DataError(f"{path}:{lineno}: unknown behavior {bname!r}")
            b = registry.index(bname)
            if len(parts) == 4:
                try:
                    order = int(parts[3])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: timestamp {parts[3]!r} is not an integer") from None
                if order < 0:
                    raise DataError(f"{path}:{lineno}: negative timestamp")
            else:
                order = lineno - 1
            if raw_u not in user_map:
                user_map[raw_u] = len(user_ids)
                user_ids.append(raw_u)
            if raw_i not in item_map:
                item_map[raw_i] = len(item_ids)
                item_ids.append(raw_i)
            key = (user_map[raw_u], item_map[raw_i], b)
            prev = kept.get(key)
            if prev is None or order < prev[0]:
                kept[key] = (order, lineno)
    if n_lines == 0:
        raise DataError(f"{path}: no interactions")

    k = registry.count
    rows = [[] for _ in range(k)]
    for (u, i, b), (order, pos) in kept.items():
        rows[b].append((pos, u, i, order))
    users, items, orders = [], [], []
    for b in range(k):
        rows[b].sort()
        users.append(np.array([r[1] for r in rows[b]], dtype=np.int64))
        items.append(np.array([r[2] for r in rows[b]], dtype=np.int64))
        orders.append(np.array([r[3] for r in rows[b]], dtype=np.int64))
    data = Dataset(
        registry=registry,
        num_users=len(user_ids),
        num_items=len(item_ids),
        users=users,
        items=items,
        orders=orders,
        user_ids=user_ids,
        item_ids=item_ids,
    )
    return data.validate()


def leave_one_out_split(data):
    """Hold out each user's latest target interaction, if they have >= 2.

    The latest interaction is the one with the largest order stamp, ties
    broken by file position. Users with a single target interaction keep it
    in training and are skipped at evaluation time.
    """
    t = data.registry.target
    u, i, o = data.users[t], data.items[t], data.orders[t]
    counts = data.user_target_count
    # latest = max (order, position); scanning forward keeps later positions.
    latest = {}
    for pos in range(u.shape[0]):
        uu = int(u[pos])
        if counts[uu] < 2:
            continue
        prev = latest.get(uu)
        if prev is None or o[pos] >= o[prev]:
            latest[uu] = pos
    drop = np.zeros(u.shape[0], dtype=bool)
    test = {}
    for uu, pos in sorted(latest.items()):
        drop[pos] = True
        test[uu] = int(i[pos])

    users = [a.copy() for a in data.users]
    items = [a.copy() for a in data.items]
    orders = [a.copy() for a in data.orders]
    users[t] = u[~drop].copy()
    items[t] = i[~drop].copy()
    orders[t] = o[~drop].copy()
    train = Dataset(
        registry=data.registry,
        num_users=data.num_users,
        num_items=data.num_items,
        users=users,
        items=items,
        orders=orders,
        user_ids=list(data.user_ids),
        item_ids=list(data.item_ids),
    )
    return Split(train=train, test=test).validate()


def save_split(split, path):
    """Write a split snapshot; loading it back reproduces the same split.

    Layout: header ``M N K``, a ``BEHAVIORS`` line, train rows
    ``u i b order`` (behavior-major, original order), then ``TEST u i`` rows.
    Raw ID maps are not part of the snapshot.
    """
    train = split.train
    buf = io.StringIO()
    buf.write(f"{train.num_users} {train.num_items} {train.num_behaviors}\n")
    buf.write("BEHAVIORS " + " ".join(train.registry.names) + "\n")
    for b in range(train.num_behaviors):
        u, i, o = train.users[b], train.items[b], train.orders[b]
        for k in range(u.shape[0]):
            buf.write(f"{u[k]} {i[k]} {b} {o[k]}\n")
    for uu in sorted(split.test):
        buf.write(f"TEST {uu} {split.test[uu]}\n")
    payload = buf.getvalue().encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(payload)


def load_split(path):
    """Read a snapshot written by ``save_split``."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    if not lines:
        raise DataError(f"{path}: empty split file")
    try:
        m, n, k = (int(x) for x in lines[0].split())
    except ValueError:
        raise DataError(f"{path}:1: malformed header (expected 'M N K')") from None
    if len(lines) < 2 or not lines[1].startswith("BEHAVIORS "):
        raise DataError(f"{path}:2: missing BEHAVIORS line")
    names = lines[1].split()[1:]
    if len(names) != k:
        raise DataError(f"{path}:2: {len(names)} behavior names for K={k}")
    registry = BehaviorRegistry(names)
    rows = [[] for _ in range(k)]
    test = {}
    for lineno, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        parts = line.split()
        if parts[0] == "TEST":
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: malformed TEST row")
            test[int(parts[1])] = int(parts[2])
            continue
        if len(parts) != 4:
            raise DataError(f"{path}:{lineno}: malformed train row")
        u, i, b, o = (int(x) for x in parts)
        if not 0 <= b < k:
            raise DataError(f"{path}:{lineno}: behavior index {b} out of range")
        rows[b].append((u, i, o))
    users, items, orders = [], [], []
    for b in range(k):
        users.append(np.array([r[0] for r in rows[b]], dtype=np.int64))
        items.append(np.array([r[1] for r in rows[b]], dtype=np.int64))
        orders.append(np.array([r[2] for r in rows[b]], dtype=np.int64))
    train = Dataset(
        registry=registry,
        num_users=m,
        num_items=n,
        users=users,
        items=items,
        orders=orders,
    )
    return Split(train=train, test=test).validate()
