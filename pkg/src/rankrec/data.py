"""Interaction data: loading, binarization, per-user splits, negative sampling.

Two split protocols are supported. ``fraction-80-20`` samples 80% of a
user's relevant items for training and leaves the rest for testing,
with negatives sampled at a per-user ratio (NSR) of the positives in
each partition. ``even-thirds`` splits relevant items evenly into
train/validation/test (capping very active users first), samples a
fixed number of train negatives per positive, and pads validation/test
candidate sets to a fixed total size.

The unrated complement is never materialized: an absent rating only
becomes a negative when sampled.
"""

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    DataFormatError,
    EmptyDatasetError,
    ProtocolError,
    SamplingInfeasibleError,
)
from .models import STAGE_NEGATIVES, STAGE_SPLIT, stage_rng

MODE_HOLDOUT = "fraction-80-20"
MODE_THIRDS = "even-thirds"
MODE_PROPORTIONAL = "proportional"

HOLDOUT_TRAIN_FRACTION = 0.8


@dataclass(frozen=True)
class Interaction:
    user: int
    item: int
    rating: float
    relevance: int


class InteractionSet:
    """Sparse user-item relevance records with a per-user index."""

    def __init__(self, num_users, num_items, users, items, ratings, relevance, check=True):
        self.num_users = int(num_users)
        self.num_items = int(num_items)
        self.users = np.asarray(users, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)
        self.ratings = np.asarray(ratings, dtype=np.float64)
        self.relevance = np.asarray(relevance, dtype=np.int8)
        self._per_user = None
        if check:
            self._check()

    def _check(self):
        n = len(self.users)
        if not (len(self.items) == len(self.ratings) == len(self.relevance) == n):
            raise DataFormatError("record arrays have inconsistent lengths")
        if n:
            if self.users.min() < 0 or self.users.max() >= self.num_users:
                raise DataFormatError("user index out of range")
            if self.items.min() < 0 or self.items.max() >= self.num_items:
                raise DataFormatError("item index out of range")
            keys = self.users * self.num_items + self.items
            if len(np.unique(keys)) != n:
                raise DataFormatError("duplicate (user, item) record")
        if self.relevance.size and not np.isin(self.relevance, (0, 1)).all():
            raise DataFormatError("relevance must be 0 or 1")

    @classmethod
    def from_records(cls, num_users, num_items, records):
        users = [r.user for r in records]
        items = [r.item for r in records]
        ratings = [r.rating for r in records]
        relevance = [r.relevance for r in records]
        return cls(num_users, num_items, users, items, ratings, relevance)

    @property
    def records(self):
        return [
            Interaction(int(u), int(i), float(r), int(y))
            for u, i, r, y in zip(self.users, self.items, self.ratings, self.relevance)
        ]

    @property
    def per_user_index(self):
        """Row positions per user; the lists exactly partition the records."""
        if self._per_user is None:
            index = [[] for _ in range(self.num_users)]
            for row, user in enumerate(self.users):
                index[user].append(row)
            self._per_user = [np.asarray(rows, dtype=np.int64) for rows in index]
        return self._per_user

    def __len__(self):
        return len(self.users)

    def user_rows(self, user):
        return self.per_user_index[user]

    def relevant_items(self, user):
        rows = self.user_rows(user)
        return self.items[rows[self.relevance[rows] == 1]]

    def user_candidates(self, user):
        """(items, labels) for one user, in record order."""
        rows = self.user_rows(user)
        return self.items[rows], self.relevance[rows]

    def positives_per_user(self):
        counts = np.zeros(self.num_users, dtype=np.int64)
        np.add.at(counts, self.users[self.relevance == 1], 1)
        return counts

    def subset(self, row_mask_or_indices):
        rows = np.asarray(row_mask_or_indices)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return InteractionSet(
            self.num_users,
            self.num_items,
            self.users[rows],
            self.items[rows],
            self.ratings[rows],
            self.relevance[rows],
            check=False,
        )


@dataclass(frozen=True)
class SplitSpec:
    """Parameters of the per-user split and negative-sampling protocol.

    ``proportional`` mode (used by the validation-test reliability
    study) splits each user's relevant items with fractions derived
    from ``partition_minimums`` = (train, validation, test) counts; a
    user with exactly their sum gets exactly those counts.
    """

    mode: str
    min_relevant_per_partition: int = 5
    nsr: float | None = None
    train_negatives_per_positive: int | None = None
    eval_candidate_total: int = 500
    relevant_cap: int = 200
    val_fraction: float = 0.0
    partition_minimums: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (MODE_HOLDOUT, MODE_THIRDS, MODE_PROPORTIONAL):
            raise ConfigurationError(f"unknown split mode {self.mode!r}")
        if self.min_relevant_per_partition < 1:
            raise ConfigurationError("min_relevant_per_partition must be >= 1")
        if self.mode == MODE_HOLDOUT:
            if self.nsr is None or self.nsr <= 0:
                raise ConfigurationError("fraction-80-20 mode requires a positive nsr")
            if not 0.0 <= self.val_fraction < HOLDOUT_TRAIN_FRACTION:
                raise ConfigurationError("val_fraction must lie in [0, 0.8)")
        else:
            if self.nsr is not None:
                raise ConfigurationError("nsr applies only to fraction-80-20 mode")
            if self.val_fraction:
                raise ConfigurationError("val_fraction applies only to fraction-80-20 mode")
            if self.negatives_per_positive < 1:
                raise ConfigurationError("train_negatives_per_positive must be >= 1")
            if self.eval_candidate_total < 1 or self.relevant_cap < 1:
                raise ConfigurationError("candidate totals must be >= 1")
        if self.mode == MODE_PROPORTIONAL:
            mins = self.partition_minimums
            if (
                mins is None
                or len(mins) != 3
                or any(int(m) != m or m < 1 for m in mins)
            ):
                raise ConfigurationError(
                    "proportional mode requires partition_minimums=(train, val, test)"
                )
            object.__setattr__(self, "partition_minimums", tuple(int(m) for m in mins))
        elif self.partition_minimums is not None:
            raise ConfigurationError(
                "partition_minimums applies only to proportional mode"
            )

    @property
    def negatives_per_positive(self):
        if self.train_negatives_per_positive is None:
            return 4
        return self.train_negatives_per_positive

    def partition_min_counts(self):
        """Minimum relevant items required per partition, by name."""
        if self.mode == MODE_PROPORTIONAL:
            t, v, te = self.partition_minimums
            return {"train": t, "validation": v, "test": te}
        k = self.min_relevant_per_partition
        if self.mode == MODE_THIRDS:
            return {"train": k, "validation": k, "test": k}
        return {"train": k, "validation": k if self.val_fraction else 0, "test": k}

    @property
    def min_total_relevant(self):
        """Smallest per-user relevant count the protocol can split."""
        if self.mode == MODE_THIRDS:
            return 3 * self.min_relevant_per_partition
        if self.mode == MODE_PROPORTIONAL:
            return sum(self.partition_minimums)
        smallest = min(
            1.0 - HOLDOUT_TRAIN_FRACTION,
            self.val_fraction or 1.0,
            HOLDOUT_TRAIN_FRACTION - self.val_fraction,
        )
        # tolerance guards against float artifacts like 4 / 0.2 = 20.0000...4
        return int(np.ceil(self.min_relevant_per_partition / smallest - 1e-9))

    def to_dict(self):
        return {
            "mode": self.mode,
            "min_relevant_per_partition": self.min_relevant_per_partition,
            "nsr": self.nsr,
            "train_negatives_per_positive": self.train_negatives_per_positive,
            "eval_candidate_total": self.eval_candidate_total,
            "relevant_cap": self.relevant_cap,
            "val_fraction": self.val_fraction,
            "partition_minimums": self.partition_minimums,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("partition_minimums") is not None:
            d["partition_minimums"] = tuple(d["partition_minimums"])
        return cls(**d)


@dataclass
class PartitionedData:
    """Per-user train/validation/test partitions (validation may be empty)."""

    train: InteractionSet
    validation: InteractionSet
    test: InteractionSet
    spec: SplitSpec

    @property
    def num_users(self):
        return self.train.num_users

    @property
    def num_items(self):
        return self.train.num_items

    def partitions(self):
        return {"train": self.train, "validation": self.validation, "test": self.test}


def round_half_up(x):
    return int(np.floor(x + 0.5))


def _sniff_delimiter(first_line):
    return "\t" if first_line.count("\t") >= first_line.count(",") else ","


def _parse_float(text, line_no, what):
    try:
        return float(text)
    except ValueError:
        raise DataFormatError(f"cannot parse {what} {text!r}", line=line_no) from None


def load_interactions(path_or_buffer, schema=None, delimiter=None, has_header=None):
    """Read delimiter-separated (user, item, rating) rows.

    ``schema`` maps the logical columns "user", "item", "rating" to
    column positions (ints, headerless files) or header names (strings,
    which require a header). The rating column may be omitted for unary
    data (rating 1.0). With positional columns and ``has_header=None``
    the first row is skipped when its rating cell does not parse as a
    number. Identifiers are compacted to contiguous ints in first-seen
    order.

    Returns (InteractionSet, id_maps) where id_maps holds the original
    user/item identifiers indexed by compact id.
    """
    if schema is None:
        schema = {"user": 0, "item": 1, "rating": 2}
    if hasattr(path_or_buffer, "read"):
        text = path_or_buffer.read()
    else:
        text = Path(path_or_buffer).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise EmptyDatasetError("input file is empty")
    if delimiter is None:
        delimiter = _sniff_delimiter(lines[0])
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    rows = list(reader)

    by_name = any(isinstance(v, str) for v in schema.values())
    start = 0
    if by_name:
        header = [h.strip() for h in rows[0]]
        try:
            cols = {key: header.index(name) for key, name in schema.items()}
        except ValueError as exc:
            raise DataFormatError(f"missing column in header: {exc}") from None
        start = 1
    else:
        cols = dict(schema)
        if has_header is None:
            first = rows[0]
            has_header = (
                "rating" in cols
                and len(first) > cols["rating"]
                and not _looks_numeric(first[cols["rating"]])
            )
        if has_header:
            start = 1

    user_ids, item_ids = {}, {}
    users, items, ratings = [], [], []
    seen = set()
    for line_no, row in enumerate(rows[start:], start=start + 1):
        if not row or all(not cell.strip() for cell in row):
            continue
        needed = max(cols["user"], cols["item"], cols.get("rating", 0))
        if len(row) <= needed:
            raise DataFormatError(
                f"expected at least {needed + 1} columns, found {len(row)}",
                line=line_no,
            )
        raw_user = row[cols["user"]].strip()
        raw_item = row[cols["item"]].strip()
        rating = (
            _parse_float(row[cols["rating"]].strip(), line_no, "rating")
            if "rating" in cols
            else 1.0
        )
        u = user_ids.setdefault(raw_user, len(user_ids))
        i = item_ids.setdefault(raw_item, len(item_ids))
        if (u, i) in seen:
            raise DataFormatError(
                f"duplicate (user, item) pair ({raw_user!r}, {raw_item!r})",
                line=line_no,
            )
        seen.add((u, i))
        users.append(u)
        items.append(i)
        ratings.append(rating)
    if not users:
        raise EmptyDatasetError("no interaction rows found")
    dataset = InteractionSet(
        len(user_ids), len(item_ids), users, items, ratings, np.zeros(len(users))
    )
    id_maps = {"users": list(user_ids), "items": list(item_ids)}
    return dataset, id_maps


def _looks_numeric(cell):
    try:
        float(cell)
        return True
    except ValueError:
        return False


def binarize(dataset, positive_threshold):
    """Mark records with rating >= threshold as relevant, the rest as not."""
    relevance = (dataset.ratings >= positive_threshold).astype(np.int8)
    return InteractionSet(
        dataset.num_users,
        dataset.num_items,
        dataset.users,
        dataset.items,
        dataset.ratings,
        relevance,
        check=False,
    )


def filter_min_relevant(dataset, k):
    """Drop users with fewer than k relevant records, recompacting user ids.

    The item space is preserved so negative-sampling pools and item id
    maps stay valid. Returns (filtered_set, kept_users) where kept_users
    lists the surviving original compact user ids in order.
    """
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    counts = dataset.positives_per_user()
    kept_users = np.flatnonzero(counts >= k)
    if kept_users.size == 0:
        raise EmptyDatasetError(f"no user has at least {k} relevant interactions")
    remap = -np.ones(dataset.num_users, dtype=np.int64)
    remap[kept_users] = np.arange(len(kept_users))
    rows = np.flatnonzero(remap[dataset.users] >= 0)
    filtered = InteractionSet(
        len(kept_users),
        dataset.num_items,
        remap[dataset.users[rows]],
        dataset.items[rows],
        dataset.ratings[rows],
        dataset.relevance[rows],
        check=False,
    )
    return filtered, kept_users


def _empty_like(dataset):
    return InteractionSet(dataset.num_users, dataset.num_items, [], [], [], [], check=False)


def split(dataset, spec):
    """Partition each user's relevant items per the protocol in ``spec``.

    Only relevant records are partitioned; non-relevant rated records
    are dropped from the partitions but remain legitimate targets for
    negative sampling. Deterministic given ``spec.seed``.
    """
    per_part_rows = {"train": [], "validation": [], "test": []}
    for user in range(dataset.num_users):
        rows = dataset.user_rows(user)
        rel_rows = rows[dataset.relevance[rows] == 1]
        n = len(rel_rows)
        if n < spec.min_total_relevant:
            raise ProtocolError(
                f"user {user} has {n} relevant interactions; "
                f"mode {spec.mode} requires at least {spec.min_total_relevant}"
            )
        rng = stage_rng(spec.seed, STAGE_SPLIT, user)
        if spec.mode != MODE_HOLDOUT and n > spec.relevant_cap:
            rel_rows = rng.choice(rel_rows, size=spec.relevant_cap, replace=False)
            n = spec.relevant_cap
        shuffled = rng.permutation(rel_rows)
        sizes = _partition_sizes(n, spec)
        for name, minimum in spec.partition_min_counts().items():
            if sizes[name] < minimum:
                raise ProtocolError(
                    f"user {user}: partition {name} gets {sizes[name]} relevant "
                    f"items, minimum is {minimum}"
                )
        taken = 0
        for name in ("train", "validation", "test"):
            size = sizes[name]
            per_part_rows[name].append(shuffled[taken : taken + size])
            taken += size
    parts = {}
    for name, row_lists in per_part_rows.items():
        rows = np.concatenate(row_lists) if row_lists else np.empty(0, dtype=np.int64)
        parts[name] = dataset.subset(rows)
    return PartitionedData(parts["train"], parts["validation"], parts["test"], spec)


def _partition_sizes(n, spec):
    if spec.mode == MODE_HOLDOUT:
        n_val = round_half_up(spec.val_fraction * n) if spec.val_fraction else 0
        n_train = round_half_up(HOLDOUT_TRAIN_FRACTION * n) - n_val
        n_test = n - n_train - n_val
        return {"train": n_train, "validation": n_val, "test": n_test}
    if spec.mode == MODE_THIRDS:
        base, remainder = divmod(n, 3)
        # remainder assigned train-first, then validation
        return {
            "train": base + (1 if remainder >= 1 else 0),
            "validation": base + (1 if remainder >= 2 else 0),
            "test": base,
        }
    # proportional: largest-remainder apportionment of the minimum shares,
    # remainder ties resolved train-first then validation
    mins = np.asarray(spec.partition_minimums, dtype=np.float64)
    exact = n * mins / mins.sum()
    sizes = np.floor(exact).astype(np.int64)
    fractions = exact - sizes
    for _ in range(n - int(sizes.sum())):
        pick = int(np.argmax(fractions))
        sizes[pick] += 1
        fractions[pick] = -1.0
    return {"train": int(sizes[0]), "validation": int(sizes[1]), "test": int(sizes[2])}


def sample_negatives(parts, spec=None):
    """Complete the partitions with sampled relevance-0 records.

    fraction-80-20: every partition gets round(nsr * positives) negatives
    per user. even-thirds: the train partition gets a fixed number of
    negatives per positive while validation/test candidate sets are
    padded to ``eval_candidate_total`` items including their positives.

    Negatives are drawn per partition without replacement from the items
    the user has no relevant interaction with (in any partition);
    rated-but-not-relevant items stay in the pool. Deterministic given
    the split seed.
    """
    spec = spec or parts.spec
    num_items = parts.num_items
    new_sets = {}
    for name, part in parts.partitions().items():
        if len(part) == 0:
            new_sets[name] = part
            continue
        add_users, add_items = [], []
        for user in range(parts.num_users):
            n_pos = len(part.relevant_items(user))
            count = _negative_count(name, n_pos, spec)
            if count == 0:
                continue
            excluded = np.unique(
                np.concatenate(
                    [p.relevant_items(user) for p in parts.partitions().values()]
                )
            )
            pool_size = num_items - len(excluded)
            if count > pool_size:
                raise SamplingInfeasibleError(
                    f"user {user}: {name} needs {count} negatives but only "
                    f"{pool_size} candidate items exist"
                )
            rng = stage_rng(spec.seed, STAGE_NEGATIVES, user, _PART_KEY[name])
            drawn = _draw_excluding(rng, num_items, excluded, count)
            add_users.append(np.full(count, user, dtype=np.int64))
            add_items.append(drawn)
        if add_users:
            au = np.concatenate(add_users)
            ai = np.concatenate(add_items)
            new_sets[name] = InteractionSet(
                part.num_users,
                part.num_items,
                np.concatenate([part.users, au]),
                np.concatenate([part.items, ai]),
                np.concatenate([part.ratings, np.zeros(len(au))]),
                np.concatenate([part.relevance, np.zeros(len(au), dtype=np.int8)]),
                check=False,
            )
        else:
            new_sets[name] = part
    return PartitionedData(
        new_sets["train"], new_sets["validation"], new_sets["test"], spec
    )


_PART_KEY = {"train": 0, "validation": 1, "test": 2}


def _negative_count(partition, n_pos, spec):
    if spec.mode == MODE_HOLDOUT:
        return round_half_up(spec.nsr * n_pos)
    if partition == "train":
        return spec.negatives_per_positive * n_pos
    if n_pos == 0:
        return 0
    if n_pos > spec.eval_candidate_total:
        raise SamplingInfeasibleError(
            f"{n_pos} positives exceed the {spec.eval_candidate_total}-item "
            f"candidate budget"
        )
    return spec.eval_candidate_total - n_pos


def _draw_excluding(rng, num_items, excluded_sorted, count):
    """Sample ``count`` distinct items uniformly from the complement."""
    pool = np.setdiff1d(np.arange(num_items), excluded_sorted, assume_unique=True)
    return rng.choice(pool, size=count, replace=False)


def write_partitions(outdir, parts, id_maps=None):
    """Write partition files, id maps and a JSON manifest to ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    counts = {}
    for name, part in parts.partitions().items():
        path = outdir / f"{name}.csv"
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user", "item", "rating", "relevance"])
            for u, i, r, y in zip(part.users, part.items, part.ratings, part.relevance):
                writer.writerow([int(u), int(i), float(r), int(y)])
        counts[name] = {
            "records": int(len(part)),
            "positives": int(part.relevance.sum()),
            "negatives": int(len(part) - part.relevance.sum()),
        }
    if id_maps:
        for kind in ("users", "items"):
            with (outdir / f"id_map_{kind}.csv").open("w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["compact_id", "original_id"])
                for compact, original in enumerate(id_maps[kind]):
                    writer.writerow([compact, original])
    manifest = {
        "format_version": 1,
        "num_users": parts.num_users,
        "num_items": parts.num_items,
        "spec": parts.spec.to_dict(),
        "counts": counts,
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def read_partitions(datadir):
    """Load partitions written by ``write_partitions``."""
    datadir = Path(datadir)
    manifest = json.loads((datadir / "manifest.json").read_text())
    spec = SplitSpec.from_dict(manifest["spec"])
    sets = {}
    for name in ("train", "validation", "test"):
        users, items, ratings, relevance = [], [], [], []
        with (datadir / f"{name}.csv").open(encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                users.append(int(row[0]))
                items.append(int(row[1]))
                ratings.append(float(row[2]))
                relevance.append(int(row[3]))
        sets[name] = InteractionSet(
            manifest["num_users"],
            manifest["num_items"],
            users,
            items,
            ratings,
            relevance,
            check=False,
        )
    return PartitionedData(sets["train"], sets["validation"], sets["test"], spec)
