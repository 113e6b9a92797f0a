import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankrec.data import (
    Interaction,
    InteractionSet,
    SplitSpec,
    binarize,
    filter_min_relevant,
    load_interactions,
    read_partitions,
    sample_negatives,
    split,
    write_partitions,
)
from rankrec.errors import (
    ConfigurationError,
    DataFormatError,
    EmptyDatasetError,
    ProtocolError,
    SamplingInfeasibleError,
)


def make_set(rows, num_users=None, num_items=None):
    users = [r[0] for r in rows]
    items = [r[1] for r in rows]
    ratings = [r[2] for r in rows]
    relevance = [r[3] if len(r) > 3 else 0 for r in rows]
    return InteractionSet(
        num_users if num_users is not None else max(users) + 1,
        num_items if num_items is not None else max(items) + 1,
        users,
        items,
        ratings,
        relevance,
    )


def uniform_positives(num_users, num_items, per_user, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for u in range(num_users):
        for i in rng.choice(num_items, size=per_user, replace=False):
            rows.append((u, int(i), 5.0, 1))
    return make_set(rows, num_users, num_items)


class TestLoadInteractions:
    def test_basic_counts(self):
        text = "u1,i1,5\nu1,i2,3\nu2,i1,4\n"
        dataset, maps = load_interactions(io.StringIO(text))
        assert dataset.num_users == 2 and dataset.num_items == 2
        assert len(dataset) == 3
        assert maps["users"] == ["u1", "u2"]

    def test_parse_error_reports_line(self):
        text = "u1,i1,5\nu1,i2,notanumber\n"
        with pytest.raises(DataFormatError) as exc:
            load_interactions(io.StringIO(text))
        assert "line 2" in str(exc.value)

    def test_first_seen_compaction(self):
        text = "A,x,1\nB,y,1\nA,z,1\n"
        dataset, maps = load_interactions(io.StringIO(text))
        assert maps["users"] == ["A", "B"]
        assert dataset.users.tolist() == [0, 1, 0]

    def test_duplicate_pair_rejected(self):
        text = "u1,i1,5\nu1,i1,3\n"
        with pytest.raises(DataFormatError) as exc:
            load_interactions(io.StringIO(text))
        assert "duplicate" in str(exc.value)

    def test_tab_delimiter_sniffed(self):
        text = "u1\ti1\t5\nu2\ti2\t4\n"
        dataset, _ = load_interactions(io.StringIO(text))
        assert len(dataset) == 2

    def test_header_skipped_when_rating_not_numeric(self):
        text = "user,item,rating\nu1,i1,5\n"
        dataset, _ = load_interactions(io.StringIO(text))
        assert len(dataset) == 1

    def test_named_schema(self):
        text = "rating,item,user\n5,i1,u1\n4,i2,u2\n"
        dataset, _ = load_interactions(
            io.StringIO(text), schema={"user": "user", "item": "item", "rating": "rating"}
        )
        assert dataset.num_users == 2
        assert dataset.ratings.tolist() == [5.0, 4.0]

    def test_unary_schema_defaults_rating_one(self):
        text = "u1,i1\nu2,i2\n"
        dataset, _ = load_interactions(io.StringIO(text), schema={"user": 0, "item": 1})
        assert dataset.ratings.tolist() == [1.0, 1.0]

    def test_empty_file(self):
        with pytest.raises(EmptyDatasetError):
            load_interactions(io.StringIO(""))

    def test_timestamp_column_ignored(self):
        text = "u1,i1,5,123456\nu2,i2,4,123457\n"
        dataset, _ = load_interactions(io.StringIO(text))
        assert len(dataset) == 2


class TestBinarize:
    def test_threshold_four(self):
        ds = make_set([(0, 0, 5.0), (0, 1, 4.0), (1, 0, 3.0), (1, 1, 1.0)])
        out = binarize(ds, 4.0)
        assert out.relevance.tolist() == [1, 1, 0, 0]

    def test_unary_all_relevant(self):
        ds = make_set([(0, 0, 1.0), (1, 1, 1.0)])
        assert binarize(ds, 1.0).relevance.tolist() == [1, 1]

    def test_empty_set(self):
        ds = InteractionSet(2, 2, [], [], [], [])
        assert len(binarize(ds, 4.0)) == 0


class TestFilterMinRelevant:
    def test_threshold_keeps_only_active_users(self):
        rows = [(0, i, 5.0, 1) for i in range(30)] + [(1, i, 5.0, 1) for i in range(10)]
        ds = make_set(rows, 2, 40)
        out, kept = filter_min_relevant(ds, 25)
        assert out.num_users == 1
        assert kept.tolist() == [0]
        assert out.num_items == 40  # item space preserved

    def test_boundary_inclusive(self):
        rows = [(u, i, 5.0, 1) for u in range(3) for i in range(5)]
        ds = make_set(rows, 3, 5)
        out, kept = filter_min_relevant(ds, 5)
        assert out.num_users == 3

    def test_identity_when_all_qualify(self):
        ds = uniform_positives(4, 20, 6)
        out, kept = filter_min_relevant(ds, 1)
        assert out.num_users == 4 and len(out) == len(ds)

    def test_empty_result_raises(self):
        ds = uniform_positives(3, 20, 4)
        with pytest.raises(EmptyDatasetError):
            filter_min_relevant(ds, 100)


class TestSplit:
    def test_holdout_80_20(self):
        ds = uniform_positives(3, 100, 25)
        spec = SplitSpec("fraction-80-20", nsr=1.0, seed=1)
        parts = split(ds, spec)
        for u in range(3):
            assert len(parts.train.relevant_items(u)) == 20
            assert len(parts.test.relevant_items(u)) == 5
        assert len(parts.validation) == 0

    def test_even_thirds(self):
        ds = uniform_positives(2, 60, 15)
        spec = SplitSpec("even-thirds", seed=1)
        parts = split(ds, spec)
        for u in range(2):
            for part in (parts.train, parts.validation, parts.test):
                assert len(part.relevant_items(u)) == 5

    def test_cap_then_split_proportions(self):
        ds = uniform_positives(1, 400, 230)
        spec = SplitSpec("even-thirds", relevant_cap=200, seed=3)
        parts = split(ds, spec)
        sizes = [
            len(parts.train.relevant_items(0)),
            len(parts.validation.relevant_items(0)),
            len(parts.test.relevant_items(0)),
        ]
        assert sum(sizes) == 200
        assert sizes == [67, 67, 66]  # remainder goes train-first, then validation

    def test_user_below_minimum_named(self):
        ds = uniform_positives(2, 60, 14)
        spec = SplitSpec("even-thirds", seed=0)
        with pytest.raises(ProtocolError) as exc:
            split(ds, spec)
        assert "user 0" in str(exc.value)

    def test_validation_carve(self):
        ds = uniform_positives(2, 200, 50)
        spec = SplitSpec("fraction-80-20", nsr=1.0, val_fraction=0.1, seed=2)
        parts = split(ds, spec)
        for u in range(2):
            assert len(parts.validation.relevant_items(u)) == 5
            assert len(parts.train.relevant_items(u)) == 35
            assert len(parts.test.relevant_items(u)) == 10

    def test_proportional_mode(self):
        ds = uniform_positives(2, 120, 18)
        spec = SplitSpec(
            "proportional", partition_minimums=(16, 1, 1), eval_candidate_total=40, seed=4
        )
        parts = split(ds, spec)
        for u in range(2):
            assert len(parts.train.relevant_items(u)) == 16
            assert len(parts.validation.relevant_items(u)) == 1
            assert len(parts.test.relevant_items(u)) == 1

    def test_spec_validation(self):
        with pytest.raises(ConfigurationError):
            SplitSpec("fraction-80-20")  # nsr missing
        with pytest.raises(ConfigurationError):
            SplitSpec("even-thirds", nsr=1.0)
        with pytest.raises(ConfigurationError):
            SplitSpec("proportional")
        with pytest.raises(ConfigurationError):
            SplitSpec("leave-one-out")


class TestSampleNegatives:
    def test_holdout_counts(self):
        ds = uniform_positives(2, 300, 25)
        spec = SplitSpec("fraction-80-20", nsr=2.0, seed=5)
        parts = sample_negatives(split(ds, spec))
        for u in range(2):
            items, labels = parts.train.user_candidates(u)
            assert labels.sum() == 20 and (labels == 0).sum() == 40
            items, labels = parts.test.user_candidates(u)
            assert labels.sum() == 5 and (labels == 0).sum() == 10

    def test_nsr_one(self):
        ds = uniform_positives(1, 300, 25)
        spec = SplitSpec("fraction-80-20", nsr=1.0, seed=5)
        parts = sample_negatives(split(ds, spec))
        items, labels = parts.train.user_candidates(0)
        assert (labels == 0).sum() == 20

    def test_thirds_candidate_padding(self):
        ds = uniform_positives(2, 700, 15)
        spec = SplitSpec("even-thirds", eval_candidate_total=500, seed=6)
        parts = sample_negatives(split(ds, spec))
        for u in range(2):
            for part in (parts.validation, parts.test):
                items, labels = part.user_candidates(u)
                assert len(items) == 500
                assert labels.sum() == 5 and (labels == 0).sum() == 495
            items, labels = parts.train.user_candidates(u)
            assert (labels == 0).sum() == 4 * 5

    def test_pool_exhaustion(self):
        ds = uniform_positives(1, 30, 25)
        spec = SplitSpec("fraction-80-20", nsr=2.0, seed=7)
        with pytest.raises(SamplingInfeasibleError):
            sample_negatives(split(ds, spec))

    def test_rated_negative_items_stay_in_pool(self):
        # items rated below threshold may be sampled as negatives
        rows = [(0, i, 5.0, 1) for i in range(25)] + [(0, 25, 2.0, 0)]
        ds = make_set(rows, 1, 51)
        spec = SplitSpec("fraction-80-20", nsr=1.0, seed=8)
        parts = sample_negatives(split(ds, spec))
        sampled = set()
        for part in parts.partitions().values():
            items, labels = part.user_candidates(0)
            sampled |= set(items[labels == 0].tolist())
        assert sampled <= set(range(25, 51))


@st.composite
def split_scenarios(draw):
    num_users = draw(st.integers(1, 4))
    mode = draw(st.sampled_from(["fraction-80-20", "even-thirds"]))
    per_user = draw(st.integers(25, 40) if mode == "fraction-80-20" else st.integers(15, 30))
    seed = draw(st.integers(0, 2**20))
    if mode == "fraction-80-20":
        nsr = draw(st.sampled_from([1.0, 2.0, 5.0]))
        spec = SplitSpec(mode, nsr=nsr, seed=seed)
        num_items = int(per_user * (1 + nsr) * 2) + 10
    else:
        spec = SplitSpec(mode, eval_candidate_total=40, seed=seed)
        num_items = 8 * per_user + 50
    return num_users, num_items, per_user, spec


class TestSplitProperties:
    @given(split_scenarios())
    @settings(max_examples=40, deadline=None)
    def test_determinism_disjointness_counts_minimums(self, scenario):
        num_users, num_items, per_user, spec = scenario
        ds = uniform_positives(num_users, num_items, per_user, seed=spec.seed % 97)
        parts = sample_negatives(split(ds, spec))
        again = sample_negatives(split(ds, spec))
        # bit-identical under the same seed
        for name in ("train", "validation", "test"):
            a, b = parts.partitions()[name], again.partitions()[name]
            np.testing.assert_array_equal(a.users, b.users)
            np.testing.assert_array_equal(a.items, b.items)
            np.testing.assert_array_equal(a.relevance, b.relevance)
        mins = spec.partition_min_counts()
        for u in range(num_users):
            rel = {
                name: set(part.relevant_items(u).tolist())
                for name, part in parts.partitions().items()
            }
            assert not (rel["train"] & rel["test"])
            assert not (rel["train"] & rel["validation"])
            assert not (rel["validation"] & rel["test"])
            all_relevant = rel["train"] | rel["validation"] | rel["test"]
            for name, part in parts.partitions().items():
                items, labels = part.user_candidates(u)
                negatives = set(items[labels == 0].tolist())
                assert not (negatives & all_relevant)
                # negatives are distinct within a partition
                assert len(negatives) == int((labels == 0).sum())
                n_pos = int(labels.sum())
                if spec.mode == "fraction-80-20":
                    assert (labels == 0).sum() == int(np.floor(spec.nsr * n_pos + 0.5))
                elif name != "train":
                    assert len(items) == spec.eval_candidate_total
                if len(items):
                    assert n_pos >= mins[name]


class TestPartitionIO:
    def test_round_trip(self, tmp_path):
        ds = uniform_positives(3, 200, 15)
        spec = SplitSpec("even-thirds", eval_candidate_total=40, seed=9)
        parts = sample_negatives(split(ds, spec))
        maps = {"users": [f"u{k}" for k in range(3)], "items": [f"i{k}" for k in range(200)]}
        manifest = write_partitions(tmp_path, parts, maps)
        assert manifest["counts"]["train"]["positives"] == 3 * 5
        loaded = read_partitions(tmp_path)
        assert loaded.spec == spec
        for name in ("train", "validation", "test"):
            a, b = parts.partitions()[name], loaded.partitions()[name]
            np.testing.assert_array_equal(a.users, b.users)
            np.testing.assert_array_equal(a.items, b.items)
            np.testing.assert_array_equal(a.ratings, b.ratings)
            np.testing.assert_array_equal(a.relevance, b.relevance)


class TestInteractionSet:
    def test_duplicate_records_rejected(self):
        with pytest.raises(DataFormatError):
            make_set([(0, 0, 1.0), (0, 0, 2.0)])

    def test_out_of_range_rejected(self):
        with pytest.raises(DataFormatError):
            InteractionSet(1, 1, [0], [3], [1.0], [0])

    def test_per_user_index_partitions_records(self):
        ds = make_set([(0, 0, 1.0), (1, 1, 1.0), (0, 2, 1.0)], 2, 3)
        index = ds.per_user_index
        assert sorted(np.concatenate(index).tolist()) == [0, 1, 2]
        assert index[0].tolist() == [0, 2]

    def test_records_round_trip(self):
        records = [Interaction(0, 1, 5.0, 1), Interaction(1, 0, 2.0, 0)]
        ds = InteractionSet.from_records(2, 2, records)
        assert ds.records == records
