import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caia import (
    AdvantageTable,
    AttackTuple,
    AttributeSpace,
    ConfigurationError,
    EmptyAttackSetError,
    InMemoryLogitProvider,
    LogitBatch,
    MalformedTupleError,
    ProtocolError,
    accumulate,
    predict,
    relative_advantage,
    run_attack,
    tuple_advantage_matrix,
)
from conftest import make_tuples, records_from_matrix
from reference import brute_force_advantage

# Dyadic logits (multiples of 2^-10, magnitude < 2^11) make float addition
# exact, so shift invariance can be asserted bitwise.
dyadic = st.integers(min_value=-102_400, max_value=102_400).map(lambda n: n / 1024.0)


def space_of(k):
    return AttributeSpace("attr", tuple(f"v{i}" for i in range(k)))


class TestRelativeAdvantage:
    def test_hand_case_top_two_gap(self, hair_space):
        adv = relative_advantage(
            {"black": 2.18, "blond": 1.50, "brown": 2.35, "gray": 0.90}, hair_space
        )
        assert adv[2] == pytest.approx(0.17, abs=1e-12)
        assert adv[0] == adv[1] == adv[3] == 0.0

    def test_tied_maximum_is_all_zero(self):
        space = space_of(4)
        adv = relative_advantage({v: 1.0 for v in space.values}, space)
        assert (adv == 0.0).all()

    def test_negative_logits(self, gender_space):
        adv = relative_advantage({"female": -1.0, "male": -0.5}, gender_space)
        assert adv.tolist() == [0.0, 0.5]

    def test_missing_value_names_it(self, hair_space):
        with pytest.raises(MalformedTupleError, match="brown"):
            relative_advantage({"black": 1.0, "blond": 0.5, "gray": 0.2}, hair_space)

    def test_non_finite_logit_names_value(self, gender_space):
        with pytest.raises(MalformedTupleError, match="male"):
            relative_advantage({"female": 0.0, "male": float("nan")}, gender_space)
        with pytest.raises(MalformedTupleError, match="female"):
            relative_advantage({"female": float("inf"), "male": 0.0}, gender_space)

    def test_unknown_value_rejected(self, gender_space):
        with pytest.raises(MalformedTupleError, match="other"):
            relative_advantage(
                {"female": 0.0, "male": 1.0, "other": 2.0}, gender_space
            )

    @settings(max_examples=300)
    @given(
        k=st.sampled_from([2, 3, 4, 8]),
        data=st.data(),
    )
    def test_matches_brute_force_bitwise(self, k, data):
        logits = np.array(
            data.draw(
                st.lists(
                    st.floats(-1e6, 1e6, allow_nan=False), min_size=k, max_size=k
                )
            )
        )
        space = space_of(k)
        adv = relative_advantage(dict(zip(space.values, logits)), space)
        expected = brute_force_advantage(logits)
        assert (adv == expected).all()

    @settings(max_examples=200)
    @given(
        k=st.sampled_from([2, 3, 4, 8]),
        data=st.data(),
    )
    def test_sparsity(self, k, data):
        logits = data.draw(
            st.lists(st.floats(-1e9, 1e9, allow_nan=False), min_size=k, max_size=k)
        )
        space = space_of(k)
        adv = relative_advantage(dict(zip(space.values, logits)), space)
        assert (adv >= 0.0).all()
        assert np.count_nonzero(adv) <= 1

    @settings(max_examples=200)
    @given(k=st.sampled_from([2, 3, 4, 8]), shift=dyadic, data=st.data())
    def test_shift_invariance_exact_on_dyadics(self, k, shift, data):
        logits = np.array(data.draw(st.lists(dyadic, min_size=k, max_size=k)))
        space = space_of(k)
        before = relative_advantage(dict(zip(space.values, logits)), space)
        after = relative_advantage(dict(zip(space.values, logits + shift)), space)
        assert (before == after).all()

    @settings(max_examples=200)
    @given(
        k=st.sampled_from([2, 3, 4, 8]),
        shift=st.floats(-100, 100, allow_nan=False),
        data=st.data(),
    )
    def test_shift_invariance_approx_on_general_floats(self, k, shift, data):
        # (a+c)-(b+c) can differ from a-b by rounding, so general floats only
        # get invariance up to a few ulps of the shifted magnitude
        logits = np.array(
            data.draw(
                st.lists(st.floats(-100, 100, allow_nan=False), min_size=k, max_size=k)
            )
        )
        space = space_of(k)
        before = relative_advantage(dict(zip(space.values, logits)), space)
        after = relative_advantage(dict(zip(space.values, logits + shift)), space)
        assert np.allclose(before, after, rtol=0.0, atol=1e-9)

    @settings(max_examples=200)
    @given(k=st.sampled_from([2, 3, 4, 8]), data=st.data())
    def test_permutation_equivariance(self, k, data):
        logits = np.array(data.draw(st.lists(dyadic, min_size=k, max_size=k)))
        perm = data.draw(st.permutations(range(k)))
        space = space_of(k)
        permuted_space = AttributeSpace(
            "attr", tuple(space.values[p] for p in perm)
        )
        logit_map = dict(zip(space.values, logits))
        base = relative_advantage(logit_map, space)
        perm_adv = relative_advantage(logit_map, permuted_space)
        assert (perm_adv == np.array([base[p] for p in perm])).all()


class TestTupleAdvantageMatrix:
    def test_bitwise_equal_to_per_class_calls(self, rng, hair_space):
        matrix = rng.normal(0, 3, size=(4, 50))
        rows = tuple_advantage_matrix(matrix)
        for y in range(50):
            per_class = relative_advantage(
                dict(zip(hair_space.values, matrix[:, y])), hair_space
            )
            assert (rows[y] == per_class).all()

    def test_tie_column_zeroed(self):
        matrix = np.array([[1.0, 2.0], [1.0, 0.5], [0.0, 2.0]])
        rows = tuple_advantage_matrix(matrix)
        assert (rows[0] == 0.0).all()  # class 0: values 0 and 1 tie at 1.0
        assert rows[1].tolist() == [0.0, 0.0, 0.0] or rows[1][0] == 0.0
        # class 1: values 0 and 2 tie at 2.0 -> all zeros
        assert (rows[1] == 0.0).all()

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            tuple_advantage_matrix(np.zeros(4))
        with pytest.raises(ValueError):
            tuple_advantage_matrix(np.zeros((1, 10)))


class TestAccumulate:
    def test_additive_identity(self):
        table = AdvantageTable.zeros(3, 4)
        accumulate(table, 0, np.array([0, 0, 0.17, 0]))
        assert table.totals[0].tolist() == [0, 0, 0.17, 0]
        assert (table.totals[1:] == 0).all()

    def test_elementwise_sum(self):
        table = AdvantageTable.zeros(1, 4)
        accumulate(table, 0, np.array([0, 0, 0.17, 0]))
        accumulate(table, 0, np.array([0.03, 0, 0, 0]))
        assert table.totals[0] == pytest.approx([0.03, 0, 0.17, 0], abs=0)

    def test_repeated_addition_exact_when_representable(self):
        table = AdvantageTable.zeros(1, 2)
        vec = np.array([0.25, 0.0])
        for _ in range(8):
            accumulate(table, 0, vec)
        assert (table.totals[0] == 8 * vec).all()

    def test_out_of_range_class(self):
        table = AdvantageTable.zeros(2, 2)
        with pytest.raises(IndexError):
            accumulate(table, 2, np.zeros(2))
        with pytest.raises(IndexError):
            accumulate(table, -1, np.zeros(2))

    def test_wrong_length(self):
        table = AdvantageTable.zeros(2, 2)
        with pytest.raises(ValueError):
            accumulate(table, 0, np.zeros(3))


class TestPredict:
    def test_hand_argmax(self, hair_space):
        table = AdvantageTable(
            totals=np.array([[0.3, 0.1, 1.2, 0.0]]), tuples_seen=5
        )
        [p] = predict(table, hair_space)
        assert p.predicted_value == "brown"
        assert not p.tie
        assert p.advantage_totals == {
            "black": 0.3, "blond": 0.1, "brown": 1.2, "gray": 0.0
        }

    def test_all_zero_totals_tie_to_first_value(self, hair_space):
        table = AdvantageTable(totals=np.zeros((2, 4)), tuples_seen=1)
        preds = predict(table, hair_space)
        assert all(p.predicted_value == "black" and p.tie for p in preds)

    def test_exact_two_way_tie(self, gender_space):
        table = AdvantageTable(totals=np.array([[5.0, 5.0]]), tuples_seen=3)
        [p] = predict(table, gender_space)
        assert p.predicted_value == "female"
        assert p.tie

    def test_empty_table_rejected(self, hair_space):
        table = AdvantageTable.zeros(4, 4)
        with pytest.raises(EmptyAttackSetError):
            predict(table, hair_space)

    def test_permutation_equivariance_of_prediction(self, rng):
        space = space_of(4)
        totals = rng.normal(0, 1, size=(20, 4)) ** 2
        table = AdvantageTable(totals=totals.copy(), tuples_seen=1)
        preds = predict(table, space)
        perm = [2, 0, 3, 1]
        permuted_space = AttributeSpace("attr", tuple(space.values[p] for p in perm))
        table_p = AdvantageTable(totals=totals[:, perm].copy(), tuples_seen=1)
        preds_p = predict(table_p, permuted_space)
        for a, b in zip(preds, preds_p):
            assert a.predicted_value == b.predicted_value
            assert a.tie == b.tie


class TestRunAttack:
    def _provider(self, space, tuples, rng, num_classes=10):
        matrices = [
            rng.normal(0, 2, size=(space.k, num_classes)) for _ in tuples
        ]
        records = records_from_matrix(space, tuples, matrices)
        return InMemoryLogitProvider(records, num_classes), matrices

    def test_deterministic_and_order_independent(self, hair_space, rng):
        tuples = make_tuples(hair_space, 12)
        provider, _ = self._provider(hair_space, tuples, rng)
        first = run_attack(tuples, provider, hair_space)
        second = run_attack(list(reversed(tuples)), provider, hair_space)
        assert (first.table.totals == second.table.totals).all()
        assert first.predictions == second.predictions

    def test_matches_manual_accumulation(self, hair_space, rng):
        tuples = make_tuples(hair_space, 7)
        provider, matrices = self._provider(hair_space, tuples, rng)
        result = run_attack(tuples, provider, hair_space)
        manual = np.zeros((10, 4))
        for matrix in matrices:
            manual += tuple_advantage_matrix(matrix)
        assert (result.table.totals == manual).all()
        assert result.table.tuples_seen == 7

    def test_sample_limit_uses_first_by_tuple_id(self, hair_space, rng):
        tuples = make_tuples(hair_space, 6)
        provider, matrices = self._provider(hair_space, tuples, rng)
        result = run_attack(
            list(reversed(tuples)), provider, hair_space, sample_limit=2
        )
        manual = tuple_advantage_matrix(matrices[0]) + tuple_advantage_matrix(
            matrices[1]
        )
        assert (result.table.totals == manual).all()

    def test_sample_limit_bounds(self, hair_space, rng):
        tuples = make_tuples(hair_space, 3)
        provider, _ = self._provider(hair_space, tuples, rng)
        for bad in (0, 4, -1):
            with pytest.raises(ConfigurationError):
                run_attack(tuples, provider, hair_space, sample_limit=bad)

    def test_broken_tuple_skipped_whole(self, hair_space, rng):
        tuples = make_tuples(hair_space, 4)
        matrices = [rng.normal(size=(4, 10)) for _ in tuples]
        records = records_from_matrix(hair_space, tuples, matrices)
        # drop one value of tuple 1: the whole tuple must be skipped
        records = [
            r for r in records if not (r.tuple_id == "t00001" and r.value == "brown")
        ]
        provider = InMemoryLogitProvider(records, 10)
        result = run_attack(tuples, provider, hair_space)
        assert [tid for tid, _ in result.skipped] == ["t00001"]
        manual = sum(
            tuple_advantage_matrix(m)
            for i, m in enumerate(matrices)
            if i != 1
        )
        assert (result.table.totals == manual).all()
        assert result.table.tuples_seen == 3

    def test_all_tuples_skipped(self, hair_space):
        tuples = make_tuples(hair_space, 2)
        provider = InMemoryLogitProvider([], 10)
        with pytest.raises(EmptyAttackSetError):
            run_attack(tuples, provider, hair_space)

    def test_empty_attack_set(self, hair_space, rng):
        provider = InMemoryLogitProvider([], 10)
        with pytest.raises(EmptyAttackSetError):
            run_attack([], provider, hair_space)

    def test_duplicate_tuple_ids_rejected(self, hair_space, rng):
        tuples = make_tuples(hair_space, 2)
        dupes = tuples + [tuples[0]]
        provider, _ = self._provider(hair_space, tuples, rng)
        with pytest.raises(ConfigurationError, match="duplicate"):
            run_attack(dupes, provider, hair_space)

    def test_class_count_mismatch_is_protocol_error(self, hair_space, rng):
        tuples = make_tuples(hair_space, 2)

        class ShrinkingProvider:
            num_classes = 10

            def __init__(self):
                self.calls = 0

            def fetch(self, requests):
                self.calls += 1
                width = 10 if self.calls == 1 else 7
                keys = tuple((r.tuple_id, r.value) for r in requests)
                return LogitBatch(keys=keys, matrix=np.zeros((len(keys), width)))

        with pytest.raises(ProtocolError):
            run_attack(tuples, ShrinkingProvider(), hair_space)

    def test_single_pass_sufficiency(self, hair_space, rng):
        tuples = make_tuples(hair_space, 5)
        provider, _ = self._provider(hair_space, tuples, rng)
        counting: dict[tuple[str, str], int] = {}
        original_fetch = provider.fetch

        def counted(requests):
            for r in requests:
                counting[(r.tuple_id, r.value)] = (
                    counting.get((r.tuple_id, r.value), 0) + 1
                )
            return original_fetch(requests)

        provider.fetch = counted
        run_attack(tuples, provider, hair_space)
        assert len(counting) == 5 * hair_space.k
        assert all(count == 1 for count in counting.values())

    def test_tuple_with_wrong_images_rejected(self, hair_space, rng):
        tuples = make_tuples(hair_space, 1)
        broken = AttackTuple("t9", images={"black": "x"})
        provider, _ = self._provider(hair_space, tuples, rng)
        with pytest.raises(ConfigurationError):
            run_attack([broken], provider, hair_space)


class TestLogitBatchValidation:
    def test_non_finite_rejected(self):
        with pytest.raises(ProtocolError):
            LogitBatch(keys=(("t", "v"),), matrix=np.array([[np.nan, 1.0]]))

    def test_row_count_mismatch_rejected(self):
        with pytest.raises(ProtocolError):
            LogitBatch(keys=(("t", "v"),), matrix=np.zeros((2, 3)))


class TestAttributeSpace:
    def test_requires_two_values(self):
        with pytest.raises(ConfigurationError):
            AttributeSpace("a", ("only",))

    def test_rejects_duplicates_and_empty(self):
        with pytest.raises(ConfigurationError):
            AttributeSpace("a", ("x", "x"))
        with pytest.raises(ConfigurationError):
            AttributeSpace("a", ("x", ""))

    def test_prompts_must_match_values(self):
        with pytest.raises(ConfigurationError):
            AttributeSpace("a", ("x", "y"), prompts={"z": "p"})
