import pytest

from argal.metrics import macro_f1, sequence_macro_f1


class TestSequenceMacroF1:
    def test_hand_example(self):
        # PRO: tp=1 fp=1 fn=0 -> 2/3; NON: tp=0 fp=0 fn=1 -> 0; CON skipped
        assert sequence_macro_f1(["PRO", "NON"], ["PRO", "PRO"]) == pytest.approx(1.0 / 3)

    def test_perfect(self):
        assert sequence_macro_f1(["PRO", "CON", "NON"], ["PRO", "CON", "NON"]) == 1.0

    def test_disjoint_classes(self):
        assert sequence_macro_f1(["PRO", "PRO"], ["CON", "CON"]) == 0.0

    def test_absent_class_skipped(self):
        # only NON occurs anywhere -> macro over {NON} = 1.0
        assert sequence_macro_f1(["NON", "NON"], ["NON", "NON"]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            sequence_macro_f1(["NON"], ["NON", "NON"])


class TestMacroF1:
    def test_mean_over_sequences(self):
        golds = [["PRO", "NON"], ["NON", "NON"]]
        preds = [["PRO", "PRO"], ["NON", "NON"]]
        assert macro_f1(golds, preds) == pytest.approx((1.0 / 3 + 1.0) / 2)

    def test_order_invariant(self):
        golds = [["PRO"], ["CON"], ["NON", "PRO"]]
        preds = [["NON"], ["CON"], ["NON", "NON"]]
        a = macro_f1(golds, preds)
        b = macro_f1(golds[::-1], preds[::-1])
        assert a == pytest.approx(b)

    def test_range(self):
        import numpy as np

        rng = np.random.default_rng(0)
        labels = ["PRO", "CON", "NON"]
        for _ in range(50):
            T = int(rng.integers(1, 7))
            gold = [labels[i] for i in rng.integers(0, 3, size=T)]
            pred = [labels[i] for i in rng.integers(0, 3, size=T)]
            value = sequence_macro_f1(gold, pred)
            assert 0.0 <= value <= 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            macro_f1([], [])
