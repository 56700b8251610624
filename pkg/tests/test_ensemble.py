import numpy as np
import pytest

from mtattack.attacks import AdversarialCandidate
from mtattack.ensemble import (EnsembleConfig, bootstrap_indices, probability_change, select_final,
                               train_ensemble, transferability_scores)
from mtattack.errors import InvalidDataset
from mtattack.substitute import SubstituteModel, TrainingConfig, train
from mtattack.text import normalize_and_tokenize as T
from synthetic import LookupModel, brute_force_select, selection_fixture

FAST = TrainingConfig(epochs=1)


def cand(raw, method="hotflip"):
    return AdversarialCandidate(T(raw), method, 0.9, True, ())


def test_six_members_on_eighty_pairs(corpus):
    cfg = EnsembleConfig(w=6)
    models = train_ensemble(corpus, cfg, FAST)
    assert len(models) == 6
    labels = [y for _, y in corpus]
    for k in range(6):
        assert len(bootstrap_indices(len(corpus), cfg, k, labels)) == 80
        assert len(set(bootstrap_indices(len(corpus), cfg, k, labels))) == 80


def test_full_fraction_matches_primary(corpus):
    [member] = train_ensemble(corpus, EnsembleConfig(w=1, sample_fraction=1.0, base_seed=0), FAST)
    primary = train(corpus, TrainingConfig(epochs=1, seed=0))
    assert all(np.array_equal(getattr(member, k), getattr(primary, k)) for k in SubstituteModel.PARAMS)


def test_ensemble_deterministic(corpus):
    a = train_ensemble(corpus, EnsembleConfig(w=2), FAST)
    b = train_ensemble(corpus, EnsembleConfig(w=2), FAST)
    for ma, mb in zip(a, b):
        assert all(np.array_equal(getattr(ma, k), getattr(mb, k)) for k in SubstituteModel.PARAMS)


def test_too_small(corpus):
    with pytest.raises(InvalidDataset):
        train_ensemble(corpus[:9])


def test_single_label_sample_gives_up():
    labels = [0] * 99 + [1]
    with pytest.raises(InvalidDataset):
        bootstrap_indices(100, EnsembleConfig(sample_fraction=0.01), 0, labels)


def test_config_validation():
    with pytest.raises(ValueError):
        EnsembleConfig(w=0)
    with pytest.raises(ValueError):
        EnsembleConfig(sample_fraction=0)


class Parity:
    """Label = parity of the token count, offset by ``shift``."""

    def __init__(self, shift):
        self.shift = shift

    def predict(self, text):
        return (len(T(getattr(text, "raw", text)).words) + self.shift) % 2


def test_scores_by_hand():
    models = [Parity(0), Parity(1), Parity(0)]
    original = T("a b")
    cands = [cand("a b"), cand("a b c"), cand("a"), cand("a b c d")]
    I, totals = transferability_scores(models, original, cands)
    # changing token-count parity flips every model, keeping it flips none
    assert I.tolist() == [[0, 1, 1, 0]] * 3
    assert totals.tolist() == [0, 3, 3, 0]


def test_all_models_flipped():
    models = [LookupModel({"o": 0.9, "c": 0.1}) for _ in range(6)]
    _, totals = transferability_scores(models, T("o"), [cand("c")])
    assert totals.tolist() == [6]


def test_selection_arithmetic():
    # I = [3, 5, 5]; primary probability drops 0.4, 0.2, 0.6 from 0.9
    flips = {"c0": 3, "c1": 5, "c2": 5}
    models = [LookupModel({"o": 0.9, **{c: (0.1 if k < n else 0.9) for c, n in flips.items()}})
              for k in range(6)]
    primary = LookupModel({"o": 0.9, "c0": 0.5, "c1": 0.7, "c2": 0.3})
    r = select_final(primary, models, T("o"), [cand("c0"), cand("c1"), cand("c2")])
    assert r.h == 2
    assert list(r.scores) == [3, 5, 5]
    assert r.tie_break == pytest.approx((0.4, 0.2, 0.6))


def test_single_candidate_always_chosen():
    primary = LookupModel({"o": 0.9, "c": 0.95})
    r = select_final(primary, [LookupModel({"o": 0.9, "c": 0.9})], T("o"), [cand("c")])
    assert r.h == 0 and r.tie_break == (0.0,)


def test_no_candidates():
    r = select_final(LookupModel({}), [LookupModel({})], T("o"), [])
    assert r.chosen is None and r.h is None


def test_tie_goes_to_lower_method_ordinal():
    primary = LookupModel({"o": 0.9, "a": 0.3, "b": 0.3})
    models = [LookupModel({"o": 0.9, "a": 0.9, "b": 0.9})]
    r = select_final(primary, models, T("o"), [cand("a", "textbugger"), cand("b", "fd")])
    assert r.h == 1


def test_probability_change_bounds():
    assert probability_change(LookupModel({"o": 0.2, "c": 1.0}), T("o"), T("c")) < 1.0
    assert probability_change(LookupModel({"o": 0.9, "c": 0.95}), T("o"), T("c")) == 0.0
    assert probability_change(LookupModel({"o": 0.2, "c": 0.6}), T("o"), T("c")) == pytest.approx(0.4)


@pytest.mark.parametrize("seed", range(100))
def test_matches_exhaustive_oracle(seed):
    primary, models, original, cands = selection_fixture(seed)
    assert select_final(primary, models, original, cands).h == brute_force_select(primary, models, original, cands)
