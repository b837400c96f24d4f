"""
Define a suite a tests for the invariants module.
"""
import csv
from itertools import product

import pytest
import numpy as np

from spherebraid import BraidWord, SeifertMatrix, QuasimorphismValue
from spherebraid.invariants import InvariantError, NotPure, NonStabilized
from spherebraid.invariants import closure_signature, goeritz_signature
from spherebraid.invariants import exponent_sum, homogenize
from spherebraid.invariants import twist_signature_rate, twist_coefficient, twist_s_value
from spherebraid.invariants import s_quasimorphism, invariant_table, write_table_csv

# Closures with known signatures, positive crossings negative.
KNOWN = {"2: 1": 0,
         "2: 1 1": -1,
         "2: 1 1 1": -2,
         "2: -1 -1 -1": 2,
         "2: 1 1 1 1 1": -4,
         "3: 1 -2 1 -2": 0,
         "3: 1 2 1 2 1 2": -4,
         "3: 1 2 1 2 1 2 1 2": -6,
         "3: 1": 0,
         }


def test_known_signatures():
    """Torus links, the figure-eight knot and split unlinks.
    """
    for text, value in KNOWN.items():
        word = BraidWord.from_string(text)
        assert closure_signature(word) == value, text
        assert closure_signature(word, exact=False) == value, text
        assert goeritz_signature(word) == value, text


def test_seifert_matrix():
    v = SeifertMatrix.from_word(BraidWord(2, [1, 1, 1]))
    assert v.size == 2
    assert np.array_equal(v.entries, [[-1, 1], [0, -1]])
    assert np.array_equal(v.symmetrized, [[-2, 1], [1, -2]])
    assert v.signature() == -2
    assert v.__repr__() != ''
    assert SeifertMatrix.from_word(BraidWord(3)).signature() == 0

    with pytest.raises(InvariantError):
        SeifertMatrix([[1, 2, 3]])


def test_oracle_agreement():
    """The Seifert and Goeritz routes agree on every short word.
    """
    for strands in (2, 3):
        alphabet = [k * s for k in range(1, strands) for s in (1, -1)]
        for length in range(1, 5):
            for letters in product(alphabet, repeat=length):
                word = BraidWord(strands, letters)
                assert closure_signature(word) == goeritz_signature(word), str(word)


def test_link_invariance():
    """Conjugation and stabilization do not change the closure; the
    inverse word closes to the mirror image.
    """
    for seed in range(10):
        word = BraidWord.random(4, 7, seed=seed)
        sig = closure_signature(word)
        assert closure_signature(word.conjugate(BraidWord(4, [2, -3]))) == sig
        assert closure_signature(word.stabilize(1)) == sig
        assert closure_signature(word.stabilize(-1)) == sig
        assert closure_signature(word.inverse()) == -sig
        assert goeritz_signature(word) == sig


def test_exponent_sum():
    assert exponent_sum(BraidWord(3, [1, -2, 2, 2])) == 2
    assert exponent_sum(BraidWord.full_twist(4)) == 12


def test_homogenize():
    word = BraidWord(3, [1, 2, -1, 2])
    value = homogenize(exponent_sum, word)
    assert isinstance(value, QuasimorphismValue)
    assert value.value == pytest.approx(2)
    assert value.residual < 1e-9

    with pytest.raises(NonStabilized):
        homogenize(lambda w: len(w)**2, word)
    with pytest.raises(InvariantError):
        homogenize(exponent_sum, word, K=3)


def test_twists():
    assert twist_signature_rate(2) == -2
    assert twist_signature_rate(3) == -4
    assert twist_signature_rate(4) == -8
    assert twist_coefficient(2) == -1
    assert twist_coefficient(3) == pytest.approx(-2 / 3)
    assert np.allclose([twist_s_value(j, 3) for j in (1, 2, 3)], [0, -2 / 3, 0])
    assert np.allclose([twist_s_value(j, 5) for j in (1, 2, 3, 4, 5)], [0, -0.8, -0.4, -0.8, 0])
    with pytest.raises(InvariantError):
        twist_s_value(0, 3)


def test_s_quasimorphism():
    """s vanishes on the full twist and on two-strand braids.
    """
    for m in (2, 3):
        assert abs(s_quasimorphism(BraidWord.full_twist(m)).value) < 1e-9
    for k in (1, 2, 3):
        assert abs(s_quasimorphism(BraidWord(2, [1] * (2 * k))).value) < 1e-9

    # A twist of two adjacent strands among three.
    a = BraidWord(3, [1, 1])
    sa = s_quasimorphism(a, exact=True).value
    assert sa == pytest.approx(twist_s_value(2, 3))
    assert s_quasimorphism(a.inverse()).value == pytest.approx(-sa)

    # Homogeneity.
    assert s_quasimorphism(a ** 2).value == pytest.approx(2 * sa)

    with pytest.raises(NotPure):
        s_quasimorphism(BraidWord(3, [1]))


def test_table(tmp_path):
    words = [BraidWord(2, [1, 1, 1]), BraidWord(2, [1, 1])]
    rows = invariant_table(words)
    assert rows[0]['s'] is None
    assert rows[0]['signature'] == -2
    assert rows[1]['lk'] == 2
    assert rows[1]['s'] == pytest.approx(0, abs=1e-9)

    fname = tmp_path / 'table.csv'
    write_table_csv(rows, str(fname))
    with open(fname) as f:
        read = list(csv.DictReader(f))
    assert read[0]['word'] == "2: 1 1 1"
    assert read[0]['s'] == ''
