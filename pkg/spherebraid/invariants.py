"""
Link invariants of braid closures and the braid quasimorphisms built from
them.

Signs are fixed so that the closure of σ_1^3, the positive trefoil, has
signature -2.

:copyright: 2026 The spherebraid authors
:license: Apache 2.0
"""
from bisect import bisect_left
from collections import namedtuple
import csv
from functools import lru_cache
import logging

import numpy as np

from .braid import BraidWord
from .defaults import CONVENTIONS
from .utils import affine_fit
from .utils import exact_signature
from .utils import float_signature

log = logging.getLogger(__name__)


class InvariantError(Exception):
    """
    Generic error class.
    """
    pass


class NotPure(InvariantError):
    pass


class NonStabilized(InvariantError):
    pass


QuasimorphismValue = namedtuple('QuasimorphismValue', ['value', 'defect_witness', 'residual'])
QuasimorphismValue.__new__.__defaults__ = (None, 0.0)


class SeifertMatrix:
    """
    The Seifert matrix of the Bennequin surface of a braid closure: one disk
    per strand and one band per letter. The basis of the first homology is
    the loops through consecutive bands at the same level.

    Args:
        entries (array-like): A square integer matrix.
        loops (list): The (level, first band, second band) of each basis
            loop, if known.
    """
    def __init__(self, entries, loops=None):
        entries = np.array(entries, dtype=int)
        if entries.size == 0:
            entries = entries.reshape(0, 0)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvariantError("A Seifert matrix must be square.")
        self.entries = entries
        self.loops = loops

    def __repr__(self):
        return "SeifertMatrix(size={})".format(self.size)

    @property
    def size(self):
        return self.entries.shape[0]

    @property
    def symmetrized(self):
        return self.entries + self.entries.T

    def signature(self, exact=True):
        if self.size == 0:
            return 0
        if exact:
            return exact_signature(self.symmetrized)
        return float_signature(self.symmetrized)

    @classmethod
    def from_word(cls, word):
        """
        Build the matrix from linking numbers of pushed-off loops.
        """
        bands = {}
        for pos, letter in enumerate(word.letters):
            bands.setdefault(abs(letter), []).append((pos, 1 if letter > 0 else -1))

        loops, signs = [], []
        for level in sorted(bands):
            seq = bands[level]
            for (a, ea), (b, eb) in zip(seq[:-1], seq[1:]):
                loops.append((level, a, b))
                signs.append((ea, eb))

        size = len(loops)
        v = np.zeros((size, size), dtype=int)
        for k, (level, a, b) in enumerate(loops):
            ea, eb = signs[k]
            v[k, k] = -(ea + eb) // 2
            if k + 1 < size and loops[k + 1][0] == level and loops[k + 1][1] == b:
                v[k, k + 1] = (eb + 1) // 2
                v[k + 1, k] = (eb - 1) // 2
        for k, (level, a, b) in enumerate(loops):
            for l, (other, c, d) in enumerate(loops):
                if other != level + 1:
                    continue
                if a < c < b < d:
                    v[k, l] = -1
                elif c < a < d < b:
                    v[l, k] = 1
        return cls(v, loops)


def closure_signature(word, exact=True):
    """
    Signature of the closure of a braid word.

    Args:
        word (BraidWord): The braid.
        exact (bool): Rational congruence diagonalization if True, otherwise
            eigenvalues.

    Returns:
        int.
    """
    return SeifertMatrix.from_word(word).signature(exact=exact)


def _blocks(word):
    """
    Maximal runs of consecutive generator indices used by the word.
    """
    used = sorted(set(abs(l) for l in word.letters))
    blocks = []
    for i in used:
        if blocks and blocks[-1][1] == i - 1:
            blocks[-1][1] = i
        else:
            blocks.append([i, i])
    return blocks


def goeritz_signature(word):
    """
    Signature of the closure of a braid word from a Goeritz matrix of its
    checkerboard-coloured closure diagram, with the Gordon-Litherland
    correction. Independent of the Seifert-matrix route.

    Returns:
        int.
    """
    total = 0
    for lo, hi in _blocks(word):
        letters = [(t, abs(l), 1 if l > 0 else -1)
                   for t, l in enumerate(word.letters) if lo <= abs(l) <= hi]
        times = {lvl: [t for t, i, _ in letters if i == lvl] for lvl in range(lo, hi + 1)}

        # White regions are the even levels between the bounding levels.
        index = {}
        for lvl in range(lo - 1, hi + 2):
            if lvl % 2:
                continue
            k = len(times.get(lvl, [])) or 1
            for r in range(k):
                index[(lvl, r)] = len(index)

        def region(lvl, t):
            ts = times.get(lvl, [])
            if not ts:
                return index[(lvl, 0)]
            return index[(lvl, bisect_left(ts, t) % len(ts))]

        g = np.zeros((len(index), len(index)))
        mu = 0
        for t, i, sign in letters:
            if i % 2:
                a, b = region(i - 1, t), region(i + 1, t)
                eta = sign
                mu += eta
            else:
                p = bisect_left(times[i], t)
                a = index[(i, p % len(times[i]))]
                b = index[(i, (p + 1) % len(times[i]))]
                eta = -sign
            if a != b:
                g[a, b] -= eta
                g[b, a] -= eta
        g -= np.diag(g.sum(axis=1))
        reduced = g[1:, 1:]
        sig = 0
        if reduced.size:
            eig = np.linalg.eigvalsh(reduced)
            sig = int(np.sum(eig > 1e-9) - np.sum(eig < -1e-9))
        total += sig - mu
    return total


def exponent_sum(word):
    """
    The sum of the letter signs: the homomorphism taking every Artin
    generator to 1.
    """
    return word.exponent_sum


def homogenize(f, word, K=None, tol=None):
    """
    Slope of ``f(word**k)`` against ``k``.

    The fit uses k = 1..K. If the full sequence is not affine to
    tolerance, its second half is fitted instead, since the sequences here
    become affine after a few powers.

    Args:
        f (callable): An invariant of braid words.
        word (BraidWord): The braid.
        K (int): Depth, at least 4.
        tol (float): Allowed residual per step.

    Returns:
        QuasimorphismValue.
    """
    K = K or CONVENTIONS['homogenize_depth']
    tol = CONVENTIONS['homogenize_tol'] if tol is None else tol
    if K < 4:
        raise InvariantError("Homogenization needs K >= 4.")
    k = np.arange(1, K + 1)
    values = np.array([f(word**j) for j in k], dtype=float)
    fit = affine_fit(k, values)
    residual = fit.residual / K
    if residual > tol:
        tail = K // 2
        fit = affine_fit(k[tail - 1:], values[tail - 1:])
        residual = fit.residual / K
        if residual > tol:
            m = "f(word**k) is not affine in k up to {} (residual {:.3g} per step)."
            raise NonStabilized(m.format(K, residual))
        log.debug("Homogenized on the tail k >= %d.", tail)
    return QuasimorphismValue(float(fit.slope), None, float(residual))


def twist_signature_rate(strands):
    """
    Homogenized signature of the full twist on ``strands`` strands.
    """
    k = int(strands)
    if k % 2:
        return -(k * k - 1) / 2
    return -k * k / 2


def twist_coefficient(strands):
    """
    The ratio of homogenized signature to exponent sum of the full twist.
    """
    m = int(strands)
    return twist_signature_rate(m) / (m * (m - 1))


def twist_s_value(j, strands):
    """
    The s-quasimorphism on ``strands`` strands of the full twist of ``j``
    adjacent strands.
    """
    if not 1 <= j <= strands:
        raise InvariantError("Need 1 <= j <= strands.")
    return twist_signature_rate(j) - twist_coefficient(strands) * j * (j - 1)


@lru_cache(maxsize=4096)
def _homogenized_signature(word, K, exact):
    def f(w):
        return closure_signature(w, exact=exact)
    return homogenize(f, word, K=K)


def s_quasimorphism(alpha, K=None, exact=False):
    """
    The quasimorphism on pure braids: homogenized signature minus the
    multiple of the exponent sum that vanishes on the full twist.

    Args:
        alpha (BraidWord): A pure braid.
        K (int): Homogenization depth.
        exact (bool): Use exact signatures.

    Returns:
        QuasimorphismValue.
    """
    if not alpha.is_pure:
        raise NotPure("s is only defined on pure braids; got {}.".format(alpha))
    K = K or CONVENTIONS['homogenize_depth']
    alpha = alpha.free_reduce()
    sig = _homogenized_signature(alpha, K, exact)
    value = sig.value - twist_coefficient(alpha.strands) * alpha.exponent_sum
    return QuasimorphismValue(value, None, sig.residual)


def invariant_table(words, K=None):
    """
    One row per word: text form, strands, exponent sum, signature and the
    s-value when the word is pure.
    """
    rows = []
    for word in words:
        s = s_quasimorphism(word, K=K).value if word.is_pure else None
        rows.append({'word': str(word),
                     'strands': word.strands,
                     'lk': word.exponent_sum,
                     'signature': closure_signature(word),
                     's': s,
                     })
    return rows


def write_table_csv(rows, filename):
    fields = ['word', 'strands', 'lk', 'signature', 's']
    with open(filename, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: '' if row[k] is None else row[k] for k in fields})
