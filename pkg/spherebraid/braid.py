"""
Braid words, planar loops and diagram extraction.

A planar loop is projected on a direction θ: strands are ordered along
``Re(u exp(-iθ))`` and a crossing happens whenever two neighbours swap. The
strand with the smaller ``Im(u exp(-iθ))`` is over. A crossing is the
positive generator when the strand coming from the left passes over.

:copyright: 2026 The spherebraid authors
:license: Apache 2.0
"""
from collections import namedtuple
import csv
import logging
import warnings

import numpy as np

from .defaults import CONVENTIONS
from .sphere import moduli_array
from .utils import rng

log = logging.getLogger(__name__)


class BraidError(Exception):
    """
    Generic error class.
    """
    pass


class NumericalDiagonal(BraidError):
    pass


class NonGenericDirection(BraidError):
    pass


class DirectionSearchExhausted(BraidError):
    pass


CrossingEvent = namedtuple('CrossingEvent', ['t', 'strands', 'sign', 'over'])


class BraidWord:
    """
    A word in the Artin generators of the braid group on ``strands``
    strands. Letters are nonzero integers: ``i`` is σ_i and ``-i`` its
    inverse.

    Args:
        strands (int): Number of strands, at least 2.
        letters (iterable): Signed ints, or (index, sign) pairs.
    """
    def __init__(self, strands, letters=()):
        strands = int(strands)
        if strands < 2:
            raise BraidError("A braid needs at least two strands.")
        word = []
        for letter in letters:
            if isinstance(letter, (tuple, list)):
                i, s = letter
                if s not in (1, -1):
                    raise BraidError("Letter signs must be +1 or -1.")
                letter = int(i) * s
            letter = int(letter)
            if not 1 <= abs(letter) <= strands - 1:
                m = "Generator {} is not in the braid group on {} strands."
                raise BraidError(m.format(letter, strands))
            word.append(letter)
        self.strands = strands
        self.letters = tuple(word)

    def __repr__(self):
        return "BraidWord({}, {})".format(self.strands, list(self.letters))

    def __str__(self):
        return "{}: {}".format(self.strands, ' '.join(str(l) for l in self.letters)).rstrip()

    def __len__(self):
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def __eq__(self, other):
        if not isinstance(other, BraidWord):
            return False
        return self.strands == other.strands and self.letters == other.letters

    def __hash__(self):
        return hash((self.strands, self.letters))

    def __mul__(self, other):
        if self.strands != other.strands:
            raise BraidError("Cannot multiply braids on different numbers of strands.")
        return BraidWord(self.strands, self.letters + other.letters)

    def __pow__(self, k):
        k = int(k)
        if k < 0:
            return self.inverse() ** -k
        return BraidWord(self.strands, self.letters * k)

    @property
    def pairs(self):
        """
        Letters as (index, sign) pairs.
        """
        return [(abs(l), 1 if l > 0 else -1) for l in self.letters]

    def inverse(self):
        return BraidWord(self.strands, [-l for l in reversed(self.letters)])

    def free_reduce(self):
        """
        Cancel adjacent inverse letters until none are left.
        """
        stack = []
        for letter in self.letters:
            if stack and stack[-1] == -letter:
                stack.pop()
            else:
                stack.append(letter)
        return BraidWord(self.strands, stack)

    def permutation(self):
        """
        The strand found at each position at the end of the braid.

        Returns:
            tuple. Position k holds the strand that started at position k
                when the braid is pure.
        """
        order = list(range(self.strands))
        for letter in self.letters:
            i = abs(letter) - 1
            order[i], order[i + 1] = order[i + 1], order[i]
        return tuple(order)

    @property
    def is_pure(self):
        return self.permutation() == tuple(range(self.strands))

    @property
    def exponent_sum(self):
        return sum(1 if l > 0 else -1 for l in self.letters)

    def conjugate(self, by):
        """
        The word ``by * self * by^-1``.
        """
        return by * self * by.inverse()

    def stabilize(self, sign=1):
        """
        Markov stabilization: add a strand and the letter σ_m^sign.
        """
        if sign not in (1, -1):
            raise BraidError("sign must be +1 or -1.")
        return BraidWord(self.strands + 1, self.letters + (sign * self.strands,))

    @classmethod
    def from_string(cls, text):
        """
        Parse the text form, e.g. '4: 1 -2 3'.
        """
        try:
            head, _, tail = text.partition(':')
            return cls(int(head), [int(t) for t in tail.split()])
        except ValueError:
            raise BraidError("Cannot parse braid word '{}'.".format(text))

    @classmethod
    def full_twist(cls, strands):
        """
        The full twist (σ_1 ... σ_{m-1})^m, generating the centre.
        """
        return cls(strands, list(range(1, strands)) * strands)

    @classmethod
    def random(cls, strands, length, seed):
        g = rng(seed)
        idx = g.integers(1, strands, size=length)
        sgn = g.choice([-1, 1], size=length)
        return cls(strands, (idx * sgn).tolist())


def write_events_csv(events, filename):
    """
    Dump crossing events for debugging.
    """
    with open(filename, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['t', 'strand_i', 'strand_j', 'sign', 'over'])
        for e in events:
            writer.writerow([repr(e.t), e.strands[0], e.strands[1], e.sign, e.over])


class PlanarLoop:
    """
    Sampled motions of ``m`` distinct points of the plane.

    Args:
        times (ndarray): Increasing parameters, shape (T,).
        u (ndarray): Complex positions, shape (T, m).
        evaluate (callable): Optional map from parameters to positions,
            used for refinement.
    """
    def __init__(self, times, u, evaluate=None):
        times = np.asarray(times, dtype=float)
        u = np.asarray(u, dtype=complex)
        if u.ndim != 2 or u.shape[0] != times.size or u.shape[1] < 2:
            raise BraidError("Planar loops need positions of shape (T, m >= 2).")
        if np.any(np.diff(times) <= 0):
            raise BraidError("Planar loop parameters must increase.")
        times.flags.writeable = False
        u.flags.writeable = False
        self.times = times
        self.u = u
        self._evaluate = evaluate

    def __repr__(self):
        return "PlanarLoop(strands={}, samples={})".format(self.strands, len(self))

    def __len__(self):
        return self.times.size

    @property
    def strands(self):
        return self.u.shape[1]

    @property
    def closed(self):
        return bool(np.allclose(self.u[0], self.u[-1], atol=1e-9))

    @property
    def min_gap(self):
        i, j = np.triu_indices(self.strands, k=1)
        return float(np.min(np.abs(self.u[:, i] - self.u[:, j])))

    def at(self, s):
        if self._evaluate is None:
            raise BraidError("This planar loop cannot be evaluated between samples.")
        return self._evaluate(np.atleast_1d(np.asarray(s, dtype=float)))

    def refined(self, s):
        s = np.setdiff1d(np.atleast_1d(s), self.times)
        if s.size == 0:
            return self
        times = np.concatenate([self.times, s])
        u = np.concatenate([self.u, self.at(s)])
        order = np.argsort(times, kind='stable')
        return PlanarLoop(times[order], u[order], self._evaluate)

    def reversed(self):
        evaluate = None
        if self._evaluate is not None:
            forward = self._evaluate

            def evaluate(s):
                return forward(self.times[0] + self.times[-1] - s)
        t0, t1 = self.times[0], self.times[-1]
        return PlanarLoop(t0 + t1 - self.times[::-1], self.u[::-1], evaluate)

    def reparametrized(self, func):
        """
        The same loop with parameters mapped by an increasing function.
        """
        return PlanarLoop(func(self.times), self.u)

    def step_angles(self):
        """
        Absolute turning of every strand pair between consecutive samples,
        shape (T - 1, m, m).
        """
        d = self.u[:, :, None] - self.u[:, None, :]
        m = self.strands
        d = np.where(np.eye(m, dtype=bool), 1, d)
        return np.abs(np.angle(d[1:] / d[:-1]))

    def abs_winding(self, i=None, j=None):
        """
        ``∫ |d arg(u_i - u_j)| / 2π`` along the piecewise-linear loop. With
        no arguments, the full symmetric matrix.
        """
        total = self.step_angles().sum(axis=0) / (2 * np.pi)
        if i is None:
            return total
        return float(total[i, j])

    @classmethod
    def orbit(cls, k=2, turns=1, samples=401, radius=1.0):
        """
        ``k`` points equally spaced on a circle, turning counterclockwise
        ``turns`` times.
        """
        t = np.linspace(0, 1, samples)
        base = radius * np.exp(2j * np.pi * np.arange(k) / k)
        u = base[None, :] * np.exp(2j * np.pi * turns * t)[:, None]
        return cls(t, u, evaluate=lambda s: base[None, :] * np.exp(2j * np.pi * turns * s)[:, None])

    @classmethod
    def polygonal(cls, vertices, samples_per_edge=50):
        """
        Strands moving linearly between common keyframes.

        Args:
            vertices (array-like): Keyframe positions, shape (K, m).
        """
        v = np.asarray(vertices, dtype=complex)
        s = np.linspace(0, 1, samples_per_edge + 1)[:-1]
        u = [(1 - x) * a + x * b for a, b in zip(v[:-1], v[1:]) for x in s]
        u.append(v[-1])
        u = np.array(u)
        return cls(np.linspace(0, 1, u.shape[0]), u)


def planarize(loop, eps=None, refine=True):
    """
    Project a loop of configurations to the plane: strands are the
    cross-ratio coordinates of the moving points, followed by constant
    strands at 0 and 1.

    When ``refine`` is set, samples are added until no strand pair turns by
    more than the refinement angle between consecutive samples.

    Args:
        loop (Loop): A loop of at least four points.
        eps (float): Smallest allowed distance between planar strands.

    Returns:
        PlanarLoop. With ``n - 1`` strands.
    """
    if eps is None:
        eps = CONVENTIONS['eps_planar']
    if loop.n < 4:
        raise BraidError("Planarizing needs at least four points.")

    def project(h):
        mov = moduli_array(h)
        t = mov.shape[0]
        return np.concatenate([mov, np.zeros((t, 1)), np.ones((t, 1))], axis=1)

    evaluate = None
    if loop.refinable:
        def evaluate(s):
            return project(loop.at(s))

    planar = PlanarLoop(loop.times, project(loop.h), evaluate)
    if refine and evaluate is not None:
        planar = _refine(planar)
    gap = planar.min_gap
    if gap < eps:
        m = "Planar strands within {:.3g} of each other; refine the time step."
        raise NumericalDiagonal(m.format(gap))
    return planar


def _refine(planar):
    limit = CONVENTIONS['refine_angle']
    budget = CONVENTIONS['max_loop_samples']
    for rounds in range(CONVENTIONS['refine_rounds']):
        coarse = planar.step_angles().max(axis=(1, 2)) >= limit
        if not np.any(coarse):
            log.debug("Planar loop resolved after %d rounds (%d samples).", rounds, len(planar))
            return planar
        t = planar.times
        planar = planar.refined(0.5 * (t[:-1][coarse] + t[1:][coarse]))
        if len(planar) > budget:
            break
    m = "Cannot resolve the planar loop with {} samples."
    raise NumericalDiagonal(m.format(len(planar)))


def _events(planar, theta, strict=True):
    """
    Time-ordered crossings of the θ-projection, with the positions at
    which they happen.

    Returns:
        list. Tuples (t, left strand, right strand, over strand, position).
    """
    rot = planar.u * np.exp(-1j * theta)
    p, q = rot.real, rot.imag
    m = planar.strands
    i, j = np.triu_indices(m, k=1)
    d = p[:, i] - p[:, j]
    if strict and np.any(d == 0):
        raise NonGenericDirection("A crossing happens exactly at a sample.")
    flips = np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)
    min_angle = CONVENTIONS['min_crossing_angle']

    raw = []
    for k, c in zip(*flips):
        a, b = i[c], j[c]
        d0, d1 = d[k, c], d[k + 1, c]
        tau = d0 / (d0 - d1)
        t = planar.times[k] + tau * (planar.times[k + 1] - planar.times[k])
        dq = (1 - tau) * (q[k, a] - q[k, b]) + tau * (q[k + 1, a] - q[k + 1, b])
        if strict:
            delta = (planar.u[k + 1, a] - planar.u[k + 1, b]) - (planar.u[k, a] - planar.u[k, b])
            steep = abs((delta * np.exp(-1j * theta)).real) / abs(delta)
            if steep < min_angle or dq == 0:
                raise NonGenericDirection("Tangential crossing at t={:.6g}.".format(t))
        over = a if dq < 0 else b
        left = a if d0 < 0 else b
        raw.append((t, left, b if left == a else a, over))
    raw.sort()

    if strict and len(raw) > 1:
        gaps = np.diff([e[0] for e in raw])
        if np.min(gaps) < CONVENTIONS['min_crossing_gap']:
            raise NonGenericDirection("Two crossings are too close in time.")

    order = list(np.argsort(p[0], kind='stable'))
    position = {s: k for k, s in enumerate(order)}
    events = []
    for t, left, right, over in raw:
        pl, pr = position[left], position[right]
        if pr != pl + 1:
            if strict:
                raise NonGenericDirection("Non-adjacent strands cross at t={:.6g}.".format(t))
            pl, pr = min(pl, pr), max(pl, pr)
        order[pl], order[pr] = order[pr], order[pl]
        position[order[pl]], position[order[pr]] = pl, pr
        events.append((t, left, right, over, pl))
    return events


def extract_braid(planar, theta, return_events=False):
    """
    The braid word of the θ-diagram of a planar loop, one letter per
    crossing in time order.

    Args:
        planar (PlanarLoop): The loop.
        theta (float): Projection direction in radians.
        return_events (bool): Also return the CrossingEvents.

    Returns:
        BraidWord, or (BraidWord, list of CrossingEvent).
    """
    letters, events = [], []
    for t, left, right, over, pos in _events(planar, theta):
        sign = 1 if over == left else -1
        letters.append(sign * (pos + 1))
        events.append(CrossingEvent(float(t), (int(left), int(right)), sign, int(over)))
    word = BraidWord(planar.strands, letters)
    if return_events:
        return word, events
    return word


def crossing_counts(planar, theta, strict=True):
    """
    The matrix whose entry (i, j) counts how often strand i passes over
    strand j in the θ-diagram.

    Returns:
        ndarray. Integer matrix of shape (m, m).
    """
    n = np.zeros((planar.strands, planar.strands), dtype=int)
    for _, left, right, over, _ in _events(planar, theta, strict=strict):
        under = right if over == left else left
        n[over, under] += 1
    return n


def coarea_average(planar, directions=None, seed=None):
    """
    Average of the crossing-count matrix over equally spaced directions
    with a random common offset.
    """
    if directions is None:
        directions = CONVENTIONS['coarea_directions']
    offset = rng(seed).uniform(0, 2 * np.pi / directions)
    thetas = offset + 2 * np.pi * np.arange(directions) / directions
    total = sum(crossing_counts(planar, th, strict=False) for th in thetas)
    return total / directions


def choose_direction(planar, C=None, seed=None, retries=None):
    """
    A generic direction whose crossing counts obey ``n_ij <= C I_ij`` for
    every ordered pair, where ``I_ij`` is the absolute winding of the pair.

    Args:
        planar (PlanarLoop): The loop.
        C (float): The Markov constant. Default m**2.
        seed: Seed for the direction draws.
        retries (int): Number of draws before giving up.

    Returns:
        float. The direction.
    """
    m = planar.strands
    if C is None:
        C = m**2
    if C <= (m - 1) * (m - 2) / 2:
        m_ = "C must exceed (m-1)(m-2)/2 = {}."
        raise BraidError(m_.format((m - 1) * (m - 2) / 2))
    if C < m * (m - 1):
        warnings.warn("C below m(m-1) may exhaust the direction search.", stacklevel=2)
    if retries is None:
        retries = CONVENTIONS['direction_retries']

    winding = planar.abs_winding()
    g = rng(seed)
    for attempt in range(retries):
        theta = g.uniform(0, 2 * np.pi)
        try:
            n = crossing_counts(planar, theta)
        except NonGenericDirection:
            continue
        if np.all(n <= C * winding + 1e-9):
            if attempt:
                log.debug("Direction found after %d draws.", attempt + 1)
            return float(theta)
    raise DirectionSearchExhausted("No admissible direction in {} draws.".format(retries))


def word_norm_bound(loop, C=None, seed=None):
    """
    The length of the freely reduced braid word of a loop in an admissible
    direction: an upper bound for its word norm.
    """
    planar = planarize(loop)
    theta = choose_direction(planar, C=C, seed=seed)
    return len(extract_braid(planar, theta).free_reduce())
