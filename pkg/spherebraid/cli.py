"""
Command-line driver: experiment manifests, result records and the
acceptance suite.

:copyright: 2026 The spherebraid authors
:license: Apache 2.0
"""
import argparse
import csv
from datetime import datetime, timezone
import hashlib
from itertools import product
import json
import logging
import os
import sys

import numpy as np

from .braid import BraidError
from .braid import BraidWord
from .braid import PlanarLoop
from .braid import choose_direction
from .braid import coarea_average
from .braid import extract_braid
from .braid import planarize
from .configuration import ConfigurationError
from .configuration import LoopCache
from .configuration import basepoint
from .configuration import sample_configuration
from .configuration import trace_loop
from .conventions import Conventions
from .conventions import ConventionsError
from .defaults import CACHE_ENV
from .defaults import CONVENTIONS
from .flows import FlowError
from .flows import FlowSpec
from .flows import HamiltonianFlow
from .flows import RadialProfile
from .flows import RotationalFlow
from .flows import evolve
from .flows import lp_length
from .forms import FormError
from .forms import FormIndex
from .forms import average_form_action
from .forms import short_path_form_bound
from .invariants import InvariantError
from .invariants import closure_signature
from .invariants import goeritz_signature
from .invariants import s_quasimorphism
from .quasimorphism import EstimateError
from .quasimorphism import average_word_norm
from .quasimorphism import build_embedding
from .quasimorphism import gg_estimate
from .quasimorphism import lk_closed_form
from .quasimorphism import qm_defect_probe
from .quasimorphism import sign_qm_closed_form
from .quasimorphism import twist_decomposition_value
from .quasimorphism import validate_embedding
from .sphere import SphereError
from .sphere import bracket
from .sphere import cross_ratio_array
from .sphere import Mobius
from .sphere import moduli_array
from .sphere import random_points
from .sphere import to_vectors
from .utils import affine_fit
from .utils import spawn_seeds
from .utils import trend_test

log = logging.getLogger(__name__)

COMMANDS = ('simulate', 'braid', 'estimate', 'closed-form', 'embed', 'verify')
INVARIANTS = ('s', 'signature', 'lk', 'word-norm', 'form')
FORMATS = ('json', 'csv')
EXAMPLES = ('two-point-orbit',)

VALIDATION_EXIT = 1
NUMERICAL_EXIT = 2
NUMERICAL_ERRORS = (EstimateError, BraidError, ConfigurationError, InvariantError,
                    FormError, SphereError, FlowError)


class CLIError(Exception):
    """
    Generic error class.
    """
    pass


class ExperimentManifest:
    """
    Everything a run needs. Two manifests with the same digest produce
    the same records, apart from the ``created`` field.

    Args:
        command (str): One of COMMANDS.
        flow (dict or str): A flow dictionary, a path to a flow JSON file,
            ``{"height_polynomial": [c0, c1, ...], "duration": t}`` for the
            rotation flow with that profile as a function of the height,
            ``{"random": seed}`` for a random Hamiltonian flow, or
            ``{"example": "two-point-orbit"}``.
        invariant (str): One of INVARIANTS.
        n (int): Number of points.
        samples (int): Monte Carlo budget.
        seed (int): Root seed.
        output (str): Where to write the records.
        options (dict): Command-specific settings.
    """
    def __init__(self, command, flow=None, invariant='s', n=4, samples=None, seed=0,
                 output=None, workers=1, format='json', quick=False, options=None,
                 conventions=None):
        if command not in COMMANDS:
            raise CLIError("Unknown command '{}'.".format(command))
        if invariant not in INVARIANTS:
            raise CLIError("Unknown invariant '{}'.".format(invariant))
        if format not in FORMATS:
            raise CLIError("Unknown format '{}'.".format(format))
        if int(n) < 2:
            raise CLIError("n must be at least 2.")
        if samples is not None and int(samples) < 1:
            raise CLIError("samples must be positive.")
        if int(seed) < 0:
            raise CLIError("seed must be nonnegative.")
        self.command = command
        self.flow = flow
        self.invariant = invariant
        self.n = int(n)
        self.samples = None if samples is None else int(samples)
        self.seed = int(seed)
        self.output = output
        self.workers = int(workers)
        self.format = format
        self.quick = bool(quick)
        self.options = dict(options or {})
        self.conventions = conventions

    def __repr__(self):
        return "ExperimentManifest({})".format(self.as_dict())

    @classmethod
    def from_dict(cls, d):
        known = {'command', 'flow', 'invariant', 'n', 'samples', 'seed', 'output',
                 'workers', 'format', 'quick', 'options', 'conventions'}
        unknown = set(d) - known
        if unknown:
            raise CLIError("Unknown manifest fields: {}".format(', '.join(sorted(unknown))))
        if 'command' not in d:
            raise CLIError("The manifest has no command.")
        return cls(**d)

    @classmethod
    def from_json_file(cls, filename):
        with open(filename, 'r') as fp:
            try:
                d = json.load(fp)
            except json.JSONDecodeError as e:
                raise CLIError("Cannot parse {}: {}".format(filename, e))
        here = os.path.dirname(os.path.abspath(filename))
        for field in ('flow', 'conventions'):
            ref = d.get(field)
            if isinstance(ref, str) and not os.path.isabs(ref):
                d[field] = os.path.join(here, ref)
        return cls.from_dict(d)

    def as_dict(self):
        return {'command': self.command,
                'flow': self.flow,
                'invariant': self.invariant,
                'n': self.n,
                'samples': self.samples,
                'seed': self.seed,
                'output': self.output,
                'workers': self.workers,
                'format': self.format,
                'quick': self.quick,
                'options': self.options,
                'conventions': self.conventions,
                }

    def digest(self):
        """
        Hash of the fields that determine the records. The output path and
        the worker count do not. Flows and conventions enter by content, so
        editing either file changes the digest.
        """
        d = self.as_dict()
        d.pop('output')
        d.pop('workers')
        d['flow'] = self.load_flow().to_dict() if self.has_flow else self.flow
        d['conventions'] = self.load_conventions().digest()
        text = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha1(text.encode('utf-8')).hexdigest()

    def load_conventions(self):
        """
        The conventions of the run: the referenced file, an inline
        dictionary, or the defaults.

        Returns:
            Conventions.
        """
        if self.conventions is None:
            return Conventions(CONVENTIONS)
        if isinstance(self.conventions, dict):
            return Conventions(self.conventions)
        return Conventions.from_json_file(self.conventions)

    @property
    def example(self):
        if isinstance(self.flow, dict):
            return self.flow.get('example')
        return None

    @property
    def has_flow(self):
        return self.flow is not None and self.example is None

    @property
    def height_function(self):
        """
        The profile as a polynomial in the height, when given that way.
        """
        if isinstance(self.flow, dict) and 'height_polynomial' in self.flow:
            return np.polynomial.Polynomial(self.flow['height_polynomial'])
        return None

    def load_flow(self):
        """
        Resolve the flow reference.

        Returns:
            FlowSpec.
        """
        ref = self.flow
        if ref is None:
            raise CLIError("The '{}' command needs a flow.".format(self.command))
        if isinstance(ref, str):
            return FlowSpec.from_json_file(ref)
        if not isinstance(ref, dict):
            raise CLIError("Cannot interpret flow {!r}.".format(ref))
        if 'example' in ref:
            if ref['example'] not in EXAMPLES:
                raise CLIError("Unknown example '{}'.".format(ref['example']))
            raise CLIError("The example '{}' is not a flow.".format(ref['example']))
        if 'height_polynomial' in ref:
            profile = RadialProfile.from_height_function(self.height_function)
            return RotationalFlow(profile, ref.get('duration', 1.0))
        if 'random' in ref:
            return HamiltonianFlow.random(int(ref['random']), duration=ref.get('duration', 1.0))
        return FlowSpec.from_dict(ref)


def _flow_name(manifest):
    if manifest.example:
        return manifest.example
    if isinstance(manifest.flow, str):
        return os.path.basename(manifest.flow)
    return manifest.load_flow().digest()[:12]


def _record(manifest, **fields):
    """
    A result record. ``created`` is the only time-dependent field.
    """
    record = {'command': manifest.command,
              'flow': _flow_name(manifest) if manifest.flow is not None else None,
              'invariant': manifest.invariant,
              'n': manifest.n,
              'samples': manifest.samples,
              'seed': manifest.seed,
              }
    record.update(fields)
    record['conventions'] = Conventions(CONVENTIONS).as_dict()
    record['created'] = datetime.now(timezone.utc).isoformat()
    return record


def _samples(manifest, default):
    return manifest.samples or default


def run_simulate(manifest):
    flow = manifest.load_flow()
    powers = manifest.options.get('p', [1, 2])
    t_steps = manifest.options.get('time_steps', 100)
    samples = _samples(manifest, 2000)
    x = sample_configuration(manifest.n, manifest.seed)
    traj = evolve(flow, x.h, 0, flow.duration)
    final = to_vectors(traj.points[-1])
    records = []
    for p in powers:
        length = lp_length(flow, p, t_steps, samples, manifest.seed)
        print("l_{} = {:.6g} ± {:.2g}".format(p, length.value, length.stderr))
        records.append(_record(manifest, p=p, mean=length.value, stderr=length.stderr,
                               final_points=np.round(final, 12).tolist()))
    return records


def run_braid(manifest):
    if manifest.example == 'two-point-orbit':
        planar = PlanarLoop.orbit(2)
    else:
        flow = manifest.load_flow()
        system = manifest.options.get('system', 'geodesic')
        q = basepoint(manifest.n)
        x = sample_configuration(manifest.n, manifest.seed, system=system, q=q)
        cache = LoopCache.from_env()
        loop = trace_loop(flow, x, q, system, cache=cache, seed=manifest.seed)
        planar = planarize(loop)
    theta = choose_direction(planar, seed=manifest.seed)
    word = extract_braid(planar, theta)
    print(word)
    return [_record(manifest, word=str(word), direction=theta, length=len(word),
                    lk=word.exponent_sum)]


def run_estimate(manifest):
    flow = manifest.load_flow()
    samples = _samples(manifest, CONVENTIONS['samples'])
    opts = manifest.options
    if manifest.invariant == 'word-norm':
        est = average_word_norm(flow, manifest.n, samples, manifest.seed, C=opts.get('C'),
                                system=opts.get('system', 'affine'), workers=manifest.workers)
        l1 = lp_length(flow, 1, CONVENTIONS['time_steps'], samples, manifest.seed)
        extra = {'l1': l1.value, 'l1_stderr': l1.stderr, 'ratio': est.mean / l1.value}
    elif manifest.invariant == 'form':
        nu = FormIndex.from_string(opts.get('nu', '(1;0)'))
        est = average_form_action(flow, nu, manifest.n, samples, manifest.seed,
                                  workers=manifest.workers)
        extra = {'nu': str(nu)}
    else:
        est = gg_estimate(flow, manifest.invariant, manifest.n, samples, manifest.seed,
                          periods=opts.get('periods'), system=opts.get('system', 'geodesic'),
                          workers=manifest.workers)
        extra = {}
    print(est)
    return [_record(manifest, mean=est.mean, stderr=est.stderr, **extra)]


def run_closed_form(manifest):
    omega = manifest.height_function or manifest.load_flow()
    if not callable(omega) and not isinstance(omega, RotationalFlow):
        raise CLIError("Closed forms need a rotation flow or a height polynomial.")
    t = manifest.options.get('t', 1.0)
    if isinstance(manifest.flow, dict) and 'height_polynomial' in manifest.flow:
        t = t * manifest.flow.get('duration', 1.0)
    if manifest.invariant == 'lk':
        value = lk_closed_form(omega, manifest.n, t)
        print("lk_{}: {:.6g}".format(manifest.n, value))
        return [_record(manifest, mean=value, stderr=0.0)]
    records = []
    for n in manifest.options.get('ns', [manifest.n // 2 if manifest.n >= 4 else 2]):
        value = sign_qm_closed_form(omega, n, t)
        check = twist_decomposition_value(omega, 2 * n, t)
        print("Sign_{}: {:.6f}".format(2 * n, value))
        records.append(_record(manifest, half_points=n, mean=value, stderr=0.0,
                               twist_decomposition=check))
    return records


def run_embed(manifest):
    d = manifest.options.get('d', 2)
    spec = build_embedding(d, seed=manifest.seed)
    print("condition number {:.4g}".format(spec.condition))
    records = [_record(manifest, d=d, matrix=spec.matrix.tolist(),
                       coefficients=spec.coefficients.tolist(), condition=spec.condition)]
    if manifest.options.get('validate', True):
        means, errors = validate_embedding(spec, _samples(manifest, CONVENTIONS['samples']),
                                           manifest.seed, manifest.workers)
        for i, j in product(range(d), repeat=2):
            print("Phi_{}(f_{}) = {:.4f} ± {:.2g}".format(i + 1, j + 1, means[i, j], errors[i, j]))
            records.append(_record(manifest, i=i + 1, j=j + 1, mean=means[i, j],
                                   stderr=errors[i, j]))
    return records


# Acceptance suite. Each check returns (passed, detail).
FULL = {'samples': 10000, 'configs': 10000, 'loops': 100, 'max_length': 8,
        'tuples': 10000, 'flows': 20, 'times': tuple(range(1, 21)),
        'scales': (1, 2, 4, 8), 'directions': 512, 'lp_points': 4000}
QUICK = {'samples': 400, 'configs': 1000, 'loops': 10, 'max_length': 5,
         'tuples': 10000, 'flows': 5, 'times': (1, 2, 3, 4, 5),
         'scales': (1, 2), 'directions': 128, 'lp_points': 500}


def _test_profiles():
    return [('height', lambda u: u,
             RotationalFlow(RadialProfile.from_height_function(lambda u: u))),
            ('two-step', None,
             RotationalFlow(RadialProfile([0.0, 1.0], [1.0, 0.0], 'piecewise-constant'))),
            ('constant', None, RotationalFlow(RadialProfile.constant(0.7))),
            ]


def check_closed_form(budget, seed, workers):
    details, ok = [], True
    for name, func, flow in _test_profiles():
        exact = sign_qm_closed_form(func or flow, 2)
        est = gg_estimate(flow, 's', 4, budget['samples'], seed, workers=workers)
        good = est.agrees_with(exact, floor=1e-3)
        ok &= good
        details.append("{}: {:.4f} vs {}".format(name, exact, est))
    return ok, '; '.join(details)


def check_linearity(budget, seed, workers):
    _, func, flow = _test_profiles()[0]
    exact = sign_qm_closed_form(func, 2)
    ts = np.array(budget['scales'], dtype=float)
    est = [gg_estimate(flow.scaled(t), 's', 4, budget['samples'], seed, workers=workers) for t in ts]
    means = np.array([e.mean for e in est])
    se = np.array([e.stderr for e in est])
    fit = affine_fit(ts, means, through_origin=True)
    slope_se = np.sqrt(np.sum(ts**2 * se**2)) / np.sum(ts**2)
    residuals = np.abs(means - fit.slope * ts)
    ok = abs(fit.slope - exact) <= 3 * slope_se + 1e-3 and np.all(residuals <= 3 * se + 1e-3 * ts)
    return ok, "slope {:.4f} ± {:.2g} vs {:.4f}".format(fit.slope, slope_se, exact)


def check_short_paths(budget, seed, workers):
    n = 5
    q = basepoint(n)
    worst, skipped = 0.0, 0
    for s in spawn_seeds(seed, budget['configs']):
        x = sample_configuration(n, s)
        for nu in FormIndex.all_indices(n - 3):
            try:
                worst = max(worst, short_path_form_bound(x, nu, q))
            except ConfigurationError:
                skipped += 1
    bound = CONVENTIONS['short_path_bound'] + 1e-3
    return worst <= bound, "max {:.6f} (skipped {})".format(worst, skipped)


def coarea_excess(counts, winding, directions):
    """
    Worst amount by which direction-averaged crossing counts miss the
    absolute windings, beyond 2% of the winding plus ``4 / directions``,
    and the worst relative error over pairs that wind at least once.
    Diagonal entries are ignored.
    """
    off = ~np.eye(winding.shape[0], dtype=bool)
    error = np.abs(counts - winding)
    excess = float(np.max(error[off] - (0.02 * winding[off] + 4.0 / directions)))
    wound = off & (winding >= 1)
    relative = float(np.max(error[wound] / winding[wound])) if np.any(wound) else 0.0
    return excess, relative


def check_coarea(budget, seed, workers):
    directions = budget['directions']
    n = 5
    q = basepoint(n)
    slack = 4.0 / directions
    worst, relative, done = 0.0, 0.0, 0
    for s in spawn_seeds(seed, budget['loops']):
        g = np.random.default_rng(s)
        profile = RadialProfile.bump(0.3, 2.0, height=g.uniform(0.5, 2.0))
        x = sample_configuration(n, g)
        try:
            planar = planarize(trace_loop(RotationalFlow(profile), x, q))
        except (ConfigurationError, BraidError):
            continue
        winding = planar.abs_winding()
        counts = coarea_average(planar, directions, seed=g)
        excess, rel = coarea_excess(counts, winding, directions)
        worst, relative = max(worst, excess), max(relative, rel)
        done += 1
    detail = "{} loops, tolerance 2% + {:.3g}, worst excess {:.3g}, worst relative error {:.3g} (I >= 1)"
    return done > 0 and worst <= 0, detail.format(done, slack, worst, relative)


def check_signature_oracle(budget, seed, workers):
    anchors = {'2: 1 1 1': -2, '2: 1 1': -1, '2: 1': 0}
    for text, value in anchors.items():
        word = BraidWord.from_string(text)
        if closure_signature(word) != value or goeritz_signature(word) != value:
            return False, "anchor {} failed".format(text)
    count = 0
    for strands in (2, 3):
        alphabet = [k * s for k in range(1, strands) for s in (1, -1)]
        for length in range(1, budget['max_length'] + 1):
            for letters in product(alphabet, repeat=length):
                word = BraidWord(strands, letters)
                if closure_signature(word) != goeritz_signature(word):
                    return False, "mismatch on {}".format(word)
                count += 1
    return True, "{} words".format(count)


def held_out_envelope(lengths, words, errors):
    """
    Fit ``words <= A * lengths + B`` on the first half of the points (at
    least three) and check it on the rest, allowing three standard errors.

    Returns:
        tuple. A, B and the smallest held-out margin; a negative margin
            means the envelope failed.
    """
    lengths, words, errors = (np.asarray(a, dtype=float) for a in (lengths, words, errors))
    fitted = max(3, lengths.size // 2)
    if lengths.size <= fitted:
        raise CLIError("Need more than {} points for a held-out check.".format(fitted))
    fit = affine_fit(lengths[:fitted], words[:fitted])
    above = words[:fitted] - fit.slope * lengths[:fitted] - fit.intercept
    B = fit.intercept + max(0.0, float(np.max(above)))
    margin = fit.slope * lengths[fitted:] + B + 3 * errors[fitted:] - words[fitted:]
    return fit.slope, B, float(np.min(margin))


def check_word_growth(budget, seed, workers):
    flow = RotationalFlow(RadialProfile([0.0, 1.0], [1.0, 0.0], 'piecewise-constant'))
    ts = np.array(budget['times'], dtype=float)
    samples = max(budget['samples'] // 10, 50)
    words, errors, lengths = [], [], []
    for t in ts:
        scaled = flow.scaled(t)
        est = average_word_norm(scaled, 4, samples, seed, workers=workers)
        words.append(est.mean)
        errors.append(est.stderr)
        lengths.append(lp_length(scaled, 1, 200, budget['lp_points'], seed).value)
    words, errors, lengths = np.array(words), np.array(errors), np.array(lengths)

    A, B, margin = held_out_envelope(lengths, words, errors)
    trend = trend_test(ts, words / lengths)
    ok = margin >= 0 and trend.tstat < 2
    return ok, "A = {:.3f}, B = {:.3f}, held-out margin {:.3g}, ratio trend t = {:.2f}".format(
        A, B, margin, trend.tstat)


def check_embedding(budget, seed, workers):
    spec = build_embedding(2, seed=seed)
    means, errors = validate_embedding(spec, budget['samples'], seed, workers)
    ok = np.all(np.abs(means - np.eye(2)) <= 3 * errors + 1e-3)
    return bool(ok), "condition {:.3g}, diagonal {}".format(spec.condition, np.round(np.diag(means), 3))


def check_cross_ratios(budget, seed, workers):
    h = random_points(seed, (budget['tuples'], 5))
    p = [h[:, k] for k in range(5)]
    u = cross_ratio_array(p[0], p[1], p[2], p[3])
    v = cross_ratio_array(p[0], p[1], p[2], p[4])
    first = np.abs((u - 1) + cross_ratio_array(p[0], p[2], p[1], p[3]))

    def l(a, b):
        return bracket(p[a - 1], p[b - 1])

    rhs = l(1, 3) * l(1, 2) * l(5, 4) / (l(2, 3) * l(1, 4) * l(1, 5))
    second = np.abs((u - v) - rhs) / np.maximum(1, np.abs(u - v))
    mobius = Mobius.random(seed)
    moved = moduli_array(mobius(h))
    base = moduli_array(h)
    invariance = np.abs(moved - base) / np.maximum(1, np.abs(base))
    ok = np.max(first / np.maximum(1, np.abs(u))) < 1e-10 and np.max(second) < 1e-10 \
        and np.max(invariance) < 1e-8
    return bool(ok), "identities {:.2g}, {:.2g}; invariance {:.2g}".format(
        np.max(first), np.max(second), np.max(invariance))


def check_structure(budget, seed, workers):
    one = RotationalFlow(RadialProfile.bump(0.2, 1.0))
    two = RotationalFlow(RadialProfile.bump(1.5, 3.0, height=-0.5))
    report = qm_defect_probe('s', [(one, two)], 4, budget['samples'], seed, workers)
    row = report.rows[0]
    additive = row['defect'] <= 3 * row['stderr'] + 1e-3
    twists = max(abs(s_quasimorphism(BraidWord.full_twist(m)).value) for m in (2, 3, 4))
    small = max(abs(s_quasimorphism(BraidWord(2, [1] * (2 * k))).value) for k in (1, 2, 3))
    ok = additive and twists < 1e-9 and small < 1e-9
    return ok, "defect {:.3g} ± {:.2g}; twist {:.2g}; two strands {:.2g}".format(
        row['defect'], row['stderr'], twists, small)


def check_jensen(budget, seed, workers):
    worst = -np.inf
    for k in range(budget['flows']):
        flow = HamiltonianFlow.random(seed + k)
        l1 = lp_length(flow, 1, 20, budget['lp_points'], seed + k).value
        for p in (1.5, 2, 3):
            lp = lp_length(flow, p, 20, budget['lp_points'], seed + k).value
            worst = max(worst, l1 - lp)
    return worst <= 1e-9, "max l1 - lp = {:.3g}".format(worst)


CRITERIA = [('closed form', check_closed_form),
            ('linearity in t', check_linearity),
            ('short-path bound', check_short_paths),
            ('co-area identity', check_coarea),
            ('signature oracle', check_signature_oracle),
            ('word-norm growth', check_word_growth),
            ('embedding', check_embedding),
            ('cross-ratio identities', check_cross_ratios),
            ('quasimorphism structure', check_structure),
            ('Jensen ordering', check_jensen),
            ]


def run_verify(manifest):
    budget = dict(QUICK if manifest.quick else FULL)
    if manifest.samples:
        budget['samples'] = manifest.samples
    only = manifest.options.get('criteria')
    records = []
    for number, (name, check) in enumerate(CRITERIA, start=1):
        if only and number not in only:
            continue
        log.info("Running criterion %d: %s.", number, name)
        passed, detail = check(budget, manifest.seed, manifest.workers)
        print("{:2d} {:<24} {}  {}".format(number, name, 'PASS' if passed else 'FAIL', detail))
        records.append(_record(manifest, criterion=number, name=name, passed=bool(passed),
                               detail=detail))
    return records


RUNNERS = {'simulate': run_simulate,
           'braid': run_braid,
           'estimate': run_estimate,
           'closed-form': run_closed_form,
           'embed': run_embed,
           'verify': run_verify,
           }


def _result_cache(manifest):
    directory = os.environ.get(CACHE_ENV)
    if not directory or manifest.command == 'verify':
        return None
    os.makedirs(directory, exist_ok=True)
    return os.path.join(directory, 'records-{}.json'.format(manifest.digest()))


def run(manifest):
    """
    Run a manifest. Conventions named by the manifest are in force for
    this call only.

    Returns:
        tuple. The exit code and the list of records.
    """
    try:
        conventions = manifest.load_conventions()
    except (ConventionsError, OSError, TypeError, ValueError) as e:
        log.error("Invalid manifest: %s", e)
        return VALIDATION_EXIT, []
    with conventions.applied():
        return _run(manifest)


def _run(manifest):
    try:
        if manifest.has_flow:
            manifest.load_flow()
        cached = _result_cache(manifest)
    except (CLIError, ConventionsError, FlowError, OSError, KeyError, ValueError) as e:
        log.error("Invalid manifest: %s", e)
        return VALIDATION_EXIT, []

    if cached and os.path.exists(cached):
        with open(cached, 'r') as fp:
            records = json.load(fp)
        log.info("Loaded %d cached records.", len(records))
        return 0, records

    try:
        records = RUNNERS[manifest.command](manifest)
    except CLIError as e:
        log.error("Invalid manifest: %s", e)
        return VALIDATION_EXIT, []
    except NUMERICAL_ERRORS as e:
        log.error("Numerical failure in '%s': %s", manifest.command, e)
        return NUMERICAL_EXIT, []

    if cached:
        with open(cached, 'w') as fp:
            json.dump(records, fp, sort_keys=True)
    if manifest.command == 'verify':
        failed = [r['name'] for r in records if not r['passed']]
        if failed:
            log.error("Failed criteria: %s", ', '.join(failed))
            return NUMERICAL_EXIT, records
    return 0, records


def write_records(records, filename, format='json'):
    """
    Write records as JSON lines, or as CSV with the conventions reduced to
    their digest.
    """
    if format == 'json':
        with open(filename, 'a') as f:
            for record in records:
                f.write(json.dumps(record, sort_keys=True) + '\n')
        return
    rows = []
    for record in records:
        row = dict(record)
        row['conventions'] = Conventions(row['conventions']).digest()
        rows.append({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in row.items()})
    fields = sorted(set().union(*rows)) if rows else []
    with open(filename, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def build_parser():
    parser = argparse.ArgumentParser(prog='spherebraid',
                                     description="Braid quasimorphisms of sphere flows.")
    sub = parser.add_subparsers(dest='command', required=True)
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument('--manifest', help="Path to a JSON experiment manifest.")
        p.add_argument('--seed', type=int)
        p.add_argument('--samples', type=int)
        p.add_argument('--workers', type=int)
        p.add_argument('--out', help="File for the result records.")
        p.add_argument('--format', choices=FORMATS)
        p.add_argument('--verbose', action='store_true')
        if command == 'verify':
            p.add_argument('--quick', action='store_true')
        if command == 'braid':
            p.add_argument('--example', choices=EXAMPLES)
    return parser


def manifest_from_args(args):
    if args.manifest:
        d = ExperimentManifest.from_json_file(args.manifest).as_dict()
    else:
        d = {}
    d['command'] = args.command
    for field in ('seed', 'samples', 'workers', 'format'):
        if getattr(args, field) is not None:
            d[field] = getattr(args, field)
    if args.out:
        d['output'] = args.out
    if getattr(args, 'quick', False):
        d['quick'] = True
    if getattr(args, 'example', None):
        d['flow'] = {'example': args.example}
    return ExperimentManifest.from_dict(d)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        manifest = manifest_from_args(args)
    except (CLIError, OSError, TypeError) as e:
        log.error("Invalid manifest: %s", e)
        return VALIDATION_EXIT
    code, records = run(manifest)
    if records and manifest.output:
        write_records(records, manifest.output, manifest.format)
    return code


if __name__ == '__main__':
    sys.exit(main())
