"""
The conventions file: a single, checked-in set of tolerances and
normalizations, echoed into every result record.

:copyright: 2026 The spherebraid authors
:license: Apache 2.0
"""
from contextlib import contextmanager
from copy import deepcopy
import hashlib
import json
import re

from . import defaults


class ConventionsError(Exception):
    """
    Generic error class.
    """
    pass


class Conventions:
    """
    A Conventions object holds the numerical conventions of a run as
    attributes.

    Most commonly you will just load the default one.

    Args:
        params (dict): The dictionary to use. For an example, refer to the
            default conventions in ``defaults.py``. Missing keys are filled
            from the defaults.
    """

    def __init__(self, params):
        unknown = set(params) - set(defaults.CONVENTIONS)
        if unknown:
            m = "Unknown conventions: {}".format(', '.join(sorted(unknown)))
            raise ConventionsError(m)
        merged = deepcopy(defaults.CONVENTIONS)
        merged.update(params)
        for k, v in merged.items():
            k = re.sub(' ', '_', k)
            setattr(self, k, v)

    def __repr__(self):
        return "Conventions({})".format(self.__dict__)

    def __getitem__(self, key):
        try:
            return getattr(self, key)
        except AttributeError:
            raise KeyError(key)

    def __eq__(self, other):
        if not isinstance(other, Conventions):
            return False
        return self.as_dict() == other.as_dict()

    @classmethod
    def default(cls):
        """
        Makes the default conventions, as provided in ``defaults.py``.

        Returns:
            Conventions: The default conventions.
        """
        return cls(deepcopy(defaults.CONVENTIONS))

    @classmethod
    def from_json_file(cls, filename):
        """
        Load conventions from a JSON file.

        Args:
            filename (str): The path to a JSON dump.
        """
        with open(filename, 'r') as fp:
            return cls(json.load(fp))

    def as_dict(self):
        """
        Returns the conventions as a plain dictionary, in the key order of
        the defaults.
        """
        return {k: getattr(self, k) for k in defaults.CONVENTIONS}

    def to_json(self):
        return json.dumps(self.as_dict(), sort_keys=True)

    def digest(self):
        """
        A short hash of the conventions, used in cache keys.
        """
        return hashlib.sha1(self.to_json().encode('utf-8')).hexdigest()[:16]

    @contextmanager
    def applied(self):
        """
        Install these conventions as the package defaults inside a ``with``
        block. The previous defaults are restored on exit, also on errors.
        """
        saved = deepcopy(defaults.CONVENTIONS)
        defaults.CONVENTIONS.update(self.as_dict())
        try:
            yield self
        finally:
            defaults.CONVENTIONS.clear()
            defaults.CONVENTIONS.update(saved)
