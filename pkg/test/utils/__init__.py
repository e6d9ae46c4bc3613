import re
import unittest
import warnings

import numpy as np

from rydising import cloud

_CASE = unittest.TestCase()


def assert_raises_message(expected_error, expected_message, *args, **kwargs):
    expected_regex = re.escape(expected_message)
    return _CASE.assertRaisesRegex(expected_error, expected_regex, *args, **kwargs)


def reset_warnings():
    warnings.resetwarnings()
    warnings.simplefilter("error")
    ignore_third_party_warnings()


def ignore_third_party_warnings():
    for category in (DeprecationWarning, PendingDeprecationWarning, FutureWarning):
        warnings.filterwarnings("ignore", category=category)


reset_warnings()


def random_couplings(n_atoms, seed=None, scale=1.0, light_shift=0.0):
    """Ferromagnetic all-pairs couplings drawn uniformly from (-scale, 0)."""
    random_state = np.random.RandomState(seed)
    upper = np.triu(random_state.uniform(-scale, 0.0, (n_atoms, n_atoms)), 1)
    shifts = light_shift * random_state.uniform(-1, 1, n_atoms)
    return cloud.CouplingMatrix(upper + upper.T, shifts)
