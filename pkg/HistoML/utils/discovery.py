"""
The :mod:`HistoML.utils.discovery` module finds the public estimators and
functions of the `HistoML` package.
"""

# Adapted from scikit-learn
# Authors: HistoML developers
# License: BSD 3 clause

import inspect
import pkgutil
from importlib import import_module
from operator import itemgetter
from pathlib import Path

from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils._testing import ignore_warnings

_MODULE_TO_IGNORE = {"tests", "conftest", "__main__"}
_TYPE_FILTERS = {"classifier": ClassifierMixin, "transformer": TransformerMixin}


def _walk_members(predicate):
    members = []
    root = str(Path(__file__).parent.parent)
    with ignore_warnings(category=FutureWarning):
        for _, module_name, _ in pkgutil.walk_packages(path=[root], prefix="HistoML."):
            if any(part in _MODULE_TO_IGNORE for part in module_name.split(".")):
                continue
            module = import_module(module_name)
            members.extend(
                (name, member)
                for name, member in inspect.getmembers(module, predicate)
                if not name.startswith("_")
            )
    return members


def all_estimators(type_filter=None):
    """Get a list of all estimators from `HistoML`.

    Estimators are the concrete classes inheriting from `BaseEstimator`:
    patch backends, feature extractors, stumps and rankers.

    Parameters
    ----------
    type_filter : {"classifier", "transformer"} or list of such str, \
            default=None
        Keep only estimators of these kinds. None keeps all of them.

    Returns
    -------
    estimators : list of tuples
        List of (name, class), sorted by name.

    Examples
    --------
    >>> from HistoML.utils.discovery import all_estimators
    >>> [name for name, _ in all_estimators(type_filter="classifier")]
    ['DecisionStump']
    """
    estimators = {
        (name, cls)
        for name, cls in _walk_members(inspect.isclass)
        if issubclass(cls, BaseEstimator)
        and cls is not BaseEstimator
        and not inspect.isabstract(cls)
    }
    if type_filter is not None:
        kinds = [type_filter] if isinstance(type_filter, str) else list(type_filter)
        unknown = [kind for kind in kinds if kind not in _TYPE_FILTERS]
        if unknown:
            raise ValueError(
                "Parameter type_filter must be 'classifier', 'transformer' or None,"
                f" got {repr(unknown)}."
            )
        estimators = {
            est
            for est in estimators
            if any(issubclass(est[1], _TYPE_FILTERS[kind]) for kind in kinds)
        }
    return sorted(estimators, key=itemgetter(0))


def _is_checked_function(item):
    if not inspect.isfunction(item) or item.__name__.startswith("_"):
        return False
    return item.__module__.startswith("HistoML.")


def all_functions():
    """Get a list of all public functions from `HistoML`.

    Returns
    -------
    functions : list of tuples
        List of (name, function), sorted by name.

    Examples
    --------
    >>> from HistoML.utils.discovery import all_functions
    >>> "stump_fit" in dict(all_functions())
    True
    """
    functions = {
        (func.__name__, func) for _, func in _walk_members(_is_checked_function)
    }
    return sorted(functions, key=itemgetter(0))
