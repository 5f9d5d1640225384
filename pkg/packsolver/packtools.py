"""
    This module provides the validation and file helpers shared by the
    packsolver modules.
"""

import json

import numpy as np


def validate_int(value, name, minimum=None):
    """Validate an int parameter, optionally bounded below. Returns the
    value."""

    # Check that value is an int (bools and numpy ints are accepted)
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
        raise TypeError(
            "invalid value for '%s' parameter. "
            "Expected int, received '%s'." % (name, type(value).__name__)
        )

    # Check that value is in the correct range
    if minimum is not None and value < minimum:
        raise ValueError(
            "invalid value for '%s' parameter. "
            "Value needs to be at least %s." % (name, minimum)
        )
    return int(value)


def validate_number(value, name, minimum=None, below=None):
    """Validate a real parameter in [minimum, below). Returns it as a
    float."""

    # Check that value is a real number
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
        raise TypeError(
            "invalid value for '%s' parameter. "
            "Expected int or float, received '%s'." % (name, type(value).__name__)
        )

    value = float(value)
    if not np.isfinite(value):
        raise ValueError(
            "invalid value for '%s' parameter. "
            "Value needs to be finite." % name
        )

    # Check that value is in the correct range
    if minimum is not None and value < minimum:
        raise ValueError(
            "invalid value for '%s' parameter. "
            "Value needs to be at least %s." % (name, minimum)
        )
    if below is not None and value >= below:
        raise ValueError(
            "invalid value for '%s' parameter. "
            "Value needs to be below %s." % (name, below)
        )
    return value


def validate_array(value, name, ndim, dtype=None):
    """Validate an array-like parameter of the given dimension. Returns
    it as a numpy array, cast to dtype when given."""
    try:
        array = np.asarray(value) if dtype is None else np.asarray(value, dtype=dtype)
    except (TypeError, ValueError) as exc:
        raise TypeError(
            "invalid value for '%s' parameter. "
            "Cannot convert '%s' into an array." % (name, type(value).__name__)
        ) from exc

    if array.ndim != ndim:
        raise ValueError(
            "invalid value for '%s' parameter. "
            "Expected %iD array, received %iD." % (name, ndim, array.ndim)
        )
    if 0 in array.shape:
        raise ValueError(
            "invalid value for '%s' parameter. "
            "Array must not be empty." % name
        )
    return array


def read_json(filename):
    """Returns the decoded content of a JSON file. Decoding errors are
    raised as ValueError naming the file."""
    with open(filename, "r", encoding="utf-8") as file_text:
        try:
            return json.load(file_text)
        except json.JSONDecodeError as exc:
            raise ValueError(
                "invalid JSON in '%s': %s" % (filename, exc)
            ) from exc


def write_json(filename, content):
    """Writes content to a JSON file with a stable layout."""
    with open(filename, "w", encoding="utf-8") as file_text:
        json.dump(content, file_text, indent=2, sort_keys=True)
        file_text.write("\n")
