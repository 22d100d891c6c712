"""This module contains schema validation functions."""
import math
from functools import partial
from types import FunctionType


def contains_only_strings(value: list = None) -> bool:
    """Returns true if a list contains only strings.

    Usage:

    assert contains_only_strings(['a', 'b', 'c'])
    """
    return not False in [isinstance(x, str) for x in value]


def contains_only_ints(value: list = None) -> bool:
    """Returns true if a list contains only integers. Booleans don't count
    even though python thinks they are integers.
    """
    return not False in [
        isinstance(x, int) and not isinstance(x, bool) for x in value
    ]


def is_finite_number(value=None) -> bool:
    """Numbers only, and neither NaN nor infinite. Negative values pass."""
    if isinstance(value, bool):
        return False
    return math.isfinite(value)


def is_positive_int(value: int = None) -> bool:
    return not isinstance(value, bool) and value >= 1


def is_non_negative_int(value: int = None) -> bool:
    return not isinstance(value, bool) and value >= 0


def is_shape(value: list = None) -> bool:
    """An [N, H, W, C] list of positive integers."""
    return (len(value) == 4 and contains_only_ints(value)
            and min(value) >= 1)


def is_positive_pair(value: list = None) -> bool:
    """A [height, width] list of positive integers."""
    return (len(value) == 2 and contains_only_ints(value)
            and min(value) >= 1)


def is_one_of(options: tuple = None) -> FunctionType:
    """Returns a function that checks membership in a fixed set of options.

    Usage:
    validation_function = is_one_of(('nearest', 'bilinear'))
    is_valid = validation_function('nearest')
    """

    def validate(options: tuple = None, value=None) -> bool:
        return value in options

    return partial(validate, options)


def validate_loose_struct(keys_and_types: dict = None) -> FunctionType:
    """Returns a function for verifying that a dictionary contains some
    expected keys and data types.

    keys_and_types should be a dictionary of the following format:

    {
        expected_key: int,
        expected_key: (int, float),
        expected_key: str
    }

    Usage:
    validation_function = validate_loose_struct(keys_and_types)
    is_valid = validation_function(incoming_dictionary)
    """

    def validate(keys_and_types: dict = None, value: dict = None) -> bool:
        for key, _type in keys_and_types.items():
            if not key in value:
                return False

            if not isinstance(value[key], _type):
                return False

        return True

    return partial(validate, keys_and_types)


def validate_list_of_loose_structs(
        keys_and_types: dict = None) -> FunctionType:
    """Returns a function for verifying that every element in a list of
    dictionaries contains some expected keys and data types.

    Usage:
    validation_function = validate_list_of_loose_structs(keys_and_types)
    is_valid = validation_function(incoming_list_of_dictionaries)
    """
    validate_one = validate_loose_struct(keys_and_types)

    def validate(value: list = None) -> bool:
        for item in value:
            if not isinstance(item, dict) or not validate_one(item):
                return False

        return True

    return validate


def is_blob_reference(value: dict = None) -> bool:
    """A {offset, length} pair of non-negative integers, counted in float32
    elements.
    """
    if not validate_loose_struct({'offset': int, 'length': int})(value):
        return False
    return (is_non_negative_int(value['offset'])
            and is_non_negative_int(value['length']))
