import sys
import os
sys.path.append(os.getcwd())

import pytest

from delta_infer.graph.fields import MANIFEST_FIELDS, COMMON_LAYER_FIELDS
from delta_infer.graph.fields import LAYER_FIELDS, LAYER_KINDS
from delta_infer.graph.validation import contains_only_strings
from delta_infer.graph.validation import contains_only_ints
from delta_infer.graph.validation import is_finite_number, is_shape
from delta_infer.graph.validation import is_positive_pair, is_one_of
from delta_infer.graph.validation import is_blob_reference
from delta_infer.graph.validation import validate_loose_struct
from delta_infer.graph.validation import validate_list_of_loose_structs
from delta_infer.reports import COMMON_FIELDS, REPORT_FIELDS


def test_field_definitions():
    def check_tuples(fieldset):
        for field, meta in fieldset.items():
            assert len(meta.type) == len(meta.validation)

    check_tuples(MANIFEST_FIELDS)
    check_tuples(COMMON_LAYER_FIELDS)
    for fieldset in LAYER_FIELDS.values():
        check_tuples(fieldset)
    check_tuples(COMMON_FIELDS)
    for fieldset in REPORT_FIELDS.values():
        check_tuples(fieldset)


def test_every_layer_kind_has_a_fieldset():
    assert set(LAYER_KINDS) == {
        'input', 'conv', 'batchnorm', 'affine', 'activation', 'maxpool',
        'avgpool', 'globalavgpool', 'upsample', 'add', 'concat', 'output'
    }


def test_contains_only_strings_validator():
    assert contains_only_strings(['a', 'b', 'c'])
    assert contains_only_strings(['a', 'b', 1]) == False


def test_contains_only_ints_validator():
    assert contains_only_ints([1, 2, 3])
    assert contains_only_ints([1, 2.0]) == False
    assert contains_only_ints([1, True]) == False


def test_number_and_shape_validators():
    assert is_finite_number(-1.0)
    assert is_finite_number(float('nan')) == False
    assert is_finite_number(float('inf')) == False
    assert is_finite_number(True) == False

    assert is_shape([1, 64, 64, 3])
    assert is_shape([1, 64, 64]) == False
    assert is_shape([1, 0, 64, 3]) == False
    assert is_positive_pair([3, 3])
    assert is_positive_pair([3, 0]) == False


def test_is_one_of():
    validation_function = is_one_of(('nearest', 'bilinear'))
    assert validation_function('nearest')
    assert validation_function('bicubic') == False


def test_blob_reference_validator():
    assert is_blob_reference({'offset': 0, 'length': 12})
    assert is_blob_reference({'offset': -1, 'length': 12}) == False
    assert is_blob_reference({'offset': 0}) == False
    assert is_blob_reference({'offset': 0, 'length': 1.5}) == False


def test_validate_loose_struct():
    expected_keys_and_types = {
        'i_expect_a_string': str,
        'i_expect_an_int': int,
    }

    good_data = {
        'i_expect_a_string': 'a',
        'i_expect_an_int': 1,
    }

    bad_data_type = {
        'i_expect_a_string': 1,
        'i_expect_an_int': 1,
    }

    bad_data_keys = {
        'i_expect_an_int': 1,
    }

    validation_function = validate_loose_struct(expected_keys_and_types)
    assert validation_function(good_data)
    assert validation_function(bad_data_type) == False
    assert validation_function(bad_data_keys) == False


def test_validate_list_of_loose_struct():
    expected_keys_and_types = {
        'i_expect_a_string': str,
        'i_expect_an_int': int,
    }

    good_data = [
        {'i_expect_a_string': 'a', 'i_expect_an_int': 1},
        {'i_expect_a_string': 'b', 'i_expect_an_int': 2},
    ]

    bad_data_type = [
        {'i_expect_a_string': 'a', 'i_expect_an_int': 1},
        {'i_expect_a_string': 'b', 'i_expect_an_int': 'c'},
    ]

    bad_data_keys = [
        {'i_expect_a_string': 'a', 'i_expect_an_int': 1},
        {'i_expect_an_int': 2},
    ]

    validation_function = validate_list_of_loose_structs(expected_keys_and_types)
    assert validation_function(good_data)
    assert validation_function(bad_data_type) == False
    assert validation_function(bad_data_keys) == False
    assert validation_function(['not a dict']) == False
