"""This module contains the fieldsets of a model manifest. The manifest schema
uses them to validate documents before anything is built from them.
"""
from collections import namedtuple
from delta_infer.graph.validation import contains_only_strings
from delta_infer.graph.validation import is_blob_reference, is_finite_number
from delta_infer.graph.validation import is_positive_int, is_non_negative_int
from delta_infer.graph.validation import is_shape, is_positive_pair, is_one_of
from delta_infer.graph.validation import validate_list_of_loose_structs
from delta_infer.layers.activation import ACTIVATIONS
from delta_infer.layers.upsample import UPSAMPLE_MODES

# type - a tuple of classes representing (in order of preference) the expected
#     field type(s)
# required - a booleon variable indicating that this field is not optional
# validation - a tuple of lamdas, other callables, or None where each element
#     is field validation for one type in the type tuple
#
# Index constants as well, because index lookup is faster than named fields.
Field = namedtuple('RequireField', 'type required validation')
FIELD_TYPE = 0
FIELD_REQUIRED = 1
FIELD_VALIDATION = 2

MANIFEST_FIELDS = {
    # human readable model name, copied into reports
    'name': Field((str, ), True, (None, )),
    # [N, H, W, C] of every frame the model accepts
    'input_shape': Field((list, ), True, (is_shape, )),
    # path of the weight blob, relative to the manifest
    'weights': Field((str, ), True, (None, )),
    # the layers; each one is validated against its own fieldset
    'layers': Field((list, ), True,
                    (validate_list_of_loose_structs({
                        'name': str,
                        'type': str
                    }), )),
}

# Fields every layer may carry.
COMMON_LAYER_FIELDS = {
    'name': Field((str, ), True, (None, )),
    'type': Field((str, ), True, (None, )),
    # names of the producing layers, the previous layer when absent
    'inputs': Field((list, ), False, (contains_only_strings, )),
}

# truncation threshold; negative means never truncate
EPSILON = Field((float, int), False, (is_finite_number, is_finite_number))
KERNEL = Field((list, int), True, (is_positive_pair, is_positive_int))
BLOB = Field((dict, ), True, (is_blob_reference, ))
OPTIONAL_BLOB = Field((dict, ), False, (is_blob_reference, ))

LAYER_FIELDS = {
    'input': {
        'epsilon': EPSILON,
        # Chebyshev radius the thresholded input mask is widened by
        'dilation': Field((int, ), False, (is_non_negative_int, )),
    },
    'conv': {
        'out_channels': Field((int, ), True, (is_positive_int, )),
        'kernel': KERNEL,
        'stride': Field((int, ), False, (is_positive_int, )),
        'dilation': Field((int, ), False, (is_positive_int, )),
        'padding': Field((int, ), False, (is_non_negative_int, )),
        'groups': Field((int, ), False, (is_positive_int, )),
        'weight': BLOB,
        'bias': OPTIONAL_BLOB,
        # output tile [height, width], chosen from the kernel when absent
        'tile': Field((list, ), False, (is_positive_pair, )),
    },
    'batchnorm': {
        'gamma': BLOB,
        'beta': BLOB,
        'mean': BLOB,
        'var': BLOB,
        'eps': Field((float, int), False, (is_finite_number, is_finite_number)),
    },
    'affine': {
        'scale': BLOB,
        'shift': BLOB,
    },
    'activation': {
        'fn': Field((str, ), True, (is_one_of(tuple(ACTIVATIONS)), )),
        'epsilon': EPSILON,
        'negative_slope': Field((float, int),
                                False, (is_finite_number, is_finite_number)),
    },
    'maxpool': {
        'kernel': Field((int, ), True, (is_positive_int, )),
        'stride': Field((int, ), False, (is_positive_int, )),
        'padding': Field((int, ), False, (is_non_negative_int, )),
    },
    'avgpool': {
        'kernel': Field((int, ), True, (is_positive_int, )),
        'stride': Field((int, ), False, (is_positive_int, )),
        'padding': Field((int, ), False, (is_non_negative_int, )),
    },
    'globalavgpool': {},
    'upsample': {
        'factor': Field((int, ), True, (is_positive_int, )),
        'mode': Field((str, ), False, (is_one_of(UPSAMPLE_MODES), )),
    },
    'add': {},
    'concat': {},
    'output': {},
}

LAYER_KINDS = tuple(LAYER_FIELDS)
