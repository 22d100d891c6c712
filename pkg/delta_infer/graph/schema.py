"""Schemata for the JSON documents delta_infer reads and writes.

Rather than slinging JSON around and failing somewhere deep inside the engine
when a field is missing, every document is checked field by field against a
fieldset first. A schema answers two questions: is this document valid
(validate) and if not, what exactly is wrong with it (problems).

Note: These classes speak JSON but they do so in the form of a Python
dictionary.
"""
from typing import Any, List
from delta_infer.graph.fields import FIELD_TYPE, FIELD_REQUIRED, FIELD_VALIDATION
from delta_infer.graph.fields import MANIFEST_FIELDS, COMMON_LAYER_FIELDS
from delta_infer.graph.fields import LAYER_FIELDS
from delta_infer.logging import logging
from delta_infer.translation import _

LOGGER = logging.getLogger('delta_infer')


class SchemaValidationException(Exception):
    """Raised when a schema is badly formed in accordance with the given
    meta data.
    """


class ManifestValidationException(SchemaValidationException):
    """Raised when a model manifest can't be turned into a graph: bad JSON,
    schema violations, bad blob references or dangling layer references.
    """


class Schema:
    """The base class for all of our JSON schemata."""

    def __setattr__(self, name: str, value: Any) -> None:
        """Values set as attributes land in the internal representation,
        validated on the way in.
        """
        if name in ('fields', 'representation'):
            object.__setattr__(self, name, value)
        else:
            if self.validate_field(name, value):
                self.representation[name] = value
            else:
                raise SchemaValidationException(
                    _('invalid value {value} for {name}').format(
                        value=value, name=name))

    def __getattr__(self, name: str) -> Any:
        if name in ('fields', 'representation'):
            raise AttributeError(name)
        try:
            return self.representation[name]
        except KeyError:
            raise AttributeError(name) from None

    def __init__(self, json_to_load: dict, fields: dict = None) -> None:
        if json_to_load:
            self.representation = json_to_load
        else:
            self.representation = {}

        self.fields = fields

    def load_json(self, json_to_load: dict = None) -> None:
        self.representation = json_to_load

    def to_json(self) -> dict:
        """Returns a copy of the representation as it is."""
        return self.representation.copy()

    def field_problem(self, field: str, value_to_test: Any = None) -> str:
        """Describes what is wrong with a field, or returns None when the field
        is Not Invalidated. A field that doesn't exist and isn't required
        can't invalidate anything.
        """
        try:
            meta = self.fields[field]
        except KeyError:
            return None

        if value_to_test is None:
            if field not in self.representation:
                if meta[FIELD_REQUIRED]:
                    return _('required field {field} is missing').format(
                        field=field)
                return None
            local_value = self.representation[field]
        else:
            local_value = value_to_test

        # Is the local value a valid type? If not, say so
        type_idx = None
        for i, _type in enumerate(meta[FIELD_TYPE]):
            if isinstance(local_value, _type):
                type_idx = i
                break

        if type_idx is None:
            return _('field {field} has the wrong type').format(field=field)

        validation_function = meta[FIELD_VALIDATION][type_idx]
        if validation_function and not validation_function(local_value):
            return _('field {field} failed validation').format(field=field)

        return None

    def validate_field(self, field: str, value_to_test: Any = None) -> bool:
        problem = self.field_problem(field, value_to_test)
        if problem:
            LOGGER.warning(problem)
            return False
        return True

    def problems(self) -> List[str]:
        """Every problem with the internal representation."""
        found = []
        for field in self.fields.keys():
            problem = self.field_problem(field)
            if problem:
                found.append(problem)
        return found

    def validate(self) -> bool:
        """Validate the internal JSON representation.

        Returns True if valid. Otherwise, returns False.
        """
        for field in self.fields.keys():
            if not self.validate_field(field):
                return False

        return True


class LayerSchema(Schema):
    """A schema representing one manifest layer. The fieldset depends on the
    layer's type; unknown types have no fieldset and never validate.
    """

    def __init__(self, json_to_load: dict = None) -> None:
        fields = dict(COMMON_LAYER_FIELDS)
        kind = (json_to_load or {}).get('type')
        fields.update(LAYER_FIELDS.get(kind, {}))
        super().__init__(fields=fields, json_to_load=json_to_load)

    def problems(self) -> List[str]:
        name = self.representation.get('name', '?')
        kind = self.representation.get('type')
        found = super().problems()
        if isinstance(kind, str) and kind not in LAYER_FIELDS:
            found.append(
                _('unknown layer type {kind}').format(kind=kind))
        return [f'layer {name}: {problem}' for problem in found]


class ManifestSchema(Schema):
    """A schema representing a whole model manifest, layers included."""

    def __init__(self, json_to_load: dict = None) -> None:
        super().__init__(fields=MANIFEST_FIELDS, json_to_load=json_to_load)

    def layer_schemata(self) -> List[LayerSchema]:
        return [LayerSchema(layer) for layer in self.representation['layers']]

    def problems(self) -> List[str]:
        found = super().problems()
        if found:
            return found

        names = set()
        for layer in self.layer_schemata():
            found.extend(layer.problems())
            if layer.representation['name'] in names:
                found.append(
                    _('duplicate layer name {name}').format(
                        name=layer.representation['name']))
            names.add(layer.representation['name'])
        return found

    def check(self) -> None:
        """Raises ManifestValidationException listing every problem."""
        found = self.problems()
        if found:
            raise ManifestValidationException('; '.join(found))
