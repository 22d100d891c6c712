"""Reading and writing model manifests and their weight blobs.

A manifest is a JSON document describing the layers; the weights live in a
separate blob of raw little-endian float32 values. Blob references are
{offset, length} pairs counted in float elements, not bytes.
"""
import copy
import os
from typing import Dict, Iterator, Tuple
import numpy as np
import ujson
from delta_infer.graph.fields import LAYER_FIELDS
from delta_infer.graph.schema import ManifestSchema, ManifestValidationException
from delta_infer.graph.validation import is_blob_reference
from delta_infer.translation import _


def blob_fields(kind: str) -> Tuple[str, ...]:
    """Names of the fields of a layer type that reference the blob."""
    return tuple(name for name, meta in LAYER_FIELDS.get(kind, {}).items()
                 if is_blob_reference in meta.validation)


def blob_references(manifest: dict) -> Iterator[Tuple[str, str, dict]]:
    """Yields (layer name, field, reference) for every blob reference."""
    for layer in manifest['layers']:
        for field in blob_fields(layer['type']):
            if field in layer:
                yield layer['name'], field, layer[field]


def check_blob_references(manifest: dict, blob: np.ndarray) -> None:
    """References must lie inside the blob and must not overlap."""
    spans = []
    for name, field, ref in blob_references(manifest):
        start, stop = ref['offset'], ref['offset'] + ref['length']
        if stop > blob.size:
            raise ManifestValidationException(
                _('layer {name}: {field} reaches element {stop} of a blob '
                  'holding {size}').format(name=name,
                                           field=field,
                                           stop=stop,
                                           size=blob.size))
        if ref['length']:
            spans.append((start, stop, f'{name}.{field}'))

    spans.sort()
    for (_start, stop, first), (start, _stop, second) in zip(spans, spans[1:]):
        if start < stop:
            raise ManifestValidationException(
                _('blob ranges of {first} and {second} overlap').format(
                    first=first, second=second))


def blob_slice(blob: np.ndarray, ref: dict) -> np.ndarray:
    return blob[ref['offset']:ref['offset'] + ref['length']]


def parse_manifest(text: str) -> dict:
    """Parses and schema-checks a manifest document."""
    try:
        manifest = ujson.loads(text)
    except ValueError as error:
        raise ManifestValidationException(
            _('manifest is not valid JSON: {error}').format(
                error=error)) from None

    if not isinstance(manifest, dict):
        raise ManifestValidationException(_('manifest must be an object'))
    ManifestSchema(manifest).check()
    return manifest


def read_blob(path: str) -> np.ndarray:
    raw = np.fromfile(path, dtype='<f4')
    return raw.astype(np.float32)


def load_manifest(path: str) -> Tuple[dict, np.ndarray]:
    """Reads a manifest and its weight blob.

    Raises ManifestValidationException for anything wrong with either, and
    OSError when a file can't be read.
    """
    with open(path, 'r') as handle:
        manifest = parse_manifest(handle.read())

    blob_path = os.path.join(os.path.dirname(os.path.abspath(path)),
                             manifest['weights'])
    if not os.path.isfile(blob_path):
        raise ManifestValidationException(
            _('weight blob {path} does not exist').format(path=blob_path))
    blob = read_blob(blob_path)
    check_blob_references(manifest, blob)
    return manifest, blob


def with_epsilons(manifest: dict, epsilons: Dict[str, float]) -> dict:
    """A deep copy of the manifest with the given layer epsilons set."""
    tuned = copy.deepcopy(manifest)
    for layer in tuned['layers']:
        if layer['name'] in epsilons:
            layer['epsilon'] = float(epsilons[layer['name']])
    return tuned


def write_manifest(path: str, manifest: dict, blob_path: str = None) -> None:
    """Writes a manifest as JSON. When blob_path is given the weights field is
    rewritten to point at it relative to the new manifest.
    """
    manifest = copy.deepcopy(manifest)
    if blob_path is not None:
        manifest['weights'] = os.path.relpath(
            os.path.abspath(blob_path),
            os.path.dirname(os.path.abspath(path)))

    with open(path, 'w') as handle:
        handle.write(ujson.dumps(manifest, indent=2))


def write_blob(path: str, blob: np.ndarray) -> None:
    np.asarray(blob, dtype='<f4').tofile(path)
