import sys
import os
sys.path.append(os.getcwd())

import pytest

from delta_infer.config import engine_options
from delta_infer.graph.model import build_graph
from delta_infer.synthetic import ManifestBuilder, conv_stack


@pytest.fixture
def options():
    """Serial engine options with no automatic resets, so tests don't depend
    on whatever a local config file says.
    """
    return engine_options(threads=1, poison=False, very_sparse_max=4,
                          tile_mode='hybrid', reset_interval=0)


@pytest.fixture
def poison_options(options):
    return options._replace(poison=True)


@pytest.fixture
def small_manifest():
    builder = ManifestBuilder('small', (1, 12, 12, 2), seed=3)
    builder.conv('conv1', 4, kernel=3)
    builder.activation('relu1', 'relu')
    builder.conv('conv2', 3, kernel=1)
    return builder.build()


@pytest.fixture
def small_graph(small_manifest, options):
    manifest, blob = small_manifest
    with build_graph(manifest, blob, options) as graph:
        yield graph


@pytest.fixture
def stack_graph(options):
    manifest, blob = conv_stack(depth=4, shape=(1, 32, 32, 1), channels=8)
    with build_graph(manifest, blob, options) as graph:
        yield graph


@pytest.fixture
def model_dir(tmp_path):
    """A saved model on disk plus the path of its manifest."""
    builder = ManifestBuilder('saved', (1, 16, 16, 1), seed=5)
    builder.conv('conv1', 4, kernel=3)
    builder.activation('relu1', 'relu', epsilon=0.0)
    builder.conv('conv2', 4, kernel=3)
    builder.activation('relu2', 'relu', epsilon=0.0)
    builder.conv('conv3', 2, kernel=1)
    return builder.save(str(tmp_path))
