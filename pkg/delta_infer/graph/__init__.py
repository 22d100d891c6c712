"""Model manifests, graph construction and per-frame execution."""
from delta_infer.graph.model import ModelGraph, LayerRecord, TraceEntry
from delta_infer.graph.model import build_graph, load_model, run_frame
from delta_infer.graph.model import reset_buffers, DENSE_EPSILON
from delta_infer.graph.manifest import load_manifest, write_manifest
from delta_infer.graph.manifest import with_epsilons, write_blob
from delta_infer.graph.schema import ManifestSchema, ManifestValidationException
