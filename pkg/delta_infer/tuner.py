"""Front-to-back tuning of truncation thresholds.

Truncation layers are tuned one at a time in execution order. While a layer
is searched, the layers before it keep their frozen thresholds and the layers
after it sit at zero. The layer's threshold grows geometrically from
start_epsilon while the calibration loss stays within the layer's share of
the budget, then a single bisection step refines the boundary between the
last passing and the first failing value.

Each layer's share is total_budget / N, measured against the loss at the
moment the previous layer was frozen, so the shares add up to at most the
total budget over the whole run.
"""
import math
from collections import OrderedDict, namedtuple
from typing import Callable, Dict, List
import numpy as np
from delta_infer.graph.model import ModelGraph
from delta_infer.ingest import ingest_frames
from delta_infer.logging import logging
from delta_infer.oracle import dense_run
from delta_infer.stats import summarize
from delta_infer.tensor.core import FeatureTensor
from delta_infer.translation import _
from delta_infer.utilities import mean_relative_deviation

LOGGER = logging.getLogger('delta_infer')

# Losses map (delta outputs, dense outputs) of one sequence to a scalar.
Loss = Callable[[List[np.ndarray], List[np.ndarray]], float]


class TuningException(RuntimeError):
    """Raised when there is nothing to calibrate on or the loss turns out
    non-finite.
    """


def default_loss(outputs: List[np.ndarray],
                 references: List[np.ndarray]) -> float:
    """Mean relative deviation from the dense output, averaged over frames."""
    return float(
        np.mean([
            mean_relative_deviation(output, reference)
            for output, reference in zip(outputs, references)
        ]))


class TuneConfig:
    """Tuning parameters.

    total_budget - largest allowed loss increase over the whole model
    start_epsilon - first candidate threshold of every layer
    step_factor - growth factor between candidates
    max_epsilon - cap on any threshold
    accuracy_gain_cap - largest allowed loss decrease, so a threshold isn't
        chosen because it happens to help on the calibration data
    calibration - frame source paths, see ingest_frames
    relative_increase - measure increases relative to the reference loss
        instead of as absolute differences
    """

    def __init__(self,
                 total_budget: float = 0.03,
                 start_epsilon: float = 1e-4,
                 step_factor: float = 2.0,
                 max_epsilon: float = 10.0,
                 accuracy_gain_cap: float = 0.01,
                 calibration: List[str] = None,
                 relative_increase: bool = False) -> None:
        if not total_budget >= 0:
            raise ValueError(_('total budget must not be negative'))
        if not step_factor > 1:
            raise ValueError(_('step factor must be greater than 1'))
        if not 0 < start_epsilon <= max_epsilon:
            raise ValueError(
                _('start epsilon must be positive and at most max epsilon'))
        if not accuracy_gain_cap >= 0:
            raise ValueError(_('accuracy gain cap must not be negative'))

        self.total_budget = float(total_budget)
        self.start_epsilon = float(start_epsilon)
        self.step_factor = float(step_factor)
        self.max_epsilon = float(max_epsilon)
        self.accuracy_gain_cap = float(accuracy_gain_cap)
        self.calibration = list(calibration or [])
        self.relative_increase = relative_increase

    def to_dict(self) -> dict:
        return {
            'total_budget': self.total_budget,
            'start_epsilon': self.start_epsilon,
            'step_factor': self.step_factor,
            'max_epsilon': self.max_epsilon,
            'accuracy_gain_cap': self.accuracy_gain_cap,
            'relative_increase': self.relative_increase,
        }


# epsilon - the candidate threshold
# loss - calibration loss with it
# passed - whether it stayed within the layer's share and the gain cap
Candidate = namedtuple('Candidate', 'epsilon loss passed')


class LayerTrajectory:
    """What the search did for one truncation layer."""

    def __init__(self, name: str, reference_loss: float) -> None:
        self.name = name
        self.reference_loss = reference_loss
        self.candidates = []
        self.epsilon = 0.0
        self.loss = reference_loss
        self.density = None

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'epsilon': self.epsilon,
            'reference_loss': self.reference_loss,
            'loss': self.loss,
            'density': self.density,
            'trajectory': [c._asdict() for c in self.candidates],
        }


class Tuner:
    """Runs the search on one graph. The graph's thresholds are left at the
    tuned values and its buffers reset. The graph stays open; whoever built
    it closes it.
    """

    def __init__(self,
                 graph: ModelGraph,
                 config: TuneConfig,
                 loss: Loss = None,
                 sequences: List[List[FeatureTensor]] = None) -> None:
        self.graph = graph
        self.config = config
        self.loss = loss or default_loss
        if sequences is None:
            sequences = [ingest_frames(path) for path in config.calibration]
        self.sequences = [list(sequence) for sequence in sequences]
        if not self.sequences or not all(self.sequences):
            raise TuningException(_('no calibration frames to tune on'))

        self.references = [dense_run(graph, seq) for seq in self.sequences]
        self.baseline_loss = None
        self.final_loss = None
        self.layers = OrderedDict()

    def evaluate(self) -> float:
        """Calibration loss of the graph's current thresholds."""
        losses = []
        for sequence, references in zip(self.sequences, self.references):
            self.graph.reset_buffers()
            outputs = [self.graph.run_frame(frame)[0].data for frame in sequence]
            losses.append(
                self.loss(outputs, [reference.data
                                    for reference in references]))

        self.graph.reset_buffers()
        loss = float(np.mean(losses))
        if not math.isfinite(loss):
            raise TuningException(_('calibration loss is not finite'))
        return loss

    def passes(self, loss: float, reference: float, share: float) -> bool:
        change = loss - reference
        if self.config.relative_increase:
            change /= max(abs(reference), 1e-12)
        return change <= share and -change <= self.config.accuracy_gain_cap

    def _try(self, trajectory: LayerTrajectory, epsilon: float,
             share: float) -> Candidate:
        self.graph.set_epsilon(trajectory.name, epsilon)
        loss = self.evaluate()
        candidate = Candidate(epsilon, loss,
                              self.passes(loss, trajectory.reference_loss,
                                          share))
        trajectory.candidates.append(candidate)
        LOGGER.debug('%s: epsilon %g gives loss %g (%s)', trajectory.name,
                     epsilon, loss, 'pass' if candidate.passed else 'fail')
        return candidate

    def search(self, name: str, reference_loss: float,
               share: float) -> LayerTrajectory:
        """Finds the largest passing threshold for one layer."""
        config = self.config
        trajectory = LayerTrajectory(name, reference_loss)

        best = self._try(trajectory, config.start_epsilon, share)
        if not best.passed:
            trajectory.epsilon = 0.0
            self.graph.set_epsilon(name, 0.0)
            return trajectory

        failed = None
        while best.epsilon < config.max_epsilon:
            epsilon = min(best.epsilon * config.step_factor,
                          config.max_epsilon)
            candidate = self._try(trajectory, epsilon, share)
            if not candidate.passed:
                failed = candidate
                break
            best = candidate

        if failed is not None:
            middle = self._try(trajectory, (best.epsilon + failed.epsilon) / 2,
                               share)
            if middle.passed:
                best = middle

        trajectory.epsilon = best.epsilon
        trajectory.loss = best.loss
        self.graph.set_epsilon(name, best.epsilon)
        return trajectory

    def tune(self) -> 'OrderedDict[str, float]':
        """Tunes every truncation layer and returns the thresholds in
        execution order.
        """
        names = [layer.name for layer in self.graph.truncation_layers()]
        for name in names:
            self.graph.set_epsilon(name, 0.0)

        self.baseline_loss = self.evaluate()
        self.layers = OrderedDict()
        if not names:
            self.final_loss = self.baseline_loss
            return OrderedDict()

        share = self.config.total_budget / len(names)
        reference = self.baseline_loss
        for name in names:
            trajectory = self.search(name, reference, share)
            self.layers[name] = trajectory
            reference = trajectory.loss
            LOGGER.debug('%s: frozen at epsilon %g', name, trajectory.epsilon)

        self.final_loss = reference
        self._measure_density()
        return OrderedDict(
            (name, trajectory.epsilon)
            for name, trajectory in self.layers.items())

    def _measure_density(self) -> None:
        """Active-pixel density at every tuned layer's output, over all
        calibration frames with the final thresholds.
        """
        frames = []
        for sequence in self.sequences:
            self.graph.reset_buffers()
            frames.extend(self.graph.run_frame(frame)[1] for frame in sequence)
        self.graph.reset_buffers()

        totals = summarize(frames)
        for name, trajectory in self.layers.items():
            trajectory.density = totals[name].mask_density

    def report(self) -> dict:
        return {
            'model': self.graph.name,
            'config': self.config.to_dict(),
            'baseline_loss': self.baseline_loss,
            'final_loss': self.final_loss,
            'loss_increase': (None if self.final_loss is None else
                              self.final_loss - self.baseline_loss),
            'layers': [trajectory.to_dict()
                       for trajectory in self.layers.values()],
        }


def tune(graph: ModelGraph,
         config: TuneConfig,
         loss: Loss = None,
         sequences: List[List[FeatureTensor]] = None) -> Dict[str, float]:
    """Tunes the graph's truncation thresholds in place and returns them."""
    return Tuner(graph, config, loss, sequences).tune()
