"""Basic delta_infer utilities that don't need their own module."""
import numpy as np


def divup(numerator: int, denominator: int) -> int:
    """Ceiling division for non-negative integers."""
    return (numerator + denominator - 1) // denominator


def max_relative_deviation(values: np.ndarray, reference: np.ndarray) -> float:
    """Largest absolute difference between two arrays, scaled by the largest
    magnitude in the reference. Scaling by the global magnitude keeps
    near-zero reference entries from blowing the measure up.
    """
    values = np.asarray(values, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if values.shape != reference.shape:
        raise ValueError(
            f'cannot compare shapes {values.shape} and {reference.shape}')
    if reference.size == 0:
        return 0.0

    scale = max(float(np.max(np.abs(reference))), 1e-12)
    return float(np.max(np.abs(values - reference))) / scale


def mean_relative_deviation(values: np.ndarray,
                            reference: np.ndarray) -> float:
    """Mean absolute difference scaled by the mean reference magnitude."""
    values = np.asarray(values, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if values.shape != reference.shape:
        raise ValueError(
            f'cannot compare shapes {values.shape} and {reference.shape}')
    if reference.size == 0:
        return 0.0

    scale = max(float(np.mean(np.abs(reference))), 1e-12)
    return float(np.mean(np.abs(values - reference))) / scale
