"""Pure-numpy predict kernel, the reference for the compiled extension.

Composes the public covariance/mean operations step by step; the compiled
kernel in _fastcore replicates exactly this sequence.
"""

from __future__ import annotations

import numpy as np

from ..gaussian import BeliefState, NoiseParams, propagate_covariance
from ..lie import ExtendedPose
from ..sensors import ImuSample, imu_mean_propagate

BACKEND = "python"


def predict_window(
    rot: np.ndarray,
    pos: np.ndarray,
    vel: np.ndarray,
    bias_g: np.ndarray,
    bias_a: np.ndarray,
    cov: np.ndarray,
    omegas: np.ndarray,
    accs: np.ndarray,
    dts: np.ndarray,
    gravity: np.ndarray,
    sigma_g: float,
    sigma_a: float,
    sigma_bg: float,
    sigma_ba: float,
):
    params = NoiseParams(
        sigma_g=sigma_g, sigma_a=sigma_a, sigma_bg=sigma_bg, sigma_ba=sigma_ba
    )
    belief = BeliefState(
        ExtendedPose(rot.copy(), pos.copy(), vel.copy()),
        np.asarray(bias_g, dtype=float).copy(),
        np.asarray(bias_a, dtype=float).copy(),
        np.asarray(cov, dtype=float).copy(),
    )
    for i in range(len(dts)):
        dt = float(dts[i])
        belief.cov = propagate_covariance(belief, dt, params, gravity)
        belief.mean = imu_mean_propagate(
            belief.mean,
            belief.bias_g,
            belief.bias_a,
            ImuSample(omegas[i], accs[i], 0.0),
            dt,
            gravity,
        )
    return belief.mean.rotation, belief.mean.position, belief.mean.velocity, belief.cov
