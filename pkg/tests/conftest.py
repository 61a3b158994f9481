"""Shared helpers for the test suite."""

import numpy as np
from hypothesis import HealthCheck, settings

from regap.phase import PhaseInstance, box_support, smooth_object, synthesize

settings.register_profile("suite", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


def smooth_instance(seed: int, shape=(32, 32), photon_scale: float = 1e3,
                    sigma: float = 1.0) -> PhaseInstance:
    """Smoothed random object on a centered 12x12 box, Poisson observed."""
    support = box_support(shape, 6)
    obj = smooth_object(support, seed, sigma)
    return synthesize(shape, support, photon_scale, seed, object_image=obj)


def noiseless_instance(seed: int, shape=(32, 32)) -> PhaseInstance:
    """Same object family but observed without noise (consistent data)."""
    support = box_support(shape, 6)
    obj = smooth_object(support, seed)
    intensity = np.abs(np.fft.fftn(obj, norm="ortho")) ** 2
    return PhaseInstance(object_image=obj, noiseless_intensity=intensity,
                         observed=intensity.copy(), support=support,
                         photon_scale=float("inf"), seed=seed)
