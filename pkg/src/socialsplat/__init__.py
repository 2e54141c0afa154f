"""Socially-conditioned talking-head pipeline on mesh-rigged 3D Gaussian splats.

Subpackages: ``numcore`` (tensors, tape, layers, Adam), ``gsplat`` (renderer),
``rigging`` (mesh binding and density control), ``social``, ``motiongen``,
``training`` (losses, metrics, stages) and ``cli``.
"""
import os as _os

# cap BLAS threads before numpy loads; one worker keeps results reproducible
if "RSAT_THREADS" in _os.environ:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["RSAT_THREADS"])

__version__ = "0.1.0"
