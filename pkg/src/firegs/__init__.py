"""Dynamic fire reconstruction with time-parameterized 3D Gaussians."""

import os as _os

if "FIREGS_THREADS" in _os.environ:
    _os.environ.setdefault("NUMBA_NUM_THREADS", _os.environ["FIREGS_THREADS"])

import numba as _numba

_numba.config.THREADING_LAYER = "workqueue"

__version__ = "0.1.0"
