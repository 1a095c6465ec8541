"""Backend selection for the tethered-sweep hot loop.

The compiled extension ``tetherbm._kernels`` is used when it is importable;
otherwise the NumPy implementation in ``tetherbm._fallback`` is used. Setting
``TETHERBM_BACKEND=python`` forces the fallback.

``tmc_sweeps(V, H, PH, S, targets, W, b, c, A, offset, alpha, U, trace,
sum_v=None, sum_ph=None, sum_vph=None, n_threads=1)`` advances ``n_chains``
tethered chains by ``U.shape[1]`` sweeps. Per sweep and chain: hidden units are
redrawn from ``PH`` (which must hold p(h|v) of the current ``V`` on entry), then
visible units are heat-bath updated in index order with the exact tethered
log-weight difference. Afterwards ``S = V @ A.T`` is recomputed exactly,
``PH`` refreshed, ``trace[:, t]`` receives the normalized magnetizations
``S - offset``, and the optional accumulators receive ``V``, ``PH`` and
``V (x) PH``. All arrays are C-contiguous float64; ``V``, ``H``, ``PH``, ``S``,
``trace`` and the accumulators are modified in place.
"""
import os

from . import _fallback

try:
    if os.environ.get("TETHERBM_BACKEND", "").lower() == "python":
        raise ImportError("fallback forced by TETHERBM_BACKEND")
    from . import _kernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "python"

tmc_sweeps = _impl.tmc_sweeps
python_tmc_sweeps = _fallback.tmc_sweeps


def compiled_tmc_sweeps():
    """The compiled kernel, or ``None`` when the extension is not built."""
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels.tmc_sweeps
