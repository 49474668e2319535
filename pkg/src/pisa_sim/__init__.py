"""Behavioral simulator for a hybrid in-sensor / near-sensor DRAM accelerator.

Layer 1 of a binary-weight network runs inside the pixel array as an analog
current-summing MAC; the remaining layers run as bit-plane AND / bitcount
operations on a charge-sharing DRAM substrate.  A calibrated cost model
accounts energy and latency per primitive.
"""

from .bitplane import (
    BinaryWeightPlane,
    BitPlaneTensor,
    QuantTensor,
    decompose,
    recompose,
)
from . import errors

__version__ = "0.1.0"
