"""Compute-pixel focal plane: sensing mode and in-pixel binary-weight MAC.

Each pixel's photodiode discharges from V_DD in proportion to light
intensity.  In sensing mode rows are read out through correlated double
sampling (reset sample minus exposed sample) and an ideal uniform ADC.  In
compute mode every pixel drives v current branches, one per compute bitline
(CBL); an NVM cell per branch selects the current polarity (+1 stored as the
low-resistance state), so CBL j carries

    I_sum_j = sum_i s(W_ij) * unit_current * (v_pd_i / V_DD)

for the whole m x n array in a single compute cycle.  A sign sense amplifier
against a zero reference yields the layer-1 activation bits; a current of
exactly zero resolves to 0.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .bitplane import BinaryWeightPlane
from .errors import ModeError, NotReset, ShapeMismatch, WeightsUnprogrammed

SENSING = "sensing"
COMPUTE = "compute"


@dataclass
class SensorConfig:
    exposure_gain: float = None  # V per unit intensity; defaults to v_dd
    adc_bits: int = 8
    clock_period: float = 100e-6  # one compute cycle
    exposure_time: float = 0.9e-3

    def __post_init__(self):
        if not 1 <= self.adc_bits <= 16:
            raise ValueError("adc_bits must be in [1, 16]")
        if self.clock_period <= 0:
            raise ValueError("clock_period must be positive")


class NvmCell:
    """Magnetic tunnel junction bit: parallel = low resistance = +1.

    The read path is a divider against a fixed reference resistance; the
    nominal margin between the two states must clear 70 mV.
    """

    R_P = 2e3
    TMR = 1.0  # R_AP = R_P * (1 + TMR)
    V_READ = 1.2

    def __init__(self, bit=1):
        self.write(bit)

    def write(self, bit):
        self.state = "parallel" if bit else "antiparallel"

    def read(self) -> int:
        return 1 if self.state == "parallel" else 0

    @property
    def resistance(self) -> float:
        return self.R_P if self.state == "parallel" else self.R_P * (1 + self.TMR)

    @classmethod
    def read_margin(cls) -> float:
        r_ap = cls.R_P * (1 + cls.TMR)
        r_ref = math.sqrt(cls.R_P * r_ap)
        v_p = cls.V_READ * cls.R_P / (cls.R_P + r_ref)
        v_ap = cls.V_READ * r_ap / (r_ap + r_ref)
        return (v_ap - v_p) / 2


def adc_quantize(x, v_dd: float, bits: int):
    """Ideal uniform quantizer over [0, v_dd]; full scale saturates."""
    top = (1 << bits) - 1
    codes = np.floor(np.asarray(x, dtype=np.float64) / v_dd * (1 << bits))
    return np.clip(codes, 0, top).astype(np.uint32)


class CfpArray:
    """m x n compute-pixel array with v compute bitlines."""

    def __init__(self, m, n, v, v_dd: float = 1.2, unit_current: float = 1e-6,
                 r_pro: float = 2e5, config: SensorConfig = None):
        self.m, self.n, self.v = int(m), int(n), int(v)
        self.v_dd = float(v_dd)
        self.unit_current = float(unit_current)
        self.r_pro = float(r_pro)
        self.config = config or SensorConfig()
        if self.config.exposure_gain is None:
            self.config.exposure_gain = self.v_dd
        self.mode = SENSING
        self.v_pd = np.full((self.m, self.n), self.v_dd)
        self._reset = True
        self._signs = None  # (v, m*n) int8 once programmed
        self.tally = Counter()

    # -- weights ------------------------------------------------------------

    def program_weights(self, planes):
        """Write v binary weight planes into the per-pixel NVM cells."""
        planes = list(planes)
        if len(planes) != self.v:
            raise ShapeMismatch("need %d weight planes, got %d" % (self.v, len(planes)))
        signs = np.empty((self.v, self.m * self.n), dtype=np.int8)
        for j, plane in enumerate(planes):
            if not isinstance(plane, BinaryWeightPlane):
                plane = BinaryWeightPlane.from_signs(plane)
            if plane.shape != (self.m, self.n):
                raise ShapeMismatch(
                    "plane %d shaped %r, expected %r" % (j, plane.shape, (self.m, self.n))
                )
            signs[j] = plane.signs().ravel()
        self._signs = signs
        return self

    def weights_readback(self):
        """Read the NVM states back out (identity under zero variation)."""
        if self._signs is None:
            raise WeightsUnprogrammed("no weights programmed")
        return [
            BinaryWeightPlane.from_signs(self._signs[j].reshape(self.m, self.n))
            for j in range(self.v)
        ]

    # -- optics -------------------------------------------------------------

    def reset(self):
        self.v_pd[:] = self.v_dd
        self._reset = True
        return self

    def expose(self, frame):
        """Integrate a frame of intensities in [0, 1] onto the photodiodes."""
        frame = np.asarray(frame, dtype=np.float64)
        if frame.shape != (self.m, self.n):
            raise ShapeMismatch("frame shaped %r, array is %dx%d" % (frame.shape, self.m, self.n))
        if not self._reset:
            raise NotReset("pixels still hold the previous frame")
        drop = self.config.exposure_gain * frame
        self.v_pd = np.clip(self.v_dd - drop, 0.0, self.v_dd)
        self._reset = False
        self.tally["pixel_sense"] += self.m * self.n
        return self

    # -- sensing path -------------------------------------------------------

    def sense_readout(self, row) -> np.ndarray:
        """CDS readout of one row: quantize(V1 - V2), V1 the reset sample."""
        if self.mode != SENSING:
            raise ModeError("sense_readout requires sensing mode")
        if not 0 <= int(row) < self.m:
            raise ShapeMismatch("row %r outside 0..%d" % (row, self.m - 1))
        diff = self.v_dd - self.v_pd[int(row)]
        self.tally["adc_convert_per_sample"] += self.n
        return adc_quantize(diff, self.v_dd, self.config.adc_bits)

    def read_frame(self) -> np.ndarray:
        """All rows through sense_readout."""
        return np.stack([self.sense_readout(r) for r in range(self.m)])

    # -- compute path -------------------------------------------------------

    def compute_mac(self) -> np.ndarray:
        """All v CBL currents for the whole array in one compute cycle."""
        if self.mode != COMPUTE:
            raise ModeError("compute_mac requires compute mode")
        if self._signs is None:
            raise WeightsUnprogrammed("program weights before computing")
        x = self.v_pd.ravel() / self.v_dd
        currents = self.unit_current * (self._signs @ x)
        self.tally["nvm_read"] += self.v * self.m * self.n
        self.tally["sensor_compute_cycle"] += 1
        return currents

    def sign_activation(self, currents) -> np.ndarray:
        """1 iff I_sum * r_pro clears the zero reference; exact zero gives 0."""
        v = np.asarray(currents, dtype=np.float64) * self.r_pro
        return (v > 0.0).astype(np.uint8)

    def run_layer1(self, frame, weights=None) -> np.ndarray:
        """Program (optionally), expose, MAC, sign: the coarse layer-1 bits."""
        if weights is not None:
            self.program_weights(weights)
        self.mode = COMPUTE
        self.reset()
        self.expose(frame)
        return self.sign_activation(self.compute_mac())
