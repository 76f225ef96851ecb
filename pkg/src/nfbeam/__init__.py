"""Nearfield frequency-invariant beamforming with spherical vector-sensor arrays.

Modules
-------
special_fn       spherical harmonics, Bessel and Hankel functions
sampling         sensor layouts and discrete spherical-harmonic analysis
scene_sim        free-field point-source simulation of vector-sensor captures
modal_analysis   pressure, velocity and field coefficients
beamformer_freq  frequency-domain beamformer and block-DFT pipeline
beamformer_time  residue-theorem modal filters and the streaming beamformer
metrics          beampatterns, lobe measures, coherence, cost model
experiments      figure/table runners used by the command line
"""
from .beamformer_freq import BeamformerConfig, block_pipeline, design_dolph_chebyshev
from .beamformer_time import StreamingBeamformer, design_filter_bank, td_beamform
from .modal_core import ModalCoefficientSet
from .sampling import SensorArrayGeometry, nearly_uniform_sphere
from .scene_sim import AcousticScene, PointSource, VectorSensorCapture, simulate_capture

__version__ = "0.1.0"

__all__ = [
    "AcousticScene", "BeamformerConfig", "ModalCoefficientSet", "PointSource", "SensorArrayGeometry",
    "StreamingBeamformer", "VectorSensorCapture", "block_pipeline", "design_dolph_chebyshev",
    "design_filter_bank", "nearly_uniform_sphere", "simulate_capture", "td_beamform",
]
