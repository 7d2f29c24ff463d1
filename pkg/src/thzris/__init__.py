"""Wideband THz multi-user downlink with distributed RISs and TTD hybrid beamforming."""
from .channel import (ChannelSet, GainModel, Scenario, SystemConfig, apply_csi_error, default_scenario,
                      effective_channel, generate_channels, subcarrier_frequencies, ula_response, upa_response)
from .analog import AnalogArchitecture, AnalogBeamformer, build_analog_beamformer, required_bits, bit_ratio
from .ris import ReflectionConfig, candidate_set, coordinate_pass, optimize_reflection
from .wmmse import wmmse_solve
from .orchestrator import SolveResult, complexity_report, joint_optimize, sinr, solve, sum_rate

__version__ = "0.1.0"
