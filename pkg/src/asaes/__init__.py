"""Side-channel simulation of AES-128 behind an attenuated-signature shunt LDO."""

from .aes import encrypt, encrypt_batch, sbox_hypothesis
from .config import ExperimentConfig, load_config
from .cpa import CpaReport, MtdCurve, attack, hypothesis_matrix, mtd_analysis, pearson
from .leakage import LeakageParams, TraceSet, synthesize_set, synthesize_trace
from .noise import NoiseParams, lfsr_stream, noise_waveform, predicted_correlation
from .regulator import RegulatorParams, SimResult, af_transfer, bode_sweep, overhead_report, simulate

__all__ = [
    "encrypt", "encrypt_batch", "sbox_hypothesis", "ExperimentConfig", "load_config",
    "CpaReport", "MtdCurve", "attack", "hypothesis_matrix", "mtd_analysis", "pearson",
    "LeakageParams", "TraceSet", "synthesize_set", "synthesize_trace", "NoiseParams",
    "lfsr_stream", "noise_waveform", "predicted_correlation", "RegulatorParams", "SimResult",
    "af_transfer", "bode_sweep", "overhead_report", "simulate",
]
