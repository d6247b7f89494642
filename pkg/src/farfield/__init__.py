"""Mask-based multichannel speech enhancement toolkit.

Modules: dsp (STFT, Hermitian algebra), masking, beamforming (SDW-MWF),
dereverb (WPE), roomsim (image-source RIRs), mixer (corpus building),
metrics (SDR, SI-SNR, EER), formats (WAV, TFB1, CSV, JSON), pipeline, cli.
"""

__version__ = "0.1.0"
