"""Generative phoneme classification in linear (block-DCT waveform) and
cepstral feature domains, with exact model adaptation to additive noise."""

__version__ = "0.1.0"
