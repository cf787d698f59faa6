"""Integrated data and energy transfer waveform design for OTFS links.

Modules, bottom-up: ``grids`` (ISFFT/SFFT), ``channel`` (delay-Doppler
channels), ``ehmodel`` (rectenna DC model), ``ratemodel`` (SINR and rate),
``gpcore`` (posynomials and a GP solver), ``designer`` (successive GP),
``linksim`` (Monte-Carlo oracle), ``ofdmbaseline`` (OFDM benchmark) and ``cli``.
"""

__version__ = "0.1.0"
