"""Unit handling.

Internally every frequency-like quantity is an angular frequency in rad/s
and every time is in seconds.  Configuration files and the CLI speak in
Hz-family and second-family units with explicit suffixes ("250khz",
"8ms"); the helpers here are the only place that conversion happens.
"""
from __future__ import annotations

import math
import re

from .errors import ConfigurationError

TWO_PI = 2.0 * math.pi

_NUMBER = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_FREQ_RE = re.compile(rf"^({_NUMBER})\s*(hz|khz|mhz|ghz)$", re.IGNORECASE)
_TIME_RE = re.compile(rf"^({_NUMBER})\s*(s|ms|us|ns)$", re.IGNORECASE)

_FREQ_SCALE = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}
_TIME_SCALE = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}


def parse_frequency(text: str, key: str = "") -> float:
    """Parse "25khz" style text into an angular frequency in rad/s."""
    if not isinstance(text, str):
        raise ConfigurationError(
            f"{key or 'frequency'}: expected a string with a unit suffix, got {text!r}")
    m = _FREQ_RE.match(text.strip())
    if m is None:
        raise ConfigurationError(
            f"{key or 'frequency'}: {text!r} is not of the form '<number><hz|khz|mhz|ghz>'")
    return TWO_PI * float(m.group(1)) * _FREQ_SCALE[m.group(2).lower()]


def parse_time(text: str, key: str = "") -> float:
    """Parse "8ms" style text into seconds."""
    if not isinstance(text, str):
        raise ConfigurationError(
            f"{key or 'time'}: expected a string with a unit suffix, got {text!r}")
    m = _TIME_RE.match(text.strip())
    if m is None:
        raise ConfigurationError(
            f"{key or 'time'}: {text!r} is not of the form '<number><s|ms|us|ns>'")
    return float(m.group(1)) * _TIME_SCALE[m.group(2).lower()]


def rad_to_hz(omega: float) -> float:
    """Angular frequency in rad/s to ordinary frequency in Hz."""
    return omega / TWO_PI


def hz_to_rad(freq: float) -> float:
    """Ordinary frequency in Hz to angular frequency in rad/s."""
    return TWO_PI * freq
