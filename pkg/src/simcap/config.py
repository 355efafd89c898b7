"""System parameters for the SIM-aided HMIMO link and their JSON form."""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Any, Mapping

SPEED_OF_LIGHT = 299_792_458.0


@dataclasses.dataclass(frozen=True)
class SystemConfig:
    """Scalar description of the link.

    Geometry-derived fields (``element_spacing``, ``element_area`` and the two
    SIM thicknesses) default to ``None`` and are resolved from the wavelength:
    lambda/2, (lambda/2)^2 and 5*lambda respectively.
    """

    n_t: int = 8
    n_r: int = 8
    m_tx: int = 40
    n_rx: int = 100
    layers_tx: int = 4
    layers_rx: int = 4
    carrier_freq: float = 2e9
    element_spacing: float | None = None
    element_area: float | None = None
    sim_thickness_tx: float | None = None
    sim_thickness_rx: float | None = None
    link_distance: float = 200.0
    pathloss_exponent: float = 2.5
    tx_power_dbm: float = 20.0
    noise_dbm: float = -110.0
    bandwidth_hz: float = 2e7
    altitude_m: float = 5.0
    seed: int = 1

    def __post_init__(self) -> None:
        for name in ("n_t", "n_r", "m_tx", "n_rx", "layers_tx", "layers_rx"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an integer in [0, 2**64)")
        if not self.carrier_freq > 0:
            raise ValueError("carrier_freq must be positive")
        if not self.link_distance > self.sim_thickness_tx_m + self.sim_thickness_rx_m:
            raise ValueError("link_distance must exceed the combined SIM thickness")
        for name in ("element_spacing", "element_area", "sim_thickness_tx", "sim_thickness_rx"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive when given")
        if not math.isfinite(self.tx_power_dbm - self.noise_dbm):
            raise ValueError("tx_power_dbm and noise_dbm must be finite")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def spacing(self) -> float:
        return self.element_spacing if self.element_spacing is not None else self.wavelength / 2

    @property
    def area(self) -> float:
        return self.element_area if self.element_area is not None else (self.wavelength / 2) ** 2

    @property
    def sim_thickness_tx_m(self) -> float:
        return self.sim_thickness_tx if self.sim_thickness_tx is not None else 5 * self.wavelength

    @property
    def sim_thickness_rx_m(self) -> float:
        return self.sim_thickness_rx if self.sim_thickness_rx is not None else 5 * self.wavelength

    @property
    def s(self) -> int:
        return min(self.m_tx, self.n_rx)

    @property
    def t(self) -> int:
        return max(self.m_tx, self.n_rx)

    @property
    def snr_linear(self) -> float:
        """rho = P / sigma^2 as a linear ratio."""
        return 10.0 ** ((self.tx_power_dbm - self.noise_dbm) / 10.0)

    def replace(self, **changes: Any) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        """Resolved parameters, including the derived geometry."""
        out = dataclasses.asdict(self)
        out["wavelength"] = self.wavelength
        out["element_spacing"] = self.spacing
        out["element_area"] = self.area
        out["sim_thickness_tx"] = self.sim_thickness_tx_m
        out["sim_thickness_rx"] = self.sim_thickness_rx_m
        return out


_FIELDS = {f.name: f for f in dataclasses.fields(SystemConfig)}
_INT_FIELDS = {"n_t", "n_r", "m_tx", "n_rx", "layers_tx", "layers_rx", "seed"}


def _coerce(name: str, value: Any) -> Any:
    if name in _INT_FIELDS:
        if isinstance(value, str):
            value = int(value)
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        return value
    if value is None:
        return None
    return float(value)


def config_from_mapping(data: Mapping[str, Any]) -> SystemConfig:
    """Build a config from a mapping, rejecting unknown keys.

    A ``wavelength`` key is accepted for readability but must agree with
    ``carrier_freq``.
    """
    data = dict(data)
    wavelength = data.pop("wavelength", None)
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    cfg = SystemConfig(**{k: _coerce(k, v) for k, v in data.items()})
    if wavelength is not None and not math.isclose(float(wavelength), cfg.wavelength, rel_tol=1e-9):
        raise ValueError(
            f"wavelength {wavelength} disagrees with carrier_freq (expected {cfg.wavelength})"
        )
    return cfg


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> SystemConfig:
    """Read a JSON config file (or the defaults) and apply ``key=value`` overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a JSON object")
        data.update(loaded)
    if overrides:
        data.update(overrides)
    return config_from_mapping(data)


def parse_override(text: str) -> tuple[str, Any]:
    """Split ``key=value``; the value is parsed as JSON when possible."""
    if "=" not in text:
        raise ValueError(f"override must look like key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value
