"""Campaign configuration: flat ``key = value`` text with [scheme] sections.

Global keys come before the first section; each ``[scheme]`` section adds one
pilot scheme to the sweep and may override the pilot power boost. Malformed
input raises :class:`ConfigError` carrying the offending line number.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .channel import ChannelMode
from .pilots import PilotLayout, Scheme
from .rx import CeMode, Procedure, RxOptions, DEFAULT_AUD_GAMMA
from .tx import ResourceConfig


class ConfigError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class SchemeSpec:
    scheme: Scheme
    w: int = 1
    pilot_boost_db: float | None = None  # None -> inherit the global value

    @property
    def label(self) -> str:
        return self.scheme.value


@dataclass
class SimConfig:
    """Everything one campaign needs; defaults mirror the desk-scale preset."""

    n_pilot_re: int = 24
    n_data_re: int = 720
    n_rx: int = 2
    transport_block_size: int = 160
    snr_db: tuple[float, ...] = (0.0, 10.0, 20.0, 30.0)
    n_ue: tuple[int, ...] = (2, 4, 6)
    n_drops: int = 1000
    rx_procedure: Procedure = Procedure.SERIAL
    ic_ce_mode: CeMode = CeMode.PILOT_ONLY
    aud_gamma: float = DEFAULT_AUD_GAMMA
    max_rounds: int = 10
    channel_mode: ChannelMode = ChannelMode.FLAT
    pilot_boost_db: float = 0.0
    base_seed: int = 1
    schemes: tuple[SchemeSpec, ...] = (
        SchemeSpec(Scheme.TSP, 1),
        SchemeSpec(Scheme.IMP, 2),
    )

    def layout_for(self, spec: SchemeSpec) -> PilotLayout:
        return PilotLayout(spec.scheme, self.n_pilot_re, spec.w)

    def resource_for(self, spec: SchemeSpec) -> ResourceConfig:
        boost = self.pilot_boost_db if spec.pilot_boost_db is None else spec.pilot_boost_db
        return ResourceConfig(
            layout=self.layout_for(spec),
            n_pilot_re=self.n_pilot_re,
            n_data_re=self.n_data_re,
            n_rx=self.n_rx,
            pilot_boost_db=boost,
        )

    def rx_options(self) -> RxOptions:
        return RxOptions(
            procedure=self.rx_procedure,
            ic_ce_mode=self.ic_ce_mode,
            aud_gamma=self.aud_gamma,
            max_rounds=self.max_rounds,
        )

    @property
    def n_info_bits(self) -> int:
        return self.transport_block_size + 16

    def validate(self) -> None:
        """Raise ValueError on any internally inconsistent combination."""
        if self.n_drops < 1:
            raise ValueError("n_drops must be positive")
        if not self.snr_db:
            raise ValueError("need at least one snr_db point")
        if not self.n_ue:
            raise ValueError("need at least one n_ue point")
        if any(k < 0 for k in self.n_ue):
            raise ValueError("n_ue values must be nonnegative")
        if self.transport_block_size < 1:
            raise ValueError("transport_block_size must be positive")
        if not self.schemes:
            raise ValueError("need at least one [scheme] section")
        for spec in self.schemes:
            resource = self.resource_for(spec)  # checks layout divisibility
            if 2 * (self.n_info_bits + 6) > resource.n_coded_bits:
                raise ValueError("transport block does not fit the data allocation")


_GLOBAL_INT = {
    "n_pilot_re", "n_data_re", "n_rx", "transport_block_size",
    "n_drops", "max_rounds", "base_seed",
}
_GLOBAL_FLOAT = {"aud_gamma", "pilot_boost_db"}
_GLOBAL_ENUM = {
    "rx_procedure": {p.value: p for p in Procedure},
    "ic_ce_mode": {m.value: m for m in CeMode},
    "channel_mode": {m.value: m for m in ChannelMode},
}
_SCHEME_KEYS = {"scheme", "w", "pilot_boost_db"}


def _parse_number(raw: str, line: int, kind: type) -> float | int:
    try:
        if kind is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(line, f"expected {'an integer' if kind is int else 'a number'}, got {raw!r}")


def _parse_list(raw: str, line: int, kind: type) -> tuple:
    parts = [p.strip() for p in raw.split(",")]
    if any(not p for p in parts):
        raise ConfigError(line, "empty element in list")
    return tuple(_parse_number(p, line, kind) for p in parts)


def parse_config(text: str, source: str = "<config>") -> SimConfig:
    """Parse campaign text into a validated :class:`SimConfig`."""
    cfg = SimConfig(schemes=())
    schemes: list[SchemeSpec] = []
    section: dict[str, object] | None = None
    section_line = 0

    def close_section() -> None:
        nonlocal section
        if section is None:
            return
        if "scheme" not in section:
            raise ConfigError(section_line, "[scheme] section missing a 'scheme' key")
        scheme = section["scheme"]
        w = section.get("w")
        if scheme is Scheme.TSP:
            w = 1 if w is None else w
            if w != 1:
                raise ConfigError(section_line, "tsp uses w = 1")
        else:
            if w is None:
                raise ConfigError(section_line, "imp section needs a 'w' key")
        boost = section.get("pilot_boost_db")
        schemes.append(SchemeSpec(scheme, int(w), boost))
        section = None

    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line != "[scheme]":
                raise ConfigError(lineno, f"unknown section {line!r}")
            close_section()
            section = {}
            section_line = lineno
            continue
        if "=" not in line:
            raise ConfigError(lineno, f"expected 'key = value', got {raw_line.strip()!r}")
        key, _, raw_val = line.partition("=")
        key = key.strip()
        val = raw_val.strip()
        if not val:
            raise ConfigError(lineno, f"empty value for {key!r}")

        if section is not None:
            if key not in _SCHEME_KEYS:
                raise ConfigError(lineno, f"unknown scheme key {key!r}")
            if key == "scheme":
                try:
                    section["scheme"] = Scheme(val.lower())
                except ValueError:
                    raise ConfigError(lineno, f"scheme must be tsp or imp, got {val!r}")
            elif key == "w":
                section["w"] = _parse_number(val, lineno, int)
            else:
                section["pilot_boost_db"] = _parse_number(val, lineno, float)
            continue

        if key in _GLOBAL_INT:
            cfg = replace(cfg, **{key: _parse_number(val, lineno, int)})
        elif key in _GLOBAL_FLOAT:
            cfg = replace(cfg, **{key: _parse_number(val, lineno, float)})
        elif key in _GLOBAL_ENUM:
            mapping = _GLOBAL_ENUM[key]
            if val.lower() not in mapping:
                raise ConfigError(
                    lineno, f"{key} must be one of {sorted(mapping)}, got {val!r}"
                )
            cfg = replace(cfg, **{key: mapping[val.lower()]})
        elif key == "snr_db":
            cfg = replace(cfg, snr_db=_parse_list(val, lineno, float))
        elif key == "n_ue":
            cfg = replace(cfg, n_ue=_parse_list(val, lineno, int))
        else:
            raise ConfigError(lineno, f"unknown key {key!r}")

    close_section()
    if not schemes:
        raise ConfigError(0, "config declares no [scheme] section")
    cfg = replace(cfg, schemes=tuple(schemes))
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(0, str(exc)) from exc
    return cfg


def load_config(path: str) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), source=path)
