"""Hourly load, price and renewable-availability profiles."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .network import Network


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class ProfileSet:
    """Hourly data for one scheduling horizon.

    ``pd``/``qd`` are keyed by bus id (kW / kVAr), ``availability`` by
    nondispatchable unit id (fraction of ``p_max``). Buses absent from
    ``pd``/``qd`` carry no load.
    """

    horizon: int
    price: tuple[float, ...]
    pm_max: float
    pd: dict[str, tuple[float, ...]] = field(default_factory=dict)
    qd: dict[str, tuple[float, ...]] = field(default_factory=dict)
    availability: dict[str, tuple[float, ...]] = field(default_factory=dict)
    qm_max: float | None = None

    def __post_init__(self):
        T = self.horizon
        if T < 1:
            raise ProfileError("horizon must be at least one hour")
        if len(self.price) != T:
            raise ProfileError(f"price has {len(self.price)} entries, expected {T}")
        for name in ("pd", "qd", "availability"):
            for key, series in getattr(self, name).items():
                if len(series) != T:
                    raise ProfileError(f"{name}[{key}] has {len(series)} entries, expected {T}")
        for key, series in self.availability.items():
            if any(not 0.0 <= a <= 1.0 for a in series):
                raise ProfileError(f"availability[{key}] outside [0, 1]")
        if self.pm_max < 0:
            raise ProfileError("pm_max must be nonnegative")

    @property
    def q_exchange_max(self) -> float:
        return self.pm_max if self.qm_max is None else self.qm_max

    def load_p(self, bus: str) -> np.ndarray:
        return np.asarray(self.pd.get(bus, (0.0,) * self.horizon), dtype=float)

    def load_q(self, bus: str) -> np.ndarray:
        return np.asarray(self.qd.get(bus, (0.0,) * self.horizon), dtype=float)

    def check_against(self, net: Network) -> None:
        """Raise if the profiles reference unknown entities or miss a unit."""
        ids = set(net.bus_ids)
        for name in ("pd", "qd"):
            unknown = set(getattr(self, name)) - ids
            if unknown:
                raise ProfileError(f"{name} references unknown bus(es) {sorted(unknown)}")
        for g in net.nondispatchable:
            if g.id not in self.availability:
                raise ProfileError(f"missing availability profile for unit {g.id}")
        for b in net.dc_buses:
            if any(self.qd.get(b, ())):
                raise ProfileError(f"DC bus {b} carries reactive load")

    def scaled(self, factor: float) -> "ProfileSet":
        return replace(
            self,
            pd={k: tuple(v * factor for v in s) for k, s in self.pd.items()},
            qd={k: tuple(v * factor for v in s) for k, s in self.qd.items()},
        )

    def window(self, start: int, length: int) -> "ProfileSet":
        sl = slice(start, start + length)
        return replace(
            self,
            horizon=length,
            price=tuple(self.price[sl]),
            pd={k: tuple(v[sl]) for k, v in self.pd.items()},
            qd={k: tuple(v[sl]) for k, v in self.qd.items()},
            availability={k: tuple(v[sl]) for k, v in self.availability.items()},
        )


def _series(raw, name):
    if not isinstance(raw, dict):
        raise ProfileError(f"'{name}' must map ids to arrays")
    return {str(k): tuple(float(x) for x in v) for k, v in raw.items()}


def profiles_from_dict(doc: dict) -> ProfileSet:
    try:
        return ProfileSet(
            horizon=int(doc["horizon"]),
            price=tuple(float(x) for x in doc["price"]),
            pm_max=float(doc["pm_max"]),
            pd=_series(doc.get("pd", {}), "pd"),
            qd=_series(doc.get("qd", {}), "qd"),
            availability=_series(doc.get("availability", {}), "availability"),
            qm_max=None if doc.get("qm_max") is None else float(doc["qm_max"]),
        )
    except KeyError as exc:
        raise ProfileError(f"missing key {exc}") from None


def profiles_to_dict(p: ProfileSet) -> dict:
    return {
        "horizon": p.horizon,
        "price": list(p.price),
        "pm_max": p.pm_max,
        "qm_max": p.qm_max,
        "pd": {k: list(v) for k, v in p.pd.items()},
        "qd": {k: list(v) for k, v in p.qd.items()},
        "availability": {k: list(v) for k, v in p.availability.items()},
    }


def parse_profiles(document: str | bytes) -> ProfileSet:
    return profiles_from_dict(json.loads(document))


def load_profiles(path: str | Path) -> ProfileSet:
    return parse_profiles(Path(path).read_text())


# ---------------------------------------------------------------------------
# synthetic day (the published study does not release its hourly data)

# hourly load factor, hour 0 = midnight; trough 0.5, peak 1.0 at 19:00
LOAD_SHAPE = (
    0.56, 0.52, 0.50, 0.50, 0.52, 0.58, 0.66, 0.75, 0.82, 0.86, 0.88, 0.89,
    0.88, 0.86, 0.85, 0.86, 0.89, 0.94, 0.98, 1.00, 0.97, 0.88, 0.76, 0.64,
)


def two_peak_price(lo: float = 0.02, hi: float = 0.09, T: int = 24) -> tuple[float, ...]:
    """Price with a morning (10:00) and an evening (19:00) peak spanning [lo, hi]."""
    h = np.arange(T, dtype=float)
    shape = 0.7 * np.exp(-0.5 * ((h - 10.0) / 2.2) ** 2) + np.exp(-0.5 * ((h - 19.0) / 2.0) ** 2)
    shape = (shape - shape.min()) / (shape.max() - shape.min())
    return tuple(round(float(v), 5) for v in lo + (hi - lo) * shape)


def pv_bell(sunrise: float = 6.0, sunset: float = 19.0, T: int = 24) -> tuple[float, ...]:
    out = []
    for h in range(T):
        mid = h + 0.5
        if sunrise < mid < sunset:
            out.append(round(math.sin(math.pi * (mid - sunrise) / (sunset - sunrise)) ** 1.5, 5))
        else:
            out.append(0.0)
    return tuple(out)


def synthetic_profiles(
    nominal_p: dict[str, float],
    nominal_q: dict[str, float],
    net: Network,
    pm_max: float,
    shape=LOAD_SHAPE,
) -> ProfileSet:
    """Scale nominal bus loads by ``shape``; PV units follow :func:`pv_bell`."""
    T = len(shape)
    dc = set(net.dc_buses)
    pd = {b: tuple(round(p * f, 6) for f in shape) for b, p in nominal_p.items()}
    qd = {b: tuple(round(q * f, 6) for f in shape) for b, q in nominal_q.items() if b not in dc}
    avail = {g.id: pv_bell(T=T) for g in net.nondispatchable}
    return ProfileSet(T, two_peak_price(T=T), pm_max, pd, qd, avail)


def nominal_snapshot(p: ProfileSet, net: Network, availability: float = 0.0) -> ProfileSet:
    """One-hour profile at the nominal (peak factor 1.0) loads."""
    peak = int(np.argmax(LOAD_SHAPE)) if p.horizon == len(LOAD_SHAPE) else 0
    one = p.window(peak, 1)
    scale = 1.0 / LOAD_SHAPE[peak] if p.horizon == len(LOAD_SHAPE) else 1.0
    one = one.scaled(scale)
    return replace(one, availability={g.id: (availability,) for g in net.nondispatchable})

