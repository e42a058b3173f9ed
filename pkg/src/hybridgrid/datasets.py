"""Bundled modified 33-bus feeder and a synthetic 24-hour profile set."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .network import Network, load_network
from .profiles import ProfileSet, load_profiles


def data_dir() -> Path:
    return Path(str(resources.files("hybridgrid") / "data"))


def network_path() -> Path:
    return data_dir() / "ieee33.json"


def profiles_path() -> Path:
    return data_dir() / "profiles24.json"


def ieee33() -> Network:
    return load_network(network_path())


def day_profiles() -> ProfileSet:
    return load_profiles(profiles_path())
