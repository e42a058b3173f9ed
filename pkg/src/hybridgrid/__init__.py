"""Day-ahead scheduling of hybrid AC/DC microgrids as a mixed-integer linear program."""

from .network import Network, load_network, parse_network, to_per_unit
from .profiles import ProfileSet, load_profiles
from .runner import RunReport, ScenarioConfig, run
from .scheduler import Solution, build_model, extract_solution

__version__ = "0.1.0"
