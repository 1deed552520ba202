"""Truck-drone routing for time-limited blood collection.

Plans synchronized multi-trip truck-drone tours that maximize blood units
delivered to the processing center within the platelet processing time
limit, via column generation with a memetic pricing heuristic, and verifies
results against an exact brute-force reference at small scale.
"""

from .model import (
    Instance,
    ModelError,
    ParseError,
    Site,
    Sortie,
    feasible_sorties,
    load_instance,
    max_routes,
    save_instance,
    tour_horizon_limit,
)
from .schedule import Route, ScheduleEval, Tour, assign_pickups, evaluate_route, validate_solution

__all__ = [
    "Instance",
    "ModelError",
    "ParseError",
    "Site",
    "Sortie",
    "Route",
    "Tour",
    "ScheduleEval",
    "feasible_sorties",
    "load_instance",
    "save_instance",
    "max_routes",
    "tour_horizon_limit",
    "assign_pickups",
    "evaluate_route",
    "validate_solution",
]

__version__ = "0.1.0"
