"""Station distances on the WGS84 ellipsoid."""

import math

import numpy as np
from geographiclib.geodesic import Geodesic

from .errors import DomainError

_WGS84 = Geodesic.WGS84


def _check(lat, lon):
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise DomainError(f"non-finite coordinate ({lat}, {lon})")
    if abs(lat) > 90.0:
        raise DomainError(f"latitude {lat} outside [-90, 90]")


def geodesic_km(p1, p2):
    """Shortest distance in km between two (lat, lon) points in degrees."""
    lat1, lon1 = float(p1[0]), float(p1[1])
    lat2, lon2 = float(p2[0]), float(p2[1])
    _check(lat1, lon1)
    _check(lat2, lon2)
    return _WGS84.Inverse(lat1, lon1, lat2, lon2, Geodesic.DISTANCE)["s12"] / 1000.0


def geodesic_matrix_km(coords):
    coords = np.asarray(coords, dtype=float)
    n = len(coords)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = geodesic_km(coords[i], coords[j])
    return out
