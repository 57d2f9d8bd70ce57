"""Williamson et al. (1992) initial data: case 2 (steady zonal flow) and case 6 (Rossby-Haurwitz)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fespace import project
from .forms import ShallowWater, State

DAY = 86400.0


@dataclass(frozen=True)
class Williamson:
    # constants as tabulated by Williamson et al. (1992)
    radius: float = 6.37122e6
    omega: float = 7.292e-5
    g: float = 9.80616
    # case 6
    rh_omega: float = 7.848e-6
    rh_K: float = 7.848e-6
    rh_R: int = 4
    rh_h0: float = 8000.0
    # case 2
    tc2_gh0: float = 2.94e4
    tc2_alpha: float = 0.0

    @property
    def tc2_u0(self) -> float:
        return 2.0 * np.pi * self.radius / (12.0 * DAY)


WILLIAMSON = Williamson()


def lonlat(x: np.ndarray):
    r = np.linalg.norm(x, axis=-1)
    lat = np.arcsin(np.clip(x[..., 2] / r, -1.0, 1.0))
    lon = np.arctan2(x[..., 1], x[..., 0])
    return lon, lat


def tangent_vector(x: np.ndarray, u_east: np.ndarray, v_north: np.ndarray) -> np.ndarray:
    lon, lat = lonlat(x)
    e_lon = np.stack([-np.sin(lon), np.cos(lon), np.zeros_like(lon)], axis=-1)
    e_lat = np.stack([-np.sin(lat) * np.cos(lon), -np.sin(lat) * np.sin(lon), np.cos(lat)], axis=-1)
    return u_east[..., None] * e_lon + v_north[..., None] * e_lat


def rossby_haurwitz_wind(lon, lat, c: Williamson = WILLIAMSON):
    a, w, K, R = c.radius, c.rh_omega, c.rh_K, c.rh_R
    cl = np.cos(lat)
    u = a * w * cl + a * K * cl ** (R - 1) * (R * np.sin(lat) ** 2 - cl**2) * np.cos(R * lon)
    v = -a * K * R * cl ** (R - 1) * np.sin(lat) * np.sin(R * lon)
    return u, v


def rossby_haurwitz_height(lon, lat, c: Williamson = WILLIAMSON):
    a, w, K, R, Om = c.radius, c.rh_omega, c.rh_K, c.rh_R, c.omega
    cl = np.cos(lat)
    A = 0.5 * w * (2 * Om + w) * cl**2 + 0.25 * K**2 * cl ** (2 * R) * (
        (R + 1) * cl**2 + (2 * R**2 - R - 2) - 2 * R**2 * cl ** (-2)
    )
    B = 2 * (Om + w) * K / ((R + 1) * (R + 2)) * cl**R * ((R**2 + 2 * R + 2) - (R + 1) ** 2 * cl**2)
    C = 0.25 * K**2 * cl ** (2 * R) * ((R + 1) * cl**2 - (R + 2))
    return c.rh_h0 + a**2 * (A + B * np.cos(R * lon) + C * np.cos(2 * R * lon)) / c.g


def zonal_flow(lon, lat, c: Williamson = WILLIAMSON, u0: float | None = None):
    u0 = c.tc2_u0 if u0 is None else u0
    al = c.tc2_alpha
    u = u0 * (np.cos(lat) * np.cos(al) + np.cos(lon) * np.sin(lat) * np.sin(al))
    v = -u0 * np.sin(lon) * np.sin(al)
    return u, v


def zonal_height(lon, lat, c: Williamson = WILLIAMSON, u0: float | None = None, omega: float | None = None):
    u0 = c.tc2_u0 if u0 is None else u0
    om = c.omega if omega is None else omega
    al = c.tc2_alpha
    s = -np.cos(lon) * np.cos(lat) * np.sin(al) + np.sin(lat) * np.cos(al)
    return (c.tc2_gh0 - (c.radius * om * u0 + 0.5 * u0**2) * s**2) / c.g


def tc6_params(**kw):
    from .forms import SWEParams

    c = WILLIAMSON
    return SWEParams(omega=c.omega, g=c.g, radius=c.radius, H=c.rh_h0, **kw)


def tc2_params(**kw):
    from .forms import SWEParams

    c = WILLIAMSON
    return SWEParams(omega=c.omega, g=c.g, radius=c.radius, H=c.tc2_gh0 / c.g, **kw)


def _check_sphere(sw: ShallowWater):
    r = np.linalg.norm(sw.mesh.vertices, axis=1)
    if not np.allclose(r, sw.mesh.radius, rtol=1e-10):
        raise ValueError("initial conditions need a sphere mesh")


def tc6_init(sw: ShallowWater, c: Williamson = WILLIAMSON) -> State:
    _check_sphere(sw)

    def wind(x):
        lon, lat = lonlat(x)
        return tangent_vector(x, *rossby_haurwitz_wind(lon, lat, c))

    def depth(x):
        return rossby_haurwitz_height(*lonlat(x), c)

    return State(project(wind, sw.V), project(depth, sw.Q))


def tc2_init(sw: ShallowWater, c: Williamson = WILLIAMSON, u0: float | None = None) -> State:
    """Steady geostrophic zonal flow balanced against the rotation rate in ``sw.params``."""
    _check_sphere(sw)
    om = sw.params.omega

    def wind(x):
        lon, lat = lonlat(x)
        return tangent_vector(x, *zonal_flow(lon, lat, c, u0))

    def depth(x):
        return zonal_height(*lonlat(x), c, u0=u0, omega=om)

    return State(project(wind, sw.V), project(depth, sw.Q))


def gravity_wave_init(sw: ShallowWater, amplitude: float = 10.0, width: float = 0.3) -> State:
    """Gaussian bump in the free surface at rest; initial data for the linear case."""
    _check_sphere(sw)
    centre = np.array([np.cos(0.3), 0.0, np.sin(0.3)])

    def depth(x):
        xn = x / np.linalg.norm(x, axis=-1, keepdims=True)
        d = np.arccos(np.clip(xn @ centre, -1.0, 1.0))
        return sw.params.H + amplitude * np.exp(-((d / width) ** 2))

    zero = sw.state()
    return State(zero.u, project(depth, sw.Q))
