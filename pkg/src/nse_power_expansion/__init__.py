"""Asymptotic power expansions of periodic Navier-Stokes flows.

Notes:
    The package computes expansion coefficients of Galerkin Navier-Stokes solutions
    under forces decaying like powers of time, builds forces from prescribed coefficients,
    integrates the Galerkin system and measures remainder decay rates.
"""

version_info = {
    'name': 'nse_power_expansion',
    'version': (0, 1, 0),
    'description': 'Power-decay expansions for 3D periodic Navier-Stokes',
}

__version__ = '.'.join(str(n) for n in version_info['version'])
