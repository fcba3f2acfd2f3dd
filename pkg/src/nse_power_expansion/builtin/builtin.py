"""Builtin experiment data.

Notes:
    You can add a builtin experiment by putting a json file in this folder.
    It needs a "name" key. The other keys follow the experiment config format.

    {
        "name": "your-experiment",
        "description": "what it shows",
        "gammas": ["1"],
        "cutoff_mu": "4",
        ...
    }

    See nse_power_expansion/builtin/zeta1-only.json for an example.
"""
import os

from ..util import io_util as io
from ..util.errors import ValidationError

PREFIX = 'builtin:'


def get_builtins(verbose=False):
    """Get builtin experiment files as {name: path}."""
    folder = os.path.dirname(__file__)
    builtins = {}
    for file in sorted(os.listdir(folder)):
        file_path = os.path.join(folder, file)
        if io.get_ext(file) != 'json' or os.path.isdir(file_path):
            continue
        try:
            name = io.load_json(file_path).get('name', None)
        except (OSError, ValueError) as exc:
            print(f'nse_power_expansion: builtin.py: Failed to read builtin data. ({file_path}, {exc})')
            continue
        if name is None:
            continue
        builtins[name] = file_path
        if verbose:
            print(f'Found builtin "{name}" ({file})')
    return builtins


def is_builtin(ref):
    """Check if a config reference is "builtin:<name>"."""
    return isinstance(ref, str) and ref.startswith(PREFIX)


def builtin_path(name):
    """Get the json file of a builtin experiment."""
    if is_builtin(name):
        name = name[len(PREFIX):]
    builtins = get_builtins()
    if name not in builtins:
        raise ValidationError(f'Unknown builtin experiment. ({name}, available: {sorted(builtins)})')
    return builtins[name]
