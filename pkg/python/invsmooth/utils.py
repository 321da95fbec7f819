"""
A module of functions that are needed by several of the invsmooth modules.
"""

import os


def get_resources_dir():
    return os.path.join(os.path.dirname(__file__), 'resources')


def get_preset_path(name):
    """
    Returns the path of a bundled configuration preset. The name may be given
    with or without the '.cfg' extension.
    """
    if not name.endswith('.cfg'):
        name += '.cfg'
    return os.path.join(get_resources_dir(), name)


def list_presets():
    return sorted(os.path.splitext(file_name)[0]
                  for file_name in os.listdir(get_resources_dir())
                  if file_name.endswith('.cfg'))


def format_float(value):
    """17 significant digits, enough to round-trip any double."""
    return '{:.17g}'.format(float(value))
