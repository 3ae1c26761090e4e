"""Regenerate figures from the localization toolkit's CSV outputs.

Purely a display layer: every number shown comes straight from a CSV
column written by the simulation side; nothing is recomputed here.
"""

from .figures import FigureSpec, RenderInfo, SchemaError, render, render_spec_file

__version__ = "0.1.0"
