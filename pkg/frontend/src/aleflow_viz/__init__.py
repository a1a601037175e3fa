"""Figure generation from solver run directories.

Reads only the documented CSV/JSON output files indexed by a run's
manifest; never recomputes physics and never writes into the run directory.
"""

__version__ = "0.1.0"

from .plots import PlotJob, plot_energy, plot_interface
from .reader import RunData

__all__ = ["PlotJob", "RunData", "plot_energy", "plot_interface",
           "__version__"]
