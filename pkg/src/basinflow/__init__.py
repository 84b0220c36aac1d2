"""basinflow: terrain-to-report distributed rainfall-runoff simulation.

Pipeline stages: dataset retrieval, D8 terrain derivation, basin
descriptors, rule-based outlet gauge selection, range-checked parameter
initialization, water-balance plus kinematic-wave simulation,
verification metrics, and a deterministic Markdown report.
"""

from ._kernels import BACKEND_NAME as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
