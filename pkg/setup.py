"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a pure-numpy fallback is selected
at import time), so any build failure here downgrades to a warning instead
of aborting the install.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "basinflow._kernels._speed",
                ["src/basinflow/_kernels/_speed.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - depends on build host
    print(f"warning: skipping Cython kernels ({exc}); pure-python fallback "
          "will be used", file=sys.stderr)

setup(ext_modules=ext_modules)
