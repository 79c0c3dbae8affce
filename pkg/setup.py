"""Build script: compiles the time-chain kernel extension when possible.

The package works without the extension (a scipy-based fallback is selected
at import time), so a missing compiler or Cython only costs speed.
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
                "pintmk._chain",
                ["src/pintmk/_chain.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError as exc:  # pragma: no cover - environment dependent
    print(f"pintmk: building without compiled kernels ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
