"""Build script: compiles the optional scan kernel.

The package is fully functional without the compiled extension (a numpy
fallback is selected at import time); the build therefore degrades
gracefully if Cython or a C compiler is unavailable.
"""

import warnings

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    warnings.warn("Cython/numpy not available at build time; "
                  "installing without the compiled scan kernel.")
    ext_modules = []
else:
    directives = {
        "language_level": "3",
        "boundscheck": False,
        "wraparound": False,
        "cdivision": True,
    }
    ext_modules = cythonize(
        [
            Extension(
                "mvec._kernels._scan",
                ["src/mvec/_kernels/_scan.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives=directives,
    )

setup(ext_modules=ext_modules)
