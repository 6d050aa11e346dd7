"""Build script for the optional compiled kernels.

The package works without the extension (numpy fallback), so a missing
compiler or Cython only produces a warning.
"""

import warnings

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "cimtraj._kernels",
                ["src/cimtraj/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    warnings.warn("Cython/numpy unavailable; installing without compiled kernels")

setup(ext_modules=ext_modules)
