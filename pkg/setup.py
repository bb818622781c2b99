import os

import numpy as np
from setuptools import Extension, setup

# SCORECRAFT_NO_EXT=1 builds a pure-Python install; the fallback kernels are used.
ext_modules = []
if not os.environ.get("SCORECRAFT_NO_EXT"):
    from Cython.Build import cythonize

    extensions = [
        Extension(
            "scorecraft._kernels",
            ["src/scorecraft/_kernels.pyx"],
            include_dirs=[np.get_include()],
            # no fast-math / contraction: results must match the numpy fallback
            extra_compile_args=["-O3", "-ffp-contract=off"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
    ]
    ext_modules = cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
