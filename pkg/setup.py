import os

import numpy as np
from setuptools import Extension, setup

# The compiled kernels are optional: without Cython (or with
# TRANSIT_ETA_NO_EXT=1) the package installs pure-Python and
# transit_eta.kernels falls back at import.
ext_modules = []
if not os.environ.get("TRANSIT_ETA_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext = Extension(
            "transit_eta._kernels",
            ["src/transit_eta/_kernels.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
