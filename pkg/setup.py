import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # building without Cython leaves the pure-Python fallback in charge
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("METRIC_CAUSAL_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "metric_causal._kernels",
                ["src/metric_causal/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
