"""Build script: compiles the optional Cython rollout kernel.

The package is fully functional without the extension (a numpy fallback is
selected at import); set CLB_SKIP_BUILD=1 to skip compilation explicitly.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("CLB_SKIP_BUILD"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "driftrank.kernels._fast",
                    ["src/driftrank/kernels/_fast.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
