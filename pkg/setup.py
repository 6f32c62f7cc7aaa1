"""Build script for the optional compiled kernels.

If Cython or a C compiler is unavailable the package installs without the
extension and falls back to the pure-Python kernels at import time.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("TRAILCAST_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "trailcast.learners._kernels",
                    ["src/trailcast/learners/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
