"""Build script for the optional compiled kernel extension.

The package works without the extension (pure-Python kernels are selected at
import time); set COURSEPILOT_SKIP_EXT=1 to install without compiling.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("COURSEPILOT_SKIP_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "coursepilot._ckernels",
                    ["src/coursepilot/_ckernels.pyx"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
