"""Builds the optional compiled joint-table kernel.

The extension is a pure speed-up: if Cython or a C compiler is missing
(or ECHELON_PURE_PYTHON=1 is set), the package installs without it and
falls back to the numpy implementation at import time.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("ECHELON_PURE_PYTHON") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "echelon._joint",
                    ["src/echelon/_joint.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
