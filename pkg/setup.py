"""Builds the optional compiled graph-search kernel.

The package works without it (a numpy fallback is selected at import time),
but index construction and queries are much faster with the extension.
"""

import sys

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "facepipe._kernels._graph_cy",
                ["src/facepipe/_kernels/_graph_cy.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    sys.stderr.write("Cython unavailable, installing facepipe without the compiled kernel\n")

setup(ext_modules=ext_modules)
