"""Build script.

The package is pure Python except for an optional Cython extension holding
the n-gram / byte-pair counting kernels.  When Cython or a C compiler is
missing the build silently falls back to the pure-Python kernels, which are
selected at import time by threadsum._kernels.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "threadsum._kernels._fast",
                ["src/threadsum/_kernels/_fast.pyx"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
