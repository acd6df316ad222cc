"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension: labelbudget._kernels
falls back to a numpy implementation when the compiled module is missing.
"""

import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

# -ffp-contract=off keeps results reproducible against the numpy fallback
# (no FMA contraction); do not add -ffast-math.
extensions = [
    Extension(
        "labelbudget._kernels._native",
        sources=["src/labelbudget/_kernels/_native.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
