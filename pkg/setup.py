"""Builds the optional compiled kernel extension.

The package is fully functional without it (a pure-Python fallback is
selected at import time); the extension is what makes batch runs fast.
Build in place for development with:

    python setup.py build_ext --inplace
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
    ext_modules = cythonize(
        [Extension("ncentre._kernels_cy", ["src/ncentre/_kernels_cy.pyx"],
                   extra_compile_args=["-O3"])],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
