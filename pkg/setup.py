"""Build script: compiles the optional speedup extension.

Set CODESIGN_SKIP_EXT=1 to install without the compiled kernels; the
package then falls back to the pure-Python implementations at import.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("CODESIGN_SKIP_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "codesign._kernels._speedups",
                    ["src/codesign/_kernels/_speedups.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
