"""Build script for the optional compiled power-game kernel.

The package works without the extension: backhaulsim.kernels falls back to a
pure-Python implementation with identical arithmetic if the build is skipped
or fails.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "backhaulsim._powergame_core",
                ["src/backhaulsim/_powergame_core.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
