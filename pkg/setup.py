"""Build script for the optional compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile only costs query speed, not correctness.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext = Extension(
        "roadnet._kernels._core",
        ["src/roadnet/_kernels/_core.pyx"],
        # -ffp-contract=off keeps double arithmetic bit-identical to the
        # numpy fallback (no FMA contraction), so both backends agree exactly
        # on chord-distance comparisons.
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    try:
        ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})
    except Exception:
        ext_modules = []

setup(ext_modules=ext_modules)
