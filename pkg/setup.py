"""Builds the optional compiled kernel extension.

The package works without the extension (a pure-Python/NumPy fallback is
selected at import time); the build is therefore best-effort so that
environments without a C toolchain can still install the package.
"""

import sys

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    # -ffp-contract=off: the kernels must round every multiply and add
    # separately, exactly like the pure-Python fallback; FMA contraction
    # would silently change results.
    extensions = cythonize(
        [
            Extension(
                "ulpshadow._kernels._ckernels",
                ["src/ulpshadow/_kernels/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - toolchain-dependent
    print(f"ulpshadow: skipping compiled kernels ({exc})", file=sys.stderr)
    extensions = []

setup(ext_modules=extensions)
