"""Build script for the optional compiled kernels.

The package works without the extension (a pure numpy implementation is
selected at import time), so a failed Cython build degrades gracefully
instead of blocking installation.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/rodforce/_kernels_cy.pyx",
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
        ext.define_macros.append(("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION"))
except Exception as exc:  # pragma: no cover - build-environment dependent
    import sys

    print(f"rodforce: skipping compiled kernels ({exc})", file=sys.stderr)
    ext_modules = []

setup(ext_modules=ext_modules)
