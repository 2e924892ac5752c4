"""Build script for the optional compiled stepper core.

The package is pure Python plus one Cython extension holding the implicit
Runge-Kutta inner loop.  If Cython or a C compiler is unavailable the build
falls back to the NumPy implementation of the same algorithm; the extension
is marked optional so installation never fails on its account.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "normstab._stepcore_cy",
                ["src/normstab/_stepcore_cy.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
