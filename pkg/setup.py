"""Build script: compiles the optional quaternion kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so any failure to build it is non-fatal.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "chirality_lab._quatcore",
                sources=["src/chirality_lab/_quatcore.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - depends on build environment
    print(f"chirality-lab: skipping compiled kernels ({exc}); using numpy fallback")

setup(ext_modules=ext_modules)
