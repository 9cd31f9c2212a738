"""Build script for the compiled kernel extension.

The package works without the extension (a pure-numpy fallback is selected
at import time), so a failed build only costs speed.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "mcop._kernels._native",
                ["src/mcop/_kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # -ffp-contract=off keeps float results bit-identical to the
                # numpy fallback (no fused multiply-add).
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
