"""Build script for the optional compiled kernel core.

The package works without the extension (a numpy fallback is selected at
import time), so any failure to cythonize or compile is non-fatal.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "textrender._fastcore",
                ["src/textrender/_fastcore.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except Exception as exc:  # noqa: BLE001
    print(f"warning: building without compiled core ({exc})")

setup(ext_modules=ext_modules)
