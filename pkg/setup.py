"""Build script: compiles the optional grid-kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so any failure here downgrades to a pure-Python
build instead of aborting the install.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "affinegas.kernels._speedups",
                ["src/affinegas/kernels/_speedups.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"affinegas: skipping compiled kernels ({exc}); NumPy fallback will be used")

setup(ext_modules=ext_modules)
