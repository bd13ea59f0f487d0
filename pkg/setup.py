import os

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled kernel is an optimization, not a requirement: the package
# falls back to the numpy interpreter when the extension is absent.
ext_modules = []
if cythonize is not None and not os.environ.get("AFMASS_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "afmass._kernels._fast",
                ["src/afmass/_kernels/_fast.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
