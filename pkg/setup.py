"""Build script for the compiled training kernels.

The package works without the extension (a NumPy fallback is selected at
import time), so compilation failures are tolerated on a plain
``pip install``; run ``python setup.py build_ext --inplace`` to force a
build when developing.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "fedganlab._kernels",
                ["src/fedganlab/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
