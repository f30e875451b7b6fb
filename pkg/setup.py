"""Build hook for the optional compiled kernel core.

The package is fully functional without the extension: ``stepgate.kernels``
falls back to a NumPy implementation when ``stepgate.kernels._native`` is
absent. Building the extension requires Cython and a C compiler:

    python setup.py build_ext --inplace
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/stepgate/kernels/_native.pyx",
        compiler_directives={"language_level": 3},
    )
except ImportError:
    # No Cython available; ship the pure-Python kernels only.
    pass

setup(ext_modules=ext_modules)
