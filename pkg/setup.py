"""Build hook for the optional compiled kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time); the extension only accelerates the per-step
vocabulary-sized logit kernels. Missing Cython or a missing C compiler must
therefore never fail the install.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext = Extension(
        "ccd.kernels._fast",
        ["src/ccd/kernels/_fast.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level="3")
except ImportError:
    pass

setup(ext_modules=ext_modules)
