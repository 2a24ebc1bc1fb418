import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # The package still works without the compiled kernels; the numpy
    # fallback backend is selected at import time.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "msfusion._conv_ext",
                ["src/msfusion/_conv_ext.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
