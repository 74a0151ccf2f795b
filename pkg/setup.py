import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# numpy ships its C random distributions as a static library next to the headers
NPY_RANDOM_LIB = os.path.join(os.path.dirname(np.__file__), "random", "lib")

extensions = [
    Extension(
        "gpclogz.kernels._core",
        ["src/gpclogz/kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[NPY_RANDOM_LIB],
        libraries=["npyrandom", "m"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        language_level=3,
        compiler_directives={"boundscheck": False, "wraparound": False, "cdivision": True},
    )
)
