import os

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; aai._kernels_py is used at runtime
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "aai._kernels",
                ["src/aai/_kernels.pyx"],
                include_dirs=[np.get_include()],
                language="c++",
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
        quiet=True,
    )

if os.environ.get("AAI_NO_EXTENSION"):
    ext_modules = []

setup(ext_modules=ext_modules)
