import os

from setuptools import setup

ext_modules = []
if not os.environ.get("SEQLAB_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "seqlab._kernels",
                    sources=["src/seqlab/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # bitwise agreement with the Python fallback needs plain mul/add
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3", "embedsignature": True},
        )

setup(ext_modules=ext_modules)
