"""Build the optional compiled kernels.

The extension is marked optional: if Cython or a C compiler is missing the
package still installs and falls back to ``temple._pykernels``.
"""
from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:  # pragma: no cover
    pass
else:
    ext_modules = cythonize(
        [
            Extension(
                "temple._ckernels",
                ["src/temple/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
