import os

from setuptools import setup

ext_modules = []
if os.environ.get("MCISAC_NO_EXT", "") in ("", "0"):
    try:
        from Cython.Build import cythonize
        import numpy  # noqa: F401
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            ["src/mcisac/_ext/_kernels.pyx"],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
