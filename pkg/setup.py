"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a NumPy reference backend is
selected at import time), so any compiler or Cython failure downgrades
to a warning instead of aborting the install.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "fusedet.backend._kernels",
        ["src/fusedet/backend/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )


class OptionalBuildExt(build_ext):
    """build_ext that tolerates a missing or broken C toolchain."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            warnings.warn(f"skipping compiled kernels ({exc}); using the NumPy backend")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            warnings.warn(f"skipping {ext.name} ({exc}); using the NumPy backend")


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
