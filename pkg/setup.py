"""Build script. The compiled duel kernel is optional: if Cython or a C
compiler is unavailable the build falls back to the pure-Python kernel and
the package still works. Set FRAMEGUARD_NO_EXT=1 to skip the extension
outright.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


def extensions():
    if os.environ.get("FRAMEGUARD_NO_EXT") == "1":
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "frameguard._kernel",
        sources=["src/frameguard/_kernel.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


class optional_build_ext(build_ext):
    """Carry on without the extension when the toolchain is missing."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or broken
            print(f"warning: skipping optional extension build: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name}, using pure-Python kernel: {exc}")


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
