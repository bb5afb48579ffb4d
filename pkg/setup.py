"""Optional compiled script-interpreter kernel.

The package is pure Python; if Cython and a C compiler are available, the
script interpreter is additionally built as an extension module
(tierledger.script._speedups) and selected automatically at import. Any
build failure falls back to the pure kernel without failing the install.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/tierledger/script/_speedups.pyx"], language_level=3
    )
except Exception as exc:  # pragma: no cover - environment-dependent
    print(f"skipping compiled kernel ({exc}); pure-Python fallback will be used")

setup(ext_modules=ext_modules)
