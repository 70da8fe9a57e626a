"""Build script: compiles the optional Cython predict kernel.

The package works without the extension (a pure-numpy fallback is selected
at import time), so a failed compile only costs speed. Set EIKF_SKIP_EXT=1
to skip the extension build entirely.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("EIKF_SKIP_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            "src/eikf/kernels/_fastcore.pyx",
            compiler_directives={"language_level": "3"},
        )
        for ext in ext_modules:
            ext.include_dirs.append(np.get_include())
            ext.define_macros.append(("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION"))
    except Exception as exc:  # pragma: no cover - build-env dependent
        print(f"eikf: skipping Cython extension ({exc})")
        ext_modules = []

setup(ext_modules=ext_modules)
