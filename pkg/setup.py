"""Builds the optional compiled convolution kernels.

Set PADLAB_NO_EXTENSION=1 to skip the extension entirely; the package then
runs on its pure-numpy fallback kernels.
"""

import os

from setuptools import Extension, setup


def extensions():
    if os.environ.get("PADLAB_NO_EXTENSION"):
        return []
    import numpy as np
    from Cython.Build import cythonize

    ext = Extension(
        "padlab._kernels._conv_cy",
        ["src/padlab/_kernels/_conv_cy.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions())
