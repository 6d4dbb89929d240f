import os

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    pyx = "src/snapspec/netunmix/_kernels_cy.pyx"
    if os.path.exists(pyx):
        ext_modules = cythonize(
            [Extension("snapspec.netunmix._kernels_cy", [pyx], optional=True)],
            language_level="3",
        )
    else:
        ext_modules = []

setup(ext_modules=ext_modules)
