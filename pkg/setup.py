from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "streamrca.kernels._ckernels",
                ["src/streamrca/kernels/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # No Cython at build time: install the pure-Python fallback only.
    extensions = []

setup(ext_modules=extensions)
