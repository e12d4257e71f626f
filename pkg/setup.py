"""Build hook for the optional compiled simplex kernels.

Project metadata lives in pyproject.toml.  If Cython or a C compiler is
missing the package still installs and runs on the numpy kernels.
"""
from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("battdispatch.optim._ckernels", ["src/battdispatch/optim/_ckernels.pyx"],
                   include_dirs=[numpy.get_include()], extra_compile_args=["-O3"])],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    print(f"warning: building without compiled kernels ({exc})")

setup(ext_modules=ext_modules)
