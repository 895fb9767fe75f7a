from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # no Cython: install the pure-numpy fallback only
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("rotquant._kernels", ["src/rotquant/_kernels.pyx"], extra_compile_args=["-O3"])],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
