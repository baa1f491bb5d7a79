from setuptools import Extension, setup

# -ffp-contract=off: no FMA contraction, so the compiled kernels stay
# bit-identical with the pure-Python fallback.
ext = Extension(
    "windmpc._kernels._core",
    ["src/windmpc/_kernels/_core.pyx"],
    extra_compile_args=["-O3", "-ffp-contract=off"],
)
ext.optional = True  # fall back to the pure-Python kernels if the build fails

try:
    from Cython.Build import cythonize

    ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
