from setuptools import Extension, setup
from Cython.Build import cythonize

# -ffp-contract=off keeps the compiled kernels numerically aligned with the
# numpy fallback (no FMA contraction); results stay deterministic per backend.
extensions = [
    Extension(
        "alprobe.render._kernels",
        ["src/alprobe/render/_kernels.pyx"],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
