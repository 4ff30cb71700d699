"""Joint CNN-cell / FPGA-accelerator codesign search engine."""

__version__ = "0.1.0"

from codesign._kernels import BACKEND as kernel_backend  # noqa: F401
