import os
import sys

from cffi import FFI

builder_dir = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, builder_dir)

from build_header import build_cdef  # noqa: E402

ffibuilder = FFI()

ffibuilder.cdef(build_cdef(os.path.join(builder_dir, "fracising.h")))

ffibuilder.set_source(
    "_fracising_cffi",
    '#include "fracising.h"',
    sources=[os.path.relpath(os.path.join(builder_dir, "fracising.c"))],
    include_dirs=[os.path.relpath(builder_dir)],
    libraries=[] if sys.platform == "win32" else ["m"],
)

if __name__ == "__main__":  # not when running with setuptools
    ffibuilder.compile(verbose=True)
