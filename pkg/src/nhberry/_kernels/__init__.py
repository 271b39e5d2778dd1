"""Hot loops.  The compiled extension is used when it was built and
``NHBERRY_PURE_PYTHON`` is unset; otherwise the pure-Python reference."""
import os

from . import _drive_py

COMPILED = False
if not os.environ.get("NHBERRY_PURE_PYTHON"):
    try:
        from . import _drive as _impl

        COMPILED = True
    except ImportError:
        _impl = _drive_py
else:
    _impl = _drive_py

drive = _impl.drive
drive_py = _drive_py.drive

MODE_EXPECTATION = _drive_py.MODE_EXPECTATION
MODE_EIGENVALUE = _drive_py.MODE_EIGENVALUE
MODE_NONE = _drive_py.MODE_NONE
STATUS_OK = _drive_py.STATUS_OK
STATUS_OVERFLOW = _drive_py.STATUS_OVERFLOW
STATUS_PHASE_JUMP = _drive_py.STATUS_PHASE_JUMP

__all__ = ["drive", "drive_py", "COMPILED"]
