"""Backend selection for the tridiagonal time-chain kernel.

Prefers the compiled extension; falls back to the scipy implementation when
the extension is unavailable or ``PINTMK_PURE_PYTHON=1`` is set.
"""

from __future__ import annotations

import os

if os.environ.get("PINTMK_PURE_PYTHON", "") == "1":
    from . import _chain_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _chain as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _chain_py as _impl

        BACKEND = "python"

factor_tridiag = _impl.factor_tridiag
march_chain = _impl.march_chain


def backend_name() -> str:
    return BACKEND
