"""Backend selection for the power-game inner loop.

Prefers the compiled extension; falls back to the pure-Python twin when the
extension was not built. Both implement the same arithmetic in the same
order, so results are identical either way.
"""

try:
    from ._powergame_core import sinr_round

    BACKEND = "cython"
except ImportError:  # extension not built
    from ._powergame_py import sinr_round

    BACKEND = "python"

__all__ = ["sinr_round", "BACKEND"]
