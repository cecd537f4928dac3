# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loop of the linear-SINR power game.

One call performs a single asynchronous best-response pass over all players
in the given order, updating the power vector in place. The pure-Python
fallback in _powergame_py mirrors this arithmetic operation for operation so
both backends produce bitwise-identical trajectories.
"""


def sinr_round(double[:, ::1] gains, double[::1] noise_eff,
               double[::1] sinr_target, double[::1] p, double[::1] p_max,
               Py_ssize_t[::1] order):
    """Run one best-response round; returns (max_move, infeasible_idx, probes).

    Each player raises its power to the minimum level meeting its padded
    SINR target against the other players' current powers; powers never
    decrease within a run. infeasible_idx is -1 unless some player needs
    more than its p_max, in which case the round aborts at that player.
    """
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t idx, i, nn
    cdef double max_move = 0.0
    cdef double interf, own, required, move

    for idx in range(n):
        nn = order[idx]
        own = gains[nn, nn]
        if own <= 0.0:
            return max_move, nn, idx + 1
        interf = 0.0
        for i in range(n):
            if i != nn:
                interf = interf + gains[nn, i] * p[i]
        required = sinr_target[nn] * (noise_eff[nn] + interf) / own
        if required > p_max[nn]:
            return max_move, nn, idx + 1
        if required > p[nn]:
            move = required - p[nn]
            p[nn] = required
            if move > max_move:
                max_move = move
    return max_move, -1, n
