"""Pure-Python fallback for the compiled power-game round.

Keeps the exact operation order of _powergame_core.pyx so that switching
backends never changes a trajectory, only its speed.
"""


def sinr_round(gains, noise_eff, sinr_target, p, p_max, order):
    """See _powergame_core.sinr_round."""
    n = p.shape[0]
    max_move = 0.0
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
