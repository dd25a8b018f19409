"""Pure-Python lower convex hull sweep (fallback for the compiled kernel)."""

import numpy as np


def lower_hull_sweep(x, w):
    """Indices of the lower convex hull supports of samples (x[i], w[i]).

    ``x`` must be strictly increasing. The sweep keeps a stack of support
    indices and pops while the last support lies on or above the chord to the
    incoming sample (non-decreasing slopes; collinear points are removed).
    The stack never shrinks below one retained point.
    """
    L = len(x)
    if L < 2:
        raise ValueError("need at least two samples")
    stack = [0, 1]
    push = stack.append
    pop = stack.pop
    for i in range(2, L):
        xi = x[i]
        wi = w[i]
        while len(stack) >= 2:
            j = stack[-1]
            k = stack[-2]
            if (w[j] - w[k]) * (xi - x[j]) >= (wi - w[j]) * (x[j] - x[k]):
                pop()
            else:
                break
        push(i)
    return np.asarray(stack, dtype=np.intp)
