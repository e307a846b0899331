"""Matrix-free analysis of the message-passing threshold.

Population dynamics over (planted value s, message mean a, message variance
v) triplets: each sweep replaces every member by a fresh cavity message
built from H-1 measurement rows with K-1 randomly drawn partner members
each, using an exact noiseless measurement and the true prior (no prior
learning at the population level). The population distance D = <(a - s)^2>
tracks recovery: D -> 0 below the threshold, D plateaus above it.

A block-coupled variant resolves the population per signal block and draws
measurement partners from adjacent-block populations with the tridiagonal
couplings (J1, 1, J2), reproducing the propagating recovery front of the
seeded ensembles.
"""

from dataclasses import dataclass

import numpy as np

from .embp import fa_fc
from .errors import GridExhausted, NonIntegerDegree
from .signals import PriorParams

# one fresh member draws (h-1)*(k-1) partners; chunks are sized to keep the
# scratch arrays near this many slots
_CHUNK_SLOTS = 2_500_000

MIN_POPULATION = 1000

# division guard only, kept far below the solver's 1e-12 so populations
# sitting at the planted fixed point (v = 0) keep their full cavity
# precision instead of having it capped
_DE_DENOM_FLOOR = 1e-30


@dataclass
class Population:
    """Parallel member arrays plus the generating prior and degrees."""

    s: np.ndarray
    a: np.ndarray
    v: np.ndarray
    prior: PriorParams
    k: int
    h: int

    @property
    def size(self):
        return self.s.size

    def distance(self):
        return float(np.mean((self.a - self.s) ** 2))


@dataclass
class DEResult:
    trajectory: np.ndarray
    converged_to_zero: bool
    iters: int


@dataclass
class CoupledDEResult:
    """block_trajectory[t, p] is the distance of block p after sweep t+1."""

    block_trajectory: np.ndarray
    converged_to_zero: bool
    iters: int


def _sample_prior(rng, count, prior):
    mask = rng.random(count) < prior.rho
    vals = np.zeros(count)
    n_on = int(mask.sum())
    if n_on:
        vals[mask] = prior.mean + np.sqrt(prior.variance) * rng.standard_normal(
            n_on
        )
    return vals


def make_population(pop_size, prior, k, h, rng, init="cold"):
    """Fresh population; init 'cold' starts at the prior moments (matching
    the solver's agnostic start), 'planted' at the exact fixed point."""
    if pop_size < MIN_POPULATION:
        raise ValueError(f"population size {pop_size} < {MIN_POPULATION}")
    s = _sample_prior(rng, pop_size, prior)
    if init == "cold":
        a = np.full(pop_size, prior.rho * prior.mean)
        v = np.full(pop_size, prior.rho * (prior.mean**2 + prior.variance))
    elif init == "planted":
        a = s.copy()
        v = np.zeros(pop_size)
    else:
        raise ValueError(f"unknown init {init!r}")
    return Population(s=s, a=a, v=v, prior=prior, k=k, h=h)


def de_sweep(pop, rng, denom_floor=_DE_DENOM_FLOOR):
    """One full population update (size-many member replacements).

    Members are regenerated in chunks; each chunk's partner draws see the
    replacements made by earlier chunks, approximating one-at-a-time
    sequential replacement while staying vectorized. Replacement positions
    are uniform with repetition.
    """
    p_size = pop.size
    km1 = pop.k - 1
    hm1 = pop.h - 1
    prior = pop.prior
    per_member = max(1, hm1 * km1)
    chunk = int(min(p_size, max(1, _CHUNK_SLOTS // per_member)))
    done = 0
    while done < p_size:
        c = min(chunk, p_size - done)
        s0 = _sample_prior(rng, c, prior)
        if hm1 > 0 and km1 > 0:
            idx = rng.integers(p_size, size=(c, hm1, km1))
            eps = rng.integers(0, 2, size=(c, hm1, km1)) * 2.0 - 1.0
            den = pop.v[idx].sum(axis=2)
            np.maximum(den, denom_floor, out=den)
            resid = s0[:, None] + np.einsum(
                "chk,chk->ch", eps, pop.s[idx] - pop.a[idx]
            )
            u = (1.0 / den).sum(axis=1)
            v_field = (resid / den).sum(axis=1)
        else:
            u = np.zeros(c)
            v_field = np.zeros(c)
        a_new, v_new = fa_fc(u, v_field, prior)
        pos = rng.integers(p_size, size=c)
        pop.s[pos] = s0
        pop.a[pos] = a_new
        pop.v[pos] = v_new
        done += c
    return pop


def run_de(
    alpha,
    k,
    prior,
    pop_size=10_000,
    max_sweeps=500,
    seed=0,
    init="cold",
    conv_d=1e-7,
    sustain=50,
    stall_patience=150,
    stall_margin=0.01,
    stall_floor=1e-4,
):
    """Population-dynamics run at one density; stops early on sustained
    convergence (D < conv_d for `sustain` consecutive sweeps) or when D has
    not improved by stall_margin relatively for stall_patience sweeps while
    still above stall_floor."""
    h_real = alpha * k
    h = round(h_real)
    if abs(h_real - h) > 1e-9 or h < 1:
        raise NonIntegerDegree(f"alpha*K = {h_real} is not a positive integer")
    rng = np.random.default_rng(seed)
    pop = make_population(pop_size, prior, k, h, rng, init=init)
    traj = []
    streak = 0
    best = np.inf
    best_at = 0
    converged = False
    for t in range(1, max_sweeps + 1):
        de_sweep(pop, rng)
        d = pop.distance()
        traj.append(d)
        if d < conv_d:
            streak += 1
            if streak >= sustain:
                converged = True
                break
        else:
            streak = 0
        if d < best * (1.0 - stall_margin):
            best = d
            best_at = t
        elif t - best_at >= stall_patience and d > stall_floor:
            break
    return DEResult(
        trajectory=np.asarray(traj),
        converged_to_zero=converged,
        iters=len(traj),
    )


def de_threshold(
    alpha,
    k,
    pop_size,
    rho_grid,
    mean=0.0,
    variance=1.0,
    seed=0,
    max_sweeps=2000,
    refine_step=0.005,
    **run_kwargs,
):
    """Largest density that converges to zero distance, refined by bisection.

    Scans the (ascending) grid until the first failure, then bisects the
    bracketing interval down to refine_step. Raises GridExhausted when not
    even the lowest grid density converges.
    """
    rho_grid = np.sort(np.asarray(rho_grid, dtype=np.float64))
    call = 0

    def passes(rho):
        nonlocal call
        call += 1
        prior = PriorParams(rho=float(rho), mean=mean, variance=variance)
        res = run_de(
            alpha,
            k,
            prior,
            pop_size=pop_size,
            max_sweeps=max_sweeps,
            seed=np.random.SeedSequence((seed, call)).generate_state(1)[0],
            **run_kwargs,
        )
        return res.converged_to_zero

    lo = None
    hi = None
    for rho in rho_grid:
        if passes(rho):
            lo = float(rho)
        else:
            hi = float(rho)
            break
    if lo is None:
        raise GridExhausted(
            f"no density on the grid starting at {rho_grid[0]} converged"
        )
    if hi is None:
        return lo
    while hi - lo > refine_step * (1.0 + 1e-9):
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class CoupledProfile:
    """Per-block measurement rates alpha_p plus couplings for the
    tridiagonal block structure; h_p = alpha_p * k is the per-column degree
    contributed by row block p (fractional h_p is allowed and handled by
    randomized rounding per member)."""

    l: int
    k: int
    j1: float
    j2: float
    alphas: tuple

    @staticmethod
    def seeded(l, alpha, k, j1=4.0, j2=1.0):
        """First block oversampled at alpha_1 = 1, the rest flattened so the
        total measurement rate is alpha."""
        if l == 1:
            return CoupledProfile(1, k, j1, j2, (float(alpha),))
        rest = (l * alpha - 1.0) / (l - 1.0)
        if rest <= 0.0:
            raise NonIntegerDegree(f"L*alpha = {l * alpha} must exceed 1")
        return CoupledProfile(l, k, j1, j2, (1.0,) + (rest,) * (l - 1))

    @property
    def h(self):
        return np.asarray(self.alphas) * self.k

    def coupling(self, p, q):
        """|F| on edges between row block p and column block q (1-based)."""
        if q == p - 1:
            return self.j1
        if q == p:
            return 1.0
        if q == p + 1:
            return self.j2
        return 0.0


def _coupled_refresh(pops, q, profile, prior, rng, denom_floor):
    """Generate pop-size fresh members for block q (1-based) and overwrite
    random positions."""
    big_l = profile.l
    k = profile.k
    h = profile.h
    c = pops[q - 1].size
    row_blocks = [p for p in (q - 1, q, q + 1) if 1 <= p <= big_l]

    s0 = _sample_prior(rng, c, prior)
    # randomized rounding of the per-block row counts, then remove the
    # target edge from a block chosen proportionally to the realized counts
    counts = {}
    total = np.zeros(c)
    for p in row_blocks:
        base = int(np.floor(h[p - 1]))
        frac = h[p - 1] - base
        n_p = np.full(c, base, dtype=np.int64)
        if frac > 0.0:
            n_p += rng.random(c) < frac
        counts[p] = n_p
        total += n_p
    pick = rng.random(c) * np.maximum(total, 1)
    acc = np.zeros(c)
    assigned = np.zeros(c, dtype=bool)
    for p in row_blocks:
        acc += counts[p]
        take = (~assigned) & (pick < acc) & (counts[p] > 0)
        counts[p] = counts[p] - take
        assigned |= take

    u = np.zeros(c)
    v_field = np.zeros(c)
    for p in row_blocks:
        n_p = counts[p]
        r_max = int(n_p.max())
        if r_max == 0:
            continue
        valid = np.arange(r_max)[None, :] < n_p[:, None]
        j_pq = profile.coupling(p, q)
        dsum = np.zeros((c, r_max))
        resid = np.zeros((c, r_max))
        for qq in (p - 1, p, p + 1):
            if not 1 <= qq <= big_l:
                continue
            nd = k - 1 if qq == q else k
            if nd == 0:
                continue
            j_pq2 = profile.coupling(p, qq)
            other = pops[qq - 1]
            idx = rng.integers(other.size, size=(c, r_max, nd))
            eps = rng.integers(0, 2, size=(c, r_max, nd)) * 2.0 - 1.0
            dsum += j_pq2 * j_pq2 * other.v[idx].sum(axis=2)
            resid += j_pq2 * np.einsum(
                "crn,crn->cr", eps, other.s[idx] - other.a[idx]
            )
        np.maximum(dsum, denom_floor, out=dsum)
        a_rows = np.where(valid, (j_pq * j_pq) / dsum, 0.0)
        b_rows = np.where(
            valid, (j_pq * j_pq * s0[:, None] + j_pq * resid) / dsum, 0.0
        )
        u += a_rows.sum(axis=1)
        v_field += b_rows.sum(axis=1)

    a_new, v_new = fa_fc(u, v_field, prior)
    pos = rng.integers(c, size=c)
    tgt = pops[q - 1]
    tgt.s[pos] = s0
    tgt.a[pos] = a_new
    tgt.v[pos] = v_new


def de_sweep_coupled(pops, profile, prior, rng, denom_floor=_DE_DENOM_FLOOR):
    """One full update of all block populations, blocks in order 1..L."""
    for q in range(1, profile.l + 1):
        _coupled_refresh(pops, q, profile, prior, rng, denom_floor)
    return pops


def run_de_coupled(
    profile,
    prior,
    pop_size=2000,
    max_sweeps=500,
    seed=0,
    init="cold",
    conv_d=1e-7,
    sustain=50,
    stall_patience=150,
    stall_margin=0.01,
    stall_floor=1e-4,
):
    """Coupled population-dynamics run; convergence and stall rules apply to
    the worst block distance."""
    rng = np.random.default_rng(seed)
    h = profile.h
    pops = [
        make_population(
            pop_size, prior, profile.k, float(h[q - 1]), rng, init=init
        )
        for q in range(1, profile.l + 1)
    ]
    traj = []
    streak = 0
    best = np.inf
    best_at = 0
    converged = False
    for t in range(1, max_sweeps + 1):
        de_sweep_coupled(pops, profile, prior, rng)
        d_blocks = np.array([p.distance() for p in pops])
        traj.append(d_blocks)
        d = float(d_blocks.max())
        if d < conv_d:
            streak += 1
            if streak >= sustain:
                converged = True
                break
        else:
            streak = 0
        if d < best * (1.0 - stall_margin):
            best = d
            best_at = t
        elif t - best_at >= stall_patience and d > stall_floor:
            break
    return CoupledDEResult(
        block_trajectory=np.asarray(traj),
        converged_to_zero=converged,
        iters=len(traj),
    )
