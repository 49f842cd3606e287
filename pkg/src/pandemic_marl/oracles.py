"""Brute-force reference implementations and equivalence suites.

The references use plain Python floats and explicit loops, written from
the model definition rather than from the vectorised code, so agreement is
meaningful.  Each ``check_*`` suite returns a small result dict and is run
by the test-suite and by ``pandemic-marl oracle-check``.
"""

from __future__ import annotations

import time

import numpy as np

from . import epidemic, nn
from .rewards import LockdownLedger, update_lockdown_penalty


def reference_step(states, demand, action, beta_stay, beta_move, gamma, theta):
    """One mobility + spread step on nested lists; returns a list of 4-lists."""
    n = len(states)
    allowed = [[demand[i][j] * action[i][j] for j in range(n)] for i in range(n)]
    movable = [states[i][0] + states[i][1] + states[i][3] for i in range(n)]

    staying = []
    for i in range(n):
        out = sum(allowed[i])
        frac = out / movable[i] if movable[i] > 0 else 0.0
        staying.append([states[i][c] * (1.0 - frac) for c in (0, 1, 3)])

    moving = [[0.0, 0.0, 0.0] for _ in range(n)]
    for dest in range(n):
        for orig in range(n):
            if allowed[orig][dest] == 0 or movable[orig] <= 0:
                continue
            share = allowed[orig][dest] / movable[orig]
            for k, c in enumerate((0, 1, 3)):
                moving[dest][k] += share * states[orig][c]

    def infections(beta, s, i, size):
        if size <= 0:
            return 0.0
        return min(beta * s * i / size, s)

    result = []
    for r in range(n):
        ss, is_, rs = staying[r]
        sm, im, rm = moving[r]
        new_s = infections(beta_stay[r], ss, is_, ss + is_ + rs)
        new_m = infections(beta_move[r], sm, im, sm + im + rm)
        i_hat = is_ + im
        h = states[r][2]
        admitted = min(gamma[r] * i_hat, i_hat)
        discharged = min(theta[r] * h, h)
        result.append([
            ss + sm - new_s - new_m,
            i_hat - admitted + new_s + new_m,
            h - discharged + admitted,
            rs + rm + discharged,
        ])
    return result


def direct_lockdown_penalty(blocked, discount):
    """``L_t = sum_k discount**(t - k + 1) * blocked_k`` by explicit summation."""
    t = len(blocked)
    return sum(discount ** (t - k + 1) * blocked[k - 1] for k in range(1, t + 1))


def finite_difference_gradient(loss, params, eps=1e-6):
    """Central differences of ``loss()`` w.r.t. the array ``params`` (mutated and restored)."""
    grad = np.zeros_like(params)
    for k in range(params.size):
        old = params[k]
        params[k] = old + eps
        up = loss()
        params[k] = old - eps
        down = loss()
        params[k] = old
        grad[k] = (up - down) / (2 * eps)
    return grad


# -- random instances -------------------------------------------------------

def random_instance(rng, n, population=(1e3, 1e6)):
    """Random valid states, demand (outflow <= movable), action and rates."""
    pops = rng.uniform(*population, size=n)
    shares = rng.dirichlet(np.ones(4), size=n)
    states = pops[:, None] * shares
    if n > 1:
        states[rng.integers(0, n)] *= rng.choice([1.0, 0.0])   # sometimes an empty region
    movable = epidemic.movable_population(states)
    demand = rng.uniform(0, 1, size=(n, n))
    np.fill_diagonal(demand, 0.0)
    row = demand.sum(axis=1, keepdims=True)
    frac = rng.uniform(0, 0.9, size=(n, 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        demand = np.where(row > 0, demand / row * frac * movable[:, None], 0.0)
    action = rng.uniform(0, 1, size=(n, n))
    action[rng.uniform(size=(n, n)) < 0.2] = rng.choice([0.0, 1.0])
    rates = epidemic.EpidemicRates(
        beta_stay=rng.uniform(0, 2, n), beta_move=rng.uniform(0, 2, n),
        gamma=rng.uniform(0, 1, n), theta=rng.uniform(0, 1, n))
    return states, demand, action, rates


# -- suites -----------------------------------------------------------------

def _timed(fn):
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        out = fn(*args, **kwargs)
        out["seconds"] = time.perf_counter() - start
        return out
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_transmission(instances=200, n=3, seed=0, tol=1e-12):
    """Vectorised step against :func:`reference_step`."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        states, demand, action, rates = random_instance(rng, n)
        fast = epidemic.step(states, demand, action, rates)
        ref = np.array(reference_step(
            states.tolist(), demand.tolist(), action.tolist(),
            *(np.broadcast_to(np.asarray(v, dtype=float), n).tolist()
              for v in (rates.beta_stay, rates.beta_move, rates.gamma, rates.theta))))
        # relative to the region's population (entries can cancel to ~0)
        scale = np.maximum(np.abs(ref), np.maximum(states.sum(axis=1, keepdims=True), 1.0))
        worst = max(worst, float(np.max(np.abs(fast - ref) / scale)))
    return {"name": "transmission", "instances": instances, "max_rel_error": worst,
            "passed": worst <= tol}


@_timed
def check_conservation(steps=1000, n=5, seed=0, tol=1e-9):
    """Random steps conserve total population and keep compartments >= 0."""
    rng = np.random.default_rng(seed)
    worst, negative = 0.0, 0
    for _ in range(steps):
        states, demand, action, rates = random_instance(rng, n)
        after = epidemic.step(states, demand, action, rates)
        total = states.sum()
        worst = max(worst, abs(after.sum() - total) / total)
        negative += int(np.any(after < 0))
    return {"name": "conservation", "steps": steps, "max_rel_error": worst,
            "negative_states": negative, "passed": worst <= tol and negative == 0}


@_timed
def check_ledger(histories=100, length=200, seed=0, tol=1e-12):
    """Recursive ledger against the explicit discounted sum."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(histories):
        discount = rng.uniform(0.5, 1.0)
        nominal = rng.uniform(1.0, 1e4)
        ledger = LockdownLedger.fresh([nominal], discount)
        blocked = []
        for _ in range(length):
            demand_in = nominal * rng.uniform(0.5, 1.5)
            allowed_in = demand_in * rng.choice([0.0, 1.0, rng.uniform()])
            ledger = update_lockdown_penalty(ledger, [demand_in], [allowed_in])
            blocked.append((demand_in - allowed_in) / nominal)
        direct = direct_lockdown_penalty(blocked, discount)
        rel = abs(ledger.penalty[0] - direct) / max(abs(direct), 1e-300)
        worst = max(worst, rel if direct else abs(ledger.penalty[0]))
    return {"name": "ledger", "histories": histories, "max_rel_error": worst,
            "passed": worst <= tol}


def shipped_architectures(rng, members=2, n_regions=3):
    """One randomly initialised instance of each network layout the learner uses."""
    return {
        "mlp": nn.MLP([4, 6, 5, 3], members=members, rng=rng, out_scale=1.0),
        "mlp_sigmoid": nn.MLP([4, 6, 3], output="sigmoid", members=members, rng=rng,
                              out_scale=1.0),
        "actor": nn.RegionNet(5, n_regions, 6, [7, 5], n_regions, output="sigmoid",
                              targets=list(range(members)), members=members, rng=rng,
                              out_scale=1.0),
        "local_critic": nn.RegionNet(5, n_regions, 6, [7, 5], 1, targets=[2, 0][:members],
                                     members=members, rng=rng, out_scale=1.0),
        "global_critic": nn.RegionNet(5, n_regions, 6, [7, 5], 1, rng=rng, out_scale=1.0),
    }


def _random_input(rng, net, batch):
    if isinstance(net, nn.MLP):
        return rng.normal(size=(batch, net.n_in))
    return rng.normal(size=(batch, net.n_regions, net.features))


def gradient_error(net, rng, batch=3, eps=1e-6):
    """Worst per-coordinate relative error of parameter and input gradients."""
    x = _random_input(rng, net, batch)
    y, _ = net.forward(x)
    weights = rng.normal(size=y.shape)

    def loss():
        return float(np.sum(weights * net.forward(x)[0]))

    _, cache = net.forward(x)
    grad, dx = net.backward(weights, cache)
    numeric = finite_difference_gradient(loss, net.params, eps)
    worst = _rel_error(grad, numeric)

    x_flat = x.reshape(-1)

    def loss_x():
        return float(np.sum(weights * net.forward(x_flat.reshape(x.shape))[0]))

    numeric_x = finite_difference_gradient(loss_x, x_flat, eps)
    worst = max(worst, _rel_error(dx.sum(axis=0).reshape(-1), numeric_x))
    return worst


def _rel_error(a, b, floor=1e-7):
    # coordinates with both gradients below ``floor`` are compared absolutely
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


@_timed
def check_gradients(networks=20, seed=0, tol=1e-4):
    """Reverse-mode gradients against central differences, every shipped layout."""
    rng = np.random.default_rng(seed)
    worst = {}
    for _ in range(networks):
        for name, net in shipped_architectures(rng).items():
            worst[name] = max(worst.get(name, 0.0), gradient_error(net, rng))
    return {"name": "gradients", "networks": networks, "max_rel_error": worst,
            "passed": all(v < tol for v in worst.values())}


def run_all(seed=0):
    return [check_conservation(seed=seed), check_transmission(seed=seed),
            check_ledger(seed=seed), check_gradients(seed=seed)]
