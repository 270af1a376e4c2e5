"""Exact enumeration of the identities behind cross-domain risk weighting.

A ``DiscreteSCM`` encodes the graph S -> X, S -> Y, X -> Y with a binary
domain variable S (1 = long-tailed training domain, 0 = balanced domain).
All quantities are computed by summing over the finite joint table, so the
identities can be checked to machine precision.
"""

from dataclasses import dataclass

import numpy as np

from .errors import IdentityViolation, InvalidSCM, ZeroSupport

TOL = 1e-12
MAX_DOMAIN = 16


@dataclass
class DiscreteSCM:
    p_s: np.ndarray            # [2]
    p_x_given_s: np.ndarray    # [2, |X|]
    p_y_given_xs: np.ndarray   # [2, |X|, |Y|]

    def __post_init__(self):
        self.p_s = np.asarray(self.p_s, dtype=np.float64)
        self.p_x_given_s = np.asarray(self.p_x_given_s, dtype=np.float64)
        self.p_y_given_xs = np.asarray(self.p_y_given_xs, dtype=np.float64)

    @property
    def n_x(self):
        return self.p_x_given_s.shape[1]

    @property
    def n_y(self):
        return self.p_y_given_xs.shape[2]

    def validate(self):
        if self.p_s.shape != (2,):
            raise InvalidSCM(f"p_s must have shape (2,), got {self.p_s.shape}")
        if self.p_x_given_s.ndim != 2 or self.p_x_given_s.shape[0] != 2:
            raise InvalidSCM(f"p_x_given_s must be [2, |X|], got {self.p_x_given_s.shape}")
        nx = self.n_x
        if self.p_y_given_xs.ndim != 3 or self.p_y_given_xs.shape[:2] != (2, nx):
            raise InvalidSCM(f"p_y_given_xs must be [2, {nx}, |Y|], got {self.p_y_given_xs.shape}")
        if not (2 <= nx <= MAX_DOMAIN and 2 <= self.n_y <= MAX_DOMAIN):
            raise InvalidSCM(f"|X| and |Y| must lie in [2, {MAX_DOMAIN}]")
        for name, table in (("p_s", self.p_s), ("p_x_given_s", self.p_x_given_s),
                            ("p_y_given_xs", self.p_y_given_xs)):
            if (table < 0).any() or not np.isfinite(table).all():
                raise InvalidSCM(f"{name} has negative or non-finite entries")
            if np.abs(table.sum(axis=-1) - 1.0).max() > TOL:
                raise InvalidSCM(f"{name} rows do not sum to 1")
        return self

    def joint(self):
        """P(s, x, y) as an array indexed [s, x, y]."""
        return self.p_s[:, None, None] * self.p_x_given_s[:, :, None] * self.p_y_given_xs

    def is_confounded(self, atol=1e-9):
        x_dep = np.abs(self.p_x_given_s[0] - self.p_x_given_s[1]).max() > atol
        y_dep = np.abs(self.p_y_given_xs[0] - self.p_y_given_xs[1]).max() > atol
        return bool(x_dep and y_dep)


def _flat_simplex_row(rng, k, min_entry):
    while True:
        row = rng.dirichlet(np.ones(k))
        if row.min() >= min_entry:
            return row


def random_scm(rng, n_x=None, n_y=None, max_size=5, uniform_s=False, min_entry=1e-3):
    """Full-support SCM with every conditional row drawn from a flat simplex.

    Rows containing an entry below ``min_entry`` are redrawn.
    """
    n_x = n_x or int(rng.integers(2, max_size + 1))
    n_y = n_y or int(rng.integers(2, max_size + 1))
    p_s = np.array([0.5, 0.5]) if uniform_s else _flat_simplex_row(rng, 2, min_entry)
    p_x = np.stack([_flat_simplex_row(rng, n_x, min_entry) for _ in range(2)])
    p_y = np.stack([[_flat_simplex_row(rng, n_y, min_entry) for _ in range(n_x)]
                    for _ in range(2)])
    return DiscreteSCM(p_s, p_x, p_y)


def _check_x(scm, x):
    if not 0 <= x < scm.n_x:
        raise InvalidSCM(f"x={x} outside domain of size {scm.n_x}")


def _require_support(scm):
    if (scm.p_x_given_s <= 0).any():
        s, x = np.argwhere(scm.p_x_given_s <= 0)[0]
        raise ZeroSupport(f"P(X={x} | S={s}) = 0")


def _assert_close(a, b, what, tol=TOL):
    dev = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
    if not dev < tol:
        raise IdentityViolation(f"{what}: deviation {dev:.3e} exceeds {tol:g}")
    return dev


def interventional(scm, x):
    """P(Y | do(X=x)) from the mutilated graph with the S -> X edge removed.

    Under do(x), the joint of (S, Y) is P(s) P(y | x, s); marginalizing S
    gives the interventional distribution.
    """
    scm.validate()
    _check_x(scm, x)
    mutilated = scm.p_s[:, None] * scm.p_y_given_xs[:, x, :]
    return mutilated.sum(axis=0)


def _marginals(joint):
    p_xs = joint.sum(axis=2)            # [s, x]
    p_s = p_xs.sum(axis=1)              # [s]
    p_x = p_xs.sum(axis=0)              # [x]
    return p_xs, p_s, p_x


def backdoor_eq7(scm, x):
    """``P(x,y,S=1)/P(x|S=1) + P(x,y,S=0)/P(x|S=0)``, all read off the joint."""
    scm.validate()
    _check_x(scm, x)
    _require_support(scm)
    joint = scm.joint()
    p_xs, p_s, _ = _marginals(joint)
    p_x_given_s = p_xs[:, x] / p_s
    return sum(joint[s, x, :] / p_x_given_s[s] for s in (1, 0))


def verify_a1_chain(scm, x, y, skip_do_removal=False, tol=TOL):
    """Evaluate each line of the backdoor derivation and check they agree.

    Lines, in order:

    1. ``sum_s P(y|do(x),s) P(s|do(x))`` in the mutilated model
    2. ``sum_s P(y|x,s) P(s)`` after removing the do-operator
    3. ``sum_s P(x,y,s)/P(x,s) * P(s)``
    4. ``sum_s P(x,y,s)/P(x|s)``

    ``skip_do_removal`` replaces ``P(s)`` in line 2 by the observational
    ``P(s|x)``, which is the mistake the do-removal step avoids; on a
    confounded model the chain then breaks with ``IdentityViolation``.

    Returns a list of ``(name, value)`` pairs.
    """
    scm.validate()
    _check_x(scm, x)
    _require_support(scm)
    if not 0 <= y < scm.n_y:
        raise InvalidSCM(f"y={y} outside domain of size {scm.n_y}")
    joint = scm.joint()
    p_xs, p_s, p_x = _marginals(joint)

    # line 1: mutilated joint over (s, y) given do(x)
    do_joint = scm.p_s[:, None] * scm.p_y_given_xs[:, x, :]
    do_p_s = do_joint.sum(axis=1)
    line1 = sum(do_joint[s, y] / do_p_s[s] * do_p_s[s] for s in (0, 1))

    p_y_given_xs = joint[:, x, y] / p_xs[:, x]
    weight = p_xs[:, x] / p_x[x] if skip_do_removal else p_s
    line2 = sum(p_y_given_xs[s] * weight[s] for s in (0, 1))
    line3 = sum(joint[s, x, y] / p_xs[s, x] * p_s[s] for s in (0, 1))
    line4 = sum(joint[s, x, y] / (p_xs[s, x] / p_s[s]) for s in (1, 0))

    chain = [("do_expansion", line1), ("do_removed", line2),
             ("joint_ratio", line3), ("propensity_form", line4)]
    for (na, a), (nb, b) in zip(chain, chain[1:]):
        _assert_close(a, b, f"{na} -> {nb}", tol)
    return chain


def loss_table_for(classifier, loss_matrix):
    """Table ``L[x, y] = loss_matrix[y, classifier[x]]`` for a deterministic classifier."""
    classifier = np.asarray(classifier, dtype=np.int64)
    loss_matrix = np.asarray(loss_matrix, dtype=np.float64)
    return loss_matrix[:, classifier].T


def risk_decomposition(scm, loss_table, check=True, tol=TOL):
    """Risk under the intervened distribution, computed two ways.

    ``lhs = sum_{x,y} L[x,y] P(y|do(x)) P(x)``;
    ``rhs = sum_{x,y,s} L[x,y] P(x)/P(x|s) P(x,y,s)``.
    """
    scm.validate()
    _require_support(scm)
    L = np.asarray(loss_table, dtype=np.float64)
    if L.shape != (scm.n_x, scm.n_y):
        raise InvalidSCM(f"loss table must be [{scm.n_x}, {scm.n_y}], got {L.shape}")
    joint = scm.joint()
    p_xs, p_s, p_x = _marginals(joint)
    do = np.stack([interventional(scm, x) for x in range(scm.n_x)])
    lhs = float((L * do * p_x[:, None]).sum())
    p_x_given_s = p_xs / p_s[:, None]
    ratio = p_x[None, :] / p_x_given_s                    # [s, x]
    rhs = float((L[None] * ratio[:, :, None] * joint).sum())
    if check:
        _assert_close(lhs, rhs, "intervened risk vs two-domain decomposition", tol)
    return lhs, rhs


def observational_risk(scm, loss_table):
    """``sum_{x,y} L[x,y] P(x,y)``: the risk without any do-removal."""
    L = np.asarray(loss_table, dtype=np.float64)
    return float((L * scm.joint().sum(axis=0)).sum())


def propensity_identity(scm, x, s, check=True, tol=TOL):
    """``P(x)/P(x|s)`` against ``P(s)/P(s|x)``.

    When P(S) is uniform, also checks ``P(x)/P(x|s) == 0.5 / P(s|x)``.
    """
    scm.validate()
    _check_x(scm, x)
    _require_support(scm)
    p_xs, p_s, p_x = _marginals(scm.joint())
    lhs = float(p_x[x] / (p_xs[s, x] / p_s[s]))
    rhs = float(p_s[s] / (p_xs[s, x] / p_x[x]))
    if check:
        _assert_close(lhs, rhs, "P(x)/P(x|s) vs P(s)/P(s|x)", tol)
        if np.all(scm.p_s == 0.5):
            _assert_close(lhs, 0.5 / (p_xs[s, x] / p_x[x]), "uniform-prior propensity", tol)
    return lhs, rhs


def verify_random_scms(n=1000, seed=0, max_size=5):
    """Run every identity over ``n`` random SCMs and report the worst deviations.

    Returns a dict of identity name -> (passed, worst absolute deviation).
    """
    rng = np.random.default_rng(seed)
    worst = {"backdoor": 0.0, "a1_chain": 0.0, "risk": 0.0, "propensity": 0.0,
             "propensity_uniform": 0.0}
    negative_fail = 0
    confounded = 0
    for _ in range(n):
        scm = random_scm(rng, max_size=max_size)
        for x in range(scm.n_x):
            iv = interventional(scm, x)
            bd = backdoor_eq7(scm, x)
            worst["backdoor"] = max(worst["backdoor"], float(np.abs(iv - bd).max()))
            for y in range(scm.n_y):
                final = verify_a1_chain(scm, x, y, tol=np.inf)[-1][1]
                worst["a1_chain"] = max(worst["a1_chain"], abs(final - iv[y]))
            for s in (0, 1):
                lhs, rhs = propensity_identity(scm, x, s, check=False)
                worst["propensity"] = max(worst["propensity"], abs(lhs - rhs))
        f = rng.integers(0, scm.n_y, size=scm.n_x)
        table = loss_table_for(f, rng.uniform(0, 1, size=(scm.n_y, scm.n_y)))
        lhs, rhs = risk_decomposition(scm, table, check=False)
        worst["risk"] = max(worst["risk"], abs(lhs - rhs))
        if scm.is_confounded():
            confounded += 1
            if abs(observational_risk(scm, table) - lhs) >= TOL:
                negative_fail += 1
        uni = DiscreteSCM(np.array([0.5, 0.5]), scm.p_x_given_s, scm.p_y_given_xs)
        p_xs, _, p_x = _marginals(uni.joint())
        for x in range(uni.n_x):
            for s in (0, 1):
                lhs, _ = propensity_identity(uni, x, s, check=False)
                dev = abs(lhs - 0.5 / (p_xs[s, x] / p_x[x]))
                worst["propensity_uniform"] = max(worst["propensity_uniform"], dev)
    results = {k: (v < TOL, v) for k, v in worst.items()}
    rate = negative_fail / confounded if confounded else 0.0
    results["negative_control"] = (rate >= 0.95, rate)
    return results
