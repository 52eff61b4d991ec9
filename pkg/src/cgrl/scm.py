"""Brute-force checks of backdoor adjustment, the variational lower bound and the
asymptotic pair-loss limits on small discrete models.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .objectives import PairSample, inter_loss, intra_loss

MAX_SUPPORT = 8


class InestimableError(ValueError):
    """Positivity fails, so the adjustment formula is undefined."""


def _check_table(t, name):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.abs(t.sum(axis=-1) - 1.0) > 1e-12):
        raise ValueError(f"table {name} rows are not stochastic")
    if any(s > MAX_SUPPORT for s in t.shape):
        raise ValueError(f"table {name} exceeds support cap {MAX_SUPPORT}")
    return t


@dataclass(frozen=True)
class DiscreteScm:
    """Tables for E -> G -> H -> {H_intra, H_inter}, H_intra -> Y <- E.

    ``h_given_ge`` (indexed [g, e, h]) replaces ``h_given_g`` when set, adding
    a direct E -> H arrow that breaks the causal graph the adjustment needs.
    """

    p_e: np.ndarray
    g_given_e: np.ndarray
    h_given_g: np.ndarray
    intra_given_h: np.ndarray
    inter_given_h: np.ndarray
    y_given_intra_e: np.ndarray
    h_given_ge: np.ndarray | None = None

    def __post_init__(self):
        for name in ("p_e", "g_given_e", "h_given_g", "intra_given_h", "inter_given_h",
                     "y_given_intra_e"):
            object.__setattr__(self, name, _check_table(getattr(self, name), name))
        if self.h_given_ge is not None:
            object.__setattr__(self, "h_given_ge", _check_table(self.h_given_ge, "h_given_ge"))
        ne, ng = self.g_given_e.shape
        nh = self.h_given_g.shape[1]
        ni = self.intra_given_h.shape[1]
        if (self.p_e.shape != (ne,) or self.h_given_g.shape[0] != ng
                or self.intra_given_h.shape[0] != nh or self.inter_given_h.shape[0] != nh
                or self.y_given_intra_e.shape[:2] != (ni, ne)):
            raise ValueError("table shapes are inconsistent")

    @property
    def sizes(self):
        ne, ng = self.g_given_e.shape
        return dict(e=ne, g=ng, h=self.h_given_g.shape[1], i=self.intra_given_h.shape[1],
                    r=self.inter_given_h.shape[1], y=self.y_given_intra_e.shape[2])

    def h_mechanism(self) -> np.ndarray:
        """P(h | g, e) as [g, e, h]."""
        if self.h_given_ge is not None:
            return self.h_given_ge
        ne = self.p_e.shape[0]
        return np.repeat(self.h_given_g[:, None, :], ne, axis=1)

    def joint(self) -> np.ndarray:
        """Full observational joint indexed [e, g, h, i, r, y]."""
        return np.einsum("e,eg,geh,hi,hr,iey->eghiry", self.p_e, self.g_given_e,
                         self.h_mechanism(), self.intra_given_h, self.inter_given_h,
                         self.y_given_intra_e)


def _dirichlet(rng, shape, conc=1.0):
    return rng.dirichlet(np.full(shape[-1], conc), size=shape[:-1])


def random_scm(seed, sizes=None, confounded_h: bool = False, concentration: float = 1.0) -> DiscreteScm:
    """CPTs drawn row-wise from a symmetric Dirichlet."""
    rng = np.random.default_rng(seed)
    s = dict(e=3, g=4, h=3, i=3, r=2, y=3)
    s.update(sizes or {})
    d = lambda *shape: _dirichlet(rng, shape, concentration)  # noqa: E731
    return DiscreteScm(
        p_e=d(s["e"]),
        g_given_e=d(s["e"], s["g"]),
        h_given_g=d(s["g"], s["h"]),
        intra_given_h=d(s["h"], s["i"]),
        inter_given_h=d(s["h"], s["r"]),
        y_given_intra_e=d(s["i"], s["e"], s["y"]),
        h_given_ge=d(s["g"], s["e"], s["h"]) if confounded_h else None,
    )


def interventional_brute_force(scm: DiscreteScm, h: int) -> np.ndarray:
    """P(Y | do(H = h)) by truncated factorization over the full joint."""
    nh = scm.sizes["h"]
    if not 0 <= h < nh:
        raise ValueError(f"h={h} outside support of size {nh}")
    delta = np.zeros(nh)
    delta[h] = 1.0
    ng, ne = scm.sizes["g"], scm.sizes["e"]
    forced = np.broadcast_to(delta, (ng, ne, nh))
    joint = np.einsum("e,eg,geh,hi,hr,iey->eghiry", scm.p_e, scm.g_given_e, forced,
                      scm.intra_given_h, scm.inter_given_h, scm.y_given_intra_e)
    return joint.sum(axis=(0, 1, 2, 3, 4))


def backdoor_estimate(scm: DiscreteScm, h: int) -> np.ndarray:
    """sum_g P(Y | H = h, G = g) P(g), all terms read off the observational joint."""
    joint = scm.joint()
    p_ghy = joint.sum(axis=(0, 3, 4))          # [g, h, y]
    p_g = p_ghy.sum(axis=(1, 2))
    p_gh = p_ghy[:, h, :].sum(axis=1)
    support = p_g > 0
    if np.any(p_gh[support] <= 0):
        raise InestimableError(f"P(H={h}, G=g) = 0 for some g with P(g) > 0")
    cond = p_ghy[support, h, :] / p_gh[support, None]
    return (cond * p_g[support, None]).sum(axis=0)


def conditional_y_given_h(scm: DiscreteScm, h: int) -> np.ndarray:
    p_hy = scm.joint().sum(axis=(0, 1, 3, 4))
    return p_hy[h] / p_hy[h].sum()


# -- lower bound ------------------------------------------------------------

@dataclass(frozen=True)
class ElboInstance:
    """Priors P, factorized posteriors Q, and P(Y | H, H_intra, G) at a fixed H.

    ``likelihood`` is indexed [g, i, y]; ``y`` is the observed label.
    """

    p_g: np.ndarray
    p_intra: np.ndarray
    p_inter: np.ndarray
    q_g: np.ndarray
    q_intra: np.ndarray
    q_inter: np.ndarray
    likelihood: np.ndarray
    y: int = 0

    def __post_init__(self):
        for name in ("p_g", "p_intra", "p_inter", "q_g", "q_intra", "q_inter", "likelihood"):
            object.__setattr__(self, name, _check_table(getattr(self, name), name))


def random_elbo_instance(seed, sizes=(4, 3, 3), ny: int = 3, q_equals_p: bool = False) -> ElboInstance:
    rng = np.random.default_rng(seed)
    ng, ni, nr = sizes
    p = [rng.dirichlet(np.ones(k)) for k in sizes]
    q = [x.copy() for x in p] if q_equals_p else [rng.dirichlet(np.ones(k)) for k in sizes]
    lik = _dirichlet(rng, (ng, ni, ny))
    return ElboInstance(p[0], p[1], p[2], q[0], q[1], q[2], lik, int(rng.integers(ny)))


def _kl(q, p):
    pos = q > 0
    if np.any(pos & (p <= 0)):
        return np.inf
    return float((q[pos] * np.log(q[pos] / p[pos])).sum())


@dataclass(frozen=True)
class ElboResult:
    log_likelihood: float
    bound_value: float
    gap: float
    kl_terms: tuple[float, float, float]


def elbo_gap(inst: ElboInstance) -> ElboResult:
    """log-likelihood, the four-term lower bound, and their difference."""
    lik_y = inst.likelihood[:, :, inst.y]               # [g, i]
    # P(H_inter | H) sums out of the likelihood but is kept explicit
    joint = np.einsum("gi,g,i,r->gir", lik_y, inst.p_g, inst.p_intra, inst.p_inter)
    log_lik = float(np.log(joint.sum()))
    with np.errstate(divide="ignore"):
        log_l = np.log(lik_y)
    w = np.outer(inst.q_g, inst.q_intra)
    pos = w > 0
    expected = float((w[pos] * log_l[pos]).sum()) if np.all(np.isfinite(log_l[pos])) else -np.inf
    kls = (_kl(inst.q_g, inst.p_g), _kl(inst.q_intra, inst.p_intra), _kl(inst.q_inter, inst.p_inter))
    bound = expected - sum(kls)
    return ElboResult(log_lik, bound, log_lik - bound, kls)


def jensen_gap(inst: ElboInstance) -> float:
    """log E_P[lik] - E_P[log lik] under the priors; the bound's slack when Q = P."""
    lik = inst.likelihood[:, :, inst.y]
    w = np.outer(inst.p_g, inst.p_intra)
    return float(np.log((w * lik).sum()) - (w * np.log(lik)).sum())


def exact_posterior_instance(seed, sizes=(4, 3, 3), ny: int = 3) -> ElboInstance:
    """Instance whose likelihood ignores H_intra, with Q set to the exact posterior.

    The posterior then factorizes over (G, H_intra, H_inter), so the bound is tight.
    """
    rng = np.random.default_rng(seed)
    ng, ni, nr = sizes
    p_g, p_i, p_r = (rng.dirichlet(np.ones(k)) for k in sizes)
    lik_g = _dirichlet(rng, (ng, ny))
    lik = np.repeat(lik_g[:, None, :], ni, axis=1)
    y = int(rng.integers(ny))
    post_g = lik_g[:, y] * p_g
    post_g /= post_g.sum()
    return ElboInstance(p_g, p_i, p_r, post_g, p_i.copy(), p_r.copy(), lik, y)


# -- pair-loss limits -------------------------------------------------------

def _pair_embeddings(cosines):
    """Row pairs (2k, 2k+1) of unit vectors in R^2 with the given cosines."""
    c = np.asarray(cosines, dtype=float)
    h = np.zeros((2 * len(c), 2))
    h[0::2, 0] = 1.0
    h[1::2, 0] = c
    h[1::2, 1] = np.sqrt(1.0 - c * c)
    pairs = np.stack([np.arange(0, 2 * len(c), 2), np.arange(1, 2 * len(c), 2)], axis=1)
    return h, pairs


@dataclass
class CheckResult:
    name: str
    max_error: float
    passed: bool
    detail: str = ""


@dataclass
class VerificationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, max_error, passed, detail=""):
        self.checks.append(CheckResult(name, float(max_error), bool(passed), detail))

    def text(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name}  max_error={c.max_error:.3e}"
                 + (f"  ({c.detail})" if c.detail else "") for c in self.checks]
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def asymptotic_loss_check(t_max: int = 10_000, n_intra: int = 3, n_inter: int = 3,
                          margin: float = 0.5, tol: float = 1e-12, steps=None) -> VerificationReport:
    """Constructed sequences with intra cosine 1 - 1/t and inter cosine margin (1 - 1/t).

    Checks summed L_intra(t) = |S|/t, L_inter(t) = 0, the pinned sequence
    (inter cosine margin + 1/t) giving summed L_inter = |D|/t, and decay to 0.
    """
    if t_max < 10:
        raise ValueError("t_max must be >= 10")
    ts = np.unique(np.geomspace(1, t_max, 60).astype(int)) if steps is None else np.asarray(steps)
    report = VerificationReport()
    err_intra = err_inter = err_pinned = 0.0
    for t in ts:
        inv = 1.0 / t
        h, pairs = _pair_embeddings(np.full(n_intra, 1.0 - inv))
        li = intra_loss(ad.constant(h), PairSample(pairs, np.zeros((0, 2), int), margin)).item()
        err_intra = max(err_intra, abs(li * n_intra - n_intra * inv))
        h, pairs = _pair_embeddings(np.full(n_inter, margin * (1.0 - inv)))
        lo = inter_loss(ad.constant(h), PairSample(np.zeros((0, 2), int), pairs, margin)).item()
        err_inter = max(err_inter, abs(lo * n_inter))
        if margin + inv < 1.0:
            h, pairs = _pair_embeddings(np.full(n_inter, margin + inv))
            lp = inter_loss(ad.constant(h), PairSample(np.zeros((0, 2), int), pairs, margin)).item()
            err_pinned = max(err_pinned, abs(lp * n_inter - n_inter * inv))
    report.add(f"L_intra(t) = |S|/t for t<= {t_max}", err_intra, err_intra <= tol)
    report.add(f"L_inter(t) = 0 for t<= {t_max}", err_inter, err_inter <= tol)
    report.add(f"pinned L_inter(t) = |D|/t for t<= {t_max}", err_pinned, err_pinned <= tol)
    final = n_intra / ts[-1]
    report.add("L_intra decays toward 0", final, final <= n_intra / t_max + tol)
    return report


def run_verification(seed: int = 0, n_scm: int = 20, n_elbo: int = 100,
                     t_max: int = 10_000) -> VerificationReport:
    """Backdoor, lower-bound and pair-loss-limit checks on seeded random instances."""
    report = VerificationReport()
    worst = 0.0
    for s in range(n_scm):
        scm = random_scm(seed * 1000 + s)
        for h in range(scm.sizes["h"]):
            worst = max(worst, np.abs(backdoor_estimate(scm, h) - interventional_brute_force(scm, h)).max())
    report.add(f"backdoor == do-oracle on {n_scm} SCMs", worst, worst < 1e-10)

    diverge = 0.0
    for s in range(n_scm):
        scm = random_scm(seed * 1000 + 500 + s, confounded_h=True)
        for h in range(scm.sizes["h"]):
            diverge = max(diverge, np.abs(backdoor_estimate(scm, h) - interventional_brute_force(scm, h)).max())
    report.add("backdoor diverges when E -> H", diverge, diverge > 1e-3, "max divergence")

    results = [elbo_gap(random_elbo_instance(seed * 1000 + s)) for s in range(n_elbo)]
    min_gap = min(r.gap for r in results)
    report.add(f"lower bound gap >= -1e-9 on {n_elbo} instances", max(0.0, -min_gap),
               min_gap >= -1e-9, f"min gap {min_gap:.3e}")
    jensen_err = kl_max = 0.0
    for s in range(n_elbo):
        inst = random_elbo_instance(seed * 1000 + s, q_equals_p=True)
        r = elbo_gap(inst)
        kl_max = max(kl_max, max(r.kl_terms))
        jensen_err = max(jensen_err, abs(r.gap - jensen_gap(inst)))
    report.add("Q = P: KL terms vanish", kl_max, kl_max < 1e-12)
    report.add("Q = P: gap equals Jensen gap of the likelihood", jensen_err, jensen_err < 1e-10)
    tight = max(abs(elbo_gap(exact_posterior_instance(seed * 1000 + s)).gap) for s in range(n_elbo))
    report.add("gap < 1e-9 when Q = exact factorized posterior", tight, tight < 1e-9)

    report.checks.extend(asymptotic_loss_check(t_max).checks)
    return report
