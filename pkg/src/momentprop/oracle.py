"""Sampling checks of moment propagation against brute-force MC.

Each ``check_*`` function builds its own random cases, runs the sampling
oracle and returns a :class:`CheckResult`. They back the ``oracle`` and
``gradcheck`` CLI subcommands and the acceptance tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .mc import empirical_moments, mc_ensemble
from .moments import MomentVector, mp_forward, mp_relu
from .network import Dense, Dropout, build_network, mlp_specs
from .predictive import PredictiveGaussian, mc_nll, mp_nll
from .trainer import finite_difference_gradcheck


@dataclass
class CheckResult:
    name: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.summary}"


def random_linear_dropout_net(rng: np.random.Generator, max_depth: int = 3, max_width: int = 64,
                              p_choices=(0.1, 0.3, 0.5), seed: int = 0):
    """Dropout -> Dense blocks, 1..max_depth of them, no ReLU."""
    depth = int(rng.integers(1, max_depth + 1))
    widths = [int(w) for w in rng.integers(1, max_width + 1, size=depth + 1)]
    p = float(rng.choice(p_choices))
    specs = []
    for a, b in zip(widths[:-1], widths[1:]):
        specs += [Dropout(p), Dense(a, b)]
    return build_network(specs, seed)


def check_linear_exactness(n_nets: int = 50, T: int = 100_000, seed: int = 0,
                           mean_tol_se: float = 5.0, var_rtol: float = 0.05) -> CheckResult:
    """ReLU-free dropout/dense nets: MC moments against MP, per output node."""
    rng = np.random.default_rng(seed)
    worst_z, worst_v = 0.0, 0.0
    per_net = []
    for k in range(n_nets):
        net = random_linear_dropout_net(rng, seed=seed * 10_000 + k)
        x = rng.normal(size=net.input_width)
        mp = mp_forward(net, x)
        mc = empirical_moments(mc_ensemble(net, x, T, seed * 10_000 + k))
        se = np.sqrt(mc.V / T)
        z = np.abs(mc.E - mp.E) / np.where(se > 0, se, np.inf)
        z = np.where((se == 0) & (mc.E == mp.E), 0.0, z)
        sel = mp.V > 1e-6
        v = np.abs(mc.V[sel] / mp.V[sel] - 1) if sel.any() else np.zeros(1)
        n_dense = sum(1 for s in net.layers if s.kind.value == "dense")
        per_net.append({"depth": n_dense, "max_z": float(z.max()), "max_vdev": float(v.max())})
        worst_z, worst_v = max(worst_z, float(z.max())), max(worst_v, float(v.max()))
    mean_ok = worst_z <= mean_tol_se
    var_ok = worst_v <= var_rtol
    by_depth = {d: max(r["max_vdev"] for r in per_net if r["depth"] == d)
                for d in sorted({r["depth"] for r in per_net})}
    summary = (f"max |E_MC-E_MP|/SE = {worst_z:.2f} (<= {mean_tol_se}); "
               f"max |V_MC/V_MP-1| = {worst_v:.3f} (<= {var_rtol}); "
               + ", ".join(f"depth {d}: {v:.3f}" for d, v in by_depth.items()))
    return CheckResult("A1 dropout/dense exactness", mean_ok and var_ok, summary,
                       {"mean_ok": mean_ok, "var_ok": var_ok, "worst_z": worst_z, "worst_vdev": worst_v,
                        "vdev_by_depth": by_depth, "per_net": per_net})


def rectified_normal_moments(E: float, V: float, n: int = 1_000_000, seed: int = 0) -> tuple[float, float]:
    """Sample mean and variance of max(0, X), X ~ N(E, V), from ``n`` stratified draws.

    One uniform per stratum ``[i/n, (i+1)/n)`` pushed through the normal
    quantile function.
    """
    rng = np.random.default_rng(seed)
    u = (np.arange(n) + rng.random(n)) / n
    y = np.maximum(E + np.sqrt(V) * ndtri(u), 0.0)
    return float(y.mean()), float(y.var(ddof=1))


def check_relu_moments(n: int = 1_000_000, seed: int = 0, rtol: float = 0.01, atol: float = 0.002,
                       small: float = 0.1) -> CheckResult:
    r_grid = np.arange(-4.0, 4.0 + 1e-9, 0.25)
    worst = []
    ok = True
    for V in (0.25, 1.0, 4.0):
        for r in r_grid:
            E = float(r * np.sqrt(V))
            tE, tV = rectified_normal_moments(E, V, n, seed)
            m = mp_relu(MomentVector(np.array([E]), np.array([V])))
            for name, got, truth in (("E", m.E[0], tE), ("V", m.V[0], tV)):
                err = abs(got - truth)
                tol = atol if abs(truth) < small else rtol * abs(truth)
                ok &= err <= tol
                worst.append((err / tol, name, float(r), V))
    worst.sort(reverse=True)
    w = worst[0]
    return CheckResult("A2 ReLU moment formulas", bool(ok),
                       f"{len(worst)} comparisons, worst error/tolerance = {w[0]:.3f} ({w[1]} at r={w[2]}, V={w[3]})",
                       {"worst": worst[:5]})


def check_network_approximation(n_nets: int = 20, n_inputs: int = 100, T: int = 10_000, width: int = 50,
                                n_in: int = 4, p_choices=(0.1, 0.3, 0.5), seed: int = 0,
                                abs_tol: float = 0.10, bias_tol: float = 0.03) -> CheckResult:
    """Random 2-hidden-layer ReLU nets: MP predictive sd against MC sd."""
    rng = np.random.default_rng(seed)
    abs_devs, signed = [], []
    for k in range(n_nets):
        p = float(rng.choice(p_choices))
        net = build_network(mlp_specs(n_in, [width, width], 1, p), seed * 10_000 + k)
        X = rng.normal(size=(n_inputs, n_in))
        sd_mp = np.sqrt(mp_forward(net, X).V[:, 0])
        sd_mc = mc_ensemble(net, X, T, seed * 10_000 + k).samples[..., 0].std(axis=0, ddof=1)
        rel = sd_mp / sd_mc - 1
        abs_devs.append(float(np.mean(np.abs(rel))))
        signed.append(float(np.mean(rel)))
    mean_abs, bias = float(np.mean(abs_devs)), float(np.mean(signed))
    ok = mean_abs <= abs_tol and abs(bias) <= bias_tol
    return CheckResult("A3 full-network sd approximation", ok,
                       f"mean |sd_MP/sd_MC-1| = {mean_abs:.3f} (<= {abs_tol}); "
                       f"mean signed deviation = {bias:+.4f} (|.| <= {bias_tol}); worst net {max(abs_devs):.3f}",
                       {"per_net_abs": abs_devs, "per_net_signed": signed})


def check_nll_consistency(T: int = 100_000, n_targets: int = 100, seed: int = 0, tol: float = 0.01) -> CheckResult:
    """Mixture NLL over samples from N(0, V_mp) against the closed-form Gaussian NLL."""
    rng = np.random.default_rng(seed)
    rows = []
    for V in (0.1, 1.0, 10.0):
        for tau in (0.5, 1.0, 2.0):
            mu = rng.normal(0.0, np.sqrt(V), size=T)
            y = rng.normal(0.0, np.sqrt(V + 1 / tau), size=n_targets)
            mc = mc_nll(mu[:, None], y, tau)
            mp = mp_nll(PredictiveGaussian(0.0, V, tau), y)
            rows.append((V, tau, float(np.mean(np.abs(mc - mp)))))
    worst = max(rows, key=lambda r: r[2])
    return CheckResult("A7 mixture NLL vs closed form", worst[2] <= tol,
                       f"worst mean |NLL_MC-NLL_MP| = {worst[2]:.4f} at V={worst[0]}, tau={worst[1]} (<= {tol})",
                       {"rows": rows})


def check_gradients(n_arch: int = 20, seed: int = 0, tol: float = 1e-4) -> CheckResult:
    """Backprop against central differences on random small ReLU nets, half with frozen masks."""
    rng = np.random.default_rng(seed)
    errs = []
    for k in range(n_arch):
        n_in = int(rng.integers(1, 5))
        hidden = [int(h) for h in rng.integers(2, 9, size=int(rng.integers(1, 3)))]
        n_out = int(rng.integers(1, 3))
        p = 0.3 if k % 2 else 0.0
        net = build_network(mlp_specs(n_in, hidden, n_out, p, input_dropout=bool(k % 4 == 1)), seed * 100 + k)
        # zero initial biases can park a pre-activation exactly on the ReLU kink
        net = net.with_weights([(W, rng.normal(0.0, 0.1, size=b.shape)) for W, b in net.weights])
        X = rng.normal(size=(8, n_in))
        y = rng.normal(size=(8, n_out))
        masks = None
        if p:
            widths, masks = net.input_width, []
            for s in net.layers:
                if s.kind.value == "dropout":
                    masks.append((rng.random((8, widths)) >= p).astype(float))
                elif s.kind.value == "dense":
                    widths = s.out_dim
        errs.append(finite_difference_gradcheck(net, (X, y), masks))
    worst = max(errs)
    return CheckResult("A8 trainer gradient check", worst < tol,
                       f"max relative error over {n_arch} architectures = {worst:.2e} (< {tol:g})",
                       {"errors": errs})


ORACLE_CHECKS = {
    "linear": check_linear_exactness,
    "relu": check_relu_moments,
    "network": check_network_approximation,
    "nll": check_nll_consistency,
}
