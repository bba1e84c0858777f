"""Named experiments. Each returns assertions, tables, fields and a data record;
the CLI layer handles configuration and file output."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import bubbles as bb
from . import conformal as cf
from . import exitset as ex
from . import flows as fl
from .errors import ConvergenceError
from .grid import TorusGrid


@dataclass
class Assertion:
    name: str
    passed: bool
    detail: str = ""
    anchor: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        anchor = f" [{self.anchor}]" if self.anchor else ""
        return f"{tag} {self.name}{anchor}: {self.detail}"


@dataclass
class Outcome:
    assertions: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)

    def check(self, name, passed, detail="", anchor=""):
        self.assertions.append(Assertion(name, bool(passed), detail, anchor))

    def table(self, name, header, rows):
        self.tables[name] = (list(header), [list(r) for r in rows])

    @property
    def ok(self) -> bool:
        return all(a.passed for a in self.assertions)


@dataclass
class Context:
    grid: TorusGrid
    K: cf.CurvatureField
    spec: ex.DoublePeakSpec | None
    params: dict
    rng: np.random.Generator

    def get(self, key, default=None):
        return self.params.get(key, default)


def _strictly_decreasing(xs):
    return all(b < a for a, b in zip(xs[:-1], xs[1:]))


# constants -----------------------------------------------------------------------
def run_constants(ctx: Context) -> Outcome:
    out = Outcome()
    rtol = ctx.get("rtol", 1e-10)
    rows = []
    for n in ctx.get("dims", [ctx.grid.n]):
        quad = bb.interaction_constants(n).as_dict()
        closed = bb.closed_form_constants(n).as_dict()
        for key in ("c1", "c2", "c3", "c4", "b0"):
            rel = abs(quad[key] / closed[key] - 1.0)
            rows.append([n, key, quad[key], closed[key], rel])
            out.check(f"n={n} {key}", rel <= rtol, f"quadrature {quad[key]:.12g} vs closed form, rel {rel:.2e}",
                      "interaction constants")
        out.data[f"n{n}"] = quad
    out.table("constants", ["n", "name", "quadrature", "closed_form", "rel_error"], rows)
    return out


# bubble residual ladder ----------------------------------------------------------------
def run_lemma21(ctx: Context) -> Outcome:
    out = Outcome()
    g = ctx.grid
    lams = ctx.get("lambdas", [10, 20, 40])
    slack = ctx.get("slack", 0.5)
    limit = 2.0 ** (-(g.n - 2) / 2.0) * (1.0 + slack)
    rows = []
    for der in (False, True):
        rep = bb.verify_lemma21(g, lams, derivative=der)
        label = "derivative" if der else "profile"
        for r in rep.rows():
            rows.append([label, r["lambda"], r["residual"], r["ratio"]])
        out.check(f"{label} residual decreasing", _strictly_decreasing(rep.residuals),
                  f"residuals {np.round(rep.residuals, 6).tolist()}", "bubble residual")
        out.check(f"{label} doubling ratio", max(rep.ratios) <= limit,
                  f"max ratio {max(rep.ratios):.4f} vs {limit:.4f}", "bubble residual")
        out.data[label] = {"residuals": rep.residuals, "ratios": rep.ratios, "slope": rep.slope}
    out.table("ladder", ["family", "lambda", "residual", "ratio"], rows)
    return out


# interaction estimates ---------------------------------------------------------------
def run_lemma22(ctx: Context) -> Outcome:
    out = Outcome()
    g = ctx.grid
    n = g.n
    c = tuple([g.L / 2] * n)
    rows = []

    def record(chk, label):
        rows.append([label, chk.lhs, chk.predicted, chk.error, chk.bound, chk.passed])

    lam = ctx.get("lam_gram", 50.0)
    for k in (1, 2, 3):
        chk = bb.verify_lemma22(g, bb.BubbleParams(c, lam), which="ii", k=k, rel_tol=ctx.get("rel_tol", 0.01))
        record(chk, f"ii k={k}")
        out.check(f"(ii) gram k={k}", chk.passed, f"rel error {chk.error / chk.predicted:.2e}", "interactions (ii)")
    # the cross estimate needs both cutoff balls to cover each other's centre
    eps_c = g.L / 4
    sep = ctx.get("separation", g.L / 4)
    lam = ctx.get("lam_cross", 40.0)
    p1 = bb.BubbleParams(c, lam)
    p2 = bb.BubbleParams((c[0] + sep,) + c[1:], lam)
    chk = bb.verify_lemma22(g, p1, p2, which="iii", eps_c=eps_c, const=ctx.get("const", 1.0))
    record(chk, "iii")
    out.check("(iii) cross interaction", chk.passed, f"error {chk.error:.3e} vs bound {chk.bound:.3e}",
              "interactions (iii)")
    ladder = ctx.get("ladder", [10.0, 20.0, 40.0])
    stab = ctx.get("stability", 1.5)
    scaled = []
    for lam in ladder:
        chk = bb.verify_lemma22(g, bb.BubbleParams(c, lam), which="iv", k=2)
        record(chk, f"iv lam={lam}")
        scaled.append(chk.detail["scaled"])
    growth = [b / a for a, b in zip(scaled[:-1], scaled[1:])]
    out.check("(iv) constant stable under doubling", max(growth) <= stab,
              f"scaled {np.round(scaled, 4).tolist()}", "interactions (iv)")
    for al, be in ctx.get("exponents", [[5, 1], [4, 2], [4.5, 1.5]]):
        bound_const = 2.0 * bb.flat_moment(n, al)
        vals = []
        for lam in ladder:
            p1 = bb.BubbleParams(c, lam)
            p2 = bb.BubbleParams((c[0] + g.L / 8,) + c[1:], lam)
            chk = bb.verify_lemma22(g, p1, p2, which="v", exponents=(al, be), const=bound_const)
            record(chk, f"v ({al},{be}) lam={lam}")
            vals.append(chk.passed)
        out.check(f"(v) exponents ({al},{be})", all(vals), f"constant {bound_const:.4f}", "interactions (v)")
    for lam in ladder:
        p1 = bb.BubbleParams(c, lam)
        p2 = bb.BubbleParams((c[0] + g.L / 8,) + c[1:], lam)
        chk = bb.verify_lemma22(g, p1, p2, which="vi")
        rows.append([f"vi lam={lam}", chk.lhs, chk.detail["scaled"], "", "", "report"])
    out.table("interactions", ["check", "lhs", "predicted", "error", "bound", "pass"], rows)
    return out


# decomposition -----------------------------------------------------------------------
def run_decompose_check(ctx: Context) -> Outcome:
    out = Outcome()
    g = ctx.grid
    c = np.array([g.L / 2] * g.n)
    alpha, alpha1 = ctx.get("alpha", 0.5), ctx.get("alpha1", 0.4)
    pert = ctx.get("perturbation", 0.01)
    shift = ctx.get("offset_cells", 3) * g.h
    rows, consts = [], []
    # one perturbation for every lambda so the constants differ only through lambda
    w = ex.smooth_random_field(g, ctx.rng)
    for lam in ctx.get("lambdas", [20.0, 40.0]):
        phi = bb.bubble(g, bb.BubbleParams(tuple(c), lam))
        u = cf.normalize(g, alpha + alpha1 * phi)
        guess = bb.Decomposition(1.0, 1.0, tuple(c + shift * np.eye(g.n)[0]), lam * 1.1)
        dec = bb.decompose(g, u, guess)
        vh = dec.residual_norms["v_h1"]
        loc = g.distance(dec.a1, tuple(c))
        out.check(f"exact recovery lam={lam}", vh <= 1e-9 and loc <= g.h / 10,
                  f"|v| = {vh:.2e}, centre error {loc:.2e}", "optimal choice")
        up = cf.normalize(g, alpha + alpha1 * phi + pert * w)
        dec = bb.decompose(g, up, bb.Decomposition(1.0, 1.0, tuple(c), lam))
        rn = dec.residual_norms
        budget = lam ** (-(g.n - 2)) + rn["v_h1"] ** 2
        worst = max(abs(rn[k]) for k in ("L_lambda", "L_a", "w_lambda", "w_a"))
        consts.append(worst / budget)
        rows.append([lam, rn["v_h1"], rn["orth_one"], rn["orth_phi"], rn["L_lambda"], rn["L_a"],
                     rn["w_lambda"], rn["w_a"], budget, worst / budget])
    stab = ctx.get("stability", 1.5)
    ratio = max(b / a for a, b in zip(consts[:-1], consts[1:])) if len(consts) > 1 else 1.0
    out.check("condition constant stable", ratio <= stab, f"constants {np.round(consts, 6).tolist()}",
              "optimal choice")
    out.table("conditions", ["lambda", "v_h1", "orth_one", "orth_phi", "L_lambda", "L_a", "w_lambda", "w_a",
                             "budget", "constant"], rows)
    return out


# flows ---------------------------------------------------------------------------------
def smooth_positive(grid: TorusGrid, rng, amplitude: float) -> np.ndarray:
    w = ex.smooth_random_field(grid, rng)
    return 1.0 + amplitude * w / np.max(np.abs(w))


def _initial(ctx: Context) -> np.ndarray:
    g = ctx.grid
    init = ctx.get("init", "smooth")
    if init == "constant":
        return cf.normalize(g, g.constant(1.0))
    if init == "smooth":
        return cf.normalize(g, smooth_positive(g, ctx.rng, ctx.get("amplitude", 0.2)))
    raise ValueError(f"unknown initial state {init!r}")


def _flow_config(ctx: Context) -> fl.FlowConfig:
    return fl.FlowConfig(dt=ctx.get("dt", 1e-3), t_max=ctx.get("t_max", 1.0),
                         sample_every=ctx.get("sample_every", 1), k_level=ctx.get("k_level"),
                         j_level=ctx.get("j_level"), grad_tol=ctx.get("grad_tol"))


def _trace_table(out: Outcome, name: str, trace: fl.FlowTrace):
    out.table(name, fl.FlowTrace.COLUMNS, trace.rows())


def run_flow(ctx: Context) -> Outcome:
    out = Outcome()
    g, K = ctx.grid, ctx.K
    kind = fl.FlowKind(ctx.get("kind", "yamabe"))
    u0 = _initial(ctx)
    cfg = _flow_config(ctx)
    stop = None
    res_tol = ctx.get("residual_tol")
    if res_tol is not None:
        stop = lambda t, u, d: "converged" if cf.equation_residual(g, u, K) <= res_tol else None
    trace = fl.run_flow(g, u0, K, kind, cfg, stop)
    _trace_table(out, "trace", trace)
    out.fields["terminal"] = trace.u
    out.data.update({"event": trace.event, "t_end": trace.t_end, "steps": trace.steps})
    if kind is fl.FlowKind.YAMABE:
        J = trace.column("J")
        rel = float(np.max(np.diff(J) / J[:-1])) if len(J) > 1 else 0.0
        rel = max(rel, trace.max_J_increase / J[0])
        out.check("J non-increasing", rel <= 1e-8, f"largest relative step increase {rel:.2e}", "yamabe flow")
        if res_tol is not None:
            res = cf.equation_residual(g, trace.u, K)
            out.data["equation_residual"] = res
            out.check("converges to a solution", trace.event == "converged" and res <= res_tol,
                      f"event {trace.event}, residual {res:.2e}", "negative curvature solvable")
    else:
        vol = trace.column("volume")
        t = trace.column("t")
        drift = abs(vol[-1] - vol[0]) / max(t[-1], 1e-300) / vol[0]
        out.check("volume drift per unit time", drift <= 1e-9, f"{drift:.2e}", "volume conservation")
        if kind is fl.FlowKind.EXIT:
            lo, hi = K.kmin, K.kmax
            m0, M0 = u0.min(), u0.max()
            env = all(s["min_u"] >= m0 * np.exp(lo * s["t"]) * (1 - 1e-12)
                      and s["max_u"] <= M0 * np.exp((hi - lo) * s["t"]) * (1 + 1e-12) for s in trace.samples)
            out.check("positivity envelope", env, f"{len(trace.samples)} samples", "positivity")
        if ctx.get("roundtrip", False):
            back = fl.run_flow(g, trace.u, K, fl.FlowKind.INVERSE if kind is fl.FlowKind.EXIT else fl.FlowKind.EXIT,
                               fl.FlowConfig(dt=cfg.dt, t_max=trace.t_end))
            err = g.h1(back.u - u0)
            out.data["roundtrip_h1"] = err
            out.check("inverse undoes exit", err <= 1e-6, f"h1 error {err:.2e}", "inverse flow")
    return out


def run_combined(ctx: Context) -> Outcome:
    out = Outcome()
    g, K = ctx.grid, ctx.K
    u0 = _initial(ctx)
    cap = ctx.get("cap_factor")
    L_cap = np.inf if cap is None else cap * cf.compute_J(g, u0, K)
    cfg = fl.CombinedConfig(gamma0=ctx.get("gamma0", 0.05), L_cap=L_cap, dt=ctx.get("dt", 1e-2),
                            t_max=ctx.get("t_max", 50.0))
    trace = fl.combined_flow(g, u0, K, cfg)
    _trace_table(out, "trace", trace)
    out.fields["terminal"] = trace.u
    last = trace.samples[-1]
    out.data.update({"event": trace.event, "phases": trace.phases, "t_end": trace.t_end,
                     "terminal_k": last["k"], "terminal_r": last["r"]})
    ok = trace.event == "converged" or (trace.event == "hit_k_zero" and last["r"] < 0)
    out.check("terminal event admissible", ok, f"{trace.event} after {trace.phases}", "region-switching flow")
    return out


def random_state_in_X(grid, K, rng, amplitude, tries=100):
    for _ in range(tries):
        u = cf.normalize(grid, smooth_positive(grid, rng, amplitude))
        if cf.in_X(*cf.compute_rk(grid, u, K)):
            return u
    raise ConvergenceError("could not sample a state in X")


def run_homotopy(ctx: Context) -> Outcome:
    out = Outcome()
    g, K = ctx.grid, ctx.K
    taus = np.linspace(0.0, 1.0, ctx.get("taus", 11))
    n = g.n
    k1 = cf.compute_rk(g, g.constant(1.0), K)[1]
    rows = []
    worst_id = 0.0
    ineq_ok = path_ok = True
    for i in range(ctx.get("samples", 20)):
        u = random_state_in_X(g, K, ctx.rng, ctx.get("amplitude", 0.3))
        ru, ku = cf.compute_rk(g, u, K)
        for tau in taus:
            w = fl.homotopy_path(g, u, tau)
            rw, kw = cf.compute_rk(g, w, K)
            ident = abs(kw - (tau * k1 + (1 - tau) * ku)) / (abs(k1) + abs(ku))
            bound = (1 - tau) ** ((n - 2) / n) * ru
            ok = rw <= bound + 1e-12 * abs(ru)
            wn = fl.null_homotopy(g, u, K, tau)
            inside = cf.in_X(*cf.compute_rk(g, wn, K))
            worst_id = max(worst_id, ident)
            ineq_ok &= ok
            path_ok &= inside
            rows.append([i, tau, ru, ku, rw, kw, bound, ident, ok, inside])
    out.check("k interpolates linearly", worst_id <= 1e-12, f"worst relative defect {worst_id:.2e}",
              "homotopy on X")
    out.check("r bound along the path", ineq_ok, f"{len(rows)} rows", "homotopy on X")
    out.check("path stays in X", path_ok, "", "homotopy on X")
    out.table("homotopy", ["sample", "tau", "r_u", "k_u", "r_w", "k_w", "r_bound", "k_defect", "r_ok", "in_X"], rows)
    return out


def sample_level_states(grid, spec, K, gamma, count, rng, lam_range, cap, spread=0.1, max_tries=2000):
    """States normalize(1 + s phi) with k = -gamma, r < 0 and J below the cap."""
    eps = spec.cutoff(grid.L)
    states, tries = [], 0
    while len(states) < count:
        tries += 1
        if tries > max_tries:
            raise ConvergenceError(f"only {len(states)} admissible states after {max_tries} draws")
        centre = np.array(spec.centers()[int(rng.integers(2))]) + rng.normal(0.0, spread, grid.n)
        lam = rng.uniform(*lam_range)
        phi = bb.bubble(grid, bb.BubbleParams(tuple(centre % grid.L), lam), eps, lam_min=0.0)
        f = lambda s: cf.compute_rk(grid, cf.normalize(grid, 1.0 + s * phi), K)[1] + gamma
        if f(0.0) >= 0 or f(1e3) <= 0:
            continue
        s = brentq(f, 0.0, 1e3, xtol=1e-14, rtol=1e-14)
        u = cf.normalize(grid, 1.0 + s * phi)
        r, k = cf.compute_rk(grid, u, K)
        if r >= 0 or cf.J_from_rk(grid.n, r, k) > cap:
            continue
        states.append((u, lam, r, k))
    return states


def run_transversality(ctx: Context) -> Outcome:
    out = Outcome()
    g, K, spec = ctx.grid, ctx.K, ctx.spec
    if spec is None:
        raise ValueError("transversality needs a double_peak curvature")
    cap = ctx.get("cap_factor", 10.0) * cf.compute_J(g, cf.normalize(g, g.constant(1.0)), K)
    rows = []
    for gamma in ctx.get("gammas", [0.1, 0.05, 0.02]):
        states = sample_level_states(g, spec, K, gamma, ctx.get("samples", 50), ctx.rng,
                                     ctx.get("lam_range", [1.7, 2.5]), cap)
        dtk = [fl.dtk_closed_form(g, u, K, "yamabe") for u, *_ in states]
        for (u, lam, r, k), d in zip(states, dtk):
            rows.append([gamma, lam, r, k, cf.J_from_rk(g.n, r, k), d])
        out.data[f"delta_{gamma}"] = float(min(dtk))
        out.check(f"dk/dt > 0 on -k = {gamma}", min(dtk) > 0, f"delta = {min(dtk):.4g} over {len(dtk)} states",
                  "transversality")
    out.table("transversality", ["gamma", "lambda", "r", "k", "J", "dtk"], rows)
    return out


# hypotheses on K ---------------------------------------------------------------------------
def run_nu1(ctx: Context) -> Outcome:
    out = Outcome()
    g, K = ctx.grid, ctx.K
    mask = K.nonneg_mask
    nu1 = cf.dirichlet_nu1(g, mask)
    out.data["nu1"] = nu1
    out.data["mask_cells"] = int(mask.sum())
    out.check("nu1 of {K >= 0} positive", nu1 > 0, f"{nu1:.6g}", "hypothesis on K")
    N_check = ctx.get("crosscheck_N", 32)
    if N_check and ctx.spec is not None:
        gc = TorusGrid(g.n, N_check, g.L)
        Kc, _ = ex.build_kdp(gc, ctx.spec, check_h2=False)
        it, dense = cf.dirichlet_nu1(gc, Kc.nonneg_mask), cf.dense_nu1(gc, Kc.nonneg_mask)
        out.data["crosscheck"] = {"N": N_check, "iterative": it, "dense": dense}
        out.check(f"iterative vs dense at N={N_check}", abs(it - dense) <= 1e-6 * max(1.0, abs(dense)),
                  f"{it:.10g} vs {dense:.10g}", "hypothesis on K")
    omega = cf.dilate(mask)
    D = cf.dilate(omega)
    rep = cf.prop11_report(g, K, omega, D)
    out.data["report"] = rep
    if rep["ratio_bound_holds"] is not None:
        out.check("peak-to-floor ratio bound", rep["ratio_bound_holds"],
                  f"ratio {rep['ratio']:.6g} vs {rep['ratio_lower_bound']:.6g}", "ratio bound")
    return out


# exit set construction ---------------------------------------------------------------------
def run_expansion(ctx: Context) -> Outcome:
    out = Outcome()
    g, spec = ctx.grid, ctx.spec
    if spec is None:
        raise ValueError("expansion needs a double_peak curvature")
    lams = ctx.get("lambdas", [40.0, 80.0, 160.0])
    ladder = ex.expansion_ladder(g, spec, lams, ctx.get("tau", 0.01), ctx.get("engine", "radial"))
    term = ctx.get("terminal", 0.1)
    rows = []
    for which, recs in ladder.items():
        ratios = [r["ratio"] for r in recs]
        rows += [[which, r["lambda1"], r["exact"], r["expansion"], r["residual"], r["error_budget"], r["ratio"]]
                 for r in recs]
        out.check(f"{which} ratio strictly decreasing", _strictly_decreasing(ratios),
                  f"ratios {np.round(ratios, 4).tolist()}", "energy expansions")
        out.check(f"{which} terminal ratio", ratios[-1] <= term, f"{ratios[-1]:.4f} vs {term}", "energy expansions")
    out.table("expansion", ["which", "lambda1", "exact", "expansion", "residual", "budget", "ratio"], rows)
    return out


def run_exit_components(ctx: Context) -> Outcome:
    out = Outcome()
    g, K, spec = ctx.grid, ctx.K, ctx.spec
    if spec is None:
        raise ValueError("exit-components needs a double_peak curvature")
    tau = ctx.get("tau", 0.01)
    window = ctx.get("lam_window")
    points = []
    for idx in (1, 2):
        ep = ex.find_exit_point(g, spec, K, tau, idx, window, ctx.get("n_sweep", 9))
        out.table(f"sweep_peak{idx}", ["lambda1", "alpha", "alpha1", "k", "r", "newton_residual"],
                  [[r[c] for c in ("lambda1", "alpha", "alpha1", "k", "r", "newton_residual")] for r in ep.table])
        norm = g.lcrit(ep.u)
        ok = (ep.abs_k <= 1e-9 and abs(ep.r + tau) <= 1e-10 and ep.r < 0 and ep.u.min() > 0
              and abs(norm - 1) <= 1e-10)
        out.check(f"exit point at peak {idx}", ok,
                  f"lambda1* = {ep.lam1_star:.6f}, |k| = {ep.abs_k:.1e}, r = {ep.r:.6g}, norm - 1 = {norm - 1:.1e}",
                  "exit set membership")
        out.fields[f"exit_point_{idx}"] = ep.u
        out.data[f"exit_point_{idx}"] = ep.summary()
        points.append(ep)
    dist = g.h1(points[0].u - points[1].u)
    out.check("exit points separated", dist >= 0.1, f"h1 distance {dist:.4f}", "two components")
    box = ex.ScanBox(tau=tuple(ctx.get("tau_range", [0.005, 0.05])), d_max=ctx.get("d_max", 0.2),
                     lam=tuple(window or (bb.LAMBDA_MIN, g.max_lambda)), v_max=ctx.get("v_max", 0.2))
    sampler = ex.ScanSampler(g, spec, K, 1)
    gam, fit_rows = ex.fit_gammas(sampler, box, ctx.get("fit_samples", 80), ctx.rng)
    consts = bb.closed_form_constants(g.n)
    closed = ex.gamma_closed_form(g.n, g.volume, consts.c1, consts.b0, consts.c4, spec.offset(g.n, g.volume))
    out.data["gammas"] = gam
    out.data["gammas_closed_form"] = closed
    out.table("fit", ["tau", "d", "lambda1", "v_norm", "alpha", "alpha1", "k"],
              [[r[c] for c in ("tau", "d", "lambda1", "v_norm", "alpha", "alpha1", "k")] for r in fit_rows])
    radii = tuple(ctx.get("radii", [0.05, 0.15, 0.3]))
    samples = ctx.get("scan_samples", 200)
    scan_rows = []
    for idx in (1, 2):
        sampler = ex.ScanSampler(g, spec, K, idx)
        for scan in ("ball", "annulus"):
            res = ex.region_scan(sampler, gam, box, scan, radii, samples, ctx.rng)
            s = res.summary()
            out.data[f"{scan}_peak{idx}"] = s
            scan_rows += [[idx, scan, r["tau"], r["d"], r["lambda1"], r["v_norm"], r["q"], r["k"]] for r in res.rows]
            want = "min k > 0" if scan == "ball" else "max k < 0"
            out.check(f"{scan} scan at peak {idx}", res.clean and res.samples >= samples,
                      f"{want}: min {res.min_k:.4g}, max {res.max_k:.4g}, {res.samples} samples",
                      "sign on shells")
    out.table("scans", ["peak", "scan", "tau", "d", "lambda1", "v_norm", "q", "k"], scan_rows)
    return out


EXPERIMENTS = {
    "constants": run_constants,
    "lemma21": run_lemma21,
    "lemma22": run_lemma22,
    "decompose-check": run_decompose_check,
    "flow": run_flow,
    "combined": run_combined,
    "homotopy": run_homotopy,
    "transversality": run_transversality,
    "nu1": run_nu1,
    "expansion": run_expansion,
    "exit-components": run_exit_components,
}


def run(tag: str, ctx: Context) -> Outcome:
    try:
        fn = EXPERIMENTS[tag]
    except KeyError:
        raise ValueError(f"unknown experiment {tag!r}") from None
    return fn(ctx)
