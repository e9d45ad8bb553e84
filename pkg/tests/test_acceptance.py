"""End-to-end acceptance suite.

Each test asserts one headline property of the package at its stated
tolerance, from the exact linear-block selection up to full closed-loop
feedforward studies on the synthetic plants.  The tests are ordered from
cheap algebraic checks to the long simulation studies; the expensive
pipelines are shared through module-scoped fixtures.
"""

import time

import numpy as np
import pytest
import scipy.signal

from pgnnff import extrap as emod
from pgnnff import sim
from pgnnff import stability as stab
from pgnnff import train as tmod
from pgnnff.data import (
    DataSet,
    NormalizationRecord,
    RegressorSpec,
    build_regressors,
    split_train_val,
)
from pgnnff.model import InputTransform, NeuralNet, PgnnModel, PhysicsModel

T_S = 1e-3


# ---------------------------------------------------------------------------
# 1. exact linear-block selection never loses to the reference block


def test_linear_block_selection_beats_reference_block():
    spec = RegressorSpec(1, 2, 0)
    rng = np.random.default_rng(100)
    t0 = time.perf_counter()
    for _ in range(100):
        theta_true = rng.normal(size=3)
        phi = rng.normal(size=(60, 3))
        u = phi @ theta_true + 0.5 * np.sin(2.0 * phi[:, 0]) \
            + 0.1 * rng.normal(size=60)
        ds = DataSet(phi, u, spec, T_S)
        star = tmod.fit_physics(ds)

        nn = NeuralNet.init_random([3, 6, 1], rng)
        W1, B1 = nn.layers[0]
        nn.layers[0] = (3.0 * W1, B1)

        cs = tmod.CostSpec(
            variant="pgnn_reg",
            lambda_nn=rng.uniform(0.0, 1e-2),
            lambda_phy=rng.uniform(1e-4, 1e-1),
            phys_ref=star,
        )
        # reference linear block: zero read-out, physics at its best fit
        baseline = PgnnModel(PhysicsModel(star.theta, "linear", spec, T_S),
                             nn.copy(), InputTransform("identity", spec, T_S))
        W_out, B_out = baseline.nn.layers[-1]
        baseline.nn.layers[-1] = (np.zeros_like(W_out), np.zeros_like(B_out))
        v_bar = tmod.total_cost(baseline, ds, cs)

        model = PgnnModel(PhysicsModel(star.theta, "linear", spec, T_S),
                          nn.copy(), InputTransform("identity", spec, T_S))
        tmod.optimized_lip_selection(model, ds, cs)
        assert tmod.total_cost(model, ds, cs) <= v_bar + 1e-10

        # without any cross-regularization the selected model is at least
        # as good in pure MSE as the best physics-only fit
        cs0 = tmod.CostSpec(variant="mse")
        model0 = PgnnModel(PhysicsModel(star.theta, "linear", spec, T_S),
                           nn.copy(), InputTransform("identity", spec, T_S))
        tmod.optimized_lip_selection(model0, ds, cs0)
        phys_only = PgnnModel(PhysicsModel(star.theta, "linear", spec, T_S),
                              None, InputTransform("identity", spec, T_S))
        assert tmod.cost_mse(model0, ds) <= tmod.cost_mse(phys_only, ds) + 1e-10
    assert time.perf_counter() - t0 < 30.0


# ---------------------------------------------------------------------------
# 2. consistency: physics parameters recovered when the residual is
#    network-representable and orthogonal to the physics features


def _even_teacher(rng, width_pairs, n_in):
    """Network whose output is an even function of its input: hidden units
    come in sign-mirrored pairs sharing the read-out weight."""
    rows, biases, w_out = [], [], []
    for _ in range(width_pairs):
        w = rng.normal(size=n_in)
        b = rng.uniform(-0.5, 0.5)
        c = rng.normal()
        rows += [w, -w]
        biases += [b, b]
        w_out += [c, c]
    return NeuralNet([
        (np.array(rows), np.array(biases)),
        (np.array([w_out]), np.zeros(1)),
    ])


def test_physics_parameters_recovered_with_representable_residual():
    spec = RegressorSpec(1, 2, 0)
    theta_true = np.array([1.0, -0.5, 2.0])
    t0 = time.perf_counter()
    passes = 0
    for seed in range(10):
        rng = np.random.default_rng(200 + seed)
        teacher = _even_teacher(rng, 2, 3)
        half = rng.normal(size=(150, 3))
        phi = np.vstack([half, -half])  # symmetric sample: the even
        # residual is exactly orthogonal to the odd (linear) physics part
        u = phi @ theta_true + teacher.predict(phi)
        ds = DataSet(phi, u, spec, T_S)
        star = tmod.fit_physics(ds)
        np.testing.assert_allclose(star.theta, theta_true, rtol=1e-10)

        tf = InputTransform("identity", spec, T_S)
        norm = NormalizationRecord.fit(tf.apply(ds.phi))
        nn = NeuralNet.init_random([3, 8, 1], rng)
        model = PgnnModel(PhysicsModel(star.theta, "linear", spec, T_S),
                          nn, tf, norm)
        cs = tmod.CostSpec(variant="pgnn_reg", lambda_nn=0.0,
                           lambda_phy=tmod.lambda_phy_rule(ds, star),
                           phys_ref=star)
        cfg = tmod.TrainConfig(restarts=10, max_epochs=200, seed=seed)
        rep = tmod.train(model, ds, ds, cs, cfg)
        rel = np.linalg.norm(rep.model.phys.theta - theta_true) \
            / np.linalg.norm(theta_true)
        if rel < 1e-2 and tmod.cost_mse(rep.model, ds) < 1e-6:
            passes += 1
    assert passes >= 8
    assert time.perf_counter() - t0 < 300.0


# ---------------------------------------------------------------------------
# 3. analytic Jacobians against central finite differences


def _assert_close_with_floor(analytic, numeric, rtol=1e-6, floor=1e-9):
    err = np.abs(analytic - numeric)
    assert np.all(err <= np.maximum(rtol * np.abs(numeric), floor))


def test_jacobians_match_finite_differences():
    spec = RegressorSpec(2, 3, 0)
    rng = np.random.default_rng(300)
    tf = InputTransform("identity", spec, T_S)
    norm = NormalizationRecord(shift=rng.normal(size=spec.length),
                               scale=rng.uniform(0.5, 2.0, spec.length))
    nn = NeuralNet.init_random([spec.length, 5, 1], rng)
    W2, B2 = nn.layers[-1]
    nn.layers[-1] = (rng.normal(size=W2.shape), rng.normal(size=B2.shape))
    model = PgnnModel(PhysicsModel(rng.normal(size=spec.length), "linear",
                                   spec, T_S), nn, tf, norm)
    t0 = time.perf_counter()
    phi = rng.normal(size=(200, spec.length))

    # parameter Jacobian
    J = model.jacobian_params(phi)
    theta0 = model.flatten()
    h = 1e-6
    J_fd = np.empty_like(J)
    for j in range(theta0.size):
        tp, tm = theta0.copy(), theta0.copy()
        tp[j] += h
        tm[j] -= h
        model.set_flat(tp)
        up = model.predict(phi)
        model.set_flat(tm)
        um = model.predict(phi)
        J_fd[:, j] = (up - um) / (2.0 * h)
    model.set_flat(theta0)
    _assert_close_with_floor(J, J_fd)

    # input gradient of the network alone
    x = model.nn_input(phi)
    G = model.nn.grad_input(x)
    G_fd = np.empty_like(G)
    for j in range(x.shape[1]):
        xp, xm = x.copy(), x.copy()
        xp[:, j] += h
        xm[:, j] -= h
        G_fd[:, j] = (model.nn.predict(xp) - model.nn.predict(xm)) / (2.0 * h)
    _assert_close_with_floor(G, G_fd)
    assert time.perf_counter() - t0 < 10.0


# ---------------------------------------------------------------------------
# 4. certification soundness on randomized feedforward filters


def _random_filter(rng):
    """Feedforward model with a stable past-input skeleton and a random
    residual network; returns the model and its critical output scale."""
    spec = RegressorSpec(1, 3, 0)  # two reference taps, two past inputs
    p = rng.uniform(-0.9, 0.9, size=2)  # real stable poles
    theta_uff = np.array([p[0] + p[1], -p[0] * p[1]])
    theta = np.concatenate([rng.normal(size=2), theta_uff])
    nn = NeuralNet.init_random([4, 4, 1], rng)
    W2, B2 = nn.layers[-1]
    nn.layers[-1] = (rng.normal(size=W2.shape), B2)
    model = PgnnModel(PhysicsModel(theta, "linear", spec, T_S), nn,
                      InputTransform("identity", spec, T_S),
                      NormalizationRecord.identity(4))
    cert = stab.certify_iss(stab.to_state_space(model))
    s_crit = np.sqrt(cert.rhs / cert.lhs)  # lhs scales with scale^2
    return model, s_crit


def _scaled(model, s):
    m = model.copy()
    W2, B2 = m.nn.layers[-1]
    m.nn.layers[-1] = (s * W2, s * B2)
    return m


def test_certification_soundness_and_refusal():
    rng = np.random.default_rng(400)
    t0 = time.perf_counter()
    for _ in range(20):
        model, s_crit = _random_filter(rng)

        certified = _scaled(model, 0.5 * s_crit)
        ss = stab.to_state_space(certified)
        cert = stab.certify_iss(ss)
        assert cert.certified

        # bounded references keep the filter bounded...
        phi_r = rng.uniform(-1.0, 1.0, size=(100_000, ss.n_r))
        u_tr, xn = ss.simulate(phi_r)
        assert np.all(np.isfinite(u_tr))
        assert np.max(np.abs(u_tr)) < 1e6

        # ...and the state decays geometrically once the reference is zero
        u2, xn2 = ss.simulate(np.zeros((2000, ss.n_r)),
                              x0=np.full(ss.n_state, np.max(xn)))
        win = xn2[:2000].reshape(-1, 100).max(axis=1)
        tail = win[1:]  # monotone envelope after the first 100 steps
        assert np.all(np.diff(tail) <= 1e-14)
        assert xn2[-1] <= 1e-6 * max(win[0], 1e-300)
        # fitted decay rate strictly below one
        pos = xn2[100:][xn2[100:] > 1e-250]
        k = np.arange(pos.size)
        rate = np.exp(np.polyfit(k, np.log(pos), 1)[0])
        assert rate < 1.0

        # an over-scaled network violates the condition and is refused
        infeasible = _scaled(model, 2.0 * s_crit)
        assert not stab.certify_iss(stab.to_state_space(infeasible)).certified
    assert time.perf_counter() - t0 < 120.0


# ---------------------------------------------------------------------------
# 5. Lyapunov pair residual and closed-form gain optimum


def test_lyapunov_pair_and_gain_optimum():
    rng = np.random.default_rng(500)
    for _ in range(100):
        n = int(rng.integers(1, 7))
        R = rng.normal(size=(n, n))
        A = R * rng.uniform(0.2, 0.9) / max(np.max(np.abs(np.linalg.eigvals(R))), 1e-12)
        Q = np.eye(n)
        P = stab.lyapunov_pair(A, Q)
        assert np.linalg.norm(A.T @ P @ A - P + Q, "fro") < 1e-10

    betas = np.arange(1e-6, 1.0, 1e-6)
    for _ in range(50):
        n = int(rng.integers(1, 5))
        R = rng.normal(size=(n, n))
        A = R * rng.uniform(0.2, 0.9) / max(np.max(np.abs(np.linalg.eigvals(R))), 1e-12)
        B = np.zeros((n, 1))
        B[0, 0] = 1.0
        M = rng.normal(size=(n, n))
        Q = M @ M.T + 0.1 * np.eye(n)
        P = stab.lyapunov_pair(A, Q)
        lam = float(np.min(np.linalg.eigvalsh(Q)))
        s1 = (B.T @ P @ A @ A.T @ P @ B).item()
        s3 = (B.T @ P @ B).item()
        rhs_grid = (1.0 - betas) * lam / (s3 + s1 / (betas * lam))
        # the vectorized expression must agree with the scalar routine
        for b in (1e-6, 0.25, 0.5, 0.999999):
            np.testing.assert_allclose(
                stab.gain_condition_rhs(A, B, P, Q, b),
                (1.0 - b) * lam / (s3 + s1 / (b * lam)), rtol=1e-12)
        b_grid = betas[int(np.argmax(rhs_grid))]
        b_star = stab.optimal_beta(A, B, P, Q)
        assert abs(b_star - b_grid) <= 5e-6
        assert stab.gain_condition_rhs(A, B, P, Q, b_star) >= \
            np.max(rhs_grid) - 1e-12 * abs(np.max(rhs_grid))


# ---------------------------------------------------------------------------
# 6. rotating-stage simulation study (shared pipeline)


class _SumFeedforward:
    """Sum of independent feedforward contributions."""

    def __init__(self, *ffs):
        self.ffs = ffs

    def prepare(self, r):
        for ff in self.ffs:
            ff.prepare(r)

    def step(self, k):
        return sum(ff.step(k) for ff in self.ffs)


def _train_residual_net(ds_res, phys, seed=0):
    """Network regressed on a feedforward residual over reference windows
    only (no past-input taps, so deployment has no hidden feedback)."""
    tr, va = split_train_val(ds_res)
    tf = InputTransform("identity", ds_res.spec, T_S)
    norm = NormalizationRecord.fit(tf.apply(tr.phi))
    nn = NeuralNet.init_random([ds_res.spec.length, 16, 1],
                               np.random.default_rng(seed))
    model = PgnnModel(None, nn, tf, norm)
    cs = tmod.CostSpec(variant="pgnn_reg", lambda_nn=1e-5, lambda_phy=0.0,
                       phys_ref=phys)
    cfg = tmod.TrainConfig(restarts=2, max_epochs=60, seed=seed)
    return tmod.train(model, tr, va, cs, cfg).model


@pytest.fixture(scope="module")
def rotating_study():
    t0 = time.perf_counter()
    plant = sim.rotating_default_plant(T_S)
    fb = sim.rotating_feedback(T_S)
    refs = sim.reference_suite([n * 0.025 for n in range(1, 7)],
                               -0.05, 0.05, 1.0, 1000.0, T_S, dwell=0.05)
    # dithered pass for linear identification, clean pass for the residual
    t, u, y = sim.generate_training_experiment(plant, fb, refs,
                                               noise_var=1.0, seed=2)
    t2, u2, y2 = sim.generate_training_experiment(plant, fb, refs,
                                                  noise_var=0.0, seed=2)
    spec = RegressorSpec(4, 4, 0)
    ds = build_regressors(t, u, y, spec)
    phys = tmod.fit_physics(ds, "linear", max_cond=1e16)
    theta_uff = phys.theta[spec.n_y:]
    num = np.concatenate([[1.0], -theta_uff])
    den = phys.theta[: spec.n_y]
    zf = stab.zpetc_inverse(num, den)

    # network on the zero-phase filter's residual: what the stable linear
    # filter cannot reproduce of the true input (mostly the
    # position-dependent force), as a function of the reference window
    spec_nn = RegressorSpec(4, 1, 0)
    ds2 = build_regressors(t2, u2, y2, spec)
    ds_nn = build_regressors(t2, u2, y2, spec_nn)
    u_lin = zf.apply(y2)
    k_lo = max(spec.n_a - spec.n_k - 1, spec.n_b - 1, 0)
    res_zp = ds2.u - u_lin[k_lo : k_lo + ds2.N]
    trim = 300  # boundary samples: filter edge effects
    keep = np.arange(trim, ds2.N - trim)
    residual_zp = _train_residual_net(
        DataSet(ds_nn.phi[keep], res_zp[keep], spec_nn, T_S), phys)

    # extended-preview variant: truncate the unstable mode with lookahead
    spec_pv = stab.extend_preview(spec, 20, 1)
    ds_pv = build_regressors(t, u, y, spec_pv)
    phys_pv = tmod.fit_physics(ds_pv, "linear", max_cond=1e16)
    assert stab.certify_iss(stab.to_state_space(
        PgnnModel(phys_pv, None, InputTransform("identity", spec_pv, T_S))
    )).certified
    ds_pv2 = build_regressors(t2, u2, y2, spec_pv)
    # residual against the deployed recursion (filter fed its own past
    # outputs), not the one-step regression: the nonlinearity cancels out
    # of the latter through the near-unit-sum past-input taps
    ff_lin = sim.ModelFeedforward(
        PgnnModel(phys_pv, None, InputTransform("identity", spec_pv, T_S)))
    ff_lin.prepare(y2)
    u_pv = np.array([ff_lin.step(k) for k in range(y2.size)])
    res_pv = ds_pv2.u - u_pv[k_lo : k_lo + ds_pv2.N]
    keep_pv = np.arange(trim, ds_pv2.N - trim)
    residual_pv = _train_residual_net(
        DataSet(ds_nn.phi[keep_pv], res_pv[keep_pv], spec_nn, T_S), phys_pv)

    ff_pv = lambda: sim.ModelFeedforward(
        PgnnModel(phys_pv, None, InputTransform("identity", spec_pv, T_S)))
    ref = sim.make_reference(-0.05, 0.05, 0.05, 1.0, 1000.0, T_S,
                             dwell_before=0.1, dwell_after=0.2, n_preview=64)
    controllers = {
        "none": None,
        "zpetc_phys": sim.ZpetcFeedforward(zf),
        "zpetc_pgnn": sim.ZpetcFeedforward(zf, nn_model=residual_zp),
        "preview_phys": ff_pv(),
        "preview_pgnn": _SumFeedforward(
            ff_pv(), sim.ModelFeedforward(residual_pv)),
    }
    mse = {name: sim.run_closed_loop(plant, fb, ff, ref).mse
           for name, ff in controllers.items()}
    return {
        "num": num,
        "mse": mse,
        "elapsed": time.perf_counter() - t0,
    }


def test_rotating_stage_single_unstable_zero(rotating_study):
    zeros = np.roots(rotating_study["num"])
    assert int(np.sum(np.abs(zeros) > 1.0)) == 1
    assert rotating_study["elapsed"] < 900.0


def test_rotating_stage_controller_ordering(rotating_study):
    mse = rotating_study["mse"]
    assert rotating_study["elapsed"] < 900.0
    # every feedforward beats no feedforward
    for name in ("zpetc_phys", "zpetc_pgnn", "preview_phys", "preview_pgnn"):
        assert mse[name] <= 0.9 * mse["none"], name
    # learned residual beats the physics-only zero-phase inverse
    assert mse["zpetc_pgnn"] <= 0.9 * mse["zpetc_phys"]
    # preview variants beat their zero-phase counterparts
    assert mse["preview_phys"] <= 0.9 * mse["zpetc_phys"]
    assert mse["preview_pgnn"] <= 0.9 * mse["zpetc_pgnn"]
    # learned preview feedforward is the best controller overall
    others = [v for k, v in mse.items() if k != "preview_pgnn"]
    assert mse["preview_pgnn"] <= 0.9 * min(others)


# ---------------------------------------------------------------------------
# 7/8. synthetic motor study (shared training)


@pytest.fixture(scope="module")
def motor_study():
    plant = sim.clm_default_plant(A_p=6.0)
    fb = sim.clm_feedback()
    refs = sim.reference_suite([n * 0.025 for n in range(1, 7)],
                               -0.1, 0.1, 1.0, 1000.0, T_S, dwell=0.1)
    t, u, y = sim.generate_training_experiment(plant, fb, refs,
                                               noise_var=50.0, seed=3)
    spec = RegressorSpec(5, 1, 2)
    ds = build_regressors(t, u, y, spec)
    tr, va = split_train_val(ds)
    phys = tmod.fit_physics(tr, "clm")
    tf = InputTransform("clm_phys", spec, T_S)
    norm = NormalizationRecord.fit(tf.apply(tr.phi))
    lam_phy = tmod.lambda_phy_rule(tr, phys)

    region = emod.OperatingRegion(("y", "dy"), [-0.15, -0.2], [0.15, 0.2],
                                  (31, 31))
    feats = emod.project_to_region(tr.y_part(), region, T_S,
                                   shifts=spec.y_shifts())
    zset = emod.generate_ze(region, feats, 100, 0.0)
    ze = emod.lift_to_regressors(zset, spec, T_S)

    cfg = tmod.TrainConfig(restarts=4, max_epochs=150, seed=0)
    models = {}
    for name, cs in (
        ("g0", tmod.CostSpec(variant="pgnn_reg", lambda_nn=1e-5,
                             lambda_phy=lam_phy, phys_ref=phys)),
        ("g01", tmod.CostSpec(variant="pgnn_extrap", lambda_nn=1e-5,
                              lambda_phy=lam_phy, gamma=0.1,
                              phys_ref=phys, ze=ze)),
    ):
        nn = NeuralNet.init_random([tf.width, 24, 1], np.random.default_rng(0))
        rep = tmod.train(PgnnModel(phys, nn, tf, norm), tr, va, cs, cfg)
        models[name] = rep.model
    models["phys"] = PgnnModel(phys, None,
                               InputTransform("identity", spec, T_S))
    return {"plant": plant, "fb": fb, "models": models}


def _suite_mae(study, model):
    plant, fb = study["plant"], study["fb"]
    maes = []
    for v in (0.05, 0.1, 0.15):
        for a, b in ((-0.1, 0.1), (0.1, -0.1)):
            ref = sim.make_reference(a, b, v, 1.0, 1000.0, T_S,
                                     dwell_before=0.05, dwell_after=0.05,
                                     n_preview=16)
            ff = sim.ModelFeedforward(model) if model is not None else None
            maes.append(sim.run_closed_loop(plant, fb, ff, ref).mae)
    return float(np.mean(maes))


def test_motor_learned_feedforward_halves_physics_error(motor_study):
    m = motor_study["models"]
    ratio = _suite_mae(motor_study, m["g01"]) / _suite_mae(motor_study, m["phys"])
    assert ratio <= 0.6


def test_motor_extrapolation_regularization_effect(motor_study):
    m = motor_study["models"]
    ref = sim.make_reference(0.05, 0.15, 0.1, 1.0, 1000.0, T_S,
                             dwell_before=0.05, dwell_after=0.3, n_preview=16)

    def mae(model):
        return sim.run_closed_loop(motor_study["plant"], motor_study["fb"],
                                   sim.ModelFeedforward(model), ref).mae

    mae_phys, mae_g0, mae_g01 = mae(m["phys"]), mae(m["g0"]), mae(m["g01"])
    assert mae_g01 <= 1.5 * mae_phys
    assert mae_g0 >= 2.0 * mae_g01


# ---------------------------------------------------------------------------
# 9. greedy selection equals the brute-force oracle


def _brute_force_greedy(region, z_n, e_max, eps):
    grid = region.grid()
    gn = region.normalize(grid)
    pool = [row for row in region.normalize(z_n)]
    sel, obj = [], []
    while len(sel) < e_max:
        best_c, best_j = -1.0, -1
        for j in range(grid.shape[0]):
            c = min(float(np.sum((p - gn[j]) ** 2)) for p in pool)
            if c > best_c:  # strict: ties keep the lowest index
                best_c, best_j = c, j
        if best_c <= eps:
            break
        sel.append(best_j)
        obj.append(best_c)
        pool.append(gn[best_j])
    return grid[sel].reshape(len(sel), region.dim), np.asarray(obj)


def test_greedy_selection_matches_bruteforce_oracle():
    rng = np.random.default_rng(900)
    for _ in range(20):
        dim = int(rng.integers(1, 4))
        res = []
        total = 1
        for _ in range(dim):
            r = int(rng.integers(3, 12))
            res.append(r)
            total *= r
        if total > 10_000:
            res = [min(r, 8) for r in res]
        lo = rng.uniform(-2.0, 0.0, dim)
        hi = lo + rng.uniform(0.5, 3.0, dim)
        region = emod.OperatingRegion(tuple("xyz"[:dim]), lo, hi, tuple(res))
        z_n = lo + rng.uniform(0.0, 1.0, size=(int(rng.integers(1, 12)), dim)) \
            * (hi - lo)
        e_max = int(rng.integers(1, 10))
        eps = float(rng.choice([0.0, 1e-3]))
        pts, obj = _brute_force_greedy(region, z_n, e_max, eps)
        out = emod.generate_ze(region, z_n, e_max, eps)
        np.testing.assert_array_equal(out.points, pts)
        np.testing.assert_allclose(out.objectives, obj, rtol=1e-12)


# ---------------------------------------------------------------------------
# 10. zero-phase inversion of the derived non-minimum-phase plant


def test_zero_phase_inverse_of_derived_plant():
    plant = sim.rotating_default_plant(T_S)
    A, B, C = plant.linear_matrices()
    Ad, Bd, Cd, Dd, _ = scipy.signal.cont2discrete((A, B, C, [[0.0]]), T_S,
                                                   method="zoh")
    num, den = scipy.signal.ss2tf(Ad, Bd, Cd, Dd)
    num = np.asarray(num).ravel()
    num = num / den[0]
    den = den / den[0]
    num = np.trim_zeros(num, "f")
    assert int(np.sum(np.abs(np.roots(num)) > 1.0)) == 1

    zf = stab.zpetc_inverse(num, den)
    assert zf.spectral_radius() < 1.0
    # the plant has an integrator pole, so den(1) = 0 and the cascade is
    # 0/0 at DC; cancel the common den factor before evaluating at z = 1
    reduced, rem = np.polydiv(np.polymul(num, zf.num), den)
    assert np.max(np.abs(rem)) < 1e-9 * np.max(np.abs(reduced))
    dc = np.polyval(reduced, 1.0) / np.polyval(zf.den, 1.0)
    assert abs(dc - 1.0) < 1e-9
    w = np.linspace(0.01, 3.0, 20)
    resp = zf.freq_response(w, num, den)
    assert np.all(np.abs(np.angle(resp)) < 1e-6)
