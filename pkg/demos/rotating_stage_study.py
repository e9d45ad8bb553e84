"""Feedforward design study on the non-minimum-phase rotating stage.

The non-collocated output puts one zero of the discretized plant outside
the unit circle, so the exact inverse is unstable.  This script compares
the two stable workarounds implemented by the library:

  * zero-phase inversion — the unstable zero factor is replaced by its
    zero-phase counterpart, leaving a gain-only distortion;
  * preview extension — the regressor trades the offending past input for
    future reference samples, truncating the non-invertible mode.

Run from the repository root:

    python3 demos/rotating_stage_study.py
"""

import numpy as np

from pgnnff import sim, stability as stab, train as tmod
from pgnnff.data import RegressorSpec, build_regressors, split_train_val
from pgnnff.model import InputTransform, PgnnModel

T_S = 1e-3

if __name__ == "__main__":
    plant = sim.rotating_default_plant(T_S)
    fb = sim.rotating_feedback(T_S)

    print("== 1. experiment: six-velocity suite with mild dither ==")
    refs = sim.reference_suite([n * 0.025 for n in range(1, 7)],
                               -0.05, 0.05, 1.0, 1000.0, T_S, dwell=0.05)
    t, u, y = sim.generate_training_experiment(plant, fb, refs,
                                               noise_var=1.0, seed=2)
    print(f"   {t.size} samples")

    print("\n== 2. identify the direct (unstable) inverse ==")
    spec = RegressorSpec(4, 4, 0)
    ds = build_regressors(t, u, y, spec)
    tr, _ = split_train_val(ds)
    phys = tmod.fit_physics(tr, "linear", max_cond=1e16)
    num = np.concatenate([[1.0], -phys.theta[spec.n_y:]])
    den = phys.theta[: spec.n_y]
    zeros = np.roots(num)
    n_us = int(np.sum(np.abs(zeros) > 1.0))
    print(f"   plant zeros {np.round(np.sort(np.abs(zeros)), 4)}"
          f" -> {n_us} outside the unit circle")

    print("\n== 3. stable designs ==")
    zf = stab.zpetc_inverse(num, den)
    print(f"   zero-phase inverse: spectral radius {zf.spectral_radius():.4f},"
          f" preview lead {zf.preview}")
    spec_pv = stab.extend_preview(spec, 20, 1)
    ds_pv = build_regressors(t, u, y, spec_pv)
    tr_pv, _ = split_train_val(ds_pv)
    phys_pv = tmod.fit_physics(tr_pv, "linear", max_cond=1e16)
    model_pv = PgnnModel(phys_pv, None, InputTransform("identity", spec_pv, T_S))
    ss = stab.to_state_space(model_pv)
    cert = stab.certify_iss(ss)
    print(f"   preview inverse: {spec_pv.n_y} reference taps, "
          f"certified={cert.certified} (margin {cert.margin:.3e})")

    print("\n== 4. closed-loop comparison ==")
    ref = sim.make_reference(-0.05, 0.05, 0.05, 1.0, 1000.0, T_S,
                             dwell_before=0.1, dwell_after=0.2, n_preview=64)
    results = {
        "no feedforward": sim.run_closed_loop(plant, fb, None, ref),
        "zero-phase inverse": sim.run_closed_loop(
            plant, fb, sim.ZpetcFeedforward(zf), ref),
        "preview inverse": sim.run_closed_loop(
            plant, fb, sim.ModelFeedforward(model_pv), ref),
    }
    print(f"   {'controller':<20} {'MSE':>12} {'MAE':>12}")
    for name, res in results.items():
        print(f"   {name:<20} {res.mse:>12.3e} {res.mae:>12.3e}")
    print("\n   note: with an accurately identified model the zero-phase "
          "design wins here;\n   its only distortion is a tiny in-band gain "
          "error, while 20-sample preview\n   truncates a slowly decaying "
          "pre-actuation mode.")
