"""End-to-end motor pipeline driven through the command-line interface.

Generates a training log on the synthetic linear motor, identifies the
physical parameters, trains the physics-guided network with compliance
regularization, and compares tracking error across controllers.  All
artifacts land in demos/out/.

Run from the repository root:

    python3 demos/motor_pipeline.py
"""

import json
import pathlib
import sys

from pgnnff.cli import main

ROOT = pathlib.Path(__file__).resolve().parent.parent
OUT = ROOT / "demos" / "out"


def run(*argv):
    code = main(list(argv))
    if code != 0:
        sys.exit(code)


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    cfg = ROOT / "configs"

    print("== 1. simulate a training experiment with input dither ==")
    run("gen-data", "--config", str(cfg / "motor_gen_data.toml"),
        "--seed", "3", "--out", str(OUT / "motor_log.csv"))

    print("\n== 2. identify mass / viscous / Coulomb coefficients ==")
    run("identify", "--config", str(cfg / "motor_identify.toml"),
        "--out", str(OUT / "motor_identify.json"))
    report = json.loads((OUT / "motor_identify.json").read_text())
    m, f_v, f_c = report["theta_phy_star"]
    print(f"   m ~ {m:.2f} kg, f_v ~ {f_v:.2f} Ns/m, f_c ~ {f_c:.2f} N")

    print("\n== 3. coverage points for out-of-distribution compliance ==")
    run("gen-ze", "--config", str(cfg / "motor_gen_ze.toml"),
        "--out", str(OUT / "motor_ze.csv"))

    print("\n== 4. train physics-only and physics-guided models ==")
    run("train", "--config", str(cfg / "motor_train_physics.toml"),
        "--out", str(OUT / "motor_physics.json"))
    run("train", "--config", str(cfg / "motor_train_pgnn.toml"),
        "--seed", "0", "--out", str(OUT / "motor_pgnn.json"))

    print("\n== 5. compare controllers across the reference sweep ==")
    run("compare", "--config", str(cfg / "motor_compare.toml"),
        "--out", str(OUT / "motor_table.json"))
    table = json.loads((OUT / "motor_table.json").read_text())["table"]
    print(f"   {'controller':<10} {'reference':>9} {'MAE':>12}")
    for row in table:
        print(f"   {row['controller']:<10} {row['reference']:>9} "
              f"{row['mae']:>12.3e}")
