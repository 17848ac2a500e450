#!/usr/bin/env python3
"""Smoke test for the effcalc_py extension module.

Build the extension first:

    cargo build -p effcalc-py

then run this script:

    python3 python/smoke_test.py
"""

import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    candidates = [
        ROOT / "target" / "release" / "libeffcalc_py.so",
        ROOT / "target" / "debug" / "libeffcalc_py.so",
    ]
    lib = next((p for p in candidates if p.exists()), None)
    if lib is None:
        sys.exit("build the extension first: cargo build -p effcalc-py")
    stage = Path(tempfile.mkdtemp(prefix="effcalc_py_"))
    shutil.copy(lib, stage / "effcalc_py.so")
    sys.path.insert(0, str(stage))
    import effcalc_py

    return effcalc_py


def main():
    eff = load_module()
    checks = 0

    def ok(cond, what):
        nonlocal checks
        if not cond:
            sys.exit(f"FAIL: {what}")
        checks += 1
        print(f"ok: {what}")

    # Polymorphism without a value restriction.
    p = eff.Program(eff.fixture("id_id"))
    info = p.check()
    ok(
        all(b["scheme"] == "∀α. α → α" for b in info["bindings"]),
        "id_id bindings check at forall a. a -> a",
    )

    # The worked dynamic-state example returns 2, and so does its
    # translation into the handler calculus.
    d = eff.Program(eff.fixture("dyn_example"))
    ok(d.is_dyn, "dyn_example parses as a dynamic-state program")
    ok(d.run()["result"] == "return 2", "dyn_example returns 2")
    translated = eff.Program(d.translate("ground"))
    ok(
        translated.run()["result"] == "return 2",
        "ground-translated dyn_example returns 2",
    )
    ok(translated.check()["type"] == "int", "translated program checks at int")

    # The toggle computation under the constant handler.
    toggle = eff.Program(
        "mode local;\n"
        "with handler { return x -> return x"
        " | get(_; k) -> k true | set(s; k) -> k () }\n"
        "handle (if get () then (set false; return true)"
        " else (set true; return false))"
    )
    ok(toggle.run()["result"] == "return true", "toggle under H_C returns true")

    # Ill-typed input raises ValueError.
    bad = eff.Program("mode local;\nif () then return true else return false")
    try:
        bad.check()
        sys.exit("FAIL: ill-typed program was accepted")
    except ValueError:
        ok(True, "ill-typed program raises ValueError")

    # Traces are numbered pretty-printed states.
    lines = toggle.trace(fuel=50)
    ok(lines[0].startswith("0: "), "trace lines are numbered")

    # A small fuzz campaign across all theorems.
    reports = eff.fuzz(theorem="all", seeds=10)
    ok(
        all(r["failed"] == 0 for r in reports),
        f"fuzz campaigns pass ({', '.join(r['theorem'] for r in reports)})",
    )

    print(f"\nsmoke test passed ({checks} checks)")


if __name__ == "__main__":
    main()
