"""Quick check that the extension imports and the main entry points work."""

import math

import rtr

ideal = rtr.Design.rtr()
sweep = ideal.sweep(20.0, 20000.0, 101)
assert len(sweep) == 101
c = sweep.complementarity()
assert c["max_eps_full_db"] <= -250.0, c

lossy = rtr.Design.rtr(k=0.999, r_w=0.1, r_s=0.1)
flat = lossy.sweep().complementarity()["max_eps_flat_db"]
assert -50.0 < flat < -40.0, flat

lf, hf = ideal.transfer(100.0)
assert abs(lf + hf - 1.0) < 1e-12

lc2 = rtr.Design.lc2()
mc = lc2.monte_carlo(tol=0.05, n=20, seed=7, n_points=100)
again = lc2.monte_carlo(tol=0.05, n=20, seed=7, n_points=100)
assert mc["csv"] == again["csv"]
assert len(mc["phase_dev_deg"]) == 20

rec = ideal.reconstruct([100.0, 3000.0, 8000.0])
assert rec["relative_rms_error"] <= 1e-12
rec = rtr.Design.fir().reconstruct()
assert rec["delay_samples"] == 511

lp, hp = rtr.fir_taps(63)
assert math.isclose(sum(lp), 1.0, abs_tol=1e-12)

text = rtr.emit_netlist(rtr.parse_netlist("V1 in 0 AC 1\nR1 in lo 1k\nR2 lo 0 1k\n.probe v(lo)\n.probe v(in)\n"))
circuit = rtr.Circuit.parse(text)
assert circuit.probes == ["lo", "in"]
lo, _ = rtr.Design.netlist(circuit).transfer(1000.0)
assert abs(lo - 0.5) < 1e-12

try:
    rtr.parse_netlist("R1 a 0 10q\n")
except ValueError as e:
    assert "column" in str(e)
else:
    raise AssertionError("bad value accepted")

print("smoke test ok")
