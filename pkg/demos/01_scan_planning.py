"""
Scan planning
=============

Build the serpentine tile grid that covers a 14.8 x 2.5 cm ovitrap with a
9 x 5 mm microscope field of view, inspect its geometry, and compile the
motion-command stream a stage controller would consume.
"""
import ovitrap as ov

# The shipped preset forces the published 33 x 5 grid (165 tiles).
plan = ov.paper_preset()
print(f"poses: {len(plan.poses)}  grid: {plan.n_major} x {plan.n_minor}")

xs = sorted({p.x_mm for p in plan.poses})
ys = sorted({p.y_mm for p in plan.poses})
print(f"major step: {xs[1] - xs[0]:.5f} mm   minor step: {ys[1] - ys[0]:.3f} mm")
print(f"last tile flush with trap edge: {xs[-1] + plan.tile.major_extent_mm} mm")

# Without a count override the grid follows from the overlap fractions.
free = ov.plan_scan(plan.trap, plan.tile, plan.overlap)
print(f"overlap-derived grid: {free.n_major} x {free.n_minor} = {len(free.poses)} tiles")

# A 2 s settle per tile plus ~0.3 s per move reproduces the ~6.3 min run.
duration = ov.estimate_duration(plan, dwell_s=2.0, per_move_s=0.3037)
print(f"estimated acquisition: {duration:.1f} s = {duration / 60:.2f} min")

# The wire protocol is plain text: MOVE / DWELL / CAPTURE, three lines per tile.
commands = ov.compile_plan(plan, dwell_s=2.0)
print(f"{len(commands)} commands; first tile:")
for cmd in commands[:3]:
    print("  " + cmd.line())
