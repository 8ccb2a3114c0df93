"""Training-side utilities: cross-validation folds, learning-rate
schedules, and fold aggregation formatting.
"""
from airad import train_utils as tu

plan = tu.make_folds(303, seed=0)
print("fold sizes:", [len(f) for f in plan.folds])
val, train = plan.validation(0), plan.training(0)
print(f"fold 0: {len(train)} training / {len(val)} validation records")

st = tu.OneCycleState(max_lr=1e-3, total_steps=100)
trace = [tu.onecycle_lr(st, s) for s in range(101)]
print(f"one-cycle: start {trace[0]:.2e}, peak {max(trace):.2e} at step "
      f"{st.peak_step}, final {trace[-1]:.2e}")

pl = tu.PlateauState(lr=1e-3, factor=0.1, patience=3)
for epoch, loss in enumerate([1.0, 0.9, 0.9, 0.9, 0.9, 0.9]):
    tu.plateau_step(pl, loss)
    print(f"  epoch {epoch}: loss {loss} -> lr {pl.lr:.1e}")

folds = [{"dice": d} for d in (98.09, 98.16, 98.12, 98.08, 98.16)]
print("aggregate:", tu.format_report(tu.aggregate_folds(folds)))
