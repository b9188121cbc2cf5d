"""Feed a hand-made failure-index track through the persistency chain and score it.

Run: python demos/02_persistency_chain.py
"""

import numpy as np

from fdirlab import fdir
from fdirlab import metrics as mt

T = 400
y = np.zeros(T, dtype=bool)
y[100:160] = True          # a long fault: 60 samples
y[300:310] = True          # a short fault: 10 samples

y_pred = np.zeros(T, dtype=bool)
y_pred[104:158] = True     # detected with a 4-sample delay, one hole at the end
y_pred[303:309] = True     # short fault detected too
y_pred[200:203] = True     # a 3-sample false alarm

print(mt.detection_metrics(y, y_pred).to_dict(), "\n")

for persistency in (2, 5, 27):
    cfg = fdir.FdirConfig(persistency=persistency)
    reactions = fdir.run_chain(y_pred, cfg)
    triggers = [ev.trigger_sample for evs in reactions.values() for ev in evs]
    rep = mt.system_metrics(y, y_pred, persistency)
    print(f"P={persistency:>2}: reactions at {triggers}  tp={rep.tp} fp={rep.fp} fn={rep.fn}  "
          f"precision={rep.reaction_precision:.2f} recall={rep.reaction_recall:.2f}")

# A short persistency reacts to the false alarm; a long one cannot reach the
# short fault in time. Tuning P trades one against the other.
