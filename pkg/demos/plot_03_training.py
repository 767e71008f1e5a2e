"""
Federated training under three sampling schemes
===============================================

100 clients, each holding one of 10 latent groups. We train a small MLP for
a few dozen rounds and look at how many groups each round reaches.
"""

# %%
import numpy as np

from clustered_sampling import data, engine

ds = data.make_synthetic(10, 10, 200, 20, 1.0, 42)
cfg = engine.LocalUpdateConfig(N=20, lr=0.05, batch=50)

# %%
# Same seed for every policy: the initial model is identical.
runs = {p: engine.run_training(ds, p, cfg, rounds=60, seed=0, m=10) for p in ("md", "size", "similarity")}

# %%
for p, res in runs.items():
    groups = np.array([rm.classes_present for rm in res.metrics])
    loss = np.array([rm.train_loss for rm in res.metrics])
    print(f"{p:>10}: groups/round {groups.mean():.2f} (last 20: {groups[-20:].mean():.2f}), "
          f"final loss {loss[-1]:.3f}, loss std last 20 {loss[-20:].std():.4f}")

# %%
# Metrics can be written as JSON lines for plotting elsewhere.
import tempfile
from pathlib import Path

out = Path(tempfile.mkdtemp()) / "similarity.jsonl"
engine.write_metrics_jsonl(out, {"sampler": "similarity"}, runs["similarity"].metrics)
print(out, len(out.read_text().splitlines()), "lines")
