"""Train the toy transformer on real vs column-shuffled maps.

A shortened version of the desk-scale task: real maps come from synthetic
pulse videos, fakes are the same maps with their columns shuffled in time.
Column shuffling keeps every column intact, so only position-aware attention
can tell the classes apart; expect this to stay near chance at the default
learning rate.  Set N_REAL and EPOCHS higher for the full task.
"""
import logging

from memstvit.toydata import make_toy_dataset
from memstvit.train import TrainConfig, evaluate, train_loop
from memstvit.vit import ViTConfig, save_weights

N_REAL = 80
EPOCHS = 3

logging.basicConfig(level=logging.INFO, format="%(message)s")

ds = make_toy_dataset(n_real=N_REAL, seed=0)
for split in ("train", "val", "test"):
    x, y = ds.subset(split)
    print(f"{split:5s}: {len(x)} maps, {int(y.sum())} fake")

res = train_loop(ds.subset("train"), ds.subset("val"), ViTConfig.toy(),
                 TrainConfig(epochs=EPOCHS, batch_size=16, seed=0), log_path="demo_out_train.jsonl")
acc, loss = evaluate(*ds.subset("test"), res.params)
print(f"best epoch {res.best_epoch}; test accuracy {acc:.3f}, loss {loss:.4f}")
save_weights(res.params, "demo_toy.vitw")
