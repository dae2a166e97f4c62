"""Train a small multi-scale net on a slice of the bundled MNIST digits.

Uses the library directly (the CLI does the same from a config file).
Takes about 20 seconds.

Run: python demos/05_train_mnist_subset.py
"""
import os
import tempfile

from mspyrpool.data_io import load_idx, subset
from mspyrpool.netgraph import build_network, load_checkpoint, parse_network_spec, save_checkpoint
from mspyrpool.training import TrainConfig, evaluate, train

DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data", "mnist10k")

train_set = subset(load_idx(os.path.join(DATA, "train-images-idx3-ubyte.gz"),
                            os.path.join(DATA, "train-labels-idx1-ubyte.gz")), 1000, seed=0)
test_set = subset(load_idx(os.path.join(DATA, "test-images-idx3-ubyte.gz"),
                           os.path.join(DATA, "test-labels-idx1-ubyte.gz")), 300, seed=0)
print(f"{len(train_set)} training digits, {len(test_set)} test digits")

spec = parse_network_spec("""
classes 10
min_size 28 28
layer conv 5 5 8
layer tanh
layer maxsub 2
tap 2 levels 1,2,4 dict 16 linear sparse
tap 3 levels 1,2 dict 16 linear sparse
head
""")
net = build_network(spec, seed=0)
config = TrainConfig(initial_lr=0.002, max_epochs=4, metric="overall")

train(net, train_set, config, val_set=test_set,
      on_epoch=lambda r: print(f"epoch {r.epoch}: lr {r.lr:.5f} loss {r.mean_loss:.3f} "
                               f"train {r.train_acc:.3f} test {r.val_acc:.3f}"))

ev = evaluate(net, test_set)
print(f"\noverall {ev.overall:.3f}, per-class {ev.per_class:.3f}")
print("confusion (rows true, cols predicted):")
print(ev.confusion)

# Checkpoints restore the exact parameters.
with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "digits.ckpt")
    save_checkpoint(path, net, "demo run\n")
    again, meta = load_checkpoint(path)
    print("\nreloaded checkpoint scores", evaluate(again, test_set).overall, f"(metadata {meta.strip()!r})")
