"""Train the binary 100x32x10 regression workload and write it into the package.

The forward pass is the ideal (parasitic-free) crossbar circuit: signed
weights are binarised onto (R_low, R_high) conductance pairs, the neuron
amplifies the differential column voltage and hidden neurons drive the next
layer through their output resistance.  Latent real weights are
trained with a straight-through estimator.

    python3 scripts/train_regression_workload.py /path/to/mnist_5k.csv.gz

The source CSV holds 784 pixel columns (0-255) followed by the label.
Requires torch (``pip install -e .[train]``).
"""

import argparse
import gzip
from pathlib import Path

import numpy as np
import torch

from crossbar_sim.circuit import WeightMatrices
from crossbar_sim.config import default_config
from crossbar_sim.data import Dataset, reshape_images, save_dataset_csv, save_weights

OUT = Path(__file__).resolve().parents[1] / "src" / "crossbar_sim" / "workloads" / "mnist10"
SIZES = [100, 32, 10]
CONFIG = """\
# regression workload: binary 100x32x10 network on 10x10 MNIST crops
topology = [100, 32, 10]

[device]
name = "mram"

[bitcell]
kind = "1t1r"

# Line resistance relative to device resistance grows with the square of
# the line length.  1.9e-9 ohm*m * (401 / 101)^2 gives this 101-row crossbar
# the same relative IR drop as a 401-row (400-input) first layer.
[interconnect]
rho = 3.0e-8

[sim]
parasitics = true
seed = 0
"""


def load_mnist(path):
    with gzip.open(path, "rt") as fh:
        raw = np.loadtxt(fh, delimiter=",")
    x = raw[:, :784].reshape(-1, 28, 28) / 255.0
    y = raw[:, 784].astype(np.int64)
    return reshape_images(x, 10).reshape(len(x), -1), y


class CircuitLayer(torch.nn.Module):
    def __init__(self, n_in, n_out, cfg):
        super().__init__()
        self.w = torch.nn.Parameter(torch.empty(n_in + 1, n_out).uniform_(-1, 1))
        acc = cfg.bitcell.access_resistance
        self.g_hi = 1.0 / (cfg.device.r_low + acc)
        self.g_lo = 1.0 / (cfg.device.r_high + acc)
        self.g_in = 1.0 / cfg.neuron.input_resistance
        self.vdd = cfg.vdd
        nm = cfg.neuron
        self.v_low, self.swing, self.gain = nm.v_low, nm.swing, nm.gain
        self.v_mid = 0.5 * (nm.v_high + nm.v_low)

    def conductances(self):
        # binarise with a straight-through gradient
        s = torch.where(self.w >= 0, 1.0, -1.0)
        s = s.detach() + self.w - self.w.detach()
        g_pos = self.g_lo + (self.g_hi - self.g_lo) * (1 + s) / 2
        g_neg = self.g_lo + (self.g_hi - self.g_lo) * (1 - s) / 2
        return g_pos, g_neg

    def activate(self, vp, vn):
        z = 4 * self.gain * (vp - vn) / self.swing
        return self.v_low + self.swing * torch.sigmoid(z)

    def forward(self, v):
        """Layer driven by ideal sources: column lines are conductance-weighted means."""
        g_pos, g_neg = self.conductances()
        rows = torch.cat([torch.full((v.shape[0], 1), self.vdd), v], dim=1)
        vp = rows @ g_pos / (g_pos.sum(0) + self.g_in)
        vn = rows @ g_neg / (g_neg.sum(0) + self.g_in)
        return self.activate(vp, vn)

    def forward_loaded(self, drive, g_out):
        """Layer whose rows are neuron outputs behind an output resistance.

        Solves the joint nodal equations of the row nodes and both sense
        lines, so the result equals the ideal circuit.
        """
        g_pos, g_neg = self.conductances()
        n_in, n_out = g_pos.shape[0] - 1, g_pos.shape[1]
        gp, gn = g_pos[1:], g_neg[1:]
        size = n_in + 2 * n_out
        m = torch.zeros(size, size)
        idx_r = torch.arange(n_in)
        idx_p = n_in + torch.arange(n_out)
        idx_n = n_in + n_out + torch.arange(n_out)
        m[idx_r, idx_r] = g_out + gp.sum(1) + gn.sum(1)
        m[idx_p, idx_p] = g_pos.sum(0) + self.g_in
        m[idx_n, idx_n] = g_neg.sum(0) + self.g_in
        m[idx_r[:, None], idx_p[None, :]] = -gp
        m[idx_r[:, None], idx_n[None, :]] = -gn
        m[idx_p[:, None], idx_r[None, :]] = -gp.T
        m[idx_n[:, None], idx_r[None, :]] = -gn.T
        rhs = torch.cat([g_out * drive,
                         (self.vdd * g_pos[0]).expand(drive.shape[0], -1),
                         (self.vdd * g_neg[0]).expand(drive.shape[0], -1)], dim=1)
        sol = torch.linalg.solve(m, rhs.T).T
        return self.activate(sol[:, n_in:n_in + n_out], sol[:, n_in + n_out:])

    def clip_(self):
        with torch.no_grad():
            self.w.clamp_(-1, 1)

    def binary(self):
        s = np.where(self.w.detach().numpy() >= 0, 1.0, -1.0)
        return s[1:].T.copy(), s[0].copy()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("mnist_csv")
    ap.add_argument("--epochs", type=int, default=80)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--n-test", type=int, default=200)
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args(argv)

    torch.manual_seed(args.seed)
    rng = np.random.default_rng(args.seed)
    x, y = load_mnist(args.mnist_csv)
    order = rng.permutation(len(y))
    x, y = x[order], y[order]
    x_test, y_test = x[:args.n_test], y[:args.n_test]
    x_train, y_train = x[args.n_test:], y[args.n_test:]

    cfg = default_config(SIZES, sim__parasitics=False)
    layers = torch.nn.ModuleList(CircuitLayer(SIZES[j], SIZES[j + 1], cfg) for j in range(2))
    opt = torch.optim.Adam(layers.parameters(), lr=0.01)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, args.epochs)
    scale = 8.0   # output volts -> logits
    g_out = 1.0 / cfg.neuron.output_resistance

    def forward(xb):
        v = torch.as_tensor(cfg.vss + xb * (cfg.vdd - cfg.vss), dtype=torch.float32)
        v = layers[0](v)
        for layer in layers[1:]:
            v = layer.forward_loaded(v, g_out)
        return v

    xt = torch.as_tensor(x_train, dtype=torch.float32)
    yt = torch.as_tensor(y_train)
    for epoch in range(args.epochs):
        perm = torch.randperm(len(yt))
        for i in range(0, len(yt), 100):
            idx = perm[i:i + 100]
            loss = torch.nn.functional.cross_entropy(scale * forward(xt[idx]), yt[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            for layer in layers:
                layer.clip_()
        sched.step()
        if epoch % 10 == 9 or epoch == args.epochs - 1:
            with torch.no_grad():
                tr = (forward(xt).argmax(1) == yt).float().mean().item()
                te = (forward(torch.as_tensor(x_test, dtype=torch.float32)).argmax(1).numpy()
                      == y_test).mean()
            print(f"epoch {epoch + 1}: loss {loss.item():.3f} train {tr:.3f} test {te:.3f}")

    ws, bs = zip(*(layer.binary() for layer in layers))
    args.out.mkdir(parents=True, exist_ok=True)
    save_weights(WeightMatrices(list(ws), list(bs)), args.out / "weights.json")
    save_dataset_csv(Dataset(x_test, y_test, 10), args.out / "test_200.csv")
    (args.out / "config.toml").write_text(CONFIG)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
