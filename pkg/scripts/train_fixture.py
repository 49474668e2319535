"""Train the committed MNIST fixture network and its golden vectors.

Topology: fc 784-256 (sign bits, computed in-pixel on the coarse path),
fc 256-256 (1b -> 4b), fc 256-256 (4b -> 4b), fc 256-10 (16-bit logits).
Binary +/-1 weights throughout, straight-through estimator, batch norm
folded into per-channel (scale, bias) at export. Layer 1 carries no bias
so the analog sign path and the digital replay agree bit-for-bit.

Writes tests/fixtures/mnist_bwnn.pisaw and tests/fixtures/golden_vectors.json.
Run from the repository root:  python3 scripts/train_fixture.py
"""

import json
import sys
import time
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from pisa_sim.convolve import LayerSpec                      # noqa: E402
from pisa_sim.io_golden import _digital_layers, check_golden  # noqa: E402
from pisa_sim.io_images import load_images, load_labels       # noqa: E402
from pisa_sim.io_weights import load_weights, save_weights    # noqa: E402
from pisa_sim.pipeline import NetworkSpec, PisaSystem         # noqa: E402
from pisa_sim.sensor import CfpArray                          # noqa: E402

DATA = ROOT / "data" / "mnist"
FIXTURES = ROOT / "tests" / "fixtures"
HIDDEN = 256
QTOP = 15  # 4-bit activation ceiling
LOGIT_BIAS = 4096.0
SEED = 20240811
EPOCHS = 18
BATCH = 100
LR0 = 2.5e-3
TAU = 32.0  # softmax temperature; argmax-invariant, training-only


def binarize(w):
    # sign(0) -> +1 by convention
    return np.where(w >= 0, 1.0, -1.0)


def adam_step(state, grad, lr, t, b1=0.9, b2=0.999, eps=1e-8):
    m, v = state
    m = b1 * m + (1 - b1) * grad
    v = b2 * v + (1 - b2) * grad * grad
    state[0], state[1] = m, v
    mh = m / (1 - b1 ** t)
    vh = v / (1 - b2 ** t)
    return lr * mh / (np.sqrt(vh) + eps)


class Model:
    def __init__(self, rng):
        def glorot(n_out, n_in):
            lim = np.sqrt(6.0 / (n_in + n_out))
            return rng.uniform(-lim, lim, (n_out, n_in))

        self.w = [glorot(HIDDEN, 784), glorot(HIDDEN, HIDDEN),
                  glorot(HIDDEN, HIDDEN), glorot(10, HIDDEN)]
        # layer-1 RMS normalizer (positive scale only; sign-invariant)
        self.sigma1 = np.ones(HIDDEN)
        # affine batch norm for the two 4-bit layers
        self.gamma = [np.full(HIDDEN, 2.5), np.full(HIDDEN, 2.5)]
        self.beta = [np.full(HIDDEN, 7.5), np.full(HIDDEN, 7.5)]
        self.mu = [np.zeros(HIDDEN), np.zeros(HIDDEN)]
        self.var = [np.ones(HIDDEN), np.ones(HIDDEN)]
        self.opt = {}

    def _adam(self, name, shape):
        if name not in self.opt:
            self.opt[name] = [np.zeros(shape), np.zeros(shape)]
        return self.opt[name]

    def forward(self, u, train):
        """u: (B, 784) complement intensities in [0, 1]."""
        wb = [binarize(w) for w in self.w]
        v1 = u @ wb[0].T
        if train:
            s1 = np.sqrt(np.mean(v1 * v1, axis=0) + 1e-8)
            self.sigma1 = 0.95 * self.sigma1 + 0.05 * s1
        else:
            s1 = self.sigma1
        n1 = v1 / s1
        h1 = (n1 > 0).astype(np.float64)

        acts, cache = [h1], {"u": u, "wb": wb, "v1": v1, "s1": s1, "n1": n1}
        x = h1
        for i in (0, 1):
            v = x @ wb[i + 1].T
            if train:
                mu = v.mean(axis=0)
                var = v.var(axis=0)
                self.mu[i] = 0.95 * self.mu[i] + 0.05 * mu
                self.var[i] = 0.95 * self.var[i] + 0.05 * var
            else:
                mu, var = self.mu[i], self.var[i]
            sd = np.sqrt(var + 1e-5)
            n = (v - mu) / sd
            y = self.gamma[i] * n + self.beta[i]
            a = np.clip(np.floor(y + 0.5), 0, QTOP)
            cache["bn%d" % i] = (x, v, mu, sd, n, y)
            acts.append(a)
            x = a
        logits = x @ wb[3].T
        cache["a3"] = x
        return logits, cache

    def train_batch(self, u, labels, lr, t):
        logits, c = self.forward(u, train=True)
        b = u.shape[0]
        z = logits / TAU
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        loss = -np.mean(np.log(p[np.arange(b), labels] + 1e-12))
        dlogit = p.copy()
        dlogit[np.arange(b), labels] -= 1.0
        dlogit /= b * TAU

        wb = c["wb"]
        grads = {}
        grads["w3"] = dlogit.T @ c["a3"]
        dx = dlogit @ wb[3]
        for i in (1, 0):
            x, v, mu, sd, n, y = c["bn%d" % i]
            dy = dx * ((y > -0.5) & (y < QTOP + 0.5))  # STE through the quantizer
            grads["gamma%d" % i] = np.sum(dy * n, axis=0)
            grads["beta%d" % i] = np.sum(dy, axis=0)
            dn = dy * self.gamma[i]
            dv = (dn - dn.mean(axis=0)
                  - n * np.mean(dn * n, axis=0)) / sd
            grads["w%d" % (i + 1)] = dv.T @ x
            dx = dv @ wb[i + 1]

        dn1 = dx * (np.abs(c["n1"]) <= 1.0)  # binary-activation window
        dv1 = (dn1 - c["n1"] * np.mean(dn1 * c["n1"], axis=0)) / c["s1"]
        grads["w0"] = dv1.T @ c["u"]

        for i in range(4):
            g = grads["w%d" % i]
            self.w[i] -= adam_step(self._adam("w%d" % i, g.shape), g, lr, t)
            np.clip(self.w[i], -1.0, 1.0, out=self.w[i])
        for i in (0, 1):
            for name, park in (("gamma", self.gamma), ("beta", self.beta)):
                g = grads["%s%d" % (name, i)]
                park[i] -= adam_step(self._adam("%s%d" % (name, i), g.shape), g, lr, t)
        return loss

    # -- exact integer-domain replica of the exported network ---------------

    def folded(self):
        signs = [binarize(w).astype(np.int64) for w in self.w]
        affine = [(np.float32(1.0), np.float32(0.0))]
        for i in (0, 1):
            sd = np.sqrt(self.var[i] + 1e-5)
            a = (self.gamma[i] / sd).astype(np.float32)
            b = (self.beta[i] - self.gamma[i] * self.mu[i] / sd).astype(np.float32)
            affine.append((a, b))
        affine.append((np.float32(1.0), np.float32(LOGIT_BIAS)))
        return signs, affine

    def int_predict(self, x_int):
        """x_int: (N, 784) int64 complement codes 0..255."""
        signs, affine = self.folded()
        h = (x_int @ signs[0].T > 0).astype(np.int64)
        for i in (0, 1):
            v = h @ signs[i + 1].T
            a, b = affine[i + 1]
            y = v.astype(np.float64) * a.astype(np.float64) + b.astype(np.float64)
            h = np.clip(np.floor(y + 0.5), 0, QTOP).astype(np.int64)
        logits = h @ signs[3].T + int(LOGIT_BIAS)
        return np.argmax(logits, axis=1)


def export(model) -> NetworkSpec:
    signs, affine = model.folded()
    specs = []
    for i, (s, (a, b)) in enumerate(zip(signs, affine)):
        specs.append(LayerSpec(
            kind="fc", in_channels=s.shape[1], out_channels=s.shape[0],
            weight_bits=1, input_bits=[8, 1, 4, 4][i],
            bn_scale=np.broadcast_to(a, (s.shape[0],)).astype(np.float32),
            bn_bias=np.broadcast_to(b, (s.shape[0],)).astype(np.float32),
            weight_planes=((s + 1) // 2).astype(np.uint8)[None],
        ))
    return NetworkSpec.from_layers(specs, (28, 28), name="mnist_bwnn")


def emit_golden(net, frames_u8, labels, count=8):
    signs = net.layer1_mapping().astype(np.int64)
    doc = {"input_domain": "photodiode-complement", "adc_bits": 8, "frames": []}
    for raw, label in zip(frames_u8, labels):
        if len(doc["frames"]) == count:
            break
        x = 255 - raw.astype(np.int64)
        if (signs @ x.ravel() == 0).any():
            continue  # a zero margin would leave the analog sign to rounding
        layers = _digital_layers(net, x, 8)
        doc["frames"].append({
            "input": [int(b) for b in raw.ravel()],
            "layers": [[int(v) for v in l] for l in layers],
            "prediction": int(np.argmax(layers[-1])),
            "label": int(label),
        })
    return doc


def main():
    rng = np.random.default_rng(SEED)
    train_x = (load_images(DATA / "train-images-idx3-ubyte.gz") * 255).astype(np.int64)
    train_y = load_labels(DATA / "train-labels-idx1-ubyte.gz").astype(np.int64)
    test_x = (load_images(DATA / "t10k-images-idx3-ubyte.gz") * 255).astype(np.int64)
    test_y = load_labels(DATA / "t10k-labels-idx1-ubyte.gz").astype(np.int64)

    # network consumes the photodiode complement of the stored intensity
    xc_train = 255 - train_x.reshape(-1, 784)
    u_train = xc_train / 255.0
    xc_test = 255 - test_x.reshape(-1, 784)
    val_idx = rng.permutation(len(u_train))[:2000]

    model = Model(rng)
    t = 0
    best = (0.0, None)
    for epoch in range(EPOCHS):
        order = rng.permutation(len(u_train))
        lr = LR0 * 0.5 * (1 + np.cos(np.pi * epoch / EPOCHS))
        losses = []
        tic = time.time()
        for i in range(0, len(order), BATCH):
            idx = order[i : i + BATCH]
            t += 1
            losses.append(model.train_batch(u_train[idx], train_y[idx], lr, t))
        val_acc = np.mean(model.int_predict(xc_train[val_idx]) == train_y[val_idx])
        print("epoch %2d  loss %.4f  val(int) %.4f  lr %.5f  %.1fs"
              % (epoch + 1, np.mean(losses), val_acc, lr, time.time() - tic))
        if val_acc > best[0]:
            state = ([w.copy() for w in model.w], model.sigma1.copy(),
                     [g.copy() for g in model.gamma], [b.copy() for b in model.beta],
                     [m.copy() for m in model.mu], [v.copy() for v in model.var])
            best = (val_acc, state)

    model.w, model.sigma1, model.gamma, model.beta, model.mu, model.var = best[1]
    test_acc = np.mean(model.int_predict(xc_test) == test_y)
    print("best val %.4f -> test(int) %.4f" % (best[0], test_acc))

    net = export(model)
    FIXTURES.mkdir(parents=True, exist_ok=True)
    wpath = FIXTURES / "mnist_bwnn.pisaw"
    save_weights(net, wpath)
    loaded = load_weights(wpath)

    golden = emit_golden(loaded, test_x.reshape(-1, 28, 28).astype(np.uint8), test_y)
    gpath = FIXTURES / "golden_vectors.json"
    gpath.write_text(json.dumps(golden))

    sensor = CfpArray(28, 28, loaded.v)
    sensor.program_weights(list(loaded.layer1_mapping().reshape(loaded.v, 28, 28)))
    problems = check_golden(loaded, str(gpath), sensor=sensor)
    if problems:
        raise SystemExit("golden self-check failed: %s" % problems[:3])

    system = PisaSystem(loaded, substrate="functional")
    sample = rng.permutation(10000)[:200]
    hits = sum(system.run_coarse(test_x[i] / 255.0).predicted == test_y[i]
               for i in sample)
    print("pipeline spot check: %d/200 on the coarse path" % hits)
    print("wrote %s (%d bytes) and %s" % (wpath, wpath.stat().st_size, gpath))


if __name__ == "__main__":
    main()
