"""Training loop: seeded patch sampling, on-the-fly degradation, L1 + Adam
with cosine annealing, periodic eval-mode validation, and a binary
checkpoint format that restores training bit-exactly.

Stream layout (all derived from TrainConfig.seed):

* model init       derive_stream(mix(seed, INIT_TAG), 0)
* sample i, iter t derive_stream(seed, t*batch + i)   (degradation + crop)
* dropout, iter t  derive_stream(mix(seed, MASK_TAG), t)
* validation image derive_stream(mix(seed, VAL_TAG), image_index)

The per-sample data stream is keyed directly by the raw seed so a batch
can be synthesized in any order (or in parallel) without changing bytes.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import DropoutSpec, Node
from .degrade import apply_pipeline, resize, sample_train_pipeline
from .evaluate import format_db, psnr
from .model import ModelConfig, SrNetwork, build_model
from .optim import AdamState, adam_step, cosine_lr, init_adam
from .rng import derive_stream, mix_seed, next_f64

TRAIN_MODES = ("single_degradation", "multi_degradation")

INIT_TAG = 0x696E6974  # "init"
MASK_TAG = 0x6D61736B  # "mask"
VAL_TAG = 0x76616C  # "val"

_MAGIC = b"SRDK1"


@dataclass(frozen=True)
class TrainConfig:
    iters: int
    batch: int = 16
    lr_patch: int = 32
    lr0: float = 2e-4
    seed: int = 0
    mode: str = "single_degradation"
    val_every: int = 100

    def __post_init__(self):
        if self.iters < 1 or self.batch < 1 or self.lr_patch < 1:
            raise ValueError("iters, batch and lr_patch must be positive")
        if self.mode not in TRAIN_MODES:
            raise ValueError(f"mode must be one of {TRAIN_MODES}, got {self.mode!r}")
        if self.val_every < 1:
            raise ValueError("val_every must be positive")


class TrainDiverged(RuntimeError):
    """Raised when the loss goes non-finite; message names the iteration."""


def init_rng_for(cfg: TrainConfig):
    return derive_stream(mix_seed(cfg.seed, INIT_TAG), 0)


def sample_batch(corpus, cfg: TrainConfig, s: int, iteration: int):
    """One aligned (lr, hr) float32 batch.  Each sample draws everything
    (image choice, crop, degradation) from its own derived stream."""
    patch = cfg.lr_patch * s
    lrs = []
    hrs = []
    for i in range(cfg.batch):
        st = derive_stream(cfg.seed, iteration * cfg.batch + i)
        img = corpus[int(next_f64(st) * len(corpus))]
        C, H, W = img.shape
        if H < patch or W < patch:
            raise ValueError(f"corpus image {H}x{W} smaller than HR patch {patch}x{patch}")
        y0 = int(next_f64(st) * (H - patch + 1))
        x0 = int(next_f64(st) * (W - patch + 1))
        # freeze the HR patch at float32 first so lr is derived from the
        # exact tensor the loss will see
        hr = img[:, y0 : y0 + patch, x0 : x0 + patch].astype(np.float32)
        base = hr.astype(np.float64)
        if cfg.mode == "multi_degradation":
            pipe = sample_train_pipeline(s, st)
            lr = apply_pipeline(base, pipe, st)
        else:
            lr = resize(base, 1.0 / s, "bicubic")
        lrs.append(lr.astype(np.float32))
        hrs.append(hr)
    return np.stack(lrs), np.stack(hrs)


def _make_val_pairs(val_corpus, cfg: TrainConfig, s: int):
    """Degrade each validation image once, with a stream fixed per image,
    so the validation task never moves between loggings."""
    pairs = []
    base = mix_seed(cfg.seed, VAL_TAG)
    for i, img in enumerate(val_corpus):
        C, H, W = img.shape
        hr = img[:, : (H // s) * s, : (W // s) * s]
        st = derive_stream(base, i)
        if cfg.mode == "multi_degradation":
            pipe = sample_train_pipeline(s, st)
            lr = apply_pipeline(hr, pipe, st)
        else:
            lr = resize(hr, 1.0 / s, "bicubic")
        pairs.append((lr.astype(np.float32), hr.astype(np.float32)))
    return pairs


def _validate(net: SrNetwork, pairs) -> float:
    vals = []
    for lr, hr in pairs:
        out, _ = net.forward(lr[None], mode="eval")
        vals.append(psnr(out.value[0], hr))
    return sum(vals) / len(vals)


def train_loop(
    net: SrNetwork,
    corpus,
    cfg: TrainConfig,
    val_corpus=None,
    adam: AdamState | None = None,
    start_iter: int = 0,
    stop_iter: int | None = None,
):
    """Run iterations [start_iter, stop_iter or cfg.iters); returns
    (net, adam, log).

    cfg.iters is the cosine period and the natural end; stop_iter pauses a
    run early so it can be checkpointed and resumed.  log rows are dicts
    with iter, lr, loss and (on validation iterations) val_psnr.  Resuming
    from a checkpoint with the same cfg continues the exact uninterrupted
    trajectory.
    """
    if not corpus:
        raise ValueError("empty training corpus")
    s = net.cfg.scale
    if val_corpus is None:
        val_corpus = corpus[: min(4, len(corpus))]
    val_pairs = _make_val_pairs(val_corpus, cfg, s)
    if adam is None:
        adam = init_adam(net.param_values())
    mask_base = mix_seed(cfg.seed, MASK_TAG)
    end = cfg.iters if stop_iter is None else min(stop_iter, cfg.iters)
    log = []
    for t in range(start_iter, end):
        lr_batch, hr_batch = sample_batch(corpus, cfg, s, t)
        net.zero_grad()
        out, _ = net.forward(lr_batch, mode="train", rng=derive_stream(mask_base, t))
        loss = ag.l1_loss(out, hr_batch)
        loss_val = float(loss.value)
        if not math.isfinite(loss_val):
            raise TrainDiverged(f"non-finite loss at iteration {t}")
        ag.backward(loss)
        lr = cosine_lr(t, cfg.iters, cfg.lr0)
        grads = {name: node.grad for name, node in net.params.items()}
        adam_step(net.param_values(), grads, adam, lr)
        row = {"iter": t, "lr": lr, "loss": loss_val}
        if (t + 1) % cfg.val_every == 0 or t + 1 == cfg.iters:
            row["val_psnr"] = _validate(net, val_pairs)
        log.append(row)
    return net, adam, log


def write_log_csv(log, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "lr", "loss", "val_psnr"])
        for row in log:
            val = format_db(row["val_psnr"]) if "val_psnr" in row else ""
            w.writerow([row["iter"], f"{row['lr']:.10e}", f"{row['loss']:.8e}", val])


# ---------------------------------------------------------------------------
# Checkpoint I/O: magic, u32 header length, JSON header, raw float32 LE blobs
# (parameters in declaration order, then Adam m and v in the same order).
# ---------------------------------------------------------------------------


def _config_dict(cfg: ModelConfig) -> dict:
    return {
        "n_blocks": cfg.n_blocks,
        "n_feats": cfg.n_feats,
        "scale": cfg.scale,
        "position": cfg.position,
        "fraction": cfg.fraction,
        "dropout": {"dimension": cfg.dropout.dimension, "p": cfg.dropout.p},
    }


def _config_from_dict(d: dict) -> ModelConfig:
    return ModelConfig(
        n_blocks=d["n_blocks"],
        n_feats=d["n_feats"],
        scale=d["scale"],
        position=d["position"],
        fraction=d["fraction"],
        dropout=DropoutSpec(d["dropout"]["dimension"], d["dropout"]["p"]),
    )


def save_checkpoint(net: SrNetwork, adam: AdamState, iteration: int, path) -> None:
    names = list(net.params)
    header = {
        "version": 1,
        "config": _config_dict(net.cfg),
        "iteration": iteration,
        "tensors": [{"name": n, "shape": list(net.params[n].value.shape)} for n in names],
        "adam": {"t": adam.t, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        for n in names:
            fh.write(net.params[n].value.astype("<f4").tobytes())
        for n in names:
            fh.write(adam.m[n].astype("<f4").tobytes())
        for n in names:
            fh.write(adam.v[n].astype("<f4").tobytes())


def load_checkpoint(path):
    """Returns (net, adam, iteration); rejects bad magic, truncation, and
    shape drift between the header and its config."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:5] != _MAGIC:
        raise ValueError(f"not a checkpoint: bad magic {raw[:5]!r}")
    if len(raw) < 9:
        raise ValueError("truncated checkpoint header")
    (hlen,) = struct.unpack("<I", raw[5:9])
    if len(raw) < 9 + hlen:
        raise ValueError("truncated checkpoint header")
    header = json.loads(raw[9 : 9 + hlen].decode())
    cfg = _config_from_dict(header["config"])
    expect = build_model(cfg, derive_stream(0, 0))  # shapes only; weights overwritten
    names = [t["name"] for t in header["tensors"]]
    if set(names) != set(expect.params):
        raise ValueError("checkpoint tensor names do not match its config")
    shapes = {t["name"]: tuple(t["shape"]) for t in header["tensors"]}
    for n in names:
        if shapes[n] != expect.params[n].value.shape:
            raise ValueError(
                f"checkpoint shape mismatch for {n}: header {shapes[n]} vs config {expect.params[n].value.shape}"
            )
    offset = 9 + hlen
    total = sum(int(np.prod(shapes[n])) for n in names)
    need = offset + 3 * total * 4
    if len(raw) != need:
        raise ValueError(f"truncated checkpoint: expected {need} bytes, got {len(raw)}")

    def take(n):
        nonlocal offset
        count = int(np.prod(shapes[n]))
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shapes[n])
        offset += count * 4
        return arr.astype(np.float32)

    params = {n: Node(take(n)) for n in names}
    adam = AdamState(
        t=header["adam"]["t"],
        beta1=header["adam"]["beta1"],
        beta2=header["adam"]["beta2"],
        eps=header["adam"]["eps"],
    )
    for n in names:
        adam.m[n] = take(n)
    for n in names:
        adam.v[n] = take(n)
    net = SrNetwork(cfg, params)
    return net, adam, header["iteration"]
