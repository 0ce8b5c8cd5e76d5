"""Fidelity-embedded GAN: losses, Adam, alternating training, patchwise denoising.

The discriminator emits raw scores ``s`` and ``D = 1 - exp(s)``, so the
objective maximized by D is

    mean_x D(x) + mean_z log(1 - D(G(z)))  =  mean_x (1 - exp(s_x)) + mean_z s_z

and the generator minimizes ``mean_z s(G(z)) + lambda * mse(G(z), z)``. All
means run over batch elements and score-map positions; the fidelity term is
normalized per pixel.

Images enter the networks divided by ``intensity_scale`` (HU -> order one).
"""
import contextlib
import io
import json
import math
import os
import struct
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import network as N
from . import tensor as T
from .tensor import Tensor

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    lambda_: float = 10.0
    lr: float = 2e-4
    batch_size: int = 40
    epochs: int = 300
    d_steps_per_g_step: int = 1
    seed: int = 0
    intensity_scale: float = 100.0
    checkpoint_every: int = 0  # epochs; 0 keeps only the final state

    def __post_init__(self):
        if self.lambda_ < 0:
            raise ValueError("lambda must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.epochs < 0 or self.d_steps_per_g_step < 1:
            raise ValueError("batch_size and d_steps_per_g_step must be >= 1, epochs >= 0")
        if self.intensity_scale <= 0:
            raise ValueError("intensity_scale must be positive")


# losses -------------------------------------------------------------------------

@contextlib.contextmanager
def frozen(module):
    """Treat ``module``'s parameters as constants while building a graph."""
    params = list(module.parameters().values())
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield module
    finally:
        for p, f in zip(params, flags):
            p.requires_grad = f


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def d_loss(batch_x, batch_z, G, D):
    """Negated discriminator objective; G is held constant."""
    with T.no_grad():
        fake = G(_as_tensor(batch_z)).data
    s_x = D(_as_tensor(batch_x))
    s_g = D(Tensor(fake))
    # -(mean(1 - exp(s_x)) + mean(s_g))
    return T.mean(T.exp(s_x)) - T.mean(s_g) - 1.0


def g_loss(batch_z, G, D, lam):
    """Generator loss; D is held constant. Returns (loss, fidelity) with fidelity a float."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    z = _as_tensor(batch_z)
    y = G(z)
    with frozen(D):
        s = D(y)
    fid = T.mse_loss(y, z)
    return T.mean(s) + lam * fid, fid.item()


# Adam --------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_params(cls, params, **kw):
        return cls({k: np.zeros_like(p.data if isinstance(p, Tensor) else p) for k, p in params.items()},
                   {k: np.zeros_like(p.data if isinstance(p, Tensor) else p) for k, p in params.items()}, **kw)


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update, in place on the arrays in ``params``.

    ``params`` and ``grads`` map names to arrays (or Tensors for params); a
    missing or None gradient leaves that parameter and its moments alone.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            continue
        arr = p.data if isinstance(p, Tensor) else p
        m, v = state.m[k], state.v[k]
        if m.shape != arr.shape or g.shape != arr.shape:
            raise ValueError(f"adam_step: shape mismatch for {k}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        arr -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


def _step_module(module, state, lr):
    params = module.parameters()
    adam_step(params, {k: p.grad for k, p in params.items()}, state, lr)


# checkpoints ---------------------------------------------------------------------

CKPT_MAGIC = b"FGCK"
CKPT_VERSION = 1


@dataclass
class Checkpoint:
    gen_cfg: N.GeneratorConfig
    disc_cfg: N.DiscriminatorConfig
    train_cfg: TrainConfig
    generator: dict
    discriminator: dict
    adam_g: AdamState
    adam_d: AdamState
    epoch: int = 0
    rng_state: Optional[dict] = None
    patch_size: Optional[int] = None
    iteration: int = 0

    def build_generator(self):
        g = N.build_generator(self.gen_cfg)
        g.load_state_dict(self.generator)
        return g

    def build_discriminator(self):
        d = N.build_discriminator(self.disc_cfg)
        d.load_state_dict(self.discriminator)
        return d

    def to_bytes(self):
        header = {
            "generator_config": N.config_dict(self.gen_cfg),
            "discriminator_config": N.config_dict(self.disc_cfg),
            "train_config": asdict(self.train_cfg),
            "epoch": self.epoch,
            "iteration": self.iteration,
            "patch_size": self.patch_size,
            "rng_state": self.rng_state,
            "adam": {name: {"step": s.step, "beta1": s.beta1, "beta2": s.beta2, "eps": s.eps}
                     for name, s in (("g", self.adam_g), ("d", self.adam_d))},
        }
        raw = json.dumps(header, sort_keys=True).encode("utf-8")
        tensors = {}
        for prefix, d in (("G/", self.generator), ("D/", self.discriminator)):
            tensors.update({prefix + k: v for k, v in d.items()})
        for prefix, s in (("adam_g", self.adam_g), ("adam_d", self.adam_d)):
            tensors.update({f"{prefix}.m/{k}": v for k, v in s.m.items()})
            tensors.update({f"{prefix}.v/{k}": v for k, v in s.v.items()})
        buf = io.BytesIO()
        buf.write(CKPT_MAGIC)
        buf.write(struct.pack("<II", CKPT_VERSION, len(raw)))
        buf.write(raw)
        buf.write(T.dump_tensors(tensors))
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data):
        if data[:4] != CKPT_MAGIC:
            raise ValueError("not a checkpoint (bad magic)")
        version, hlen = struct.unpack_from("<II", data, 4)
        if version != CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        header = json.loads(data[12 : 12 + hlen].decode("utf-8"))
        tensors, _ = T.parse_tensors(data, 12 + hlen)

        def group(prefix):
            return {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}

        def adam(name):
            h = header["adam"][name[-1]]
            return AdamState(group(f"{name}.m/"), group(f"{name}.v/"), h["step"], h["beta1"], h["beta2"], h["eps"])

        return cls(
            gen_cfg=N.GeneratorConfig(**header["generator_config"]),
            disc_cfg=N.DiscriminatorConfig(**header["discriminator_config"]),
            train_cfg=TrainConfig(**header["train_config"]),
            generator=group("G/"),
            discriminator=group("D/"),
            adam_g=adam("adam_g"),
            adam_d=adam("adam_d"),
            epoch=header["epoch"],
            rng_state=header["rng_state"],
            patch_size=header["patch_size"],
            iteration=header["iteration"],
        )

    def save(self, path):
        with open(os.fspath(path), "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(os.fspath(path), "rb") as fh:
            return cls.from_bytes(fh.read())


# training ------------------------------------------------------------------------

class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, iteration, values):
        super().__init__(f"non-finite loss at epoch {epoch}, iteration {iteration}: {values}")
        self.epoch = epoch
        self.iteration = iteration


@dataclass
class LossRecord:
    epoch: int
    iteration: int
    d_loss: float
    g_loss: float
    fidelity: float


def write_loss_log(path, log):
    with open(os.fspath(path), "w") as fh:
        fh.write("epoch\titeration\td_loss\tg_loss\tfidelity\n")
        for r in log:
            fh.write(f"{r.epoch}\t{r.iteration}\t{r.d_loss!r}\t{r.g_loss!r}\t{r.fidelity!r}\n")


def as_patch_array(patches):
    """Coerce a PatchSet, list of 2-D arrays or array to (N, 1, p, p) float64."""
    arr = getattr(patches, "patches", patches)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[:, None]
    if arr.ndim != 4 or arr.shape[1] != 1 or arr.shape[0] == 0:
        raise ValueError(f"expected a nonempty stack of single-channel patches, got shape {arr.shape}")
    return arr


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list = field(default_factory=list)


def _copy_adam(s):
    return AdamState({k: v.copy() for k, v in s.m.items()}, {k: v.copy() for k, v in s.v.items()},
                     s.step, s.beta1, s.beta2, s.eps)


def _snapshot(G, D, adam_g, adam_d, gen_cfg, disc_cfg, cfg, epoch, iteration, rng, patch_size):
    return Checkpoint(gen_cfg, disc_cfg, cfg, G.state_dict(), D.state_dict(), _copy_adam(adam_g), _copy_adam(adam_d),
                      epoch, rng.bit_generator.state, patch_size, iteration)


def train(S_z, S_x, cfg, gen_cfg=None, disc_cfg=None, resume=None, checkpoint_dir=None, on_epoch=None):
    """Alternating Adam training on unpaired patch sets.

    Each epoch draws two independent permutations, one for the noisy set and
    one for the clean set, and walks them in batches. ``resume`` continues a
    checkpoint's trajectory (same data, same config) up to ``cfg.epochs``.
    """
    z_all = as_patch_array(S_z) / cfg.intensity_scale
    x_all = as_patch_array(S_x) / cfg.intensity_scale
    p = z_all.shape[-1]
    if z_all.shape[-2:] != x_all.shape[-2:] or z_all.shape[-2] != p:
        raise ValueError(f"patch shapes differ or are not square: {z_all.shape[-2:]} vs {x_all.shape[-2:]}")

    if resume is not None:
        gen_cfg, disc_cfg = resume.gen_cfg, resume.disc_cfg
        if resume.patch_size != p:
            raise ValueError(f"checkpoint was trained on {resume.patch_size}px patches, got {p}px")
        G, D = resume.build_generator(), resume.build_discriminator()
        adam_g, adam_d = _copy_adam(resume.adam_g), _copy_adam(resume.adam_d)
        rng = np.random.default_rng()
        rng.bit_generator.state = resume.rng_state
        start, iteration = resume.epoch, resume.iteration
    else:
        gen_cfg = gen_cfg or N.GeneratorConfig()
        disc_cfg = disc_cfg or N.DiscriminatorConfig()
        G = N.build_generator(gen_cfg, init_seed=cfg.seed)
        D = N.build_discriminator(disc_cfg, init_seed=cfg.seed + 1)
        adam_g = AdamState.for_params(G.parameters())
        adam_d = AdamState.for_params(D.parameters())
        rng = np.random.default_rng((cfg.seed, 2))
        start, iteration = 0, 0
    gen_cfg.check_input(p, p)
    G.train(), D.train()

    bs = cfg.batch_size
    n_iter = max(1, min(len(z_all), len(x_all)) // bs)
    log = []
    for epoch in range(start, cfg.epochs):
        z_order = rng.permutation(len(z_all))
        x_order = rng.permutation(len(x_all))
        for i in range(n_iter):
            zb = z_all[z_order[i * bs : (i + 1) * bs]]
            xb = x_all[x_order[i * bs : (i + 1) * bs]]
            for _ in range(cfg.d_steps_per_g_step):
                D.zero_grad()
                ld = d_loss(xb, zb, G, D)
                T.backward(ld)
                _step_module(D, adam_d, cfg.lr)
            G.zero_grad()
            lg, fid = g_loss(zb, G, D, cfg.lambda_)
            T.backward(lg)
            _step_module(G, adam_g, cfg.lr)
            iteration += 1
            rec = LossRecord(epoch, iteration, ld.item(), lg.item(), fid)
            if not all(math.isfinite(v) for v in (rec.d_loss, rec.g_loss, rec.fidelity)):
                raise TrainingDiverged(epoch, iteration, (rec.d_loss, rec.g_loss, rec.fidelity))
            log.append(rec)
        if on_epoch is not None:
            on_epoch(epoch, log, G)
        if checkpoint_dir is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            _snapshot(G, D, adam_g, adam_d, gen_cfg, disc_cfg, cfg, epoch + 1, iteration, rng, p).save(
                os.path.join(os.fspath(checkpoint_dir), f"epoch_{epoch + 1:04d}.ckpt"))
    ckpt = _snapshot(G, D, adam_g, adam_d, gen_cfg, disc_cfg, cfg, max(start, cfg.epochs), iteration, rng, p)
    return TrainResult(ckpt, log)


# inference ----------------------------------------------------------------------

def patch_anchors(n, size, stride):
    """Anchors at multiples of ``stride`` plus a trailing anchor so the far border is covered."""
    if size > n:
        raise ValueError(f"patch size {size} exceeds image extent {n}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    a = list(range(0, n - size + 1, stride))
    if a[-1] != n - size:
        a.append(n - size)
    return a


def _resolve_model(model):
    if isinstance(model, (str, os.PathLike)):
        model = Checkpoint.load(model)
    if isinstance(model, Checkpoint):
        g = model.build_generator().eval()
        return g, model.train_cfg.intensity_scale, model.patch_size, model.gen_cfg
    return model, 1.0, None, None


def denoise(img, model, patch_size=None, stride=None, intensity_scale=None, batch_size=64):
    """Run the generator over overlapping patches and average the overlaps.

    ``model`` is a Checkpoint, a checkpoint path, or any callable mapping an
    (N, 1, p, p) array to an array of the same shape.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"denoise expects a 2-D image, got shape {img.shape}")
    fn, scale, trained_p, gen_cfg = _resolve_model(model)
    if patch_size is None:
        if trained_p is None:
            raise ValueError("patch_size is required for a bare model")
        patch_size = trained_p
    elif trained_p is not None and patch_size != trained_p:
        raise ValueError(f"checkpoint was trained on {trained_p}px patches, requested {patch_size}px")
    if gen_cfg is not None:
        gen_cfg.check_input(patch_size, patch_size)
    scale = scale if intensity_scale is None else intensity_scale
    stride = patch_size // 2 if stride is None else stride
    rows = patch_anchors(img.shape[0], patch_size, stride)
    cols = patch_anchors(img.shape[1], patch_size, stride)
    anchors = [(r, c) for r in rows for c in cols]

    acc = np.zeros_like(img)
    hits = np.zeros_like(img)
    for b in range(0, len(anchors), batch_size):
        chunk = anchors[b : b + batch_size]
        batch = np.stack([img[r : r + patch_size, c : c + patch_size] for r, c in chunk])[:, None] / scale
        with T.no_grad():
            out = fn(batch)
        out = np.asarray(getattr(out, "data", out), dtype=np.float64)
        if out.shape != batch.shape:
            raise ValueError(f"model returned shape {out.shape} for input {batch.shape}")
        for (r, c), y in zip(chunk, out[:, 0]):
            acc[r : r + patch_size, c : c + patch_size] += y
            hits[r : r + patch_size, c : c + patch_size] += 1.0
    return acc / hits * scale
