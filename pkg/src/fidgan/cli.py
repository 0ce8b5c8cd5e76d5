"""Command-line front end: phantom | simulate | train | denoise | eval | verify.

Every subcommand reads one YAML config (``--config``), writes under the
output directory (``--out`` overrides ``out``), and records the seeds it
used next to its outputs. Layout::

    <out>/phantom/<kind>/img_0000.fggr ... manifest.json
    <out>/ldct/<set>/img_0000.fggr ...    manifest.json
    <out>/train/final.ckpt, loss.tsv
    <out>/denoised/<set>/...
    <out>/eval/report_<set>.tsv
    <out>/verify/report.txt
"""
import argparse
import glob
import json
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import config as C
from . import gan, gridfile, metrics, patches, phantom, theory, tomo
from . import network as N


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _read_set(directory):
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"missing input directory {directory}")
    files = sorted(glob.glob(os.path.join(directory, "img_*.fggr")))
    if not files:
        raise FileNotFoundError(f"no images in {directory}")
    return [os.path.basename(f) for f in files], [gridfile.read(f).astype(np.float64) for f in files]


def _write_set(directory, names, images, manifest):
    os.makedirs(directory, exist_ok=True)
    for name, img in zip(names, images):
        gridfile.write(os.path.join(directory, name), img)
    _write_json(os.path.join(directory, "manifest.json"), manifest)


# subcommands --------------------------------------------------------------------

def cmd_phantom(cfg):
    p = cfg.phantom
    written = []
    for kind in p.kinds:
        samples = [phantom.make_sample(kind, p.size, cfg.seeds.phantom, i, p.anomaly_radius) for i in range(p.count)]
        names = [f"img_{i:04d}.fggr" for i in range(p.count)]
        d = os.path.join(cfg.out, "phantom", kind)
        _write_set(d, names, [s.image for s in samples], {
            "kind": kind, "seed": cfg.seeds.phantom, "size": p.size,
            "images": [dict(file=n, **s.metadata()) for n, s in zip(names, samples)],
        })
        written.append(d)
    return written


def _noise_sets(cfg):
    n = cfg.noise
    if n.mode == "gaussian":
        return [("", None)]
    if n.mode == "quantum":
        fluxes = list(n.flux_sweep) or [n.blank_flux]
        return [(f"_I0_{float(f):.0f}", float(f)) for f in fluxes]
    raise ValueError(f"noise.mode must be 'gaussian' or 'quantum', got {n.mode!r}")


def cmd_simulate(cfg):
    n = cfg.noise
    written = []
    for kind in cfg.phantom.kinds:
        names, clean = _read_set(os.path.join(cfg.out, "phantom", kind))
        for suffix, flux in _noise_sets(cfg):
            out = []
            for i, img in enumerate(clean):
                seed = [cfg.seeds.noise, i]
                if flux is None:
                    out.append(tomo.add_gaussian_noise(img, n.sigma, seed=seed))
                else:
                    geom = tomo.ScanGeometry.for_image(img.shape[0], cfg.geometry.n_angles, cfg.geometry.pitch)
                    nc = tomo.NoiseConfig(blank_flux=flux, electronic_sd=n.electronic_sd)
                    out.append(tomo.simulate_quantum_ldct(img, nc, geom, rng=np.random.default_rng(seed)))
            d = os.path.join(cfg.out, "ldct", kind + suffix)
            _write_set(d, names, out, {
                "kind": kind, "mode": n.mode, "seed": cfg.seeds.noise, "sigma": n.sigma,
                "blank_flux": flux, "electronic_sd": n.electronic_sd, "files": names,
            })
            written.append(d)
    return written


def _configs(cfg):
    net = cfg.network
    g = N.GeneratorConfig(scales=net.scales, base_channels=net.base_channels, lrelu_slope=net.lrelu_slope)
    d = N.DiscriminatorConfig(channels=tuple(net.disc_channels), lrelu_slope=net.lrelu_slope)
    t = cfg.training
    tc = gan.TrainConfig(lambda_=t.lambda_, lr=t.lr, batch_size=t.batch_size, epochs=t.epochs,
                         d_steps_per_g_step=t.d_steps_per_g_step, seed=cfg.seeds.train,
                         intensity_scale=t.intensity_scale, checkpoint_every=t.checkpoint_every)
    return g, d, tc


def _noisy_dir(cfg, kind):
    suffix = _noise_sets(cfg)[0][0]
    return os.path.join(cfg.out, "ldct", kind + suffix)


def cmd_train(cfg):
    t, ps = cfg.training, cfg.patches
    _, clean = _read_set(os.path.join(cfg.out, "phantom", t.clean_kind))
    _, noisy = _read_set(_noisy_dir(cfg, t.noisy_kind))
    # unpaired: clean targets from the first half of the indices, noisy inputs from the second
    half = max(1, len(clean) // 2)
    xs, zs = clean[:half], noisy[half:] or noisy[:1]
    x_ids = [f"{t.clean_kind}:{i}" for i in range(len(xs))]
    z_ids = [f"{t.noisy_kind}:{half + i}" for i in range(len(zs))]
    sx, sz = patches.build_unpaired_sets(xs, zs, ps.size, ps.stride, ps.per_image, cfg.seeds.patches, x_ids, z_ids)
    gc, dc, tc = _configs(cfg)
    d = os.path.join(cfg.out, "train")
    os.makedirs(d, exist_ok=True)
    res = gan.train(sz, sx, tc, gc, dc, checkpoint_dir=d)
    res.checkpoint.save(os.path.join(d, "final.ckpt"))
    gan.write_loss_log(os.path.join(d, "loss.tsv"), res.log)
    _write_json(os.path.join(d, "manifest.json"), {
        "seeds": vars(cfg.seeds), "clean_sources": x_ids, "noisy_sources": z_ids,
        "iterations": len(res.log),
    })
    return [d]


def cmd_denoise(cfg):
    ckpt_path = os.path.join(cfg.out, "train", "final.ckpt")
    if not os.path.exists(ckpt_path):
        raise FileNotFoundError(f"missing checkpoint {ckpt_path}")
    ck = gan.Checkpoint.load(ckpt_path)
    written = []
    for suffix, _ in _noise_sets(cfg):
        name = cfg.metrics.kind + suffix
        names, noisy = _read_set(os.path.join(cfg.out, "ldct", name))
        out = [gan.denoise(img, ck, stride=cfg.patches.denoise_stride) for img in noisy]
        d = os.path.join(cfg.out, "denoised", name)
        _write_set(d, names, out, {"checkpoint": ckpt_path, "stride": cfg.patches.denoise_stride, "files": names})
        written.append(d)
    return written


def cmd_eval(cfg):
    kind = cfg.metrics.kind
    names, refs = _read_set(os.path.join(cfg.out, "phantom", kind))
    d = os.path.join(cfg.out, "eval")
    os.makedirs(d, exist_ok=True)
    written = []
    for suffix, _ in _noise_sets(cfg):
        name = kind + suffix
        _, noisy = _read_set(os.path.join(cfg.out, "ldct", name))
        den_dir = os.path.join(cfg.out, "denoised", name)
        den = _read_set(den_dir)[1] if os.path.isdir(den_dir) else None
        if len(noisy) != len(refs) or (den is not None and len(den) != len(refs)):
            raise ValueError(f"image counts differ between phantom/{kind} and {name}")
        rep = metrics.evaluate_pairs(names, refs, noisy, den, cfg.metrics.peak, cfg.metrics.ssim_window)
        path = os.path.join(d, f"report_{name}.tsv")
        rep.save(path)
        written.append(path)
    return written


def cmd_verify(cfg):
    v = cfg.verify
    rng = np.random.default_rng(v.seed)
    lines, ok = [], True
    for i, (px, pg) in enumerate(theory.random_pairs(v.pairs, rng, v.min_support, v.max_support)):
        rep = theory.verify_theorem1(px, pg, v.fidelity, v.lambda_, v.tol, v.grid_tol)
        ok &= rep.passed
        lines.append(f"pair {i}: support {len(px)} grid_excess {rep.grid_excess:.3e} "
                     f"identity_error {rep.identity_error:.3e} {'PASS' if rep.passed else 'FAIL'}")
    lines.append("ALL PASS" if ok else "FAILED")
    d = os.path.join(cfg.out, "verify")
    os.makedirs(d, exist_ok=True)
    with open(os.path.join(d, "report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines[-3:]))
    return ok


COMMANDS = {
    "phantom": cmd_phantom,
    "simulate": cmd_simulate,
    "train": cmd_train,
    "denoise": cmd_denoise,
    "eval": cmd_eval,
    "verify": cmd_verify,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="fidgan", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="YAML experiment config (defaults apply when omitted)")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--seed", type=int, help="base seed S; sets phantom/noise/patches/train seeds to S..S+3")
    ap.add_argument("--threads", type=int, default=1, help="BLAS threads; 1 gives bit-exact reruns")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    cfg = C.load(args.config) if args.config else C.ExperimentConfig()
    if args.out:
        cfg.out = args.out
    if args.seed is not None:
        for i, k in enumerate(("phantom", "noise", "patches", "train")):
            setattr(cfg.seeds, k, args.seed + i)
        cfg.verify.seed = args.seed
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, f"config_{args.command}.yaml"), "w") as fh:
        fh.write(C.dump(cfg))

    try:
        with threadpool_limits(limits=args.threads):
            result = COMMANDS[args.command](cfg)
    except (FileNotFoundError, ValueError) as exc:
        print(f"fidgan {args.command}: {exc}", file=sys.stderr)
        return 2
    if args.command == "verify":
        return 0 if result else 1
    for path in result:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
