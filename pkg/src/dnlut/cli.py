"""Command-line entry point: ``python -m dnlut <command>``.

Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 numeric failure.
Failures print one line ``dnlut: error[<kind>]: <message>`` to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, kind: str, msg: str):
        super().__init__(msg)
        self.code = code
        self.kind = kind


def _emit(report: dict, fmt: str, text: str):
    print(json.dumps(report, indent=2, default=float) if fmt == "json" else text, end="" if text.endswith("\n") else "\n")


def _load_config(path):
    from .pipeline.config import PipelineConfig, reference_config
    if path is None:
        return reference_config()
    return PipelineConfig.from_text(Path(path).read_text())


def _images(folder):
    from .data import shipped_images
    from .imageio import load_folder
    return shipped_images("train") if folder is None else load_folder(folder)


# --- commands ----------------------------------------------------------------

def cmd_train(a):
    from .data import PatchStream, synthetic_texture
    from .micronet.optim import TrainConfig
    from .pipeline.dnnet import DnNet
    from .train import train
    config = _load_config(a.config)
    cfg = TrainConfig(a.iters, a.batch, a.lr_max, a.lr_min, a.seed, a.sigma, a.patch)
    imgs = _images(a.data) + [synthetic_texture(1000 + i) for i in range(a.textures)]
    stream = PatchStream(imgs, cfg.patch_size, cfg.batch_size, cfg.sigma, cfg.seed, a.rho)
    net = DnNet.extend(config, DnNet.load(a.init), cfg.seed) if a.init else None
    res = train(config, stream, cfg, net=net, checkpoint=a.out, log_every=a.log_every,
                trainable=a.only.split(",") if a.only else None)
    if res.aborted:
        raise CliError(EXIT_NUMERIC, "numeric", f"training diverged; last good weights written to {a.out}")
    _emit({"final_loss": res.final_loss, "iterations": len(res.losses), "skipped": res.skipped, "out": a.out},
          a.report, f"trained {len(res.losses)} iterations, final loss {res.final_loss:.6f} -> {a.out}")


def cmd_bake(a):
    from .lut import bake, save_table
    from .pipeline.dnnet import DnNet
    net = DnNet.load(a.ckpt)
    if a.unit not in net.units:
        raise CliError(EXIT_CONFIG, "config", f"no unit {a.unit!r}; have {', '.join(net.config.unit_ids())}")
    t = bake(net.units[a.unit], table_id=a.unit)
    save_table(t, a.out)
    _emit({"table": t.id, "dims": t.dims, "bytes": t.nbytes}, a.report, f"baked {t.id} ({t.dims}D, {t.nbytes} B) -> {a.out}")


def cmd_convert(a):
    from .pipeline.dnnet import DnNet
    from .pipeline.lutmode import convert
    lut = convert(DnNet.load(a.ckpt), a.out)
    _emit({"manifest": str(Path(a.out) / "manifest.txt"), "hash": lut.hash(), "bytes": lut.nbytes()},
          a.report, f"converted {len(lut.tables)} tables ({lut.nbytes()} B) -> {a.out}/manifest.txt")


def _model(path):
    from .pipeline.dnnet import DnNet
    from .pipeline.lutmode import DnLUT
    p = Path(path)
    return DnNet.load(p) if p.suffix == ".dnwt" else DnLUT.load(p)


def cmd_denoise(a):
    from .imageio import read_png, write_png
    model = _model(a.model)
    out = model.run_array(read_png(a.inp))
    write_png(a.out, out)
    _emit({"out": a.out}, a.report, f"wrote {a.out}")


def cmd_add_noise(a):
    from .imageio import read_png, write_png
    from .noise import NoiseSpec, add_noise
    spec = NoiseSpec(a.sigma, a.seed, a.rho == 0, a.rho)
    write_png(a.out, add_noise(read_png(a.inp), spec))
    _emit({"out": a.out}, a.report, f"wrote {a.out}")


def cmd_finetune(a):
    from .data import PatchStream, synthetic_texture, validation_batches
    from .finetune import finetune
    from .pipeline.lutmode import DnLUT
    lut = DnLUT.load(a.model)
    imgs = _images(a.data) + [synthetic_texture(1000 + i) for i in range(a.textures)]
    stream = PatchStream(imgs, a.patch, a.batch, a.sigma, a.seed, a.rho)
    # shipped data: pick checkpoints on the shipped validation crops; otherwise on unused stream batches
    val = validation_batches(a.sigma, rho=a.rho) if a.data is None else None
    res = finetune(lut, stream, a.iters, a.lr, validation=val)
    out = a.out or str(Path(a.model).parent if Path(a.model).is_file() else a.model)
    res.lut.save(out)
    rep = {"mse_before": res.mse_before, "mse_after": res.mse_after, "reverted": res.reverted,
           "reason": res.reason, "out": out}
    _emit(rep, a.report, f"validation MSE {res.mse_before:.6f} -> {res.mse_after:.6f}"
                         f"{' (reverted: ' + res.reason + ')' if res.reverted else ''} -> {out}")


def cmd_analyze(a):
    from .geometry import KernelPattern, L_SHAPE, PCM_1X2, POINT, SQUARE_2X2, format_grid, orbit_analysis
    named = {"L": L_SHAPE, "S": SQUARE_2X2, "PCM": PCM_1X2, "1x1": POINT}
    if a.taps:
        try:
            taps = [tuple(int(v) for v in t.split(",")) for t in a.taps.split()]
            pat = KernelPattern(taps, a.depth, "custom")
        except ValueError as e:
            raise CliError(EXIT_CONFIG, "config", f"bad --taps: {e}")
    else:
        pat = named[a.pattern]
    rep = orbit_analysis(pat)
    if a.format == "csv":
        print(format_grid(rep, "csv", a.window), end="")
        return
    d = {"pattern": pat.name, "taps": pat.taps, "depth": pat.depth, "index_dims": pat.index_dims,
         "coverage": {f"{k[0]},{k[1]}": v for k, v in rep.coverage.items()},
         "rf": rep.rf_size, "non_overlapping": rep.non_overlapping}
    text = (f"pattern {pat.name} taps={list(pat.taps)} depth={pat.depth} dims={pat.index_dims}\n"
            f"receptive field {rep.rf_size[0]}x{rep.rf_size[1]}, non-overlapping: {rep.non_overlapping}\n"
            + format_grid(rep, "text", a.window))
    _emit(d, a.report, text)


def cmd_storage(a):
    from .geometry import storage_report
    if a.model:
        from .pipeline.lutmode import DnLUT
        config = DnLUT.load(a.model).config
    else:
        config = _load_config(a.config)
    rep = storage_report(config)
    _emit(rep.as_dict(), a.report, rep.text())


def cmd_bench(a):
    from .bench import bench
    from .data import shipped_images, shipped_names
    from .imageio import list_pngs, load_folder
    model = _model(a.model) if a.model else None
    if a.data:
        imgs, names = load_folder(a.data), [p.stem for p in list_pngs(a.data)]
    else:
        imgs, names = shipped_images("heldout"), shipped_names("heldout")
    rep = bench(model, imgs, a.sigma, a.seed, a.rho, names)
    lines = [f"{r['name']:<16} noisy {r['cpsnr_db']:6.2f} dB  ssim {r['ssim']:.4f}" for r in rep["noisy"]["per_image"]]
    if model is not None:
        lines = [l + f"   denoised {r['cpsnr_db']:6.2f} dB  ssim {r['ssim']:.4f}"
                 for l, r in zip(lines, rep["denoised"]["per_image"])]
    lines.append(f"{'mean':<16} noisy {rep['noisy']['cpsnr_db']:6.2f} dB  ssim {rep['noisy']['ssim']:.4f}"
                 + (f"   denoised {rep['denoised']['cpsnr_db']:6.2f} dB  ssim {rep['denoised']['ssim']:.4f}"
                    if model is not None else ""))
    if model is not None:
        lines.append("ops per megapixel: " + ", ".join(f"{k}={v}" for k, v in rep["ops_per_megapixel"].items()))
    _emit(rep, a.report, "\n".join(lines))


def cmd_plugin(a):
    from .pipeline.config import pcm_plugin
    text = pcm_plugin(_load_config(a.config)).to_text()
    if a.out:
        Path(a.out).write_text(text)
        print(f"wrote {a.out}")
    else:
        print(text, end="")


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dnlut", description="LUT-based colour denoising toolchain")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        s = sub.add_parser(name, help=help_)
        s.set_defaults(fn=fn)
        s.add_argument("--report", choices=("text", "json"), default="text")
        return s

    def noise_args(s, sigma=25.0):
        s.add_argument("--sigma", type=float, default=sigma)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--rho", type=float, default=0.0, help="inter-channel noise correlation")

    s = add("train", cmd_train, "train a float pipeline")
    s.add_argument("--config", help="pipeline .ini (default: reference topology)")
    s.add_argument("--data", help="folder of clean PNGs (default: shipped training set)")
    s.add_argument("--out", required=True, help="checkpoint path (.dnwt)")
    s.add_argument("--init", help="start from this checkpoint (units with matching ids are reused)")
    s.add_argument("--only", help="comma-separated unit ids to train; others frozen")
    s.add_argument("--iters", type=int, default=20000)
    s.add_argument("--batch", type=int, default=12)
    s.add_argument("--patch", type=int, default=16)
    s.add_argument("--lr-max", type=float, default=1e-3)
    s.add_argument("--lr-min", type=float, default=1e-5)
    s.add_argument("--textures", type=int, default=4)
    s.add_argument("--log-every", type=int, default=0)
    noise_args(s)

    s = add("bake", cmd_bake, "bake one unit of a checkpoint into a table")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--unit", required=True)
    s.add_argument("--out", required=True)

    s = add("convert", cmd_convert, "bake every unit and write a manifest")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--out", required=True, help="output folder")

    s = add("denoise", cmd_denoise, "denoise a PNG with a manifest or checkpoint")
    s.add_argument("--model", required=True)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)

    s = add("add-noise", cmd_add_noise, "add seeded Gaussian noise to a PNG")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    noise_args(s)

    s = add("finetune-lut", cmd_finetune, "LUT-aware fine-tuning of baked tables")
    s.add_argument("--model", required=True)
    s.add_argument("--data", help="folder of clean PNGs (default: shipped training set)")
    s.add_argument("--out", help="output folder (default: overwrite the model folder)")
    s.add_argument("--iters", type=int, default=2000)
    s.add_argument("--lr", type=float, default=1e-4)
    s.add_argument("--batch", type=int, default=12)
    s.add_argument("--patch", type=int, default=16)
    s.add_argument("--textures", type=int, default=4)
    noise_args(s)

    s = add("analyze-kernel", cmd_analyze, "rotation-ensemble lookup frequencies of a kernel")
    s.add_argument("--pattern", choices=("L", "S", "PCM", "1x1"), default="L")
    s.add_argument("--taps", help='custom taps, e.g. "0,0 0,1 1,1"')
    s.add_argument("--depth", type=int, default=1)
    s.add_argument("--format", choices=("text", "csv"), default="text")
    s.add_argument("--window", type=int)

    s = add("storage-report", cmd_storage, "table bytes of a pipeline")
    s.add_argument("--config")
    s.add_argument("--model", help="manifest instead of a config")

    s = add("bench", cmd_bench, "CPSNR / SSIM of noisy and denoised images")
    s.add_argument("--model", help="manifest or checkpoint; omit for the noisy baseline only")
    s.add_argument("--data", help="folder of clean PNGs (default: shipped held-out set)")
    noise_args(s)

    s = add("plugin-wrap", cmd_plugin, "prepend a PCM stage to a spatial-only pipeline config")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    return p


def main(argv=None) -> int:
    from .imageio import ImageIOError
    from .lut import LutFormatError
    from .micronet.checkpoint import CheckpointError
    from .pipeline.config import ConfigError
    from .pipeline.lutmode import MissingTableError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.fn(args)
    except CliError as e:
        kind, code, msg = e.kind, e.code, str(e)
    except (ConfigError, MissingTableError) as e:
        kind, code, msg = "config", EXIT_CONFIG, str(e)
    except (LutFormatError, CheckpointError, ImageIOError, OSError) as e:
        kind, code, msg = "io", EXIT_IO, str(e)
    except (FloatingPointError, OverflowError) as e:
        kind, code, msg = "numeric", EXIT_NUMERIC, str(e)
    except ValueError as e:
        kind, code, msg = "config", EXIT_CONFIG, str(e)
    else:
        return 0
    print(f"dnlut: error[{kind}]: {' '.join(msg.split())}", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
