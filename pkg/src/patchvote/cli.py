"""Command-line interface: train, grid, defend, certify, attack, eval, render.

Only the standard library is imported at module level so that --threads can
cap the BLAS thread pools before numpy is first loaded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

DEFAULTS = {
    "dataset": "mnist",
    "data_dir": None,  # resolved against MR_DATA_DIR, then ./data
    "seed": 0,
    "patch": 5,
    "stride": 1,
    "tau": 0.9,
    "border": "padded",
    "vote": "soft",
    "rule": "unanimous",
    "images": 200,
    "index": 0,
    "model": "model.ckpt",
    "model_plain": None,
    "out": None,
    "threads": None,
    "epochs": 3,
    "batch_size": 128,
    "lr": 0.05,
    "occlusion_aug": True,
    "shift_aug": True,
    "trials": 1,
    "taus": "0.5,0.7,0.9,0.99",
    "grid": None,
    "highlight": None,
    "ppm": None,
    "vote_grid": False,
    "ablation": False,
    "cell": 16,
}

OUT_DEFAULTS = {
    "train": "model.ckpt",
    "grid": "grid.json",
    "certify": None,
    "attack": "attack_report.jsonl",
    "eval": ".",
    "render": "grid.svg",
    "defend": None,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; explicit flags override it")
    p.add_argument("--dataset", choices=["mnist", "fashion", "cifar10"])
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--model")
    p.add_argument("--patch", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--border", choices=["interior", "padded"])
    p.add_argument("--vote", choices=["hard", "soft"])
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--images", type=int, help="evaluation subset size; <= 0 for the full set")
    p.add_argument("--out")
    p.add_argument("--threads", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchvote",
        description="Occlusion-voting defense against adversarial patch attacks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the inner classifier")
    _add_common(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--no-occlusion-aug", dest="occlusion_aug", action="store_false", default=None)
    p.add_argument("--no-shift-aug", dest="shift_aug", action="store_false", default=None)

    p = sub.add_parser("grid", help="write the prediction grid of one image")
    _add_common(p)
    p.add_argument("--index", type=int, help="validation image index")

    p = sub.add_parser("defend", help="classify-or-detect one image")
    _add_common(p)
    p.add_argument("--index", type=int)

    p = sub.add_parser("certify", help="certify one image or grid file")
    _add_common(p)
    p.add_argument("--index", type=int)
    p.add_argument("--grid", help="certify a stored grid file instead of an image")
    p.add_argument("--rule", choices=["unanimous", "positionwise"])

    p = sub.add_parser("attack", help="patch-attack the undefended inner model")
    _add_common(p)

    p = sub.add_parser("eval", help="clean/certified accuracy over a tau sweep")
    _add_common(p)
    p.add_argument("--taus", help="comma-separated tau values")
    p.add_argument("--ablation", action="store_true", default=None)
    p.add_argument("--model-plain", dest="model_plain",
                   help="checkpoint trained without occlusion augmentation (ablation)")

    p = sub.add_parser("render", help="render a grid file to SVG (optionally PPM)")
    _add_common(p)
    p.add_argument("--grid", required=True)
    p.add_argument("--vote-grid", dest="vote_grid", action="store_true", default=None)
    p.add_argument("--highlight", help="patch position 'row,col' to hatch")
    p.add_argument("--ppm", help="also write a PPM raster to this path")
    p.add_argument("--cell", type=int)

    return parser


def merged_options(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    fromfile = {}
    if getattr(args, "config", None):
        fromfile = json.loads(Path(args.config).read_text(encoding="utf-8"))
        unknown = set(fromfile) - set(DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
    opts = {}
    for key, default in DEFAULTS.items():
        given = getattr(args, key, None)
        opts[key] = given if given is not None else fromfile.get(key, default)
    if opts["data_dir"] is None:
        opts["data_dir"] = os.environ.get("MR_DATA_DIR", "data")
    if opts["out"] is None:
        opts["out"] = OUT_DEFAULTS[args.command]
    opts["command"] = args.command
    return opts


def print_effective_config(opts: dict, keys) -> None:
    block = {k: opts[k] for k in ("command", *keys)}
    print("config: " + json.dumps(block, sort_keys=True))


def _defense_config(opts):
    from .occlusion import DefenseConfig

    return DefenseConfig(
        patch_size=opts["patch"],
        stride=opts["stride"],
        tau=opts["tau"],
        border=opts["border"],
        vote_mode=opts["vote"],
    )


def _find_file(candidates) -> Path:
    for path in candidates:
        if Path(path).exists():
            return Path(path)
    raise FileNotFoundError(f"none of the candidate files exist: {[str(c) for c in candidates]}")


def _load_dataset(opts):
    from .data import load_cifar10, load_idx

    root = Path(opts["data_dir"])
    name = opts["dataset"]
    if name in ("mnist", "fashion"):
        dirs = [root / name, root]
        images = _find_file(
            [d / ("train-images-idx3-ubyte" + ext) for d in dirs for ext in ("", ".gz")]
        )
        labels = _find_file(
            [d / ("train-labels-idx1-ubyte" + ext) for d in dirs for ext in ("", ".gz")]
        )
        return load_idx(images, labels, classes=10)
    batches = [
        _find_file(
            [root / f"data_batch_{i}.bin", root / "cifar-10-batches-bin" / f"data_batch_{i}.bin"]
        )
        for i in range(1, 6)
    ]
    return load_cifar10(batches)


def _split(opts, dataset):
    from .data import SplitSpec, random_split

    return random_split(dataset, SplitSpec(0.9, opts["seed"]))


def _load_model(opts):
    from .nn.checkpoint import load_params

    return load_params(opts["model"])


def cmd_train(opts) -> int:
    from .nn.checkpoint import save_params
    from .nn.model import desk_cnn
    from .nn.train import TrainConfig, train

    print_effective_config(
        opts,
        ("dataset", "data_dir", "seed", "patch", "stride", "border",
         "epochs", "batch_size", "lr", "occlusion_aug", "shift_aug", "out"),
    )
    dataset = _load_dataset(opts)
    train_set, val_set = _split(opts, dataset)
    params = desk_cnn(
        input_hw=(dataset.height, dataset.width),
        channels=dataset.channels,
        classes=dataset.classes,
        seed=opts["seed"],
    )
    config = TrainConfig(
        epochs=opts["epochs"],
        batch_size=opts["batch_size"],
        learning_rate=opts["lr"],
        seed=opts["seed"],
        occlusion_augment=opts["occlusion_aug"],
        shift_augment=opts["shift_aug"],
        flip_augment=opts["dataset"] == "cifar10",
    )
    trained, metrics = train(
        params, train_set, config, _defense_config(opts), val_set=val_set,
        log=lambda row: print(json.dumps(row)),
    )
    save_params(trained, opts["out"])
    print(f"saved checkpoint: {opts['out']}")
    return 0


def _val_image(opts):
    dataset = _load_dataset(opts)
    _, val_set = _split(opts, dataset)
    idx = opts["index"]
    if not 0 <= idx < len(val_set):
        raise ValueError(f"index {idx} out of range for {len(val_set)} validation images")
    return val_set.images[idx], int(val_set.labels[idx])


def cmd_grid(opts) -> int:
    from .gridgen import prediction_grid, save_grid

    print_effective_config(
        opts, ("dataset", "data_dir", "model", "seed", "patch", "stride", "border", "index", "out")
    )
    params = _load_model(opts)
    image, label = _val_image(opts)
    grid = prediction_grid(
        params, image, _defense_config(opts), image_id=opts["index"], true_label=label
    )
    save_grid(grid, opts["out"])
    print(f"saved grid: {opts['out']}")
    return 0


def cmd_defend(opts) -> int:
    from .gridgen import prediction_grid
    from .vote import decide, vote

    print_effective_config(
        opts,
        ("dataset", "data_dir", "model", "seed", "patch", "stride", "border",
         "vote", "tau", "index"),
    )
    params = _load_model(opts)
    image, label = _val_image(opts)
    grid = prediction_grid(params, image, _defense_config(opts))
    outcome = decide(vote(grid))
    label_part = "" if outcome.label is None else f" label={outcome.label}"
    print(f"verdict: {outcome.verdict}{label_part} (true={label})")
    return 0


def cmd_certify(opts) -> int:
    from .certify import certify_grid
    from .gridgen import load_grid, prediction_grid

    print_effective_config(
        opts,
        ("dataset", "data_dir", "model", "seed", "patch", "stride", "border",
         "vote", "tau", "rule", "index", "grid", "out"),
    )
    if opts["grid"]:
        grid = load_grid(opts["grid"], _defense_config(opts))
        image_id = grid.image_id
    else:
        params = _load_model(opts)
        image, label = _val_image(opts)
        grid = prediction_grid(
            params, image, _defense_config(opts), image_id=opts["index"], true_label=label
        )
        image_id = opts["index"]
    result = certify_grid(grid, rule=opts["rule"])
    line = json.dumps(result.to_json(image_id))
    print(line)
    if opts["out"]:
        Path(opts["out"]).write_text(line + "\n", encoding="utf-8")
    return 0


def cmd_attack(opts) -> int:
    from .attack import AttackConfig, attack_image, write_attack_report
    from .evaluate import eval_indices

    print_effective_config(
        opts, ("dataset", "data_dir", "model", "seed", "patch", "images", "out")
    )
    params = _load_model(opts)
    dataset = _load_dataset(opts)
    _, val_set = _split(opts, dataset)
    indices = eval_indices(len(val_set), opts["images"], opts["seed"])
    config = AttackConfig(patch_size=opts["patch"], seed=opts["seed"])
    reports = []
    for i in indices:
        rep = attack_image(
            params, val_set.images[i], int(val_set.labels[i]), config, image_id=int(i)
        )
        reports.append(rep)
        print(json.dumps(rep.to_json()))
    write_attack_report(reports, opts["out"])
    rate = sum(r.success for r in reports) / len(reports) if reports else 0.0
    print(f"success rate: {rate:.3f} over {len(reports)} images")
    return 0


def cmd_eval(opts) -> int:
    from .evaluate import ablation_occlusion_training, evaluate_defense

    print_effective_config(
        opts,
        ("dataset", "data_dir", "model", "model_plain", "seed", "patch", "stride",
         "border", "vote", "taus", "images", "ablation", "out"),
    )
    taus = [float(t) for t in str(opts["taus"]).split(",") if t]
    params = _load_model(opts)
    dataset = _load_dataset(opts)
    _, val_set = _split(opts, dataset)
    if opts["images"] <= 0:
        print("warning: evaluating the full validation set; this can take a while",
              file=sys.stderr)
    out_dir = Path(opts["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    config = _defense_config(opts)

    if opts["ablation"]:
        if not opts["model_plain"]:
            raise ValueError("--ablation needs --model-plain (checkpoint trained "
                             "without occlusion augmentation)")
        from .nn.checkpoint import load_params

        plain = load_params(opts["model_plain"])
        comparison = ablation_occlusion_training(
            params, plain, val_set, config, taus, count=opts["images"], seed=opts["seed"]
        )
        for name in ("occluded", "plain"):
            comparison[name].write_csv(out_dir / f"ablation_{name}.csv")
            comparison[name].write_json(out_dir / f"ablation_{name}.json")
            for row in comparison[name].rows:
                print(json.dumps({"training": name, **row}))
        print(f"inner accuracy delta (occluded - plain): "
              f"{comparison['inner_accuracy_delta']:+.4f}")
        return 0

    report = evaluate_defense(
        params, val_set, config, taus, count=opts["images"], seed=opts["seed"]
    )
    report.write_csv(out_dir / "eval_report.csv")
    report.write_json(out_dir / "eval_report.json")
    for row in report.rows:
        print(json.dumps(row))
    print(f"saved report: {out_dir / 'eval_report.csv'}")
    return 0


def cmd_render(opts) -> int:
    from .gridgen import load_grid
    from .render import (
        RenderSpec,
        prediction_grid_ppm,
        render_prediction_grid,
        render_vote_grid,
        vote_grid_ppm,
    )
    from .vote import vote

    print_effective_config(
        opts, ("grid", "vote_grid", "vote", "tau", "highlight", "cell", "ppm", "out")
    )
    grid = load_grid(opts["grid"], _defense_config(opts))
    highlight = None
    if opts["highlight"]:
        r, c = str(opts["highlight"]).split(",")
        highlight = (int(r), int(c))
    spec = RenderSpec(cell=opts["cell"], highlight=highlight)
    if opts["vote_grid"]:
        vg = vote(grid, mode=opts["vote"], tau=opts["tau"])
        Path(opts["out"]).write_text(render_vote_grid(vg, spec), encoding="utf-8")
        if opts["ppm"]:
            Path(opts["ppm"]).write_bytes(vote_grid_ppm(vg, spec))
    else:
        Path(opts["out"]).write_text(render_prediction_grid(grid, spec), encoding="utf-8")
        if opts["ppm"]:
            Path(opts["ppm"]).write_bytes(prediction_grid_ppm(grid, spec))
    print(f"saved figure: {opts['out']}")
    return 0


HANDLERS = {
    "train": cmd_train,
    "grid": cmd_grid,
    "defend": cmd_defend,
    "certify": cmd_certify,
    "attack": cmd_attack,
    "eval": cmd_eval,
    "render": cmd_render,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        opts = merged_options(args)
        if opts["threads"]:
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ[var] = str(opts["threads"])
        return HANDLERS[args.command](opts)
    except (FileNotFoundError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
