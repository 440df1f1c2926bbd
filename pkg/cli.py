"""
Command-line entry point: `python -m cli <command> [options]`.

Exit codes: 0 success, 1 usage error, 2 runtime error. Diagnostics go to
standard error; progress and status lines go to standard output.
"""
import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from data_handler import DatasetLoader, convert_humanml3d, load_motion, save_corpus, save_motion
from descriptives.plot_utils import plot_length_distribution, plot_loss_curve, plot_trajectories
from descriptives.tables import print_corpus_summary, print_metric_report, print_training_summary
from evaluation.metrics import control_errors, r_precision_and_matching
from evaluation.models.evaluator import (
    EvaluatorConfig,
    EvaluatorTrainConfig,
    evaluator_checkpoint,
    evaluator_from_checkpoint,
    train_evaluator,
)
from evaluation.suite import EvaluationProtocol, evaluate_suite
from export.export_anim import AnimationExporter
from export.export_report import ReportExporter
from loaders.registry import LoaderRegistry, checkpoint_filename
from misc.utility_functions import _next_available_path, config_section, resolve_results_dir
from pipeline.acmdm.codec import IdentityCodec
from pipeline.acmdm.config import build_model
from pipeline.acmdm.train import acmdm_from_checkpoint, build_corpus, train_acmdm
from pipeline.bundles import MeshBundle
from pipeline.build import ACMDMPipeline, SamplingSettings
from pipeline.control.spec import load_control_spec, upper_body_spec
from pipeline.control.train import train_controlnet
from pipeline.diffusion.schedule import (
    DiffusionObjective,
    NoiseSchedule,
    SamplerConfig,
    check_pairing,
    default_schedule,
)
from pipeline.mesh.config import MeshAEConfig, MeshAETrainConfig
from pipeline.mesh.generate import mesh_generate
from pipeline.mesh.synthetic import mesh_corpus
from pipeline.mesh.train import mesh_ae_checkpoint, mesh_ae_from_checkpoint, mesh_stats, normalize_meshes, train_mesh_ae
from pipeline.motion_ae.config import AEConfig, AETrainConfig
from pipeline.motion_ae.train import ae_checkpoint, ae_from_checkpoint, reconstruction_mse, train_ae
from pipeline.motion_data.motion import MotionSequence, NormalizationStats
from pipeline.motion_data.normalization import compute_stats, normalize
from pipeline.motion_data.synthetic import synth_dataset
from services.checkpoint import load_checkpoint, save_checkpoint
from services.text_encoder import make_text_encoder
from services.trainer import TrainConfig

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------
def _checkpoint_dir(args) -> Path:
    if args.checkpoints:
        path = Path(args.checkpoints).expanduser()
        path.mkdir(parents=True, exist_ok=True)
        return path
    return resolve_results_dir("checkpoints")


def _corpus_dir(args) -> Path:
    if getattr(args, "corpus", None):
        return Path(args.corpus).expanduser()
    return Path(config_section("paths", "data")["corpus"]).expanduser()


def _figure_path(name: str) -> str:
    return str(_next_available_path(name, ".png", "figures"))


def _load_split(args, split: str) -> Tuple[List[MotionSequence], List[List[str]]]:
    motions, entries = DatasetLoader(_corpus_dir(args)).load_dataset(split)
    if not motions:
        raise ValueError(f"no {split} motions in {_corpus_dir(args)}")
    return motions, [e.captions for e in entries]


def _train_overrides(args) -> dict:
    return {
        "epochs": args.epochs,
        "steps_per_epoch": args.steps_per_epoch,
        "batch_size": args.batch_size,
        "seed": args.seed,
    }


def _codec_for(ckpt, ckdir: Path):
    if ckpt.config.get("codec", "raw") == "raw":
        return IdentityCodec()
    return ae_from_checkpoint(load_checkpoint(ckdir / checkpoint_filename("ae"), kind="ae"))


def _pipeline(args) -> ACMDMPipeline:
    sampling = SamplingSettings.from_config(config_section("sampling"))
    return ACMDMPipeline.from_registry(LoaderRegistry(_checkpoint_dir(args)), sampling)


# ---------------------------------------------------------------------------
# Data commands
# ---------------------------------------------------------------------------
def cmd_synth_data(args) -> None:
    out = Path(args.out).expanduser() if args.out else _corpus_dir(args)
    motions, manifest = synth_dataset(args.n, args.seed)
    save_corpus(motions, manifest, out)
    if args.plot:
        loader = DatasetLoader(out)
        loader.load_dataset()
        summary = loader.summary()
        print_corpus_summary(summary)
        plot_length_distribution(summary, save_path=_figure_path("corpus_lengths"))


def cmd_convert_humanml3d(args) -> None:
    src = Path(args.src).expanduser() if args.src else Path(config_section("paths", "data")["humanml3d"]).expanduser()
    if not src.exists():
        raise FileNotFoundError(f"HumanML3D directory not found: {src}")
    out = Path(args.out).expanduser() if args.out else _corpus_dir(args)
    convert_humanml3d(src, out, limit=args.limit)


# ---------------------------------------------------------------------------
# Training commands
# ---------------------------------------------------------------------------
def cmd_train_ae(args) -> None:
    ckdir = _checkpoint_dir(args)
    cfg = AEConfig.from_config(config_section("motion_ae"))
    hyper = AETrainConfig.from_config(config_section("ae_training"), **_train_overrides(args))
    motions, _ = _load_split(args, "train")
    stats = compute_stats(motions)
    normalized = [normalize(m, stats) for m in motions]
    model, history = train_ae(normalized, cfg, hyper, progress=not args.quiet)
    print(f"✅ Train reconstruction MSE (normalized): {reconstruction_mse(model, normalized):.5f}")
    save_checkpoint(ae_checkpoint(model, stats, len(history)), ckdir / checkpoint_filename("ae"))
    print_training_summary(history, "Motion AE")
    if args.plot:
        plot_loss_curve(history, title="Motion AE", save_path=_figure_path("loss_ae"))


def _mesh_training_data(ckdir: Path):
    mesh_ckpt = load_checkpoint(ckdir / checkpoint_filename("mesh_ae"), kind="mesh_ae")
    mesh_ae, topology = mesh_ae_from_checkpoint(mesh_ckpt)
    corpus_info = mesh_ckpt.extra.get("corpus", {"n": 200, "seed": 0})
    meshes, captions, corpus_topology = mesh_corpus(corpus_info["n"], corpus_info["seed"], mesh_ae.cfg.n_latent)
    if not np.array_equal(corpus_topology.faces, topology.faces):
        raise ValueError("regenerated mesh corpus does not match the mesh AE topology")
    stats = NormalizationStats.from_dict(mesh_ckpt.stats)
    return normalize_meshes(meshes, stats), captions, stats, mesh_ae


def _objective_and_schedule(args, model_section: dict):
    """An explicit --objective picks its own schedule unless --schedule is also given."""
    objective = DiffusionObjective(args.objective or model_section.get("objective", "v"))
    if args.schedule:
        schedule = args.schedule
    elif args.objective:
        schedule = default_schedule(objective)
    else:
        schedule = model_section.get("schedule") or default_schedule(objective)
    try:
        check_pairing(schedule, objective)
    except ValueError as e:
        raise UsageError(str(e)) from e
    return objective, schedule


def cmd_train_acmdm(args) -> None:
    ckdir = _checkpoint_dir(args)
    model_section = config_section("model")
    train_cfg = TrainConfig.from_config(config_section("training"), **_train_overrides(args))
    text_encoder = make_text_encoder(args.text_encoder)
    objective, schedule = _objective_and_schedule(args, model_section)

    if args.mesh_ae:
        normalized, captions, stats, codec = _mesh_training_data(ckdir)
        n_joints = codec.cfg.n_latent
        patch = args.patch or n_joints
        target = checkpoint_filename("mesh_acmdm")
    else:
        motions, captions = _load_split(args, "train")
        codec_name = args.codec or model_section.get("codec", "raw")
        if codec_name == "ae":
            ae_ckpt = load_checkpoint(ckdir / checkpoint_filename("ae"), kind="ae")
            codec = ae_from_checkpoint(ae_ckpt)
            stats = NormalizationStats.from_dict(ae_ckpt.stats)
        elif codec_name == "raw":
            codec = IdentityCodec()
            stats = compute_stats(motions)
        else:
            raise UsageError(f"unknown codec {codec_name!r} (expected raw or ae)")
        normalized = [normalize(m, stats) for m in motions]
        n_joints = motions[0].joints
        patch = args.patch or model_section.get("patch", n_joints)
        target = checkpoint_filename("acmdm")

    model_cfg = build_model(
        args.size or model_section.get("size", "S"),
        patch,
        conditioning=args.conditioning or model_section.get("conditioning", "adaln"),
        d_in=codec.channels,
        objective=objective,
        n_joints=n_joints,
        schedule=schedule,
    )
    corpus = build_corpus(normalized, captions, text_encoder, stats, codec)
    resume = load_checkpoint(args.resume, kind="acmdm") if args.resume else None
    result = train_acmdm(corpus, model_cfg, train_cfg, text_encoder_name=text_encoder.name,
                         checkpoint_dir=ckdir / "steps", resume=resume, progress=not args.quiet)
    save_checkpoint(result.checkpoint, ckdir / target)
    print_training_summary(result.history, "ACMDM")
    if args.plot:
        plot_loss_curve(result.history, title=f"ACMDM-{model_cfg.size}", save_path=_figure_path("loss_acmdm"))


def cmd_train_controlnet(args) -> None:
    ckdir = _checkpoint_dir(args)
    ckpt = load_checkpoint(ckdir / checkpoint_filename("acmdm"), kind="acmdm")
    main = acmdm_from_checkpoint(ckpt)
    codec = _codec_for(ckpt, ckdir)
    stats = NormalizationStats.from_dict(ckpt.stats)
    motions, captions = _load_split(args, "train")
    text_encoder = make_text_encoder(ckpt.config.get("text_encoder", "hashbag"))
    corpus = build_corpus([normalize(m, stats) for m in motions], captions, text_encoder, stats, codec)

    control = config_section("control")
    train_cfg = TrainConfig.from_config(config_section("training"), **_train_overrides(args))
    resume = load_checkpoint(args.resume, kind="controlnet") if args.resume else None
    result = train_controlnet(
        corpus, motions, main, codec=codec, train_cfg=train_cfg,
        control_weight=args.control_weight if args.control_weight is not None else control.get("control_weight", 1.0),
        edit_prob=args.edit_prob if args.edit_prob is not None else control.get("edit_prob", 0.25),
        checkpoint_dir=ckdir / "steps", resume=resume, progress=not args.quiet,
    )
    save_checkpoint(result.checkpoint, ckdir / checkpoint_filename("controlnet"))
    print_training_summary(result.history, "ControlNet")
    if args.plot:
        plot_loss_curve(result.history, title="ControlNet", save_path=_figure_path("loss_controlnet"))


def cmd_train_mesh_ae(args) -> None:
    ckdir = _checkpoint_dir(args)
    cfg = MeshAEConfig.from_config(config_section("mesh_ae"))
    hyper = MeshAETrainConfig.from_config({}, **_train_overrides(args))
    meshes, _, topology = mesh_corpus(args.n, args.corpus_seed, cfg.n_latent)
    stats = mesh_stats(meshes)
    model, history = train_mesh_ae(normalize_meshes(meshes, stats), topology, cfg, hyper, progress=not args.quiet)
    ckpt = mesh_ae_checkpoint(model, topology, stats, len(history))
    ckpt.extra["corpus"] = {"n": args.n, "seed": args.corpus_seed}
    save_checkpoint(ckpt, ckdir / checkpoint_filename("mesh_ae"))
    print_training_summary(history, "Mesh AE")
    if args.plot:
        plot_loss_curve(history, title="Mesh AE", save_path=_figure_path("loss_mesh_ae"))


def cmd_train_evaluator(args) -> None:
    ckdir = _checkpoint_dir(args)
    motions, captions = _load_split(args, "train")
    stats = compute_stats(motions)
    normalized = [normalize(m, stats) for m in motions]
    text_encoder = make_text_encoder(args.text_encoder)
    cfg = EvaluatorConfig.from_config(config_section("evaluator"), n_joints=motions[0].joints)
    hyper = EvaluatorTrainConfig.from_config({}, **_train_overrides(args))
    model, history = train_evaluator(normalized, captions, text_encoder, cfg, hyper, progress=not args.quiet)
    if len(normalized) >= 32:
        top1, _, _, _ = r_precision_and_matching(
            model.embed_motions(normalized), model.embed_texts([c[0] for c in captions]), 32
        )
        print(f"✅ Train retrieval Top-1 (32-way): {top1:.3f}")
    ckpt = evaluator_checkpoint(model, text_encoder.name)
    ckpt.stats = stats.to_dict()
    save_checkpoint(ckpt, ckdir / checkpoint_filename("evaluator"))
    print_training_summary(history, "Evaluator")
    if args.plot:
        plot_loss_curve(history, title="Evaluator", save_path=_figure_path("loss_evaluator"))


# ---------------------------------------------------------------------------
# Inference commands
# ---------------------------------------------------------------------------
def _generate_mesh(args) -> None:
    registry = LoaderRegistry(_checkpoint_dir(args))
    mesh = MeshBundle.from_checkpoints(registry.mesh_acmdm(), registry.mesh_ae())
    sampling = SamplingSettings.from_config(config_section("sampling"))
    sampler = SamplerConfig.for_objective(
        NoiseSchedule(kind=mesh.model.cfg.schedule),
        steps=args.steps or sampling.steps,
        cfg_scale=args.cfg_scale if args.cfg_scale is not None else sampling.cfg_mesh,
    )
    m = mesh_generate(args.prompt, mesh.model, mesh.mesh_ae, mesh.text_encoder, mesh.stats, mesh.topology,
                      frames=args.frames, sampler=sampler, seed=args.seed)
    out = Path(args.out) if args.out else resolve_results_dir("generations") / "mesh"
    AnimationExporter("jsonl" if out.suffix == ".jsonl" else "obj").export(m, out)


def cmd_generate(args) -> None:
    if args.mesh:
        if args.control_spec:
            raise UsageError("--control-spec cannot be combined with --mesh")
        _generate_mesh(args)
        return
    pipeline = _pipeline(args)
    if args.control_spec:
        spec = load_control_spec(args.control_spec)
        m = pipeline.generate_controlled(args.prompt, spec, args.frames, seed=args.seed,
                                         cfg_scale=args.cfg_scale, steps=args.steps)
        traj, loc, avg = control_errors(m, spec)
        print(f"✅ Control error: avg {avg:.4f} m, loc {loc:.3f}, traj {traj:.0f}")
    else:
        m = pipeline.generate(args.prompt, frames=args.frames, seed=args.seed,
                              cfg_scale=args.cfg_scale, steps=args.steps)
    out = Path(args.out) if args.out else _next_available_path("generation", ".acm", "generations")
    save_motion(m, out)
    print(f"💾 {m.frames} frames → {out}")


def cmd_edit_upper_body(args) -> None:
    source = load_motion(args.source)
    pipeline = _pipeline(args)
    m = pipeline.edit(source, args.prompt, seed=args.seed, cfg_scale=args.cfg_scale, steps=args.steps)
    _, _, avg = control_errors(m, upper_body_spec(source))
    print(f"✅ Lower-body anchor error: {avg:.4f} m")
    out = Path(args.out) if args.out else _next_available_path("edit", ".acm", "generations")
    save_motion(m, out)
    print(f"💾 {m.frames} frames → {out}")
    if args.plot:
        plot_trajectories({"source": source, "edit": m}, title="Upper-body edit",
                          save_path=_figure_path("edit_trajectory"))


def cmd_evaluate(args) -> None:
    registry = LoaderRegistry(_checkpoint_dir(args))
    evaluator_ckpt = registry.evaluator()
    evaluator = evaluator_from_checkpoint(
        evaluator_ckpt, make_text_encoder(evaluator_ckpt.config.get("text_encoder", "hashbag"))
    )
    pipeline = ACMDMPipeline.from_registry(registry, SamplingSettings.from_config(config_section("sampling")))
    motions, captions = _load_split(args, args.split)
    protocol = EvaluationProtocol.from_config(
        config_section("evaluation"), repetitions=args.repetitions, n_samples=args.samples,
        pool_size=args.pool_size, seed=args.seed,
    )
    report, repetitions = evaluate_suite(pipeline, motions, captions, evaluator, protocol)
    print_metric_report(report)
    ReportExporter(report, repetitions).export(args.out)


def cmd_export_anim(args) -> None:
    m = load_motion(args.input)
    out = Path(args.out) if args.out else Path(args.input).with_suffix(".jsonl" if args.format == "jsonl" else "")
    AnimationExporter(args.format).export(m, out)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--checkpoints", help="checkpoint directory (default: paths.results.checkpoints)")
    common.add_argument("--corpus", help="corpus directory (default: paths.data.corpus)")
    common.add_argument("--quiet", action="store_true", help="hide progress bars")

    training = _Parser(add_help=False)
    training.add_argument("--epochs", type=int)
    training.add_argument("--steps-per-epoch", type=int)
    training.add_argument("--batch-size", type=int)
    training.add_argument("--seed", type=int)
    training.add_argument("--plot", action="store_true", help="save a loss-curve figure")

    sampling = _Parser(add_help=False)
    sampling.add_argument("--prompt", required=True)
    sampling.add_argument("--seed", type=int, default=0)
    sampling.add_argument("--cfg-scale", type=float)
    sampling.add_argument("--steps", type=int)
    sampling.add_argument("--out")

    parser = _Parser(prog="cli", description="Absolute-coordinate text-to-motion diffusion")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", parents=[common], help="write the synthetic corpus")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("convert-humanml3d", parents=[common], help="convert HumanML3D features to .acm")
    p.add_argument("--src")
    p.add_argument("--out")
    p.add_argument("--limit", type=int)
    p.set_defaults(func=cmd_convert_humanml3d)

    p = sub.add_parser("train-ae", parents=[common, training], help="train the motion autoencoder")
    p.set_defaults(func=cmd_train_ae)

    p = sub.add_parser("train-acmdm", parents=[common, training], help="train the denoiser")
    p.add_argument("--size", choices=["S", "B", "L", "XL", "tiny"])
    p.add_argument("--patch", type=int)
    p.add_argument("--conditioning", choices=["adaln", "concat"])
    p.add_argument("--objective", choices=[o.value for o in DiffusionObjective])
    p.add_argument("--schedule", choices=["flow", "ddpm"])
    p.add_argument("--codec", choices=["raw", "ae"])
    p.add_argument("--mesh-ae", action="store_true", help="train on mesh AE latents")
    p.add_argument("--text-encoder", default="hashbag")
    p.add_argument("--resume")
    p.set_defaults(func=cmd_train_acmdm)

    p = sub.add_parser("train-controlnet", parents=[common, training], help="train the control branch")
    p.add_argument("--control-weight", type=float)
    p.add_argument("--edit-prob", type=float)
    p.add_argument("--resume")
    p.set_defaults(func=cmd_train_controlnet)

    p = sub.add_parser("train-mesh-ae", parents=[common, training], help="train the mesh autoencoder")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--corpus-seed", type=int, default=0)
    p.set_defaults(func=cmd_train_mesh_ae)

    p = sub.add_parser("train-evaluator", parents=[common, training], help="train the evaluation embedder")
    p.add_argument("--text-encoder", default="hashbag")
    p.set_defaults(func=cmd_train_evaluator)

    p = sub.add_parser("generate", parents=[common, sampling], help="text-to-motion generation")
    p.add_argument("--frames", type=int, default=120)
    p.add_argument("--control-spec", help="JSON keyframe constraints")
    p.add_argument("--mesh", action="store_true", help="generate vertex motion with the mesh model")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("edit-upper-body", parents=[common, sampling], help="regenerate the upper body")
    p.add_argument("--source", required=True)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_edit_upper_body)

    p = sub.add_parser("evaluate", parents=[common], help="run the metric suite")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--pool-size", type=int)
    p.add_argument("--split", default="test")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-anim", parents=[common], help="write JSON lines or an OBJ sequence")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["jsonl", "obj"], default="jsonl")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_anim)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return EXIT_USAGE
    try:
        args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
