import json

import numpy as np
import pandas as pd
import pytest

from data_handler import load_obj_topology
from descriptives.plot_utils import plot_loss_curve, plot_trajectories
from descriptives.tables import corpus_summary, metric_table, training_summary
from evaluation.suite import MetricReport
from export.export_anim import AnimationExporter
from export.export_report import ReportExporter
from pipeline.mesh.synthetic import synthetic_humanoid_mesh
from pipeline.mesh.topology import MeshSequence
from pipeline.motion_data.motion import MotionSequence
from pipeline.motion_data.skeleton import HUMANML3D_SKELETON


def _report() -> MetricReport:
    return MetricReport(fid=0.5, r_precision=(0.4, 0.6, 0.7), matching=3.0, diversity=9.0, multimodality=2.0,
                        clip_score=0.6, foot_skating=0.05, aits=0.1, ci={"fid": 0.02})


def test_jsonl_export(tmp_path):
    coords = np.random.default_rng(0).standard_normal((4, 22, 3)).astype(np.float32)
    path = AnimationExporter("jsonl").export(MotionSequence(coords, fps=20.0), tmp_path / "walk.jsonl")
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(lines) == 4
    assert lines[2]["frame"] == 2 and lines[2]["time"] == pytest.approx(0.1)
    assert np.allclose(lines[3]["points"], coords[3], atol=1e-5)


def test_obj_sequence_for_skeleton(tmp_path):
    motion = MotionSequence(np.zeros((3, 22, 3), dtype=np.float32))
    out = AnimationExporter("obj").export(motion, tmp_path / "walk")
    files = sorted(out.glob("*.obj"))
    assert [f.name for f in files] == ["frame_0000.obj", "frame_0001.obj", "frame_0002.obj"]
    lines = files[0].read_text().splitlines()
    assert sum(line.startswith("v ") for line in lines) == 22
    assert sum(line.startswith("l ") for line in lines) == len(HUMANML3D_SKELETON.bones)


def test_obj_sequence_for_mesh(tmp_path):
    topology, _ = synthetic_humanoid_mesh()
    mesh = MeshSequence(np.repeat(topology.vertices[None], 2, axis=0), topology)
    out = AnimationExporter("obj").export(mesh, tmp_path / "mesh")
    vertices, faces = load_obj_topology(out / "frame_0001.obj")
    assert vertices.shape == topology.vertices.shape and np.array_equal(faces, topology.faces)


def test_unknown_animation_format():
    with pytest.raises(ValueError):
        AnimationExporter("fbx")


def test_report_export(tmp_path):
    reps = pd.DataFrame({"repetition": [0, 1], "fid": [0.4, 0.6]})
    json_path, csv_path = ReportExporter(_report(), reps).export(tmp_path / "report.json")
    assert MetricReport.from_dict(json.loads(json_path.read_text())) == _report()
    assert pd.read_csv(csv_path)["fid"].tolist() == [0.4, 0.6]
    _, no_csv = ReportExporter(_report()).export(tmp_path / "other.json")
    assert no_csv is None


def test_metric_table():
    table = metric_table(_report())
    assert list(table.columns) == ["Metric", "Mean", "±95% CI"]
    fid_row = table[table["Metric"] == "FID"].iloc[0]
    assert fid_row["Mean"] == 0.5 and fid_row["±95% CI"] == 0.02
    assert table[table["Metric"] == "Diversity"]["±95% CI"].isna().all(), "missing CI should be NaN"


def test_corpus_and_training_summaries():
    summary = pd.DataFrame({"id": ["a", "b", "c"], "split": ["train", "train", "test"],
                            "frames": [40, 60, 100], "n_captions": [1, 2, 3]})
    corpus = corpus_summary(summary).set_index("split")
    assert corpus.loc["train", "n_sequences"] == 2 and corpus.loc["train", "mean_frames"] == 50.0
    assert corpus.loc["test", "captions"] == 3

    history = pd.DataFrame({"step": range(4), "epoch": [0, 0, 1, 1], "loss": [4.0, 2.0, 1.0, 0.0],
                            "lr": [0.1, 0.2, 0.3, 0.4]})
    per_epoch = training_summary(history)
    assert per_epoch["loss"].tolist() == [3.0, 0.5] and per_epoch["lr"].tolist() == [0.2, 0.4]


def test_figures_are_written(tmp_path):
    history = pd.DataFrame({"step": range(10), "loss": np.linspace(1.0, 0.1, 10)})
    plot_loss_curve(history, title="AE", save_path=str(tmp_path / "loss.png"), dpi=50)
    walk = MotionSequence(np.cumsum(np.full((8, 22, 3), 0.05, dtype=np.float32), axis=0))
    plot_trajectories({"walk": walk}, save_path=str(tmp_path / "figs" / "traj.png"), dpi=50)
    assert (tmp_path / "loss.png").exists() and (tmp_path / "figs" / "traj.png").exists()
