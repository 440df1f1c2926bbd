from pipeline.motion_data.motion import (
    DatasetManifest,
    ManifestEntry,
    MotionSequence,
    NormalizationStats,
    TextPrompt,
)
from pipeline.motion_data.normalization import compute_stats, denormalize, normalize
from pipeline.motion_data.skeleton import HUMANML3D_SKELETON, SkeletonDef, bone_lengths
from pipeline.motion_data.synthetic import synth_dataset
from pipeline.motion_data.humanml3d import humanml3d_to_absolute
