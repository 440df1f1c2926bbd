from pipeline.control.spec import (
    DENSITY_LEVELS,
    Constraint,
    ControlGrid,
    ControlSpec,
    encode_control,
    load_control_spec,
    sample_control_spec,
    save_control_spec,
    upper_body_spec,
)
from pipeline.control.model import (
    ControlEncoder,
    ControlNetBranch,
    ControlNetState,
    FrozenParametersMutatedError,
    controlled_forward,
)
