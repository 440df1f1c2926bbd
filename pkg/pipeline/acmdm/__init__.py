from pipeline.acmdm.config import SIZES, ACMDMConfig, build_model
from pipeline.acmdm.model import ACMDM, TokenGrid, acmdm_forward, parameter_count
