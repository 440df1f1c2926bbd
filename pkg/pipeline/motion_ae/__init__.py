from pipeline.motion_ae.config import AEConfig, AETrainConfig
from pipeline.motion_ae.loss import ae_loss, kl_divergence
from pipeline.motion_ae.model import LatentMotion, MotionAutoEncoder
from pipeline.motion_ae.train import train_ae
