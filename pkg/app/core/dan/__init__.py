"""
Unfolded Restorer/Estimator network.
"""
from app.core.dan.config import DanConfig
from app.core.dan.network import DanNetwork, DanOutput, dan_forward, init_parameters

__all__ = ["DanConfig", "DanNetwork", "DanOutput", "dan_forward", "init_parameters"]
