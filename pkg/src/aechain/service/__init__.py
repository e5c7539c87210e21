from .app import create_app, load_detector_dir
from .client import RemoteDetector, remote_oracle

__all__ = ["RemoteDetector", "create_app", "load_detector_dir", "remote_oracle"]
