"""EMGSE: multimodal speech enhancement fusing facial EMG with noisy audio."""

__version__ = "0.1.0"

FORMAT_VERSIONS = {
    "checkpoint": 1,
    "emg_container": 1,
    "dataset_index": 1,
    "manifest": 1,
}
